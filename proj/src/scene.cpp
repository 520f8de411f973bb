#include "diae/scene.hpp"

#include <array>
#include <cmath>
#include <functional>

#include "diae/rng.hpp"

namespace diae {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
    double x, y;
};

// Unit-scale subject shapes. Each membership test runs in shape-local
// coordinates with the area centroid at the origin, and carries its exact
// area so the rendered subject covers `size` of the image by construction.
struct ShapeDef {
    std::string name;
    std::string caption;
    double area;
    // q: local coords; a0: arrangement angle from the layout seed
    std::function<bool(Vec2 q, double a0)> inside;
};

bool in_disc(Vec2 q, double cx, double cy, double r) {
    const double dx = q.x - cx, dy = q.y - cy;
    return dx * dx + dy * dy <= r * r;
}

bool in_rect(Vec2 q, double cx, double cy, double hw, double hh) {
    return std::fabs(q.x - cx) <= hw && std::fabs(q.y - cy) <= hh;
}

// equilateral triangle, circumradius r, centroid at (cx,cy), apex up
bool in_tri(Vec2 q, double cx, double cy, double r) {
    const double x = q.x - cx, y = q.y - cy;
    if (y < -r * 0.5) return false;
    // two slanted edges
    const double s = std::sqrt(3.0);
    return (s * x + y <= r) && (-s * x + y <= r);
}

// star/hexagon membership via triangle fan around the origin
bool in_fan(Vec2 q, const std::vector<Vec2>& verts) {
    const int n = int(verts.size());
    for (int i = 0; i < n; ++i) {
        const Vec2 a = verts[size_t(i)];
        const Vec2 b = verts[size_t((i + 1) % n)];
        // inside triangle (0, a, b)
        const double d1 = a.x * q.y - a.y * q.x;
        const double d2 = (b.x - a.x) * (q.y - a.y) - (b.y - a.y) * (q.x - a.x);
        const double d3 = -b.x * (q.y - b.y) + b.y * (q.x - b.x);
        if ((d1 >= 0 && d2 >= 0 && d3 >= 0) || (d1 <= 0 && d2 <= 0 && d3 <= 0))
            return true;
    }
    return false;
}

std::vector<Vec2> star_verts(double R, double r) {
    std::vector<Vec2> v;
    for (int k = 0; k < 5; ++k) {
        const double a = kPi / 2 + 2 * kPi * k / 5;
        const double b = a + kPi / 5;
        v.push_back({R * std::cos(a), R * std::sin(a)});
        v.push_back({r * std::cos(b), r * std::sin(b)});
    }
    return v;
}

std::vector<Vec2> ngon_verts(int n, double R) {
    std::vector<Vec2> v;
    for (int k = 0; k < n; ++k) {
        const double a = kPi / 2 + 2 * kPi * k / n;
        v.push_back({R * std::cos(a), R * std::sin(a)});
    }
    return v;
}

const std::vector<ShapeDef>& shapes() {
    static const std::vector<ShapeDef> defs = [] {
        std::vector<ShapeDef> s;
        s.push_back({"disc", "a single disc resting over a soft gradient", kPi,
                     [](Vec2 q, double) { return in_disc(q, 0, 0, 1); }});
        s.push_back({"ring", "a hollow ring against a gradient backdrop",
                     kPi * (1.0 - 0.36), [](Vec2 q, double) {
                         const double d2 = q.x * q.x + q.y * q.y;
                         return d2 <= 1.0 && d2 >= 0.36;
                     }});
        s.push_back({"ellipse", "a stretched oval drifting over a gradient", kPi,
                     [](Vec2 q, double) {
                         const double a = 1.3, b = 1.0 / 1.3;
                         const double u = q.x / a, v = q.y / b;
                         return u * u + v * v <= 1.0;
                     }});
        s.push_back({"square", "a solid square block on a gradient field", 4.0,
                     [](Vec2 q, double) { return in_rect(q, 0, 0, 1, 1); }});
        s.push_back({"diamond", "a tilted diamond over a gradient wash", 2.0,
                     [](Vec2 q, double) {
                         return std::fabs(q.x) + std::fabs(q.y) <= 1.0;
                     }});
        s.push_back({"slab", "a wide slab spanning a gradient scene", 3.0,
                     [](Vec2 q, double) { return in_rect(q, 0, 0, 1.5, 0.5); }});
        s.push_back({"triangle", "a lone triangle on a gradient background",
                     3.0 * std::sqrt(3.0) / 4.0,
                     [](Vec2 q, double) { return in_tri(q, 0, 0, 1); }});
        s.push_back({"star", "a five-pointed star over a gradient sky",
                     10.0 * 0.5 * 1.0 * 0.5 * std::sin(kPi / 5),
                     [](Vec2 q, double) {
                         static const auto v = star_verts(1.0, 0.5);
                         return in_fan(q, v);
                     }});
        {
            // outer disc minus an offset inner disc, recentered
            const double R = 1.0, r = 0.55, d = 0.35;
            const double area = kPi * (R * R - r * r);
            const double cshift = -d * r * r / (R * R - r * r);
            s.push_back({"moon", "a crescent-like moon over a gradient dusk", area,
                         [R, r, d, cshift](Vec2 q, double) {
                             q.x += cshift;
                             return in_disc(q, 0, 0, R) && !in_disc(q, d, 0, r);
                         }});
        }
        {
            const double r1 = 0.8, r2 = 0.56, off = 0.85;
            const double a1 = kPi * r1 * r1, a2 = kPi * r2 * r2;
            const double cshift = (-off * a1 + off * a2) / (a1 + a2);
            s.push_back({"pair", "two companion discs over a gradient plain",
                         a1 + a2, [r1, r2, off, cshift](Vec2 q, double) {
                             q.x += cshift;
                             return in_disc(q, -off, 0, r1) ||
                                    in_disc(q, off, 0, r2);
                         }});
        }
        s.push_back({"cluster", "a cluster of three triangles on a gradient",
                     3.0 * (3.0 * std::sqrt(3.0) / 4.0) * 0.55 * 0.55,
                     [](Vec2 q, double a0) {
                         for (int k = 0; k < 3; ++k) {
                             const double a = a0 + 2 * kPi * k / 3;
                             if (in_tri(q, std::cos(a), std::sin(a), 0.55))
                                 return true;
                         }
                         return false;
                     }});
        s.push_back({"grid", "a two-by-two grid of tiles over a gradient",
                     4.0 * 4.0 * 0.38 * 0.38, [](Vec2 q, double) {
                         return in_rect(q, -0.7, -0.7, 0.38, 0.38) ||
                                in_rect(q, 0.7, -0.7, 0.38, 0.38) ||
                                in_rect(q, -0.7, 0.7, 0.38, 0.38) ||
                                in_rect(q, 0.7, 0.7, 0.38, 0.38);
                     }});
        s.push_back({"plus", "a bold plus sign over a gradient panel",
                     8.0 * 0.35 - 4.0 * 0.35 * 0.35, [](Vec2 q, double) {
                         return in_rect(q, 0, 0, 1.0, 0.35) ||
                                in_rect(q, 0, 0, 0.35, 1.0);
                     }});
        s.push_back({"hexagon", "a regular hexagon over a gradient haze",
                     3.0 * std::sqrt(3.0) / 2.0, [](Vec2 q, double) {
                         static const auto v = ngon_verts(6, 1.0);
                         return in_fan(q, v);
                     }});
        s.push_back({"dotring", "a ring of six dots over a gradient base",
                     6.0 * kPi * 0.3 * 0.3, [](Vec2 q, double a0) {
                         for (int k = 0; k < 6; ++k) {
                             const double a = a0 + 2 * kPi * k / 6;
                             if (in_disc(q, std::cos(a), std::sin(a), 0.3))
                                 return true;
                         }
                         return false;
                     }});
        s.push_back({"band", "a broad band crossing a gradient scene",
                     4.0 * 1.1 * 0.5,
                     [](Vec2 q, double) { return in_rect(q, 0, 0, 1.1, 0.5); }});
        return s;
    }();
    return defs;
}

struct Palette {
    double bg_top, bg_bottom, subject;
};

constexpr std::array<Palette, 8> kPalettes = {{
    {0.58, 0.66, 0.08}, // blue sky, amber subject
    {0.33, 0.42, 0.92}, // green field, magenta subject
    {0.05, 0.12, 0.55}, // warm dusk, cyan subject
    {0.78, 0.86, 0.30}, // violet, lime subject
    {0.50, 0.58, 0.95}, // teal, red subject
    {0.12, 0.20, 0.62}, // amber, indigo subject
    {0.66, 0.74, 0.15}, // indigo, orange subject
    {0.42, 0.50, 0.00}, // sea green, red subject
}};

constexpr double kBgValBase = 0.90, kBgValSpan = 0.10;
constexpr double kSubjectVal = 0.55;

void hsv_to_rgb_px(double h, double s, double v, double& r, double& g, double& b) {
    h -= std::floor(h);
    const double hf = h * 6.0;
    const int sector = std::min(5, int(hf));
    const double f = hf - sector;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
    }
}

SceneRender render(const SceneSpec& spec, const AestheticParams& pr, int side,
                   bool apply_params) {
    spec.validate();
    pr.validate();
    const ShapeDef& shape = shapes()[size_t(spec.key)];
    const Palette& pal = kPalettes[size_t(spec.palette) % kPalettes.size()];

    Rng layout(derive_seed(spec.layout_seed, 0x6c61796f7574ull, spec.key));
    const double rot = layout.uniform(0.0, 2 * kPi);
    const double arrange = layout.uniform(0.0, 2 * kPi);
    const double cr = std::cos(-rot), sr = std::sin(-rot);
    const double scale = std::sqrt(pr.size / shape.area);

    SceneRender out;
    out.side = side;
    out.image = ImageF({3, side, side});
    out.mask.assign(size_t(side) * side, 0);

    const int ss = 4;
    const int hw = side * side;
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            double racc = 0, gacc = 0, bacc = 0;
            int cover = 0;
            for (int sy = 0; sy < ss; ++sy)
                for (int sx = 0; sx < ss; ++sx) {
                    const double u = (x + (sx + 0.5) / ss) / side;
                    const double v = (y + (sy + 0.5) / ss) / side;
                    const double dx = u - pr.cx, dy = v - pr.cy;
                    const Vec2 q{(cr * dx - sr * dy) / scale,
                                 (sr * dx + cr * dy) / scale};
                    const bool inside = shape.inside(q, arrange);
                    double r, g, b;
                    if (inside) {
                        cover += 1;
                        hsv_to_rgb_px(pal.subject, 1.0, kSubjectVal, r, g, b);
                    } else {
                        const double h = pal.bg_top + (pal.bg_bottom - pal.bg_top) * v;
                        hsv_to_rgb_px(h, 1.0, kBgValBase + kBgValSpan * v, r, g, b);
                    }
                    racc += r;
                    gacc += g;
                    bacc += b;
                }
            const size_t i = size_t(y) * side + x;
            out.image[i] = float(racc / (ss * ss));
            out.image[size_t(hw) + i] = float(gacc / (ss * ss));
            out.image[size_t(2 * hw) + i] = float(bacc / (ss * ss));
            out.mask[i] = cover * 2 >= ss * ss ? 1 : 0;
        }

    const bool identity =
        pr.hue_shift == 0.0 && pr.s == 1.0 && pr.v == 1.0;
    if (apply_params && !identity) {
        ImageF hsv = rgb_to_hsv_map(out.image);
        float* H = hsv.ptr();
        float* S = H + hw;
        float* V = S + hw;
        for (int i = 0; i < hw; ++i) {
            float h = H[i] + float(pr.hue_shift);
            if (h >= 1.0f) h -= 1.0f;
            H[i] = h;
            S[i] = std::min(1.0f, S[i] * float(pr.s));
            V[i] = std::min(1.0f, V[i] * float(pr.v));
        }
        out.image = hsv_to_rgb(hsv);
    }
    if (apply_params && pr.sigma > 0.0) out.image = gaussian_blur(out.image, pr.sigma);
    return out;
}

} // namespace

void AestheticParams::validate() const {
    require(s >= 0.0 && s <= 1.0, "params: saturation out of [0,1]");
    require(v >= 0.0 && v <= 1.0, "params: value out of [0,1]");
    require(hue_shift >= 0.0 && hue_shift < 1.0, "params: hue shift out of [0,1)");
    require(cx >= 0.0 && cx <= 1.0 && cy >= 0.0 && cy <= 1.0,
            "params: center out of [0,1]^2");
    require(sigma >= 0.0 && sigma <= 2.0, "params: blur sigma out of [0,2]");
    require(size > 0.0 && size <= 0.9, "params: subject size out of (0,0.9]");
}

void SceneSpec::validate() const {
    require(key >= 0 && key < scene_class_count(), "scene: unknown semantic key");
    require(palette >= 0, "scene: palette id must be non-negative");
}

int scene_class_count() { return int(shapes().size()); }

const std::string& scene_class_name(int key) {
    require(key >= 0 && key < scene_class_count(), "scene: unknown semantic key");
    return shapes()[size_t(key)].name;
}

const std::string& scene_caption(int key) {
    require(key >= 0 && key < scene_class_count(), "scene: unknown semantic key");
    return shapes()[size_t(key)].caption;
}

SceneRender generate_scene(const SceneSpec& spec, const AestheticParams& params,
                           int side) {
    require(side == 32 || side == 48 || side == 64, "scene: side must be 32/48/64");
    return render(spec, params, side, true);
}

SceneRender generate_scene_base(const SceneSpec& spec, int side) {
    AestheticParams identity;
    identity.size = 0.2;
    return render(spec, identity, side, false);
}

ImageF gaussian_blur(const ImageF& img, double sigma) {
    if (sigma <= 0.0) return img;
    const int h = img.dim(1), w = img.dim(2);
    const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
    std::vector<float> k(size_t(radius) + 1);
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i)
        norm += std::exp(-0.5 * double(i) * i / (sigma * sigma));
    for (int i = 0; i <= radius; ++i)
        k[size_t(i)] = float(std::exp(-0.5 * double(i) * i / (sigma * sigma)) / norm);

    ImageF tmp(img.shape), out(img.shape);
    for (int c = 0; c < 3; ++c) {
        const float* src = img.ptr() + size_t(c) * h * w;
        float* t = tmp.ptr() + size_t(c) * h * w;
        float* o = out.ptr() + size_t(c) * h * w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = k[0] * src[size_t(y) * w + x];
                for (int i = 1; i <= radius; ++i) {
                    const int xl = std::max(0, x - i), xr = std::min(w - 1, x + i);
                    acc += k[size_t(i)] * (src[size_t(y) * w + xl] + src[size_t(y) * w + xr]);
                }
                t[size_t(y) * w + x] = float(acc);
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = k[0] * t[size_t(y) * w + x];
                for (int i = 1; i <= radius; ++i) {
                    const int yu = std::max(0, y - i), yd = std::min(h - 1, y + i);
                    acc += k[size_t(i)] * (t[size_t(yu) * w + x] + t[size_t(yd) * w + x]);
                }
                o[size_t(y) * w + x] = float(acc);
            }
    }
    return out;
}

} // namespace diae
