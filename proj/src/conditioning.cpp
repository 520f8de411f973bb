#include "diae/conditioning.hpp"

#include <algorithm>
#include <cmath>

namespace diae {

ImageF rgb_to_hsv_map(const ImageF& rgb) {
    require(rgb.rank() == 3 && rgb.dim(0) == 3, "rgb_to_hsv_map: expect [3,H,W]");
    const int hw = rgb.dim(1) * rgb.dim(2);
    for (float v : rgb.data)
        require(v >= 0.0f && v <= 1.0f, "rgb_to_hsv_map: input out of [0,1]");
    ImageF out(rgb.shape);
    const float* r = rgb.ptr();
    const float* g = r + hw;
    const float* b = g + hw;
    float* H = out.ptr();
    float* S = H + hw;
    float* V = S + hw;
    for (int i = 0; i < hw; ++i) {
        const float mx = std::max(r[i], std::max(g[i], b[i]));
        const float mn = std::min(r[i], std::min(g[i], b[i]));
        const float d = mx - mn;
        V[i] = mx;
        S[i] = mx > 0.0f ? d / mx : 0.0f;
        float h = 0.0f; // achromatic convention
        if (d > 0.0f) {
            if (mx == r[i])
                h = (g[i] - b[i]) / d;
            else if (mx == g[i])
                h = 2.0f + (b[i] - r[i]) / d;
            else
                h = 4.0f + (r[i] - g[i]) / d;
            h /= 6.0f;
            if (h < 0.0f) h += 1.0f;
            if (h >= 1.0f) h -= 1.0f;
        }
        H[i] = h;
    }
    return out;
}

ImageF hsv_to_rgb(const ImageF& hsv) {
    require(hsv.rank() == 3 && hsv.dim(0) == 3, "hsv_to_rgb: expect [3,H,W]");
    const int hw = hsv.dim(1) * hsv.dim(2);
    ImageF out(hsv.shape);
    const float* H = hsv.ptr();
    const float* S = H + hw;
    const float* V = S + hw;
    float* r = out.ptr();
    float* g = r + hw;
    float* b = g + hw;
    for (int i = 0; i < hw; ++i) {
        float h = H[i] - std::floor(H[i]);
        const float s = S[i], v = V[i];
        const float hf = h * 6.0f;
        const int sector = std::min(5, int(hf));
        const float f = hf - float(sector);
        const float p = v * (1.0f - s);
        const float q = v * (1.0f - s * f);
        const float t = v * (1.0f - s * (1.0f - f));
        switch (sector) {
        case 0: r[i] = v; g[i] = t; b[i] = p; break;
        case 1: r[i] = q; g[i] = v; b[i] = p; break;
        case 2: r[i] = p; g[i] = v; b[i] = t; break;
        case 3: r[i] = p; g[i] = q; b[i] = v; break;
        case 4: r[i] = t; g[i] = p; b[i] = v; break;
        default: r[i] = v; g[i] = p; b[i] = q; break;
        }
    }
    return out;
}

ImageF contour_map(const ImageF& rgb) {
    require(rgb.rank() == 3 && rgb.dim(0) == 3, "contour_map: expect [3,H,W]");
    const int h = rgb.dim(1), w = rgb.dim(2);
    const int hw = h * w;
    std::vector<float> gray(static_cast<size_t>(hw));
    const float* r = rgb.ptr();
    const float* g = r + hw;
    const float* b = g + hw;
    for (int i = 0; i < hw; ++i)
        gray[size_t(i)] = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];

    ImageF out({1, h, w});
    const auto at = [&](int y, int x) {
        y = std::clamp(y, 0, h - 1); // replicate border
        x = std::clamp(x, 0, w - 1);
        return gray[size_t(y) * w + x];
    };
    constexpr float norm = 1.0f / 5.65685424949238019520675489684f; // 4*sqrt(2)
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float gx = (at(y - 1, x + 1) + 2.0f * at(y, x + 1) + at(y + 1, x + 1)) -
                             (at(y - 1, x - 1) + 2.0f * at(y, x - 1) + at(y + 1, x - 1));
            const float gy = (at(y + 1, x - 1) + 2.0f * at(y + 1, x) + at(y + 1, x + 1)) -
                             (at(y - 1, x - 1) + 2.0f * at(y - 1, x) + at(y - 1, x + 1));
            out[size_t(y) * w + x] =
                std::min(1.0f, std::sqrt(gx * gx + gy * gy) * norm);
        }
    return out;
}

namespace {
constexpr const char* kTokens[Vocab::kSize] = {
    "undersaturated", "well-saturated", "oversaturated",
    "poor light", "balanced light", "bright light",
    "warm tone", "cool tone", "neutral tone",
    "sharp focus", "soft focus",
    "close-up", "medium shot", "wide shot",
    "centered composition", "rule-of-thirds composition", "off-balance composition",
    "framing", "symmetry", "none",
};
} // namespace

const char* Vocab::token(int idx) {
    require(idx >= 0 && idx < kSize, "vocab: index out of range");
    return kTokens[idx];
}

int Vocab::index(const std::string& token) {
    for (int i = 0; i < kSize; ++i)
        if (token == kTokens[i]) return i;
    throw TensorError("vocab: unknown token '" + token + "'");
}

std::string Assessment::render() const {
    auto join = [](const std::vector<int>& toks) {
        std::string s;
        for (size_t i = 0; i < toks.size(); ++i) {
            if (i) s += "; ";
            s += Vocab::token(toks[i]);
        }
        return s;
    };
    return "Color: " + join(color_tokens) + ". Structure: " + join(structure_tokens) + ".";
}

Assessment Assessment::parse(const std::string& text) {
    Assessment a;
    const std::string color_tag = "Color: ";
    const std::string struct_tag = ". Structure: ";
    const size_t c0 = text.find(color_tag);
    const size_t s0 = text.find(struct_tag);
    require(c0 == 0 && s0 != std::string::npos && text.back() == '.',
            "assessment: malformed string '" + text + "'");
    auto split = [](const std::string& part, std::vector<int>& out) {
        size_t pos = 0;
        while (pos < part.size()) {
            size_t next = part.find("; ", pos);
            if (next == std::string::npos) next = part.size();
            out.push_back(Vocab::index(part.substr(pos, next - pos)));
            pos = next == part.size() ? next : next + 2;
        }
    };
    split(text.substr(color_tag.size(), s0 - color_tag.size()), a.color_tokens);
    split(text.substr(s0 + struct_tag.size(),
                      text.size() - 1 - (s0 + struct_tag.size())),
          a.structure_tokens);
    return a;
}

void adapter_init(ParamStore<float>& store, const AdapterConfig& cfg, Rng& rng) {
    require(cfg.widths.size() == cfg.unet_widths.size(),
            "adapter: widths must match UNet levels");
    auto conv = [&](const std::string& name, int co, int ci, int k, bool zero) {
        Tensor<float> w({co, ci, k, k});
        if (!zero) {
            const float std = std::sqrt(2.0f / float(ci * k * k));
            for (auto& v : w.data) v = std * float(rng.normal());
        }
        store.add(name + ".w", std::move(w));
        store.add(name + ".b", Tensor<float>({co}));
    };
    for (const char* branch : {"col", "str"}) {
        const std::string pre = std::string("adapter.vis.") + branch + ".";
        const int in = branch[0] == 'c' ? cfg.in_col : cfg.in_str;
        conv(pre + "stem", cfg.widths[0], in, 3, false);
        for (size_t l = 0; l < cfg.widths.size(); ++l) {
            const std::string lp = pre + "l" + std::to_string(l);
            if (l > 0) conv(lp + ".down", cfg.widths[l], cfg.widths[l - 1], 3, false);
            conv(lp + ".refine", cfg.widths[l], cfg.widths[l], 3, false);
        }
        for (size_t l = 0; l < cfg.widths.size(); ++l)
            conv(std::string("adapter.proj.") + branch + ".l" + std::to_string(l),
                 cfg.unet_widths[l], cfg.widths[l] + cfg.text_width, 1, true);
    }
}

} // namespace diae
