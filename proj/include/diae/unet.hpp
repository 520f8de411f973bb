#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "diae/autodiff.hpp"
#include "diae/conditioning.hpp"
#include "diae/params.hpp"
#include "diae/rng.hpp"

namespace diae {

// Conditional epsilon-prediction UNet: the clean conditioning image rides in
// as three extra input channels, the caption embedding is projected onto the
// time embedding, and the control signals are added at each encoder level
// through the zero-initialized adapter projections.
struct UNetConfig {
    int side = 32;
    int in_channels = 6; // noised latent + clean conditioning image
    int out_channels = 3;
    int base = 32;
    std::vector<int> mults = {1, 2, 4};
    int blocks = 2;
    int temb_width = 128;
    int cap_width = 64;
    int groups = 8;

    int levels() const { return int(mults.size()); }
    int width(int level) const { return base * mults[size_t(level)]; }
    std::vector<int> level_widths() const {
        std::vector<int> w;
        for (int l = 0; l < levels(); ++l) w.push_back(width(l));
        return w;
    }
    void validate() const {
        require(!mults.empty() && blocks >= 1, "unet: empty config");
        const int down = 1 << (levels() - 1);
        require(side % down == 0, "unet: side not divisible by 2^(levels-1)");
        require(temb_width % 2 == 0, "unet: time embedding width must be even");
        for (int l = 0; l < levels(); ++l)
            require(width(l) % groups == 0, "unet: widths must divide into groups");
    }
};

// [N, width] sinusoidal features of the (1-based) timesteps
template <class T>
Tensor<T> sinusoidal_time_embedding(const std::vector<int>& ts, int width) {
    const int half = width / 2;
    Tensor<T> out({int(ts.size()), width});
    for (size_t i = 0; i < ts.size(); ++i)
        for (int j = 0; j < half; ++j) {
            const double freq =
                std::exp(-std::log(10000.0) * double(j) / double(std::max(1, half - 1)));
            const double a = double(ts[i]) * freq;
            out[i * size_t(width) + size_t(2 * j)] = T(std::sin(a));
            out[i * size_t(width) + size_t(2 * j + 1)] = T(std::cos(a));
        }
    return out;
}

namespace detail {

inline void add_conv(ParamStore<float>& p, Rng& rng, const std::string& name,
                     int co, int ci, int k, bool zero = false) {
    Tensor<float> w({co, ci, k, k});
    if (!zero) {
        const float std = std::sqrt(2.0f / float(ci * k * k));
        for (auto& v : w.data) v = std * float(rng.normal());
    }
    p.add(name + ".w", std::move(w));
    p.add(name + ".b", Tensor<float>({co}));
}

inline void add_dense(ParamStore<float>& p, Rng& rng, const std::string& name,
                      int in, int out) {
    Tensor<float> w({in, out});
    const float std = std::sqrt(2.0f / float(in));
    for (auto& v : w.data) v = std * float(rng.normal());
    p.add(name + ".w", std::move(w));
    p.add(name + ".b", Tensor<float>({out}));
}

inline void add_norm(ParamStore<float>& p, const std::string& name, int c) {
    p.add(name + ".g", Tensor<float>::full({c}, 1.0f));
    p.add(name + ".b", Tensor<float>({c}));
}

inline void add_resblock(ParamStore<float>& p, Rng& rng, const std::string& pre,
                         int cin, int cout, int temb) {
    add_norm(p, pre + ".gn1", cin);
    add_conv(p, rng, pre + ".conv1", cout, cin, 3);
    add_dense(p, rng, pre + ".temb", temb, cout);
    add_norm(p, pre + ".gn2", cout);
    add_conv(p, rng, pre + ".conv2", cout, cout, 3);
    if (cin != cout) add_conv(p, rng, pre + ".skip", cout, cin, 1);
}

} // namespace detail

inline void unet_init(ParamStore<float>& p, const UNetConfig& cfg, Rng& rng) {
    cfg.validate();
    const int tw = cfg.temb_width;
    detail::add_dense(p, rng, "unet.temb.fc1", tw, tw);
    detail::add_dense(p, rng, "unet.temb.fc2", tw, tw);
    detail::add_dense(p, rng, "unet.temb.cap", cfg.cap_width, tw);
    detail::add_conv(p, rng, "unet.stem", cfg.base, cfg.in_channels, 3);
    const int L = cfg.levels();
    for (int l = 0; l < L; ++l) {
        const int c = cfg.width(l);
        for (int b = 0; b < cfg.blocks; ++b)
            detail::add_resblock(
                p, rng, "unet.enc.l" + std::to_string(l) + ".b" + std::to_string(b),
                b == 0 ? (l == 0 ? cfg.base : cfg.width(l)) : c, c, tw);
        if (l + 1 < L)
            detail::add_conv(p, rng, "unet.down.l" + std::to_string(l),
                             cfg.width(l + 1), c, 3);
    }
    const int cm = cfg.width(L - 1);
    detail::add_resblock(p, rng, "unet.mid.b0", cm, cm, tw);
    detail::add_resblock(p, rng, "unet.mid.b1", cm, cm, tw);
    for (int l = L - 1; l >= 0; --l) {
        const int c = cfg.width(l);
        for (int b = 0; b < cfg.blocks; ++b)
            detail::add_resblock(
                p, rng, "unet.dec.l" + std::to_string(l) + ".b" + std::to_string(b),
                b == 0 ? 2 * c : c, c, tw);
        if (l > 0)
            detail::add_conv(p, rng, "unet.up.l" + std::to_string(l), cfg.width(l - 1),
                             c, 3);
    }
    detail::add_norm(p, "unet.head.gn", cfg.base);
    detail::add_conv(p, rng, "unet.head.conv", cfg.out_channels, cfg.base, 3,
                     /*zero=*/true);
}

namespace detail {

template <class T>
int resblock(Graph<T>& g, const BoundParams<T>& P, const std::string& pre, int h,
             int tact, int groups) {
    const int cin = g.val(h).dim(1);
    int a = g.groupnorm(h, P[pre + ".gn1.g"], P[pre + ".gn1.b"], groups);
    a = g.silu(a);
    a = g.conv2d(a, P[pre + ".conv1.w"], P[pre + ".conv1.b"], 1);
    a = g.add_row_hw(a, g.dense(tact, P[pre + ".temb.w"], P[pre + ".temb.b"]));
    int b = g.groupnorm(a, P[pre + ".gn2.g"], P[pre + ".gn2.b"], groups);
    b = g.silu(b);
    b = g.conv2d(b, P[pre + ".conv2.w"], P[pre + ".conv2.b"], 1);
    const int cout = g.val(b).dim(1);
    const int skip = (cin == cout)
                         ? h
                         : g.conv2d(h, P[pre + ".skip.w"], P[pre + ".skip.b"], 1);
    return g.add(skip, b);
}

} // namespace detail

// Epsilon prediction. `cond` carries per-level conditioning features and the
// two text vectors; pass nullptr to run unconditioned (identical output while
// the projections are at zero).
template <class T>
int unet_forward(Graph<T>& g, const BoundParams<T>& P, const UNetConfig& cfg,
                 int x_noised, int x_clean, const std::vector<int>& ts,
                 int cap_emb, const CondNodes* cond) {
    const auto& xv = g.val(x_noised);
    require(xv.rank() == 4 && xv.dim(2) == cfg.side && xv.dim(3) == cfg.side,
            "unet: input must be [N,3," + std::to_string(cfg.side) + "," +
                std::to_string(cfg.side) + "]");
    require(g.val(x_clean).shape == xv.shape, "unet: clean image shape mismatch");
    require(int(ts.size()) == xv.dim(0), "unet: one timestep per sample");

    const int temb0 =
        g.leaf(sinusoidal_time_embedding<T>(ts, cfg.temb_width));
    int temb = g.dense(temb0, P["unet.temb.fc1.w"], P["unet.temb.fc1.b"]);
    temb = g.silu(temb);
    temb = g.dense(temb, P["unet.temb.fc2.w"], P["unet.temb.fc2.b"]);
    temb = g.add(temb, g.dense(cap_emb, P["unet.temb.cap.w"], P["unet.temb.cap.b"]));
    const int tact = g.silu(temb);

    int h = g.conv2d(g.concat_ch(x_noised, x_clean), P["unet.stem.w"],
                     P["unet.stem.b"], 1);
    const int L = cfg.levels();
    std::vector<int> skips;
    for (int l = 0; l < L; ++l) {
        for (int b = 0; b < cfg.blocks; ++b)
            h = detail::resblock(g, P,
                                 "unet.enc.l" + std::to_string(l) + ".b" +
                                     std::to_string(b),
                                 h, tact, cfg.groups);
        if (cond) h = inject_control(g, P, h, l, *cond);
        skips.push_back(h);
        if (l + 1 < L)
            h = g.conv2d(h, P["unet.down.l" + std::to_string(l) + ".w"],
                         P["unet.down.l" + std::to_string(l) + ".b"], 2);
    }
    h = detail::resblock(g, P, "unet.mid.b0", h, tact, cfg.groups);
    h = detail::resblock(g, P, "unet.mid.b1", h, tact, cfg.groups);
    for (int l = L - 1; l >= 0; --l) {
        h = g.concat_ch(h, skips[size_t(l)]);
        for (int b = 0; b < cfg.blocks; ++b)
            h = detail::resblock(g, P,
                                 "unet.dec.l" + std::to_string(l) + ".b" +
                                     std::to_string(b),
                                 h, tact, cfg.groups);
        if (l > 0) {
            h = g.upsample2x(h);
            h = g.conv2d(h, P["unet.up.l" + std::to_string(l) + ".w"],
                         P["unet.up.l" + std::to_string(l) + ".b"], 1);
        }
    }
    h = g.groupnorm(h, P["unet.head.gn.g"], P["unet.head.gn.b"], cfg.groups);
    h = g.silu(h);
    return g.conv2d(h, P["unet.head.conv.w"], P["unet.head.conv.b"], 1);
}

} // namespace diae
