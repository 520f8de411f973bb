#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "diae/autodiff.hpp"
#include "diae/params.hpp"
#include "diae/rng.hpp"
#include "diae/tensor.hpp"

namespace diae {

using ImageF = Tensor<float>; // [3,H,W], values in [0,1]

// ------------------------------------------------------------ map extract --

// RGB -> HSV, hue scaled to [0,1), achromatic hue defined as 0.
ImageF rgb_to_hsv_map(const ImageF& rgb);
ImageF hsv_to_rgb(const ImageF& hsv);

// Sobel magnitude of the luminance channel, replicate border, normalized by
// the theoretical maximum 4*sqrt(2) for [0,1] inputs.
ImageF contour_map(const ImageF& rgb); // [1,H,W]

// ----------------------------------------------------------------- vocab --

// Closed attribute vocabulary. Category order is the render order of the
// standardized assessment string.
enum class AttrCategory { Saturation, Lighting, Tone, Focus, Shot, Composition, CompTech };

struct Vocab {
    static constexpr int kSize = 20;
    static const char* token(int idx);
    static int index(const std::string& token); // throws on unknown token
    static bool is_color(int idx) { return idx < 9; }
};

struct Assessment {
    std::vector<int> color_tokens;     // saturation, lighting, tone
    std::vector<int> structure_tokens; // focus, shot, composition, comp technique

    // `Color: a; b; c. Structure: d; e; f; g.`
    std::string render() const;
    static Assessment parse(const std::string& text);
};

// ------------------------------------------------------------- adapters --

struct AdapterConfig {
    int in_col = 3;              // HSV map channels
    int in_str = 1;              // contour map channels
    std::vector<int> widths;     // visual feature channels per UNet level
    int text_width = 64;
    std::vector<int> unet_widths; // UNet channels per level (projection outputs)
};

// Parameter names, grouped per branch ("col"/"str"): stem + one
// refine/downsample pair per level, plus the zero-initialized per-level 1x1
// projections that feed the UNet.
void adapter_init(ParamStore<float>& store, const AdapterConfig& cfg, Rng& rng);

// Visual/textual conditioning node bundle. Features may come from the
// trainable encoders (training) or from precomputed leaves (sampling).
struct CondNodes {
    std::vector<int> vis_col, vis_str; // per level [N,Cv,Hl,Wl]
    int txt_col = -1, txt_str = -1;    // [N,text_width]
};

// Runs both conv encoders over the HSV and contour leaves; returns per-level
// feature node ids.
template <class T>
std::pair<std::vector<int>, std::vector<int>> encode_visual_graph(
    Graph<T>& g, const BoundParams<T>& P, const AdapterConfig& cfg, int hsv,
    int contour) {
    auto run = [&](const char* branch, int x) {
        std::vector<int> feats;
        std::string pre = std::string("adapter.vis.") + branch + ".";
        int h = g.silu(g.conv2d(x, P[pre + "stem.w"], P[pre + "stem.b"], 1));
        for (size_t l = 0; l < cfg.widths.size(); ++l) {
            const std::string lp = pre + "l" + std::to_string(l) + ".";
            if (l > 0)
                h = g.silu(g.conv2d(h, P[lp + "down.w"], P[lp + "down.b"], 2));
            h = g.silu(g.conv2d(h, P[lp + "refine.w"], P[lp + "refine.b"], 1));
            feats.push_back(h);
        }
        return feats;
    };
    return {run("col", hsv), run("str", contour)};
}

// Broadcast the text vector, concatenate with the visual feature map, apply
// the zero-initialized 1x1 projection and add onto the UNet activation.
// Identity at initialization by construction.
template <class T>
int inject_control(Graph<T>& g, const BoundParams<T>& P, int act, int level,
                   const CondNodes& cond) {
    const auto& av = g.val(act);
    const int h = av.dim(2), w = av.dim(3);
    struct Branch {
        const char* name;
        int vis, txt;
    };
    const Branch branches[2] = {
        {"col", cond.vis_col[size_t(level)], cond.txt_col},
        {"str", cond.vis_str[size_t(level)], cond.txt_str},
    };
    for (const auto& br : branches) {
        const int bc = g.broadcast_hw(br.txt, h, w);
        const int z = g.concat_ch(br.vis, bc);
        const std::string pre =
            std::string("adapter.proj.") + br.name + ".l" + std::to_string(level) + ".";
        act = g.add(act, g.conv2d(z, P[pre + "w"], P[pre + "b"], 1));
    }
    return act;
}

} // namespace diae
