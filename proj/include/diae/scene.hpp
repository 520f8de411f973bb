#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diae/conditioning.hpp"

namespace diae {

// Parametric degradation/quality knobs of a rendered scene. `size` is the
// subject's area as a fraction of the image.
struct AestheticParams {
    double s = 1.0;        // saturation scale, [0,1]
    double v = 1.0;        // value scale, [0,1]
    double hue_shift = 0.0; // [0,1)
    double cx = 0.5, cy = 0.5; // subject centroid, [0,1]^2
    double sigma = 0.0;    // Gaussian blur std in pixels, [0,2]
    double size = 0.2;     // subject relative size, (0, 0.9]

    void validate() const;
};

struct SceneSpec {
    int key = 0;           // semantic class, [0, scene_class_count())
    uint64_t layout_seed = 0;
    int palette = 0;

    void validate() const;
};

struct SceneRender {
    ImageF image;              // [3,side,side]
    std::vector<uint8_t> mask; // side*side, 1 = subject (pre-blur coverage)
    int side = 0;
};

int scene_class_count();
const std::string& scene_class_name(int key);
const std::string& scene_caption(int key);

// Background gradient + subject shape, rendered with 4x4 supersampling; hue
// shift and saturation/value scaling applied in HSV space; Gaussian blur
// last. The mask is taken before blur.
SceneRender generate_scene(const SceneSpec& spec, const AestheticParams& params,
                           int side);

// The composite before any parameter is applied (identity params, no blur).
SceneRender generate_scene_base(const SceneSpec& spec, int side);

ImageF gaussian_blur(const ImageF& img, double sigma);

} // namespace diae
