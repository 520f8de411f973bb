#pragma once

#include <string>
#include <vector>

#include "diae/dataset.hpp"
#include "diae/trainer.hpp"

namespace diae {

// Measurement-side mirror of AestheticParams. Evaluation never reads
// generation parameters; everything is estimated from pixels.
struct MeasuredStats {
    double mean_saturation = 0.0;
    double mean_value = 0.0;
    double cx = 0.5, cy = 0.5; // centroid of the segmented subject
    double size = 0.0;         // segmented fraction
    double contour_mean = 0.0; // raw mean contour magnitude
    double blur_proxy = 0.0;   // inverted normalized contour mean, [0,1]
    bool degenerate = false;
};

// Otsu threshold on |V - border median|; 1 = subject.
std::vector<uint8_t> segment_subject(const ImageF& img);

MeasuredStats measure_stats(const ImageF& img);

// Parametric aesthetic score: parametric_mos applied to measured statistics.
double pas_score(const ImageF& img);

// 0.5 * IoU(segment(generated), input mask) + 0.5 * max(0, NCC(gray pair)).
// NCC of a (near-)constant image is 0 by convention.
double scs_score(const ImageF& generated, const ImageF& input,
                 const std::vector<uint8_t>& input_mask);

struct EvalRow {
    int id = 0;
    double pas_in = 0.0, pas_out = 0.0, scs = 0.0;
    uint64_t seed = 0;
};

struct BandSummary {
    int count = 0;
    double mean_pas_in = 0.0, mean_pas_out = 0.0, delta_pas = 0.0, mean_scs = 0.0;
};

struct EvalSummary {
    double mean_pas_in = 0.0, mean_pas_out = 0.0, delta_pas = 0.0, mean_scs = 0.0;
    double mean_scs_null = -1.0; // shuffled-pairing null, -1 when not computed
    BandSummary low, high;       // input bands PAS < 4 and PAS > 5
};

struct EvalReport {
    std::vector<EvalRow> rows;
    EvalSummary summary;
};

struct EvalOptions {
    std::vector<uint64_t> seeds = {0};
    int count = 0;          // 0 = all triplets
    bool with_null = false; // also score outputs against rotated inputs
    std::string save_images_dir; // empty = do not write PNGs
    int batch = 32;
};

EvalReport run_eval(const ParamStore<float>& params, const ModelConfig& mc,
                    const RunConfig& cfg, const Corpus& test_corpus,
                    const std::vector<TripletRef>& test_triplets,
                    const EvalOptions& opts);

void write_eval_report(const EvalReport& rep, const std::string& out_dir);

} // namespace diae
