#pragma once

#include <string>
#include <vector>

#include "diae/conditioning.hpp"
#include "diae/scene.hpp"

namespace diae {

// Parametric stand-in for human MOS annotation. Penalties: saturation and
// value distance from the sweet spot, distance to the nearest rule-of-thirds
// intersection (scaled so the farthest in-range point maps to 1), and blur.
double parametric_mos(const AestheticParams& p);

// Distance from (cx,cy) to the nearest of {1/3,2/3}^2, scaled by 3/sqrt(2).
double thirds_distance(double cx, double cy);

// Threshold mapping from parameters to the attribute vocabulary.
Assessment assessment_text(const AestheticParams& p);

struct CorpusRecord {
    int id = 0;
    int semantic_key = 0;
    AestheticParams params;
    double mos = 0.0;
    std::string caption;
    std::string assessment_string;
    std::string mask_png_path; // relative to the corpus dir
    std::string image_png_path;
};

struct Corpus {
    std::string dir;
    std::vector<CorpusRecord> records; // ascending id

    const CorpusRecord& by_id(int id) const;
    ImageF load_image(const CorpusRecord& r) const;
    std::vector<uint8_t> load_mask(const CorpusRecord& r, int& side) const;
};

struct TripletRef {
    int input_id = 0;
    int reference_id = 0;
};

struct GenOptions {
    int triplets = 2000;
    int keys = 16;
    int side = 32;
    uint64_t seed = 0;
    double low_max = 4.0;
    double high_min = 7.0;
    int refs_per_key = 3;
    int mid_per_key = 2;
};

// Renders the corpus to dir/images + dir/masks and writes dir/meta.jsonl.
Corpus generate_corpus(const std::string& dir, const GenOptions& opts);
Corpus load_corpus(const std::string& dir);

// Per semantic key: every image with MOS <= low_max becomes an input, paired
// with the same-key maximum-MOS image with MOS >= high_min (ties broken by
// lowest id). Intermediate images appear in no triplet.
std::vector<TripletRef> form_pairs(const Corpus& corpus, double low_max,
                                   double high_min);

void write_triplets(const std::string& path, const std::vector<TripletRef>& t);
std::vector<TripletRef> load_triplets(const std::string& path);

// Fully materialized training sample.
struct TrainSample {
    int input_id = 0, reference_id = 0;
    int semantic_key = 0;
    ImageF x_inp, x_ref;
    ImageF hsv_inp;     // [3,S,S]
    ImageF contour_inp; // [1,S,S]
    Assessment assessment;
};

std::vector<TrainSample> load_train_set(const Corpus& corpus,
                                        const std::vector<TripletRef>& triplets);

} // namespace diae
