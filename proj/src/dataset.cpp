#include "diae/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "diae/png_io.hpp"
#include "diae/rng.hpp"

namespace diae {

namespace fs = std::filesystem;
using nlohmann::json;

double thirds_distance(double cx, double cy) {
    double best = 1e9;
    for (double px : {1.0 / 3.0, 2.0 / 3.0})
        for (double py : {1.0 / 3.0, 2.0 / 3.0})
            best = std::min(best, std::hypot(cx - px, cy - py));
    // farthest in-range point is a corner at sqrt(2)/3
    return best * 3.0 / std::sqrt(2.0);
}

double parametric_mos(const AestheticParams& p) {
    p.validate();
    const double score = 10.0 - 6.0 * std::fabs(p.s - 0.75) -
                         6.0 * std::fabs(p.v - 0.65) -
                         8.0 * thirds_distance(p.cx, p.cy) -
                         4.0 * std::min(p.sigma, 1.0);
    return std::clamp(score, 1.0, 10.0);
}

Assessment assessment_text(const AestheticParams& p) {
    p.validate();
    Assessment a;
    a.color_tokens.push_back(p.s < 0.4 ? 0 : (p.s > 0.9 ? 2 : 1));
    a.color_tokens.push_back(p.v < 0.35 ? 3 : (p.v > 0.85 ? 5 : 4));
    // hue-shift tone bands: [0,0.2) warm, [0.2,0.45) neutral, [0.45,0.95)
    // cool, [0.95,1) neutral
    int tone = 6;
    if (p.hue_shift >= 0.45 && p.hue_shift < 0.95)
        tone = 7;
    else if (p.hue_shift >= 0.2)
        tone = 8;
    a.color_tokens.push_back(tone);

    a.structure_tokens.push_back(p.sigma > 0.5 ? 10 : 9);
    a.structure_tokens.push_back(p.size > 0.5 ? 11 : (p.size < 0.15 ? 13 : 12));
    int comp = 16;
    if (thirds_distance(p.cx, p.cy) < 0.1)
        comp = 15;
    else if (std::hypot(p.cx - 0.5, p.cy - 0.5) <= 0.1)
        comp = 14;
    a.structure_tokens.push_back(comp);
    int tech = 19;
    if (std::fabs(p.cx - 0.5) <= 0.05 && std::fabs(p.cy - 0.5) <= 0.05)
        tech = 18; // symmetry
    else if (p.size >= 0.5)
        tech = 17; // framing
    a.structure_tokens.push_back(tech);
    return a;
}

const CorpusRecord& Corpus::by_id(int id) const {
    const auto it = std::lower_bound(
        records.begin(), records.end(), id,
        [](const CorpusRecord& r, int v) { return r.id < v; });
    require(it != records.end() && it->id == id,
            "corpus: no record with id " + std::to_string(id));
    return *it;
}

ImageF Corpus::load_image(const CorpusRecord& r) const {
    return read_image_png(dir + "/" + r.image_png_path);
}

std::vector<uint8_t> Corpus::load_mask(const CorpusRecord& r, int& side) const {
    int w = 0, h = 0;
    auto g = read_png_gray8(dir + "/" + r.mask_png_path, w, h);
    require(w == h, "corpus: non-square mask");
    side = w;
    for (auto& v : g) v = v >= 128 ? 1 : 0;
    return g;
}

namespace {

std::string img_name(int id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%06d.png", id);
    return buf;
}

AestheticParams sample_low(Rng& rng) {
    AestheticParams p;
    p.s = rng.uniform(0.05, 0.45);
    p.v = rng.uniform(0.15, 0.50);
    p.hue_shift = rng.uniform(0.0, 1.0);
    p.sigma = rng.uniform() < 0.7 ? rng.uniform(0.0, 0.5) : rng.uniform(0.5, 1.6);
    if (rng.uniform() < 0.6) {
        // push the subject toward a border or corner
        p.cx = rng.uniform() < 0.5 ? rng.uniform(0.08, 0.22) : rng.uniform(0.78, 0.92);
        p.cy = rng.uniform() < 0.5 ? rng.uniform(0.08, 0.22) : rng.uniform(0.78, 0.92);
    } else {
        p.cx = rng.uniform(0.15, 0.85);
        p.cy = rng.uniform(0.15, 0.85);
    }
    p.size = rng.uniform(0.08, 0.45);
    return p;
}

AestheticParams sample_ref(Rng& rng) {
    AestheticParams p;
    p.s = rng.uniform(0.62, 0.88);
    p.v = rng.uniform(0.52, 0.78);
    p.hue_shift = rng.uniform(0.0, 1.0);
    p.sigma = rng.uniform(0.0, 0.3);
    const double tx = rng.uniform() < 0.5 ? 1.0 / 3.0 : 2.0 / 3.0;
    const double ty = rng.uniform() < 0.5 ? 1.0 / 3.0 : 2.0 / 3.0;
    p.cx = std::clamp(tx + 0.04 * rng.normal(), 0.05, 0.95);
    p.cy = std::clamp(ty + 0.04 * rng.normal(), 0.05, 0.95);
    p.size = rng.uniform(0.12, 0.40);
    return p;
}

AestheticParams sample_any(Rng& rng) {
    AestheticParams p;
    p.s = rng.uniform(0.0, 1.0);
    p.v = rng.uniform(0.0, 1.0);
    p.hue_shift = rng.uniform(0.0, 1.0);
    p.sigma = rng.uniform(0.0, 1.8);
    p.cx = rng.uniform(0.1, 0.9);
    p.cy = rng.uniform(0.1, 0.9);
    p.size = rng.uniform(0.05, 0.6);
    return p;
}

json record_to_json(const CorpusRecord& r) {
    json jp = {{"s", r.params.s},       {"v", r.params.v},
               {"hue_shift", r.params.hue_shift}, {"cx", r.params.cx},
               {"cy", r.params.cy},     {"sigma", r.params.sigma},
               {"size", r.params.size}};
    return json{{"id", r.id},
                {"semantic_key", r.semantic_key},
                {"params", jp},
                {"mos", r.mos},
                {"caption", r.caption},
                {"assessment_string", r.assessment_string},
                {"mask_png_path", r.mask_png_path}};
}

CorpusRecord record_from_json(const json& j) {
    CorpusRecord r;
    r.id = j.at("id").get<int>();
    r.semantic_key = j.at("semantic_key").get<int>();
    const auto& jp = j.at("params");
    r.params.s = jp.at("s").get<double>();
    r.params.v = jp.at("v").get<double>();
    r.params.hue_shift = jp.at("hue_shift").get<double>();
    r.params.cx = jp.at("cx").get<double>();
    r.params.cy = jp.at("cy").get<double>();
    r.params.sigma = jp.at("sigma").get<double>();
    r.params.size = jp.at("size").get<double>();
    r.mos = j.at("mos").get<double>();
    r.caption = j.at("caption").get<std::string>();
    r.assessment_string = j.at("assessment_string").get<std::string>();
    r.mask_png_path = j.at("mask_png_path").get<std::string>();
    r.image_png_path = "images/" + img_name(r.id);
    return r;
}

} // namespace

Corpus generate_corpus(const std::string& dir, const GenOptions& opts) {
    require(opts.triplets > 0 && opts.keys > 0, "corpus: empty generation request");
    require(opts.keys <= scene_class_count() * 4,
            "corpus: too many keys for the scene classes");
    require(opts.low_max < opts.high_min, "corpus: low_max must be < high_min");
    fs::create_directories(dir + "/images");
    fs::create_directories(dir + "/masks");

    Corpus corpus;
    corpus.dir = dir;
    std::ofstream meta(dir + "/meta.jsonl", std::ios::trunc);
    require(meta.good(), "corpus: cannot write meta.jsonl");

    Rng rng(derive_seed(opts.seed, 0x636f72707573ull));
    int next_id = 0;
    auto emit = [&](int key, const AestheticParams& p) {
        SceneSpec spec;
        spec.key = key % scene_class_count();
        spec.layout_seed = rng.next_u64();
        spec.palette = int(rng.below(8));
        const SceneRender r = generate_scene(spec, p, opts.side);
        CorpusRecord rec;
        rec.id = next_id++;
        rec.semantic_key = key;
        rec.params = p;
        rec.mos = parametric_mos(p);
        rec.caption = scene_caption(spec.key);
        rec.assessment_string = assessment_text(p).render();
        rec.image_png_path = "images/" + img_name(rec.id);
        rec.mask_png_path = "masks/" + img_name(rec.id);
        write_image_png(dir + "/" + rec.image_png_path, r.image);
        std::vector<uint8_t> m(r.mask.size());
        for (size_t i = 0; i < m.size(); ++i) m[i] = r.mask[i] ? 255 : 0;
        write_png_gray8(dir + "/" + rec.mask_png_path, opts.side, opts.side, m);
        meta << record_to_json(rec).dump() << "\n";
        corpus.records.push_back(std::move(rec));
    };

    auto sample_band = [&](double lo, double hi, auto proposal) {
        for (int tries = 0; tries < 4000; ++tries) {
            AestheticParams p = proposal(rng);
            const double mos = parametric_mos(p);
            if (mos >= lo && mos <= hi) return p;
        }
        throw TensorError("corpus: rejection sampling failed for MOS band");
    };

    for (int key = 0; key < opts.keys; ++key) {
        const int n_low = opts.triplets / opts.keys +
                          (key < opts.triplets % opts.keys ? 1 : 0);
        for (int i = 0; i < opts.refs_per_key; ++i)
            emit(key, sample_band(opts.high_min, 10.0, sample_ref));
        for (int i = 0; i < n_low; ++i)
            emit(key, sample_band(1.0, opts.low_max, sample_low));
        for (int i = 0; i < opts.mid_per_key; ++i)
            emit(key, sample_band(std::nextafter(opts.low_max, 11.0),
                                  std::nextafter(opts.high_min, 0.0), sample_any));
    }
    return corpus;
}

Corpus load_corpus(const std::string& dir) {
    std::ifstream meta(dir + "/meta.jsonl");
    require(meta.good(), "corpus: cannot open " + dir + "/meta.jsonl");
    Corpus corpus;
    corpus.dir = dir;
    std::string line;
    while (std::getline(meta, line)) {
        if (line.empty()) continue;
        corpus.records.push_back(record_from_json(json::parse(line)));
    }
    std::sort(corpus.records.begin(), corpus.records.end(),
              [](const CorpusRecord& a, const CorpusRecord& b) { return a.id < b.id; });
    return corpus;
}

std::vector<TripletRef> form_pairs(const Corpus& corpus, double low_max,
                                   double high_min) {
    require(!corpus.records.empty(), "form_pairs: empty corpus");
    require(low_max < high_min, "form_pairs: low_max must be < high_min");
    std::map<int, std::vector<const CorpusRecord*>> by_key;
    for (const auto& r : corpus.records) by_key[r.semantic_key].push_back(&r);

    std::vector<TripletRef> out;
    for (auto& [key, recs] : by_key) {
        std::sort(recs.begin(), recs.end(),
                  [](const CorpusRecord* a, const CorpusRecord* b) {
                      return a->id < b->id;
                  });
        const CorpusRecord* best = nullptr;
        for (const CorpusRecord* r : recs)
            if (r->mos >= high_min && (!best || r->mos > best->mos)) best = r;
        if (!best) continue;
        for (const CorpusRecord* r : recs)
            if (r->mos <= low_max) out.push_back({r->id, best->id});
    }
    return out;
}

void write_triplets(const std::string& path, const std::vector<TripletRef>& t) {
    std::ofstream f(path, std::ios::trunc);
    require(f.good(), "triplets: cannot write " + path);
    for (const auto& tr : t)
        f << json{{"input_id", tr.input_id}, {"reference_id", tr.reference_id}}.dump()
          << "\n";
}

std::vector<TripletRef> load_triplets(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), "triplets: cannot open " + path);
    std::vector<TripletRef> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        out.push_back({j.at("input_id").get<int>(), j.at("reference_id").get<int>()});
    }
    return out;
}

std::vector<TrainSample> load_train_set(const Corpus& corpus,
                                        const std::vector<TripletRef>& triplets) {
    std::vector<TrainSample> out(triplets.size());
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < triplets.size(); ++i) {
        const auto& in = corpus.by_id(triplets[i].input_id);
        const auto& ref = corpus.by_id(triplets[i].reference_id);
        require(in.semantic_key == ref.semantic_key,
                "triplet: semantic keys differ");
        TrainSample s;
        s.input_id = in.id;
        s.reference_id = ref.id;
        s.semantic_key = in.semantic_key;
        s.x_inp = corpus.load_image(in);
        s.x_ref = corpus.load_image(ref);
        s.hsv_inp = rgb_to_hsv_map(s.x_inp);
        s.contour_inp = contour_map(s.x_inp);
        s.assessment = Assessment::parse(in.assessment_string);
        out[i] = std::move(s);
    }
    return out;
}

} // namespace diae
