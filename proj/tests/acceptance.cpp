// Acceptance suite. Each criterion prints one PASS/FAIL line. The
// training-heavy criteria (8-10) keep their runs in a cache directory
// (DIAE_ACCEPT_CACHE or the build-tree default) and re-verify their
// assertions from the stored reports on later invocations; delete the cache
// to retrain from scratch.

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "diae/ablation.hpp"
#include "diae/dataset.hpp"
#include "diae/evalharness.hpp"
#include "diae/fdcheck.hpp"
#include "diae/parallel.hpp"
#include "diae/png_io.hpp"
#include "diae/sampler.hpp"
#include "diae/selftest.hpp"
#include "diae/trainer.hpp"

using namespace diae;
namespace fs = std::filesystem;

namespace {

int g_pass = 0, g_fail = 0;

void report(int crit, bool ok, const std::string& what) {
    std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", crit, what.c_str());
    std::fflush(stdout);
    (ok ? g_pass : g_fail) += 1;
}

std::string cache_dir() {
    if (const char* env = std::getenv("DIAE_ACCEPT_CACHE")) return env;
#ifdef DIAE_ACCEPT_CACHE
    return DIAE_ACCEPT_CACHE;
#else
    return "acceptance_cache";
#endif
}

// Shared corpora. The default-config corpus serves criteria 8-10, the tiny
// one serves 5 and 11.
struct Fixtures {
    std::string train_dir, test_dir, tiny_dir;
};

Fixtures fixtures() {
    Fixtures f;
    const std::string root = cache_dir();
    f.train_dir = root + "/corpus_train";
    f.test_dir = root + "/corpus_test";
    f.tiny_dir = root + "/corpus_tiny";
    auto gen = [&](const std::string& dir, int triplets, int keys, uint64_t seed) {
        if (fs::exists(dir + "/triplets.jsonl")) return;
        GenOptions opts;
        opts.triplets = triplets;
        opts.keys = keys;
        opts.side = 32;
        opts.seed = seed;
        const Corpus c = generate_corpus(dir, opts);
        write_triplets(dir + "/triplets.jsonl", form_pairs(c, 4.0, 7.0));
    };
    gen(f.train_dir, 2000, 16, 9001);
    gen(f.test_dir, 200, 16, 9002);
    gen(f.tiny_dir, 48, 8, 9003);
    return f;
}

RunConfig default_cfg(const Fixtures& f) {
    RunConfig cfg;
    cfg.corpus_dir = f.train_dir;
    cfg.test_corpus_dir = f.test_dir;
    cfg.validate();
    return cfg;
}

RunConfig tiny_cfg(const Fixtures& f) {
    RunConfig cfg;
    cfg.corpus_dir = f.tiny_dir;
    cfg.test_corpus_dir = f.tiny_dir;
    cfg.base_channels = 8;
    cfg.res_blocks = 1;
    cfg.batch_size = 4;
    cfg.t_total = 100;
    cfg.t_s = 90;
    cfg.ckpt_interval = 0;
    cfg.log_interval = 5;
    cfg.num_sample_steps = 10;
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------- helpers --

TrainerState train_cached(const RunConfig& cfg, const std::string& dir,
                          const std::vector<TrainSample>& set) {
    const std::string ckpt = dir + "/checkpoint.diae";
    if (fs::exists(ckpt)) return load_trainer_checkpoint(ckpt);
    TrainerState st = init_trainer(cfg);
    train_loop(st, set, dir, /*quiet=*/true);
    return st;
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

// ---------------------------------------------------------------- criteria --

void criterion1() {
    RunConfig cfg;
    cfg.validate();
    const GradCheckResult r = selftest_grad(cfg, 3, false);
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "gradient fidelity: max rel err %.3e over %zu coords (< 1e-3), "
                  "%.0fs (< 300s)",
                  r.max_rel, r.coords, r.seconds);
    report(1, r.pass && r.seconds < 300.0, buf);
}

void criterion2() {
    const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
    bool ok = s.abar(1) == 1.0 - s.beta_at(1);
    for (int t = 2; t <= 1000 && ok; ++t) ok = s.abar(t) < s.abar(t - 1);
    long double prod = 1.0L;
    for (int t = 1; t <= 1000; ++t) prod *= (1.0L - (long double)s.beta_at(t));
    const double rel = std::fabs(double(prod) - s.abar(1000)) / double(prod);
    ok = ok && rel < 1e-9;

    Tensor<float> x0({3, 2, 2});
    {
        Rng rng(41);
        for (auto& v : x0.data) v = float(rng.uniform(0.05, 0.95));
    }
    double worst_mean = 0.0, worst_var = 0.0;
    for (const int t : {10, 500, 990}) {
        const double ab = s.abar(t);
        std::vector<double> mean(x0.numel(), 0.0), m2(x0.numel(), 0.0);
        Rng rng(derive_seed(7, 0x6d63ull, uint64_t(t)));
        Tensor<float> eps(x0.shape);
        for (int d = 0; d < 100000; ++d) {
            rng.fill_normal(eps.ptr(), eps.numel());
            const Tensor<float> xt = forward_noise(x0, t, eps, s);
            for (size_t i = 0; i < xt.numel(); ++i) {
                mean[i] += xt[i];
                m2[i] += double(xt[i]) * double(xt[i]);
            }
        }
        for (size_t i = 0; i < x0.numel(); ++i) {
            mean[i] /= 100000.0;
            const double var = m2[i] / 100000.0 - mean[i] * mean[i];
            worst_mean = std::max(
                worst_mean, std::fabs(mean[i] - std::sqrt(ab) * double(x0[i])));
            worst_var = std::max(worst_var,
                                 std::fabs(var - (1.0 - ab)) / (1.0 - ab));
        }
    }
    ok = ok && worst_mean <= 0.01 && worst_var <= 0.01;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "schedule exact (abar oracle rel %.2e), forward-noise moments "
                  "1e5 draws (mean dev %.4f, var dev %.4f)",
                  rel, worst_mean, worst_var);
    report(2, ok, buf);
}

void criterion3() {
    RunConfig cfg;
    cfg.validate();
    const ModelConfig mc = ModelConfig::from_run(cfg);
    ParamStore<float> params;
    model_init(params, mc, 3);
    {
        // non-zero head: an all-zero output would satisfy the identity
        // vacuously
        Rng jitter(56);
        for (auto& v : params.at("unet.head.conv.w").data)
            v = 0.05f * float(jitter.normal());
    }
    Rng rng(17);
    Tensor<float> x_t({2, 3, 32, 32}), clean({2, 3, 32, 32});
    rng.fill_normal(x_t.ptr(), x_t.numel());
    for (auto& v : clean.data) v = float(rng.uniform(0.0, 1.0));
    const ImageF one = [&] {
        ImageF img({3, 32, 32});
        std::memcpy(img.ptr(), clean.ptr(), img.numel() * sizeof(float));
        return img;
    }();
    const ImageF hsv1 = rgb_to_hsv_map(one);
    const ImageF con1 = contour_map(one);
    Tensor<float> hsv({2, 3, 32, 32}), con({2, 1, 32, 32});
    for (int i = 0; i < 2; ++i) {
        std::memcpy(hsv.ptr() + size_t(i) * hsv1.numel(), hsv1.ptr(),
                    hsv1.numel() * sizeof(float));
        std::memcpy(con.ptr() + size_t(i) * con1.numel(), con1.ptr(),
                    con1.numel() * sizeof(float));
    }
    auto predict = [&](bool with_cond) {
        Graph<float> g;
        g.train_mode = false;
        const BoundParams<float> P = bind_params(g, params, false);
        CondNodes cond;
        if (with_cond) {
            auto feats = encode_visual_graph(g, P, mc.adapter, g.leaf(hsv), g.leaf(con));
            cond.vis_col = feats.first;
            cond.vis_str = feats.second;
            cond.txt_col = g.embed_mean(P["embed.attr"], {{0, 4}, {1, 5}});
            cond.txt_str = g.embed_mean(P["embed.attr"], {{9, 12}, {10, 15}});
        }
        const int cap = g.embed_mean(P["embed.caption"], {{1}, {2}});
        return g.val(unet_forward(g, P, mc.unet, g.leaf(x_t), g.leaf(clean),
                                  {250, 950}, cap, with_cond ? &cond : nullptr));
    };
    const auto a = predict(true);
    const auto b = predict(false);
    const bool ok =
        std::memcmp(a.ptr(), b.ptr(), a.numel() * sizeof(float)) == 0;
    report(3, ok, "zero-init identity: conditioned output bit-identical to "
                  "unconditioned before any optimizer step");
}

void criterion4() {
    bool ok = true;
    for (int t = 1; t <= 1000; ++t) {
        const auto f = fold_timestep(t, 900, FoldPolicy::Folded);
        const int want = (t % 900 == 0) ? 900 : t % 900;
        ok = ok && f.has_value() && *f == want;
    }
    ok = ok && *fold_timestep(950, 900, FoldPolicy::Folded) == 50;
    int skipped = 0;
    for (int t = 1; t <= 1000; ++t) {
        const auto f = fold_timestep(t, 900, FoldPolicy::Gated);
        if (!f.has_value()) {
            skipped += 1;
            ok = ok && t > 900;
        } else {
            ok = ok && *f == t && t <= 900;
        }
    }
    ok = ok && skipped == 100;
    report(4, ok, "fold semantics exhaustive over t in [1,1000] at t_s=900 "
                  "(950 -> 50; gated skips exactly 100 timesteps)");
}

void criterion5(const Fixtures& f) {
    RunConfig cfg = tiny_cfg(f);
    cfg.steps = 200;
    const Corpus corpus = load_corpus(cfg.corpus_dir);
    const auto set =
        load_train_set(corpus, load_triplets(cfg.corpus_dir + "/triplets.jsonl"));

    RunConfig dual = cfg;
    dual.lambda_inp = 0.0;
    TrainerState a = init_trainer(dual);
    RunConfig ref_only = cfg;
    ref_only.branch_mode = "reference_only";
    TrainerState b = init_trainer(ref_only);
    for (int s = 0; s < 200; ++s) {
        train_step(a, set);
        train_step(b, set);
    }
    bool ok = true;
    for (size_t i = 0; i < a.params.size() && ok; ++i)
        ok = std::memcmp(a.params.tensor(i).ptr(), b.params.tensor(i).ptr(),
                         a.params.tensor(i).numel() * sizeof(float)) == 0;
    report(5, ok, "lambda = 0 trajectory over 200 steps bit-identical to the "
                  "reference-only trainer (aligned rng streams)");
}

void criterion6() {
    const std::string dir = cache_dir() + "/corpus_10k";
    if (!fs::exists(dir + "/meta.jsonl")) {
        GenOptions opts;
        opts.triplets = 9920; // plus 16*(3+2) refs and mid-band fillers = 10,000 images
        opts.keys = 16;
        opts.side = 32;
        opts.seed = 600;
        generate_corpus(dir, opts);
    }
    const Corpus corpus = load_corpus(dir);
    const auto triplets = form_pairs(corpus, 4.0, 7.0);

    bool ok = corpus.records.size() >= 10000;
    std::map<int, const CorpusRecord*> best_ref;
    for (const auto& r : corpus.records) {
        if (r.mos < 7.0) continue;
        auto& slot = best_ref[r.semantic_key];
        if (!slot || r.mos > slot->mos) slot = &r;
    }
    std::map<int, int> used_as_input;
    for (const auto& t : triplets) {
        const auto& in = corpus.by_id(t.input_id);
        const auto& ref = corpus.by_id(t.reference_id);
        ok = ok && in.semantic_key == ref.semantic_key;
        ok = ok && in.mos <= 4.0 && ref.mos >= 7.0;
        ok = ok && best_ref.count(in.semantic_key) &&
             ref.id == best_ref[in.semantic_key]->id;
        used_as_input[t.input_id] += 1;
    }
    for (const auto& r : corpus.records) {
        const bool is_input = used_as_input.count(r.id) > 0;
        if (r.mos > 4.0) ok = ok && !is_input;            // banding
        if (r.mos <= 4.0 && best_ref.count(r.semantic_key))
            ok = ok && used_as_input[r.id] == 1;          // every low image used once
    }

    // order invariance
    Corpus shuffled = corpus;
    Rng rng(77);
    for (size_t i = shuffled.records.size(); i > 1; --i)
        std::swap(shuffled.records[i - 1], shuffled.records[rng.below(i)]);
    auto triplets2 = form_pairs(shuffled, 4.0, 7.0);
    auto key = [](const TripletRef& t) { return (int64_t(t.input_id) << 32) | t.reference_id; };
    std::vector<int64_t> k1, k2;
    for (const auto& t : triplets) k1.push_back(key(t));
    for (const auto& t : triplets2) k2.push_back(key(t));
    std::sort(k1.begin(), k1.end());
    std::sort(k2.begin(), k2.end());
    ok = ok && k1 == k2;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "pairing rules over %zu images / %zu triplets: banding, "
                  "same-key, max-MOS reference, order invariance",
                  corpus.records.size(), triplets.size());
    report(6, ok, buf);
}

void criterion7() {
    bool ok = true;
    double worst = 0.0;
    // grid + random colors, roundtrip
    {
        std::vector<float> vals;
        for (int i = 0; i <= 8; ++i) vals.push_back(float(i) / 8.0f);
        Rng rng(123);
        std::vector<std::array<float, 3>> colors;
        for (float r : vals)
            for (float g : vals)
                for (float b : vals) colors.push_back({r, g, b});
        for (int i = 0; i < 2000; ++i)
            colors.push_back({float(rng.uniform()), float(rng.uniform()),
                              float(rng.uniform())});
        ImageF img({3, 1, int(colors.size())});
        for (size_t i = 0; i < colors.size(); ++i) {
            img[i] = colors[i][0];
            img[colors.size() + i] = colors[i][1];
            img[2 * colors.size() + i] = colors[i][2];
        }
        const ImageF back = hsv_to_rgb(rgb_to_hsv_map(img));
        for (size_t i = 0; i < img.numel(); ++i)
            worst = std::max(worst, std::fabs(double(img[i]) - double(back[i])));
        ok = ok && worst < 1e-5;
    }
    // constant image -> exactly zero contour
    {
        const ImageF flat = ImageF::full({3, 16, 16}, 0.37f);
        const ImageF c = contour_map(flat);
        for (float v : c.data) ok = ok && v == 0.0f;
    }
    // hand-computed Sobel on a 3x3 patch, replicate border
    {
        // gray levels chosen so luminance is the value itself
        const float p[9] = {0.10f, 0.20f, 0.40f, 0.30f, 0.50f, 0.60f,
                            0.00f, 0.80f, 0.90f};
        ImageF img({3, 3, 3});
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < 9; ++i) img[size_t(c) * 9 + i] = p[i];
        const ImageF cm = contour_map(img);
        // by hand at the center pixel: Gx = (0.4+2*0.6+0.9) - (0.1+2*0.3+0.0)
        //                              Gy = (0.0+2*0.8+0.9) - (0.1+2*0.2+0.4)
        const double gx = (0.4 + 2 * 0.6 + 0.9) - (0.1 + 2 * 0.3 + 0.0);
        const double gy = (0.0 + 2 * 0.8 + 0.9) - (0.1 + 2 * 0.2 + 0.4);
        const double want =
            std::min(1.0, std::sqrt(gx * gx + gy * gy) / (4.0 * std::sqrt(2.0)));
        ok = ok && std::fabs(double(cm[4]) - want) < 1e-6;
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "HSV roundtrip max abs %.2e (< 1e-5), constant contour exactly "
                  "zero, Sobel hand oracle to 1e-6",
                  worst);
    report(7, ok, buf);
}

void criterion8(const Fixtures& f) {
    const RunConfig base = default_cfg(f);
    const Corpus train_corpus = load_corpus(base.corpus_dir);
    const Corpus test_corpus = load_corpus(base.test_corpus_dir);
    const auto train_set = load_train_set(
        train_corpus, load_triplets(base.corpus_dir + "/triplets.jsonl"));
    const auto test_triplets = load_triplets(base.test_corpus_dir + "/triplets.jsonl");

    bool ok = true;
    std::string detail;
    for (const uint64_t seed : {0ull, 1ull, 2ull}) {
        RunConfig cfg = base;
        cfg.seed = seed;
        const std::string dir = cache_dir() + "/c8_seed" + std::to_string(seed);
        TrainerState st = train_cached(cfg, dir, train_set);

        const std::string summary = dir + "/summary.json";
        if (!fs::exists(summary)) {
            EvalOptions opts;
            opts.seeds = {seed};
            opts.count = 200;
            opts.with_null = true;
            const EvalReport rep = run_eval(st.params, st.mcfg, st.cfg,
                                            test_corpus, test_triplets, opts);
            write_eval_report(rep, dir);
        }
        nlohmann::json j;
        std::ifstream(summary) >> j;
        const double dp = j.at("delta_pas").get<double>();
        const double scs = j.at("mean_scs").get<double>();
        const double null_scs = j.at("mean_scs_null").get<double>();
        ok = ok && dp > 0.0 && scs > null_scs;
        char buf[128];
        std::snprintf(buf, sizeof(buf), " [seed %llu: dPAS %+.3f, SCS %.3f vs null %.3f]",
                      static_cast<unsigned long long>(seed), dp, scs, null_scs);
        detail += buf;
    }
    report(8, ok, "end-to-end improvement, 5000 steps x 3 seeds:" + detail);
}

void criterion9(const Fixtures& f) {
    RunConfig cfg = default_cfg(f);
    cfg.ablate_ts_values = "300,600,900";
    cfg.ablate_seeds = "0,1,2";
    const auto cells = run_ablation_ts(cfg, cache_dir() + "/ablate_ts");
    std::map<int, std::vector<double>> by_ts;
    for (const auto& c : cells) by_ts[c.ts].push_back(c.mean_scs);
    const double s300 = mean_of(by_ts[300]);
    const double s600 = mean_of(by_ts[600]);
    const double s900 = mean_of(by_ts[900]);
    // at most one inverted adjacent pair, and only within 0.01 absolute
    const double viol_hi = s900 >= s600 ? 0.0 : s600 - s900;
    const double viol_lo = s600 >= s300 ? 0.0 : s300 - s600;
    const int inversions = (viol_hi > 0.0) + (viol_lo > 0.0);
    const bool both =
        inversions == 0 || (inversions == 1 && viol_hi <= 0.01 && viol_lo <= 0.01);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "t_s sweep seed-averaged SCS: 0.9T %.4f >= 0.6T %.4f >= 0.3T "
                  "%.4f (one <=0.01 inversion allowed)",
                  s900, s600, s300);
    report(9, both, buf);
}

void criterion10(const Fixtures& f) {
    RunConfig cfg = default_cfg(f);
    cfg.ablate_seeds = "0,1,2";
    const auto cells = run_ablation_map(cfg, cache_dir() + "/ablate_map");
    std::map<std::string, std::vector<double>> pas, scs;
    for (const auto& c : cells) {
        pas[c.variant].push_back(c.mean_pas);
        scs[c.variant].push_back(c.mean_scs);
    }
    const double pas_full = mean_of(pas["full"]);
    const double pas_nov = mean_of(pas["no_v"]);
    const double pas_not = mean_of(pas["no_t"]);
    const double scs_nov = mean_of(scs["no_v"]);
    const double scs_not = mean_of(scs["no_t"]);
    const bool ok = pas_full >= pas_not && pas_full >= pas_nov && scs_not >= scs_nov;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "MAP ablation seed-averaged: PAS full %.4f >= no_t %.4f, "
                  ">= no_v %.4f; SCS no_t %.4f >= no_v %.4f",
                  pas_full, pas_not, pas_nov, scs_not, scs_nov);
    report(10, ok, buf);
}

void criterion11(const Fixtures& f) {
    RunConfig cfg = tiny_cfg(f);
    cfg.steps = 20;
    const Corpus corpus = load_corpus(cfg.corpus_dir);
    const auto triplets = load_triplets(cfg.corpus_dir + "/triplets.jsonl");
    const auto set = load_train_set(corpus, triplets);
    const std::string dir = cache_dir() + "/c11";
    fs::remove_all(dir);
    TrainerState st = init_trainer(cfg);
    train_loop(st, set, dir + "/train", true);

    // checkpoint save -> load -> save byte identity
    const std::string p1 = dir + "/a.diae", p2 = dir + "/b.diae";
    save_trainer_checkpoint(st, p1);
    TrainerState re = load_trainer_checkpoint(p1);
    save_trainer_checkpoint(re, p2);
    auto slurp = [](const std::string& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(f), {});
    };
    bool ok = slurp(p1) == slurp(p2) && !slurp(p1).empty();

    // eval twice: byte-identical csv/json and sampled PNGs
    for (const char* run : {"e1", "e2"}) {
        EvalOptions opts;
        opts.seeds = {0, 1};
        opts.count = 6;
        opts.with_null = true;
        opts.save_images_dir = dir + "/" + run + "/img";
        const EvalReport rep =
            run_eval(st.params, st.mcfg, st.cfg, corpus, triplets, opts);
        write_eval_report(rep, dir + "/" + run);
    }
    ok = ok && slurp(dir + "/e1/report.csv") == slurp(dir + "/e2/report.csv");
    ok = ok && slurp(dir + "/e1/summary.json") == slurp(dir + "/e2/summary.json");
    int png_count = 0;
    for (const auto& e : fs::directory_iterator(dir + "/e1/img")) {
        const std::string name = e.path().filename().string();
        ok = ok && slurp(dir + "/e1/img/" + name) == slurp(dir + "/e2/img/" + name);
        png_count += 1;
    }
    ok = ok && png_count == 12;
    report(11, ok, "reproducibility: eval CSV/JSON/PNG byte-identical across "
                   "runs; checkpoint save/load/save byte-identical");
}

} // namespace

int main(int argc, char** argv) {
    init_threading();
    int only = 0;
    for (int i = 1; i + 1 < argc; ++i)
        if (std::strcmp(argv[i], "--criterion") == 0) only = std::atoi(argv[i + 1]);

    fs::create_directories(cache_dir());
    const Fixtures f = fixtures();
    auto want = [&](int c) { return only == 0 || only == c; };

    try {
        if (want(1)) criterion1();
        if (want(2)) criterion2();
        if (want(3)) criterion3();
        if (want(4)) criterion4();
        if (want(5)) criterion5(f);
        if (want(6)) criterion6();
        if (want(7)) criterion7();
        if (want(8)) criterion8(f);
        if (want(9)) criterion9(f);
        if (want(10)) criterion10(f);
        if (want(11)) criterion11(f);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "acceptance: exception: %s\n", e.what());
        return 1;
    }
    std::printf("acceptance: %d passed, %d failed\n", g_pass, g_fail);
    return g_fail == 0 ? 0 : 1;
}
