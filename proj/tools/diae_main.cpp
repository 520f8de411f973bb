// diae: dataset generation, pairing, training, sampling, evaluation,
// ablations and self-tests for the dual-supervised aesthetic enhancement
// model.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "diae/ablation.hpp"
#include "diae/config.hpp"
#include "diae/dataset.hpp"
#include "diae/evalharness.hpp"
#include "diae/parallel.hpp"
#include "diae/png_io.hpp"
#include "diae/sampler.hpp"
#include "diae/selftest.hpp"
#include "diae/trainer.hpp"

namespace {

using namespace diae;

constexpr const char* kUsage = R"(usage: diae <subcommand> [flags]

subcommands:
  dataset gen         render a synthetic corpus (images, masks, meta.jsonl)
  pairs form          form imperfectly-paired triplets from a corpus
  train               train the dual-branch model
  sample              sample enhanced images for corpus inputs
  eval                score a checkpoint (PAS / SCS report)
  ablate ts           t_s sweep grid (warm start + fine-tunes)
  ablate map          conditioning-modality ablation grid
  selftest grad       gradient fidelity check (exit 0 iff it passes)
  selftest diffusion  schedule / forward-process / sampler checks

flags:
  --config PATH            config file (key = value lines)
  --out DIR                output directory
  --seed N                 run seed
  --t-s N                  timestep threshold
  --lambda F               input-branch loss weight
  --fold-policy folded|gated
  --steps N                training steps
  --side N                 image side (32, 48, 64)
  --num-sample-steps N     denoising steps at sampling time (default 50)
  --deterministic BOOL     fixed reduction order (default true)
  --checkpoint PATH        checkpoint to sample/evaluate
  --resume PATH            checkpoint to continue training from
  --count N                sample/eval input count (0 = all)
)";

int usage_error(const std::string& msg) {
    if (!msg.empty()) std::fprintf(stderr, "diae: %s\n", msg.c_str());
    std::fputs(kUsage, stderr);
    return 2;
}

struct Cli {
    std::string cmd;
    std::string config_path;
    std::map<std::string, std::string> overrides;
};

const std::map<std::string, std::string> kFlagToKey = {
    {"--out", "out_dir"},
    {"--seed", "seed"},
    {"--t-s", "t_s"},
    {"--lambda", "lambda"},
    {"--fold-policy", "fold_policy"},
    {"--steps", "steps"},
    {"--side", "side"},
    {"--num-sample-steps", "num_sample_steps"},
    {"--deterministic", "deterministic"},
    {"--checkpoint", "checkpoint"},
    {"--resume", "resume"},
    {"--count", "eval_count"},
};

std::string default_triplets(const RunConfig& cfg, bool test) {
    if (test)
        return cfg.test_triplets_file.empty()
                   ? cfg.test_corpus_dir + "/triplets.jsonl"
                   : cfg.test_triplets_file;
    return cfg.triplets_file.empty() ? cfg.corpus_dir + "/triplets.jsonl"
                                     : cfg.triplets_file;
}

int cmd_dataset_gen(const RunConfig& cfg) {
    if (cfg.out_dir.empty()) return usage_error("dataset gen requires --out");
    GenOptions opts;
    opts.triplets = cfg.corpus_triplets;
    opts.keys = cfg.corpus_keys;
    opts.side = cfg.side;
    opts.seed = cfg.seed;
    opts.low_max = cfg.mos_low_max;
    opts.high_min = cfg.mos_high_min;
    const Corpus corpus = generate_corpus(cfg.out_dir, opts);
    write_resolved_config(cfg, cfg.out_dir);
    std::printf("generated %zu images under %s\n", corpus.records.size(),
                cfg.out_dir.c_str());
    return 0;
}

int cmd_pairs_form(const RunConfig& cfg) {
    if (cfg.corpus_dir.empty())
        return usage_error("pairs form requires corpus_dir in the config");
    const Corpus corpus = load_corpus(cfg.corpus_dir);
    const auto triplets = form_pairs(corpus, cfg.mos_low_max, cfg.mos_high_min);
    const std::string out = cfg.out_dir.empty() ? cfg.corpus_dir : cfg.out_dir;
    std::filesystem::create_directories(out);
    write_triplets(out + "/triplets.jsonl", triplets);
    write_resolved_config(cfg, out);
    std::printf("formed %zu triplets -> %s/triplets.jsonl\n", triplets.size(),
                out.c_str());
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    if (cfg.corpus_dir.empty())
        return usage_error("train requires corpus_dir in the config");
    if (cfg.out_dir.empty()) return usage_error("train requires --out");
    const Corpus corpus = load_corpus(cfg.corpus_dir);
    const auto triplets = load_triplets(default_triplets(cfg, false));
    const auto set = load_train_set(corpus, triplets);
    TrainerState st = cfg.resume.empty()
                          ? init_trainer(cfg)
                          : load_trainer_checkpoint(cfg.resume, &cfg);
    write_resolved_config(cfg, cfg.out_dir);
    const std::string ckpt = train_loop(st, set, cfg.out_dir);
    std::printf("trained to step %lld, checkpoint at %s\n",
                static_cast<long long>(st.step), ckpt.c_str());
    return 0;
}

int cmd_sample(const RunConfig& cfg) {
    if (cfg.checkpoint.empty()) return usage_error("sample requires --checkpoint");
    if (cfg.out_dir.empty()) return usage_error("sample requires --out");
    TrainerState st = load_trainer_checkpoint(cfg.checkpoint);
    st.cfg.num_sample_steps = cfg.num_sample_steps;
    st.cfg.deterministic = cfg.deterministic;
    exec().deterministic = cfg.deterministic;
    const std::string dir =
        cfg.test_corpus_dir.empty() ? cfg.corpus_dir : cfg.test_corpus_dir;
    if (dir.empty())
        return usage_error("sample requires corpus_dir or test_corpus_dir");
    const Corpus corpus = load_corpus(dir);
    auto triplets = load_triplets(default_triplets(cfg, !cfg.test_corpus_dir.empty()));
    if (cfg.eval_count > 0 && int(triplets.size()) > cfg.eval_count)
        triplets.resize(size_t(cfg.eval_count));
    const auto set = load_train_set(corpus, triplets);

    std::filesystem::create_directories(cfg.out_dir);
    write_resolved_config(cfg, cfg.out_dir);
    const NoiseSchedule sched = NoiseSchedule::linear(
        st.cfg.t_total, st.cfg.beta_start, st.cfg.beta_end);
    const size_t img = size_t(3) * st.cfg.side * st.cfg.side;
    for (size_t lo = 0; lo < set.size(); lo += 32) {
        const size_t hi = std::min(set.size(), lo + 32);
        std::vector<const TrainSample*> ptrs;
        std::vector<uint64_t> seeds;
        for (size_t i = lo; i < hi; ++i) {
            ptrs.push_back(&set[i]);
            seeds.push_back(
                derive_seed(cfg.seed, 0x73616d706cull, uint64_t(set[i].input_id)));
        }
        const SampleInputs in = make_sample_inputs(ptrs, st.cfg.side);
        const Tensor<float> out =
            sample_model(st.params, st.mcfg, st.cfg, sched, in, seeds);
        for (size_t i = lo; i < hi; ++i) {
            ImageF one({3, st.cfg.side, st.cfg.side});
            std::memcpy(one.ptr(), out.ptr() + (i - lo) * img, img * sizeof(float));
            char name[48];
            std::snprintf(name, sizeof(name), "sample_%06d.png", set[i].input_id);
            write_image_png(cfg.out_dir + "/" + name, one);
        }
    }
    std::printf("wrote %zu samples to %s\n", set.size(), cfg.out_dir.c_str());
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    if (cfg.checkpoint.empty()) return usage_error("eval requires --checkpoint");
    if (cfg.out_dir.empty()) return usage_error("eval requires --out");
    const std::string dir =
        cfg.test_corpus_dir.empty() ? cfg.corpus_dir : cfg.test_corpus_dir;
    if (dir.empty())
        return usage_error("eval requires corpus_dir or test_corpus_dir");
    TrainerState st = load_trainer_checkpoint(cfg.checkpoint);
    st.cfg.num_sample_steps = cfg.num_sample_steps;
    st.cfg.deterministic = cfg.deterministic;
    exec().deterministic = cfg.deterministic;
    const Corpus corpus = load_corpus(dir);
    const auto triplets =
        load_triplets(default_triplets(cfg, !cfg.test_corpus_dir.empty()));

    EvalOptions opts;
    opts.seeds = parse_seed_list(cfg.eval_seeds);
    opts.count = cfg.eval_count;
    opts.with_null = true;
    const EvalReport rep = run_eval(st.params, st.mcfg, st.cfg, corpus, triplets, opts);
    write_eval_report(rep, cfg.out_dir);
    write_resolved_config(cfg, cfg.out_dir);
    std::printf("eval: mean PAS %.4f -> %.4f (delta %+.4f), SCS %.4f",
                rep.summary.mean_pas_in, rep.summary.mean_pas_out,
                rep.summary.delta_pas, rep.summary.mean_scs);
    if (rep.summary.mean_scs_null >= 0.0)
        std::printf(" (null %.4f)", rep.summary.mean_scs_null);
    std::printf("\n");
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& which) {
    if (cfg.out_dir.empty()) return usage_error("ablate requires --out");
    write_resolved_config(cfg, cfg.out_dir);
    const auto cells = which == "ts" ? run_ablation_ts(cfg, cfg.out_dir)
                                     : run_ablation_map(cfg, cfg.out_dir);
    for (const auto& c : cells)
        std::printf("%s ts=%d seed=%llu: PAS %.4f SCS %.4f\n",
                    c.variant.empty() ? "-" : c.variant.c_str(), c.ts,
                    static_cast<unsigned long long>(c.seed), c.mean_pas, c.mean_scs);
    return 0;
}

int cmd_selftest(const RunConfig& cfg, const std::string& which) {
    if (which == "grad") {
        const GradCheckResult r = selftest_grad(cfg, 3, true);
        std::printf("gradient check: max rel %.3e over %zu coords -> %s\n",
                    r.max_rel, r.coords, r.pass ? "PASS" : "FAIL");
        return r.pass ? 0 : 1;
    }
    const int failures = selftest_diffusion(true);
    std::printf("diffusion selftest: %s\n", failures == 0 ? "PASS" : "FAIL");
    return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    diae::init_threading();
    if (argc < 2) return usage_error("missing subcommand");

    Cli cli;
    int argi = 1;
    const std::string first = argv[argi++];
    if (first == "dataset" || first == "pairs" || first == "ablate" ||
        first == "selftest") {
        if (argi >= argc) return usage_error("incomplete subcommand '" + first + "'");
        cli.cmd = first + " " + argv[argi++];
    } else {
        cli.cmd = first;
    }
    static const std::vector<std::string> kCommands = {
        "dataset gen", "pairs form", "train",         "sample",
        "eval",        "ablate ts",  "ablate map",    "selftest grad",
        "selftest diffusion"};
    if (std::find(kCommands.begin(), kCommands.end(), cli.cmd) == kCommands.end())
        return usage_error("unknown subcommand '" + cli.cmd + "'");

    for (; argi < argc; ++argi) {
        const std::string flag = argv[argi];
        if (flag == "--help" || flag == "-h") return usage_error("");
        if (argi + 1 >= argc) return usage_error("flag " + flag + " needs a value");
        const std::string value = argv[++argi];
        if (flag == "--config") {
            cli.config_path = value;
        } else {
            const auto it = kFlagToKey.find(flag);
            if (it == kFlagToKey.end()) return usage_error("unknown flag " + flag);
            cli.overrides[it->second] = value;
        }
    }

    try {
        const RunConfig cfg = parse_config(cli.config_path, cli.overrides);
        exec().deterministic = cfg.deterministic;
        if (cli.cmd == "dataset gen") return cmd_dataset_gen(cfg);
        if (cli.cmd == "pairs form") return cmd_pairs_form(cfg);
        if (cli.cmd == "train") return cmd_train(cfg);
        if (cli.cmd == "sample") return cmd_sample(cfg);
        if (cli.cmd == "eval") return cmd_eval(cfg);
        if (cli.cmd == "ablate ts") return cmd_ablate(cfg, "ts");
        if (cli.cmd == "ablate map") return cmd_ablate(cfg, "map");
        if (cli.cmd == "selftest grad") return cmd_selftest(cfg, "grad");
        if (cli.cmd == "selftest diffusion") return cmd_selftest(cfg, "diffusion");
    } catch (const std::exception& e) {
        std::fprintf(stderr, "diae %s: %s\n", cli.cmd.c_str(), e.what());
        return 1;
    }
    return usage_error("unhandled subcommand");
}
