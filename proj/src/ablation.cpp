#include "diae/ablation.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "diae/dataset.hpp"
#include "diae/trainer.hpp"

namespace diae {

namespace fs = std::filesystem;

namespace {

struct AblationData {
    Corpus train_corpus, test_corpus;
    std::vector<TripletRef> train_triplets, test_triplets;
};

AblationData load_data(const RunConfig& cfg) {
    AblationData d;
    require(!cfg.corpus_dir.empty() && !cfg.test_corpus_dir.empty(),
            "ablate: corpus_dir and test_corpus_dir are required");
    d.train_corpus = load_corpus(cfg.corpus_dir);
    d.test_corpus = load_corpus(cfg.test_corpus_dir);
    const std::string tf = cfg.triplets_file.empty()
                               ? cfg.corpus_dir + "/triplets.jsonl"
                               : cfg.triplets_file;
    const std::string ttf = cfg.test_triplets_file.empty()
                                ? cfg.test_corpus_dir + "/triplets.jsonl"
                                : cfg.test_triplets_file;
    d.train_triplets = load_triplets(tf);
    d.test_triplets = load_triplets(ttf);
    return d;
}

std::string warm_checkpoint(const RunConfig& cfg, const AblationData& data,
                            const std::string& out_dir) {
    const std::string warm_dir = out_dir + "/warm";
    const std::string path = warm_dir + "/checkpoint.diae";
    if (fs::exists(path)) return path;
    RunConfig wcfg = cfg;
    wcfg.steps = cfg.ablate_warm_steps;
    wcfg.out_dir = warm_dir;
    TrainerState st = init_trainer(wcfg);
    const auto set = load_train_set(data.train_corpus, data.train_triplets);
    std::fprintf(stderr, "[ablate] warm start: %d steps\n", wcfg.steps);
    return train_loop(st, set, warm_dir);
}

// fine-tune the warm checkpoint under `cell_cfg`, then evaluate; reuses a
// finished cell when its summary is already on disk
AblationCell run_cell(const RunConfig& cell_cfg, const AblationData& data,
                      const std::string& warm_path, const std::string& cell_dir,
                      AblationCell cell) {
    const std::string summary = cell_dir + "/summary.json";
    if (!fs::exists(summary)) {
        RunConfig fcfg = cell_cfg;
        fcfg.steps = cell_cfg.ablate_ft_steps;
        fcfg.out_dir = cell_dir;
        TrainerState st = load_trainer_checkpoint(warm_path, &fcfg);
        const auto set = load_train_set(data.train_corpus, data.train_triplets);
        std::fprintf(stderr, "[ablate] cell %s ts=%d seed=%llu: %d steps\n",
                     cell.variant.empty() ? "-" : cell.variant.c_str(), cell.ts,
                     static_cast<unsigned long long>(cell.seed), fcfg.steps);
        train_loop(st, set, cell_dir);

        EvalOptions opts;
        opts.seeds = {cell.seed};
        opts.count = cell_cfg.ablate_eval_count;
        const EvalReport rep = run_eval(st.params, st.mcfg, st.cfg,
                                        data.test_corpus, data.test_triplets, opts);
        write_eval_report(rep, cell_dir);
    }
    std::ifstream js(summary);
    require(js.good(), "ablate: missing " + summary);
    nlohmann::json j;
    js >> j;
    cell.mean_pas = j.at("mean_pas_out").get<double>();
    cell.mean_scs = j.at("mean_scs").get<double>();
    return cell;
}

} // namespace

std::vector<AblationCell> run_ablation_ts(const RunConfig& cfg,
                                          const std::string& out_dir) {
    const AblationData data = load_data(cfg);
    const std::string warm = warm_checkpoint(cfg, data, out_dir);
    const auto values = parse_int_list(cfg.ablate_ts_values);
    const auto seeds = parse_seed_list(cfg.ablate_seeds);
    require(!values.empty() && !seeds.empty(), "ablate ts: empty grid");
    for (int v : values)
        require(v >= 1 && v <= cfg.t_total, "ablate ts: value out of [1, T]");

    std::vector<AblationCell> cells;
    for (const int v : values)
        for (const uint64_t seed : seeds) {
            RunConfig c = cfg;
            c.t_s = v;
            c.seed = seed;
            AblationCell cell;
            cell.ts = v;
            cell.seed = seed;
            const std::string dir = out_dir + "/ts" + std::to_string(v) + "_seed" +
                                    std::to_string(seed);
            cells.push_back(run_cell(c, data, warm, dir, cell));
        }
    write_ablation_csv(cells, out_dir + "/ablate_ts.csv", true);
    return cells;
}

std::vector<AblationCell> run_ablation_map(const RunConfig& cfg,
                                           const std::string& out_dir) {
    const AblationData data = load_data(cfg);
    const std::string warm = warm_checkpoint(cfg, data, out_dir);
    const auto seeds = parse_seed_list(cfg.ablate_seeds);
    require(!seeds.empty(), "ablate map: empty seed list");

    const std::vector<std::pair<std::string, std::string>> variants = {
        {"full", "full"}, {"no_v", "no_visual"}, {"no_t", "no_text"}};
    std::vector<AblationCell> cells;
    for (const auto& [name, mode] : variants)
        for (const uint64_t seed : seeds) {
            RunConfig c = cfg;
            c.map_mode = mode;
            c.seed = seed;
            AblationCell cell;
            cell.variant = name;
            cell.ts = cfg.t_s;
            cell.seed = seed;
            const std::string dir =
                out_dir + "/map_" + name + "_seed" + std::to_string(seed);
            cells.push_back(run_cell(c, data, warm, dir, cell));
        }
    write_ablation_csv(cells, out_dir + "/ablate_map.csv", false);
    return cells;
}

void write_ablation_csv(const std::vector<AblationCell>& cells,
                        const std::string& path, bool ts_grid) {
    std::ofstream f(path, std::ios::trunc);
    require(f.good(), "ablate: cannot write " + path);
    f << (ts_grid ? "ts,seed,mean_pas,mean_scs\n"
                  : "variant,seed,mean_pas,mean_scs\n");
    for (const auto& c : cells) {
        char line[160];
        if (ts_grid)
            std::snprintf(line, sizeof(line), "%d,%llu,%.6f,%.6f\n", c.ts,
                          static_cast<unsigned long long>(c.seed), c.mean_pas,
                          c.mean_scs);
        else
            std::snprintf(line, sizeof(line), "%s,%llu,%.6f,%.6f\n",
                          c.variant.c_str(), static_cast<unsigned long long>(c.seed),
                          c.mean_pas, c.mean_scs);
        f << line;
    }
}

} // namespace diae
