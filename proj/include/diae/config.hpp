#pragma once

#include <map>
#include <string>
#include <vector>

#include "diae/tensor.hpp"

namespace diae {

enum class FoldPolicy { Folded, Gated };
enum class MapMode { Full, NoText, NoVisual };
enum class BranchMode { Dual, ReferenceOnly };

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Fully resolved run configuration. One flat key = value namespace shared by
// the config file and the CLI flags; the resolved copy is echoed into every
// output directory.
struct RunConfig {
    // diffusion / loss
    int t_total = 1000;
    int t_s = 900;
    double lambda_inp = 1.0;
    std::string fold_policy = "folded";
    double beta_start = 1e-4;
    double beta_end = 0.02;

    // model
    int side = 32;
    int base_channels = 32;
    int res_blocks = 2;
    int temb_width = 128;
    int cap_width = 64;

    // training
    double lr = 1e-4;
    double weight_decay = 0.01;
    int batch_size = 16;
    int steps = 5000;
    uint64_t seed = 0;
    int ckpt_interval = 1000;
    int log_interval = 10;
    std::string map_mode = "full";
    std::string branch_mode = "dual";
    bool deterministic = true;

    // sampling / eval
    int num_sample_steps = 50;
    std::string eval_seeds = "0";
    int eval_count = 0; // 0 = all test triplets

    // corpus
    int corpus_triplets = 2000;
    int corpus_keys = 16;
    double mos_low_max = 4.0;
    double mos_high_min = 7.0;

    // ablations
    int ablate_warm_steps = 1200;
    int ablate_ft_steps = 400;
    std::string ablate_ts_values = "300,600,900";
    std::string ablate_seeds = "0,1,2";
    int ablate_eval_count = 100;

    // paths
    std::string corpus_dir;
    std::string test_corpus_dir;
    std::string triplets_file;
    std::string test_triplets_file;
    std::string out_dir;
    std::string checkpoint;
    std::string resume;

    FoldPolicy fold() const;
    MapMode map() const;
    BranchMode branch() const;

    void validate() const;
    std::string serialize() const;
};

// Flag overrides win over file values; defaults fill the rest. Unknown keys
// are hard errors.
RunConfig parse_config(const std::string& path,
                       const std::map<std::string, std::string>& overrides);
RunConfig parse_config_text(const std::string& text,
                            const std::map<std::string, std::string>& overrides);

void write_resolved_config(const RunConfig& cfg, const std::string& out_dir);

std::vector<int> parse_int_list(const std::string& csv);
std::vector<uint64_t> parse_seed_list(const std::string& csv);

} // namespace diae
