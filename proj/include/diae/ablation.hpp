#pragma once

#include <string>
#include <vector>

#include "diae/config.hpp"
#include "diae/evalharness.hpp"

namespace diae {

struct AblationCell {
    std::string variant; // "full" / "no_v" / "no_t" (map grid) or "" (ts grid)
    int ts = 0;
    uint64_t seed = 0;
    double mean_pas = 0.0;
    double mean_scs = 0.0;
};

// Both grids share one warm-start checkpoint trained with the base config,
// then fine-tune per cell. Completed cells (checkpoint + summary present) are
// reused, so interrupted grids resume; delete the cell directory to force a
// re-run.
std::vector<AblationCell> run_ablation_ts(const RunConfig& cfg,
                                          const std::string& out_dir);
std::vector<AblationCell> run_ablation_map(const RunConfig& cfg,
                                           const std::string& out_dir);

void write_ablation_csv(const std::vector<AblationCell>& cells,
                        const std::string& path, bool ts_grid);

} // namespace diae
