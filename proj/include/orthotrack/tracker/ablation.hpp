#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "orthotrack/metrics/metrics.hpp"
#include "orthotrack/tracker/config.hpp"

namespace orthotrack {

struct AblationCell {
    std::string name;
    AugmentationConfig aug;
};

/// Baseline, masking only, rank loss only, and both, derived from `full`.
std::vector<AblationCell> component_cells(const AugmentationConfig& full);

/// Both augmentations at mask granularities 1/2, 1/4, 1/8 and 1/16.
std::vector<AblationCell> granularity_cells(const AugmentationConfig& full);

struct AblationResult {
    std::string name;
    metrics::EvalResult eval;
    double mean_stable_rank = 0.0;
    double final_task_loss = 0.0;
};

/// Trains a fresh model per cell from the same initialization and data,
/// writing <out>/<cell>/ run files plus metrics.json, and <out>/summary.csv.
std::vector<AblationResult> run_ablation(const RunConfig& base, const std::vector<AblationCell>& cells,
                                         const std::filesystem::path& out_dir);

} // namespace orthotrack
