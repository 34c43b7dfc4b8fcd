#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "orthotrack/core/errors.hpp"
#include "orthotrack/tracker/config.hpp"
#include "orthotrack/tracker/data.hpp"
#include "orthotrack/tracker/loss.hpp"
#include "orthotrack/tracker/model.hpp"
#include "orthotrack/tracker/optimizer.hpp"

namespace orthotrack {

/// Rank loss of one layer: per head, the mean over its selected non-empty
/// blocks; then the mean over heads that had any block. Two-stream blocks
/// are first restricted to target cells using the sample's boxes. Returns
/// nullopt when every block was skipped.
std::optional<Tensor> layer_rank_loss(const std::vector<AttentionRecord>& heads, const ModelConfig& model,
                                      const TrackingSample& sample, std::optional<double> tau);

struct SampleLoss {
    Tensor total; ///< task + alpha·rank; equals `task` when alpha is 0
    Tensor task;
    double reg = 0.0; ///< rank loss value, also reported when alpha is 0
    TaskLoss task_terms;
    ForwardResult forward;
};

/// Forward pass with optional masks and the combined objective for one
/// sample, regularizing layer `reg_layer`. With alpha = 0 the rank loss is
/// evaluated on detached attention so it never enters the graph.
SampleLoss sample_loss(const TrackerModel& model, const TrackingSample& sample, const AugmentationConfig& aug,
                       const MaskSet* masks, std::size_t reg_layer);

struct StepResult {
    std::size_t step = 0;
    double loss_all = 0.0;
    double loss_task = 0.0;
    double loss_reg = 0.0;
    int layer = 0;
};

/// Thrown when a step produces a non-finite loss; carries the attention of
/// the offending forward pass for inspection.
class NonFiniteLossError : public NumericError {
  public:
    NonFiniteLossError(const std::string& what, std::vector<std::vector<AttentionRecord>> attention)
        : NumericError(what), attention(std::move(attention)) {}
    std::vector<std::vector<AttentionRecord>> attention;
};

/// Seed of the masks of sample `sample_index` under run seed `seed`.
std::uint64_t mask_seed(std::uint64_t seed, std::uint64_t sample_index);

/// One optimization step on the mean objective of `batch`: masks per sample,
/// one randomly picked layer for the rank loss, backward, AdamW update.
StepResult train_step(TrackerModel& model, AdamW& optimizer, std::span<const TrackingSample> batch,
                      const AugmentationConfig& aug, std::uint64_t step, std::uint64_t seed);

struct TrainResult {
    std::vector<StepResult> log;
};

/// Trains for config.train.steps steps. With a run directory, writes
/// config.txt, log.csv, checkpoint.bin and attn/<step>/ dumps.
TrainResult train(TrackerModel& model, const RunConfig& config,
                  const std::optional<std::filesystem::path>& run_dir = std::nullopt);

/// Little-endian parameter dump: magic "OTCK", version, tensor count, then
/// per tensor its name length, name bytes, rank, u64 dims and f64 values.
void save_checkpoint(const std::string& path, const TrackerModel& model);
/// Loads values into a model of identical structure.
void load_checkpoint(const std::string& path, TrackerModel& model);

/// Writes every regularizable layer's attention as
/// layer<l>_head<h>.bin into `dir`.
void dump_attention(const std::filesystem::path& dir, const std::vector<std::vector<AttentionRecord>>& attention);

} // namespace orthotrack
