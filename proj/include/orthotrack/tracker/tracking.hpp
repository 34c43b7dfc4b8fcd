#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "orthotrack/events/types.hpp"
#include "orthotrack/events/voxel.hpp"
#include "orthotrack/masking/masking.hpp"
#include "orthotrack/metrics/metrics.hpp"
#include "orthotrack/tracker/config.hpp"
#include "orthotrack/tracker/model.hpp"

namespace orthotrack {

/// Tracks from `init` on frame 0: the template is cropped once, then every
/// frame is searched around the previous prediction. Entry 0 is `init`.
/// When the class map yields no finite score the previous box is repeated.
std::vector<events::BBox> track_sequence(const TrackerModel& model, std::span<const events::Frame> frames,
                                         std::span<const events::VoxelGrid> voxels, const events::BBox& init);

/// Inference ignores training augmentation; this overload exists so callers
/// holding a run configuration can pass it without changing the result.
std::vector<events::BBox> track_sequence(const TrackerModel& model, std::span<const events::Frame> frames,
                                         std::span<const events::VoxelGrid> voxels, const events::BBox& init,
                                         const AugmentationConfig& ignored);

/// Tracks every evaluation sequence of `config.eval` and scores frames 1..F-1
/// of all sequences together.
metrics::EvalResult evaluate_model(const TrackerModel& model, const RunConfig& config);

/// Mean stable rank of the selected blocks over `probes` unmasked evaluation
/// pairs, all regularizable layers and all heads.
double mean_stable_rank(const TrackerModel& model, const RunConfig& config, std::size_t probes = 16);

} // namespace orthotrack
