#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "orthotrack/events/crop.hpp"
#include "orthotrack/events/simulator.hpp"
#include "orthotrack/events/voxel.hpp"
#include "orthotrack/tracker/config.hpp"
#include "orthotrack/tracker/model.hpp"

namespace orthotrack {

/// Template and search crops of one training pair with the target box in
/// each crop's pixel coordinates.
struct TrackingSample {
    RegionPair templ;
    RegionPair search;
    events::BBox template_box;
    events::BBox search_box;
    std::size_t sequence = 0;
    std::size_t template_frame = 0;
    std::size_t search_frame = 0;
};

/// Scene with random size, speed, brightness and start position chosen so
/// the target stays fully inside the image for `frames` frames.
events::SceneConfig random_scene(const DataConfig& data, std::size_t frames, std::uint64_t seed);

/// Events of the interval that ends at frame `frame`, max-normalized.
events::VoxelGrid frame_voxels(const events::Sequence& sequence, std::size_t frame, std::size_t bins);

/// RGB and event crops of one window.
RegionPair crop_pair(const events::Frame& frame, const events::VoxelGrid& voxels, const events::CropWindow& window,
                     std::size_t out_size);

/// Template crop around the true box of `template_frame`, search crop around
/// `search_anchor` in `search_frame`.
TrackingSample make_sample(const events::Sequence& sequence, std::size_t template_frame, std::size_t search_frame,
                           const events::BBox& search_anchor, const ModelConfig& model);

/// Fixed pool of simulated sequences; sequence k is seeded with
/// mix_seed(data.seed, k).
class SyntheticDataset {
  public:
    SyntheticDataset(const DataConfig& data, const ModelConfig& model);
    /// Evaluation pool: `count` sequences of `frames` frames from `seed`.
    SyntheticDataset(const DataConfig& data, const ModelConfig& model, std::size_t count, std::size_t frames,
                     std::uint64_t seed);

    std::size_t size() const { return sequences_.size(); }
    const events::Sequence& sequence(std::size_t i) const { return sequences_.at(i); }

    /// Random pair drawn from mix_seed(seed, index): sequence, frame pair
    /// within max_gap, and a jittered search anchor. Pure in (index, seed).
    TrackingSample sample(std::uint64_t index, std::uint64_t seed) const;

  private:
    DataConfig data_;
    ModelConfig model_;
    std::vector<events::Sequence> sequences_;
};

} // namespace orthotrack
