#include "orthotrack/tracker/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "orthotrack/core/errors.hpp"
#include "orthotrack/core/random.hpp"

namespace orthotrack {

events::SceneConfig random_scene(const DataConfig& data, std::size_t frames, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    events::SceneConfig s;
    s.width = static_cast<int>(data.image_size);
    s.height = static_cast<int>(data.image_size);
    s.num_frames = static_cast<int>(frames);
    s.target_w = between(data.target_min, data.target_max);
    s.target_h = between(data.target_min, data.target_max);
    s.noise_rate = data.noise_rate;
    s.background_level = between(0.2, 0.45);
    s.texture_amplitude = between(0.05, 0.2);
    s.target_level = between(0.65, 0.95);

    const double speed = between(0.0, data.max_speed);
    const double heading = between(0.0, 2.0 * std::numbers::pi);
    const double size = static_cast<double>(data.image_size);
    // Frames -1 .. frames-1 must keep the whole box inside the image.
    const double span = static_cast<double>(frames);
    auto place = [&](double half, double v) {
        const double lo = half + std::max(0.0, -v * span) + std::max(0.0, v);
        const double hi = size - half - std::max(0.0, v * span) - std::max(0.0, -v);
        return lo <= hi ? between(lo, hi) : -1.0;
    };
    double vx = speed * std::cos(heading);
    double vy = speed * std::sin(heading);
    double cx = place(0.5 * s.target_w, vx);
    double cy = place(0.5 * s.target_h, vy);
    if (cx < 0.0 || cy < 0.0) {
        vx = 0.0;
        vy = 0.0;
        cx = between(0.5 * s.target_w, size - 0.5 * s.target_w);
        cy = between(0.5 * s.target_h, size - 0.5 * s.target_h);
    }
    s.velocity_x = vx;
    s.velocity_y = vy;
    s.start_cx = cx;
    s.start_cy = cy;
    return s;
}

events::VoxelGrid frame_voxels(const events::Sequence& sequence, std::size_t frame, std::size_t bins) {
    const auto& img = sequence.frames.at(frame).image;
    const double t1 = sequence.frames[frame].timestamp;
    return events::voxelize(sequence.events, t1 - sequence.frame_interval, t1, static_cast<int>(bins),
                            static_cast<int>(img.height()), static_cast<int>(img.width()),
                            events::VoxelNorm::MaxUnit);
}

RegionPair crop_pair(const events::Frame& frame, const events::VoxelGrid& voxels, const events::CropWindow& window,
                     std::size_t out_size) {
    return {events::crop_region(frame.image, window, out_size), events::crop_region(voxels.volume, window, out_size)};
}

TrackingSample make_sample(const events::Sequence& sequence, std::size_t template_frame, std::size_t search_frame,
                           const events::BBox& search_anchor, const ModelConfig& model) {
    TrackingSample s;
    s.template_frame = template_frame;
    s.search_frame = search_frame;

    const events::BBox& tbox = sequence.boxes.at(template_frame);
    const auto twin = events::crop_window(tbox, model.template_scale);
    s.templ = crop_pair(sequence.frames[template_frame], frame_voxels(sequence, template_frame, model.event_bins),
                        twin, model.template_size);
    s.template_box = events::to_crop_coords(tbox, twin, model.template_size);

    const auto swin = events::crop_window(search_anchor, model.search_scale);
    s.search = crop_pair(sequence.frames.at(search_frame), frame_voxels(sequence, search_frame, model.event_bins),
                         swin, model.search_size);
    s.search_box = events::to_crop_coords(sequence.boxes[search_frame], swin, model.search_size);
    return s;
}

SyntheticDataset::SyntheticDataset(const DataConfig& data, const ModelConfig& model)
    : SyntheticDataset(data, model, data.sequences, data.frames, data.seed) {}

SyntheticDataset::SyntheticDataset(const DataConfig& data, const ModelConfig& model, std::size_t count,
                                   std::size_t frames, std::uint64_t seed)
    : data_(data), model_(model) {
    data_.validate();
    model_.validate();
    for (std::size_t k = 0; k < count; ++k) {
        const std::uint64_t s = mix_seed(seed, k);
        sequences_.push_back(events::simulate_sequence(random_scene(data_, frames, s), s));
    }
}

TrackingSample SyntheticDataset::sample(std::uint64_t index, std::uint64_t seed) const {
    std::mt19937_64 rng(mix_seed(seed, index));
    std::uniform_int_distribution<std::size_t> pick_seq(0, sequences_.size() - 1);
    const std::size_t k = pick_seq(rng);
    const auto& seq = sequences_[k];
    const std::size_t frames = seq.frames.size();
    std::uniform_int_distribution<std::size_t> pick_t(0, frames - 1);
    const std::size_t tf = pick_t(rng);
    const std::size_t lo = tf >= data_.max_gap ? tf - data_.max_gap : 0;
    const std::size_t hi = std::min(frames - 1, tf + data_.max_gap);
    std::uniform_int_distribution<std::size_t> pick_s(lo, hi);
    const std::size_t sf = pick_s(rng);

    const auto& img = seq.frames[sf].image;
    const events::FrameSize size{static_cast<double>(img.width()), static_cast<double>(img.height())};
    const events::BBox anchor =
        events::jitter_box(seq.boxes[sf], data_.jitter_loc, data_.jitter_scale, rng(), size);
    TrackingSample s = make_sample(seq, tf, sf, anchor, model_);
    s.sequence = k;
    return s;
}

} // namespace orthotrack
