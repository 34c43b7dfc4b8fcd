#include "orthotrack/tracker/tracking.hpp"

#include <algorithm>

#include "orthotrack/core/errors.hpp"
#include "orthotrack/core/random.hpp"
#include "orthotrack/events/crop.hpp"
#include "orthotrack/tracker/data.hpp"

namespace orthotrack {

namespace {

constexpr std::uint64_t kStableRankSalt = 0x7372616e6bull;

events::BBox keep_in_frame(events::BBox b, double width, double height) {
    b.w = std::clamp(b.w, 1.0, width);
    b.h = std::clamp(b.h, 1.0, height);
    b.cx = std::clamp(b.cx, 0.0, width);
    b.cy = std::clamp(b.cy, 0.0, height);
    return b;
}

} // namespace

std::vector<events::BBox> track_sequence(const TrackerModel& model, std::span<const events::Frame> frames,
                                         std::span<const events::VoxelGrid> voxels, const events::BBox& init) {
    if (frames.size() != voxels.size()) {
        throw InputError("track_sequence: " + std::to_string(frames.size()) + " frames but " +
                         std::to_string(voxels.size()) + " voxel grids");
    }
    std::vector<events::BBox> out;
    if (frames.empty()) {
        return out;
    }
    const ModelConfig& cfg = model.config();
    NoGradGuard guard;
    const auto twin = events::crop_window(init, cfg.template_scale);
    const RegionPair templ = crop_pair(frames[0], voxels[0], twin, cfg.template_size);
    const double width = static_cast<double>(frames[0].image.width());
    const double height = static_cast<double>(frames[0].image.height());
    const double crop = static_cast<double>(cfg.search_size);

    out.push_back(init);
    events::BBox prev = init;
    for (std::size_t f = 1; f < frames.size(); ++f) {
        const auto swin = events::crop_window(prev, cfg.search_scale);
        const RegionPair search = crop_pair(frames[f], voxels[f], swin, cfg.search_size);
        const ForwardResult res = forward(model, templ, search);
        try {
            const Prediction p = predict(res, cfg.search_grid(), crop);
            prev = keep_in_frame(events::from_crop_coords(p.box, swin, cfg.search_size), width, height);
        } catch (const NumericError&) {
            // Lost target: keep the previous box.
        }
        out.push_back(prev);
    }
    return out;
}

std::vector<events::BBox> track_sequence(const TrackerModel& model, std::span<const events::Frame> frames,
                                         std::span<const events::VoxelGrid> voxels, const events::BBox& init,
                                         const AugmentationConfig&) {
    return track_sequence(model, frames, voxels, init);
}

metrics::EvalResult evaluate_model(const TrackerModel& model, const RunConfig& config) {
    const SyntheticDataset pool(config.data, model.config(), config.eval.sequences, config.eval.frames,
                                config.eval.seed);
    std::vector<events::BBox> predicted;
    std::vector<events::BBox> truth;
    for (std::size_t k = 0; k < pool.size(); ++k) {
        const auto& seq = pool.sequence(k);
        std::vector<events::VoxelGrid> voxels;
        for (std::size_t f = 0; f < seq.frames.size(); ++f) {
            voxels.push_back(frame_voxels(seq, f, model.config().event_bins));
        }
        const auto boxes = track_sequence(model, seq.frames, voxels, seq.boxes[0]);
        for (std::size_t f = 1; f < boxes.size(); ++f) {
            predicted.push_back(boxes[f]);
            truth.push_back(seq.boxes[f]);
        }
    }
    if (truth.empty()) {
        throw InputError("evaluate_model: evaluation sequences need at least two frames");
    }
    return metrics::evaluate(predicted, truth);
}

double mean_stable_rank(const TrackerModel& model, const RunConfig& config, std::size_t probes) {
    const SyntheticDataset pool(config.data, model.config(), config.eval.sequences, config.eval.frames,
                                config.eval.seed);
    NoGradGuard guard;
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < probes; ++i) {
        const TrackingSample s = pool.sample(i, mix_seed(config.eval.seed, kStableRankSalt));
        const ForwardResult res = forward(model, s.templ, s.search);
        for (const auto& layer : res.attention) {
            for (const auto& rec : layer) {
                for (const auto& d : diagnose(rec, model.config().stream)) {
                    acc += d.stable_rank;
                    ++n;
                }
            }
        }
    }
    return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

} // namespace orthotrack
