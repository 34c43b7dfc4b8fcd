#pragma once

#include <cstdint>
#include <vector>

#include "orthotrack/events/types.hpp"

namespace orthotrack::events {

struct SceneConfig {
    int width = 256;
    int height = 256;
    int num_frames = 10;
    double fps = 30.0;
    /// Rendering sub-steps per frame interval used for threshold crossings.
    int micro_steps = 8;

    double target_w = 32.0;
    double target_h = 32.0;
    /// Initial target center; negative means image center.
    double start_cx = -1.0;
    double start_cy = -1.0;
    /// Pixels per frame.
    double velocity_x = 0.0;
    double velocity_y = 0.0;

    double contrast_threshold = 0.15;
    /// Background events per pixel per second.
    double noise_rate = 0.0;

    /// Background luminance mean and texture amplitude; the target is
    /// rendered at `target_level`.
    double background_level = 0.3;
    double texture_amplitude = 0.1;
    double target_level = 0.85;
};

/// A rendered sequence. Frame f is taken at t = f / fps; events cover
/// [-1/fps, (num_frames-1)/fps) so every frame has a full preceding interval.
struct Sequence {
    std::vector<Frame> frames;
    EventStream events;
    std::vector<BBox> boxes;
    double frame_interval = 0.0;
};

/// Renders a textured static background with a bright rectangular target
/// moving at constant velocity and emits log-intensity threshold-crossing
/// events plus Poisson background noise. Pure function of (cfg, seed).
/// Throws GenerationError when the target leaves the image entirely.
Sequence simulate_sequence(const SceneConfig& cfg, std::uint64_t seed);

} // namespace orthotrack::events
