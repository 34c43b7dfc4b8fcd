#include "orthotrack/events/simulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace orthotrack::events {

namespace {

struct Texture {
    std::array<double, 3> fx{};
    std::array<double, 3> fy{};
    std::array<double, 3> phase{};
    std::array<double, 3> background_tint{};
    std::array<double, 3> target_tint{};
};

std::array<double, 3> unit_mean_tint(std::mt19937_64& rng, double spread) {
    std::uniform_real_distribution<double> dist(1.0 - spread, 1.0 + spread);
    std::array<double, 3> t{dist(rng), dist(rng), dist(rng)};
    const double m = (t[0] + t[1] + t[2]) / 3.0;
    for (auto& v : t) {
        v /= m;
    }
    return t;
}

Texture make_texture(std::mt19937_64& rng) {
    Texture tex;
    std::uniform_real_distribution<double> freq(0.5, 4.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (int k = 0; k < 3; ++k) {
        tex.fx[k] = freq(rng);
        tex.fy[k] = freq(rng);
        tex.phase[k] = phase(rng);
    }
    tex.background_tint = unit_mean_tint(rng, 0.25);
    tex.target_tint = unit_mean_tint(rng, 0.15);
    return tex;
}

double overlap(double a0, double a1, double b0, double b1) {
    return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

class Renderer {
  public:
    Renderer(const SceneConfig& cfg, const Texture& tex) : cfg_(cfg), tex_(tex) {
        background_.resize(static_cast<std::size_t>(cfg.width) * cfg.height);
        for (int y = 0; y < cfg.height; ++y) {
            for (int x = 0; x < cfg.width; ++x) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) {
                    s += std::sin(2.0 * std::numbers::pi *
                                      (tex.fx[k] * (x + 0.5) / cfg.width + tex.fy[k] * (y + 0.5) / cfg.height) +
                                  tex.phase[k]);
                }
                background_[static_cast<std::size_t>(y) * cfg.width + x] =
                    cfg.background_level + cfg.texture_amplitude * s / 3.0;
            }
        }
    }

    BBox box_at(double t) const {
        const double cx0 = cfg_.start_cx < 0.0 ? 0.5 * cfg_.width : cfg_.start_cx;
        const double cy0 = cfg_.start_cy < 0.0 ? 0.5 * cfg_.height : cfg_.start_cy;
        return BBox{cx0 + cfg_.velocity_x * cfg_.fps * t, cy0 + cfg_.velocity_y * cfg_.fps * t, cfg_.target_w,
                    cfg_.target_h};
    }

    double channel_value(int c, int x, int y, const BBox& box) const {
        const double cov = overlap(x, x + 1.0, box.x0(), box.x1()) * overlap(y, y + 1.0, box.y0(), box.y1());
        const double bg = background_[static_cast<std::size_t>(y) * cfg_.width + x] * tex_.background_tint[c];
        const double fg = cfg_.target_level * tex_.target_tint[c];
        return std::clamp((1.0 - cov) * bg + cov * fg, 0.0, 1.0);
    }

    Planar frame(double t) const {
        const BBox box = box_at(t);
        Planar img(3, cfg_.height, cfg_.width);
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < cfg_.height; ++y) {
                for (int x = 0; x < cfg_.width; ++x) {
                    img(c, y, x) = channel_value(c, x, y, box);
                }
            }
        }
        return img;
    }

    void log_luminance(double t, std::vector<double>& out) const {
        const BBox box = box_at(t);
        out.resize(background_.size());
        for (int y = 0; y < cfg_.height; ++y) {
            for (int x = 0; x < cfg_.width; ++x) {
                double lum = 0.0;
                for (int c = 0; c < 3; ++c) {
                    lum += channel_value(c, x, y, box);
                }
                out[static_cast<std::size_t>(y) * cfg_.width + x] = std::log(lum / 3.0 + kLogEps);
            }
        }
    }

  private:
    static constexpr double kLogEps = 1e-2;
    const SceneConfig& cfg_;
    const Texture& tex_;
    std::vector<double> background_;
};

void validate(const SceneConfig& cfg) {
    if (cfg.width < 1 || cfg.height < 1 || cfg.num_frames < 1 || cfg.micro_steps < 1 || !(cfg.fps > 0.0)) {
        throw GenerationError("simulate_sequence: resolution, frame count, fps and micro_steps must be positive");
    }
    if (!(cfg.target_w > 0.0) || !(cfg.target_h > 0.0)) {
        throw GenerationError("simulate_sequence: target size must be positive");
    }
    if (!(cfg.contrast_threshold > 0.0) || cfg.noise_rate < 0.0) {
        throw GenerationError("simulate_sequence: contrast threshold must be positive, noise rate non-negative");
    }
}

} // namespace

Sequence simulate_sequence(const SceneConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    std::mt19937_64 rng(seed);
    const Texture tex = make_texture(rng);
    const Renderer render(cfg, tex);

    Sequence seq;
    seq.frame_interval = 1.0 / cfg.fps;
    const double dt = seq.frame_interval;

    for (int f = -1; f < cfg.num_frames; ++f) {
        const BBox box = render.box_at(f * dt);
        if (!box.intersects(cfg.width, cfg.height)) {
            throw GenerationError("simulate_sequence: target leaves the image at frame " + std::to_string(f));
        }
    }
    for (int f = 0; f < cfg.num_frames; ++f) {
        seq.frames.push_back(Frame{render.frame(f * dt), f * dt});
        seq.boxes.push_back(render.box_at(f * dt));
    }

    const std::size_t pixels = static_cast<std::size_t>(cfg.width) * cfg.height;
    const double step = dt / cfg.micro_steps;
    const double C = cfg.contrast_threshold;
    std::vector<double> previous;
    std::vector<double> current;
    render.log_luminance(-dt, previous);
    std::vector<double> reference = previous;

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> px(0, cfg.width - 1);
    std::uniform_int_distribution<int> py(0, cfg.height - 1);

    const int total_steps = cfg.num_frames * cfg.micro_steps;
    EventStream interval;
    for (int k = 1; k <= total_steps; ++k) {
        const double t_prev = -dt + (k - 1) * step;
        const double t_now = -dt + k * step;
        render.log_luminance(t_now, current);
        interval.clear();
        for (std::size_t i = 0; i < pixels; ++i) {
            const double delta = current[i] - previous[i];
            const int x = static_cast<int>(i % cfg.width);
            const int y = static_cast<int>(i / cfg.width);
            while (current[i] - reference[i] >= C) {
                reference[i] += C;
                const double frac = delta != 0.0 ? std::clamp((reference[i] - previous[i]) / delta, 0.0, 1.0) : 1.0;
                interval.push_back(Event{t_prev + frac * step, x, y, +1});
            }
            while (reference[i] - current[i] >= C) {
                reference[i] -= C;
                const double frac = delta != 0.0 ? std::clamp((reference[i] - previous[i]) / delta, 0.0, 1.0) : 1.0;
                interval.push_back(Event{t_prev + frac * step, x, y, -1});
            }
        }
        if (cfg.noise_rate > 0.0) {
            std::poisson_distribution<long> count(cfg.noise_rate * static_cast<double>(pixels) * step);
            const long n = count(rng);
            for (long j = 0; j < n; ++j) {
                const double t = t_prev + unit(rng) * step;
                const int x = px(rng);
                const int y = py(rng);
                const int p = unit(rng) < 0.5 ? -1 : 1;
                interval.push_back(Event{std::min(t, std::nextafter(t_now, t_prev)), x, y, p});
            }
        }
        std::stable_sort(interval.begin(), interval.end(),
                         [](const Event& a, const Event& b) { return a.t < b.t; });
        seq.events.insert(seq.events.end(), interval.begin(), interval.end());
        std::swap(previous, current);
    }
    return seq;
}

} // namespace orthotrack::events
