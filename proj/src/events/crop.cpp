#include "orthotrack/events/crop.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "orthotrack/core/errors.hpp"

namespace orthotrack::events {

namespace {

void require_box(const BBox& box, const char* op) {
    if (!(box.w > 0.0) || !(box.h > 0.0) || !std::isfinite(box.cx) || !std::isfinite(box.cy) ||
        !std::isfinite(box.w) || !std::isfinite(box.h)) {
        throw InputError(std::string(op) + ": degenerate box");
    }
}

double sample(const Planar& src, std::size_t c, double sx, double sy) {
    const double fx = std::floor(sx);
    const double fy = std::floor(sy);
    const double ax = sx - fx;
    const double ay = sy - fy;
    const long x0 = static_cast<long>(fx);
    const long y0 = static_cast<long>(fy);
    const long w = static_cast<long>(src.width());
    const long h = static_cast<long>(src.height());
    auto at = [&](long x, long y) {
        return (x < 0 || y < 0 || x >= w || y >= h) ? 0.0 : src(c, y, x);
    };
    double v = 0.0;
    if ((1.0 - ax) * (1.0 - ay) != 0.0) {
        v += (1.0 - ax) * (1.0 - ay) * at(x0, y0);
    }
    if (ax * (1.0 - ay) != 0.0) {
        v += ax * (1.0 - ay) * at(x0 + 1, y0);
    }
    if ((1.0 - ax) * ay != 0.0) {
        v += (1.0 - ax) * ay * at(x0, y0 + 1);
    }
    if (ax * ay != 0.0) {
        v += ax * ay * at(x0 + 1, y0 + 1);
    }
    return v;
}

} // namespace

CropWindow crop_window(const BBox& box, double scale) {
    require_box(box, "crop_window");
    if (!(scale > 0.0)) {
        throw InputError("crop_window: scale must be positive");
    }
    const double side = scale * std::max(box.w, box.h);
    return CropWindow{box.cx - 0.5 * side, box.cy - 0.5 * side, side};
}

Planar crop_region(const Planar& src, const CropWindow& window, std::size_t out_size) {
    if (out_size == 0 || !(window.side > 0.0)) {
        throw InputError("crop_region: output size and window side must be positive");
    }
    Planar out(src.channels(), out_size, out_size);
    const double step = window.side / static_cast<double>(out_size);
    for (std::size_t c = 0; c < src.channels(); ++c) {
        for (std::size_t i = 0; i < out_size; ++i) {
            const double sy = window.y0 + (static_cast<double>(i) + 0.5) * step - 0.5;
            for (std::size_t j = 0; j < out_size; ++j) {
                const double sx = window.x0 + (static_cast<double>(j) + 0.5) * step - 0.5;
                out(c, i, j) = sample(src, c, sx, sy);
            }
        }
    }
    return out;
}

Planar crop_region(const Planar& src, const BBox& box, double scale, std::size_t out_size) {
    return crop_region(src, crop_window(box, scale), out_size);
}

BBox to_crop_coords(const BBox& box, const CropWindow& window, std::size_t out_size) {
    const double s = static_cast<double>(out_size) / window.side;
    return BBox{(box.cx - window.x0) * s, (box.cy - window.y0) * s, box.w * s, box.h * s};
}

BBox from_crop_coords(const BBox& box, const CropWindow& window, std::size_t out_size) {
    const double s = window.side / static_cast<double>(out_size);
    return BBox{window.x0 + box.cx * s, window.y0 + box.cy * s, box.w * s, box.h * s};
}

BBox jitter_box(const BBox& box, double loc_factor, double scale_factor, std::uint64_t seed,
                std::optional<FrameSize> frame) {
    require_box(box, "jitter_box");
    if (loc_factor < 0.0 || scale_factor < 0.0) {
        throw InputError("jitter_box: jitter factors must be non-negative");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(-0.5, 0.5);
    const double nw = normal(rng);
    const double nh = normal(rng);
    const double ux = unit(rng);
    const double uy = unit(rng);

    BBox out = box;
    out.w = box.w * std::exp(nw * scale_factor);
    out.h = box.h * std::exp(nh * scale_factor);
    const double max_offset = std::sqrt(out.w * out.h) * loc_factor;
    out.cx = box.cx + max_offset * ux;
    out.cy = box.cy + max_offset * uy;
    if (frame) {
        out.cx = std::clamp(out.cx, 0.0, frame->width);
        out.cy = std::clamp(out.cy, 0.0, frame->height);
    }
    return out;
}

} // namespace orthotrack::events
