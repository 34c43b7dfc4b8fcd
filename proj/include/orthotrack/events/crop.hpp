#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "orthotrack/events/types.hpp"

namespace orthotrack::events {

/// Square source window in image pixel coordinates (pixel i spans [i, i+1)).
struct CropWindow {
    double x0 = 0.0;
    double y0 = 0.0;
    double side = 0.0;
};

/// Square of side scale·max(w, h) centered on the box.
CropWindow crop_window(const BBox& box, double scale);

/// Bilinear resample of `window` to out_size×out_size, zero outside the source.
Planar crop_region(const Planar& src, const CropWindow& window, std::size_t out_size);
Planar crop_region(const Planar& src, const BBox& box, double scale, std::size_t out_size);

/// Box mapped into / out of the out_size×out_size crop coordinate frame.
BBox to_crop_coords(const BBox& box, const CropWindow& window, std::size_t out_size);
BBox from_crop_coords(const BBox& box, const CropWindow& window, std::size_t out_size);

struct FrameSize {
    double width = 0.0;
    double height = 0.0;
};

/// Log-normal size jitter (std `scale_factor` per side) and uniform center
/// jitter of ±loc_factor·sqrt(w'h')/2 per axis. With `frame`, the center is
/// clamped into the image so the result always intersects it.
BBox jitter_box(const BBox& box, double loc_factor, double scale_factor, std::uint64_t seed,
                std::optional<FrameSize> frame = std::nullopt);

} // namespace orthotrack::events
