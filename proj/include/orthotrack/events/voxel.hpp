#pragma once

#include <cstddef>

#include "orthotrack/events/types.hpp"

namespace orthotrack::events {

enum class VoxelNorm {
    Count,   ///< raw event counts
    MaxUnit, ///< counts divided by the largest cell (all zeros stay zero)
};

/// Time-binned event volume with polarity-split channels: channel b holds
/// positive events of bin b, channel bins + b the negative ones.
struct VoxelGrid {
    int bins = 0;
    double t0 = 0.0;
    double t1 = 0.0;
    Planar volume; ///< 2*bins × H × W
    std::size_t accepted = 0;
    std::size_t skipped = 0;
};

/// Bins events from [t0, t1) into a 2B×H×W volume. Events outside the window
/// or the image are skipped and counted.
VoxelGrid voxelize(const EventStream& events, double t0, double t1, int bins, int height, int width,
                   VoxelNorm norm = VoxelNorm::Count);

} // namespace orthotrack::events
