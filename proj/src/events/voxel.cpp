#include "orthotrack/events/voxel.hpp"

#include <algorithm>
#include <cmath>

#include "orthotrack/core/errors.hpp"

namespace orthotrack::events {

VoxelGrid voxelize(const EventStream& events, double t0, double t1, int bins, int height, int width,
                   VoxelNorm norm) {
    if (bins < 1) {
        throw InputError("voxelize: bins must be >= 1");
    }
    if (!(t1 > t0)) {
        throw InputError("voxelize: empty time window");
    }
    if (height < 1 || width < 1) {
        throw InputError("voxelize: image size must be positive");
    }
    VoxelGrid grid;
    grid.bins = bins;
    grid.t0 = t0;
    grid.t1 = t1;
    grid.volume = Planar(2 * static_cast<std::size_t>(bins), height, width);
    const double span = t1 - t0;
    for (const Event& e : events) {
        if (e.t < t0 || e.t >= t1 || e.x < 0 || e.y < 0 || e.x >= width || e.y >= height) {
            ++grid.skipped;
            continue;
        }
        const int bin = std::min(bins - 1, static_cast<int>(std::floor(bins * (e.t - t0) / span)));
        const int channel = e.polarity > 0 ? bin : bins + bin;
        grid.volume(channel, e.y, e.x) += 1.0;
        ++grid.accepted;
    }
    if (norm == VoxelNorm::MaxUnit) {
        auto& d = grid.volume.data();
        const double mx = d.empty() ? 0.0 : *std::max_element(d.begin(), d.end());
        if (mx > 0.0) {
            for (double& v : d) {
                v /= mx;
            }
        }
    }
    return grid;
}

} // namespace orthotrack::events
