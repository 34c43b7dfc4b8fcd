#pragma once

#include <filesystem>
#include <vector>

#include "orthotrack/events/types.hpp"
#include "orthotrack/events/voxel.hpp"

namespace orthotrack::events {

/// CSV with header `t,x,y,p`.
void write_events_csv(const std::filesystem::path& path, const EventStream& events);
EventStream read_events_csv(const std::filesystem::path& path);

/// CSV with header `frame,cx,cy,w,h`.
void write_boxes_csv(const std::filesystem::path& path, const std::vector<BBox>& boxes);
std::vector<BBox> read_boxes_csv(const std::filesystem::path& path);

/// Binary PPM (P6), 8 bits per channel. Requires a 3-channel image.
void write_ppm(const std::filesystem::path& path, const Planar& rgb);

/// Raw float frame: magic "OTFR", u32 channels, u32 height, u32 width,
/// f64 timestamp, then channels·height·width f64 values (planar, row-major),
/// all little-endian.
void write_frame_raw(const std::filesystem::path& path, const Frame& frame);
Frame read_frame_raw(const std::filesystem::path& path);

/// Raw voxel grid: magic "OTVX", u32 version (1), u32 bins, u32 channels,
/// u32 height, u32 width, f64 t0, f64 t1, then channels·height·width f64
/// values (planar, row-major), all little-endian.
void write_voxel_raw(const std::filesystem::path& path, const VoxelGrid& grid);
VoxelGrid read_voxel_raw(const std::filesystem::path& path);

} // namespace orthotrack::events
