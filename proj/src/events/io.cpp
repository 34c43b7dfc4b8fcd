#include "orthotrack/events/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "orthotrack/core/binary_io.hpp"
#include "orthotrack/core/errors.hpp"

namespace orthotrack::events {

namespace {

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
    std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
    if (!os) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    return os;
}

std::ifstream open_in(const std::filesystem::path& path, bool binary) {
    std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
    if (!is) {
        throw std::runtime_error("cannot open " + path.string());
    }
    return is;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        out.push_back(cell);
    }
    return out;
}

} // namespace

void write_events_csv(const std::filesystem::path& path, const EventStream& events) {
    auto os = open_out(path, false);
    os.precision(17);
    os << "t,x,y,p\n";
    for (const auto& e : events) {
        os << e.t << ',' << e.x << ',' << e.y << ',' << e.polarity << '\n';
    }
}

EventStream read_events_csv(const std::filesystem::path& path) {
    auto is = open_in(path, false);
    std::string line;
    std::getline(is, line);
    EventStream out;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        auto cells = split_csv(line);
        if (cells.size() != 4) {
            throw InputError("events csv: malformed line '" + line + "'");
        }
        out.push_back(Event{std::stod(cells[0]), std::stoi(cells[1]), std::stoi(cells[2]), std::stoi(cells[3])});
    }
    return out;
}

void write_boxes_csv(const std::filesystem::path& path, const std::vector<BBox>& boxes) {
    auto os = open_out(path, false);
    os.precision(17);
    os << "frame,cx,cy,w,h\n";
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        os << i << ',' << boxes[i].cx << ',' << boxes[i].cy << ',' << boxes[i].w << ',' << boxes[i].h << '\n';
    }
}

std::vector<BBox> read_boxes_csv(const std::filesystem::path& path) {
    auto is = open_in(path, false);
    std::string line;
    std::getline(is, line);
    std::vector<BBox> out;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        auto cells = split_csv(line);
        if (cells.size() != 5) {
            throw InputError("boxes csv: malformed line '" + line + "'");
        }
        out.push_back(BBox{std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4])});
    }
    return out;
}

void write_ppm(const std::filesystem::path& path, const Planar& rgb) {
    if (rgb.channels() != 3) {
        throw InputError("write_ppm: expected 3 channels");
    }
    auto os = open_out(path, true);
    os << "P6\n" << rgb.width() << ' ' << rgb.height() << "\n255\n";
    for (std::size_t y = 0; y < rgb.height(); ++y) {
        for (std::size_t x = 0; x < rgb.width(); ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = std::clamp(rgb(c, y, x), 0.0, 1.0);
                os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
            }
        }
    }
}

void write_frame_raw(const std::filesystem::path& path, const Frame& frame) {
    auto os = open_out(path, true);
    binary::write_magic(os, "OTFR");
    binary::write_u32(os, static_cast<std::uint32_t>(frame.image.channels()));
    binary::write_u32(os, static_cast<std::uint32_t>(frame.image.height()));
    binary::write_u32(os, static_cast<std::uint32_t>(frame.image.width()));
    binary::write_f64(os, frame.timestamp);
    for (double v : frame.image.data()) {
        binary::write_f64(os, v);
    }
}

Frame read_frame_raw(const std::filesystem::path& path) {
    auto is = open_in(path, true);
    binary::expect_magic(is, "OTFR");
    const auto c = binary::read_u32(is);
    const auto h = binary::read_u32(is);
    const auto w = binary::read_u32(is);
    Frame frame;
    frame.timestamp = binary::read_f64(is);
    frame.image = Planar(c, h, w);
    for (double& v : frame.image.data()) {
        v = binary::read_f64(is);
    }
    return frame;
}

void write_voxel_raw(const std::filesystem::path& path, const VoxelGrid& grid) {
    auto os = open_out(path, true);
    binary::write_magic(os, "OTVX");
    binary::write_u32(os, 1);
    binary::write_u32(os, static_cast<std::uint32_t>(grid.bins));
    binary::write_u32(os, static_cast<std::uint32_t>(grid.volume.channels()));
    binary::write_u32(os, static_cast<std::uint32_t>(grid.volume.height()));
    binary::write_u32(os, static_cast<std::uint32_t>(grid.volume.width()));
    binary::write_f64(os, grid.t0);
    binary::write_f64(os, grid.t1);
    for (double v : grid.volume.data()) {
        binary::write_f64(os, v);
    }
}

VoxelGrid read_voxel_raw(const std::filesystem::path& path) {
    auto is = open_in(path, true);
    binary::expect_magic(is, "OTVX");
    if (binary::read_u32(is) != 1) {
        throw InputError("voxel raw: unsupported version");
    }
    VoxelGrid grid;
    grid.bins = static_cast<int>(binary::read_u32(is));
    const auto c = binary::read_u32(is);
    const auto h = binary::read_u32(is);
    const auto w = binary::read_u32(is);
    grid.t0 = binary::read_f64(is);
    grid.t1 = binary::read_f64(is);
    grid.volume = Planar(c, h, w);
    for (double& v : grid.volume.data()) {
        v = binary::read_f64(is);
    }
    return grid;
}

} // namespace orthotrack::events
