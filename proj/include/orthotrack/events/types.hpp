#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace orthotrack::events {

/// The simulated target left the image plane or the scene is malformed.
class GenerationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Event {
    double t = 0.0; ///< seconds
    int x = 0;
    int y = 0;
    int polarity = 1; ///< +1 brighter, -1 darker

    friend bool operator==(const Event&, const Event&) = default;
};

using EventStream = std::vector<Event>;

/// Axis-aligned box by center and size, in pixels.
struct BBox {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;

    double x0() const { return cx - 0.5 * w; }
    double y0() const { return cy - 0.5 * h; }
    double x1() const { return cx + 0.5 * w; }
    double y1() const { return cy + 0.5 * h; }

    bool intersects(double width, double height) const {
        return x1() > 0.0 && y1() > 0.0 && x0() < width && y0() < height;
    }

    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Channel-planar image: value(c, y, x) at data[(c*height + y)*width + x].
class Planar {
  public:
    Planar() = default;
    Planar(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0)
        : channels_(channels), height_(height), width_(width), data_(channels * height * width, fill) {}

    std::size_t channels() const { return channels_; }
    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }

    double& operator()(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * height_ + y) * width_ + x];
    }
    double operator()(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * height_ + y) * width_ + x];
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    friend bool operator==(const Planar&, const Planar&) = default;

  private:
    std::size_t channels_ = 0;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> data_;
};

/// RGB frame, three planes with values in [0, 1].
struct Frame {
    Planar image;
    double timestamp = 0.0;
};

} // namespace orthotrack::events
