#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace vidfill {

// Dense pixel video, values in [0,1], layout (t, y, x, c) row-major.
struct VideoTensor {
    std::size_t frames = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 3;
    std::vector<double> data;

    VideoTensor() = default;
    VideoTensor(std::size_t t, std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
        : frames(t), height(h), width(w), channels(c), data(t * h * w * c, fill) {}

    std::size_t size() const { return frames * height * width * channels; }
    std::size_t index(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const {
        return ((t * height + y) * width + x) * channels + c;
    }
    double& at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) {
        return data[index(t, y, x, c)];
    }
    double at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const {
        return data[index(t, y, x, c)];
    }
    bool same_extents(const VideoTensor& o) const {
        return frames == o.frames && height == o.height && width == o.width && channels == o.channels;
    }
};

// Binary keep-map aligned to a VideoTensor: 1 = known pixel, 0 = hole.
struct MaskVideo {
    std::size_t frames = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> data;

    MaskVideo() = default;
    MaskVideo(std::size_t t, std::size_t h, std::size_t w, std::uint8_t fill = 1)
        : frames(t), height(h), width(w), data(t * h * w, fill) {}

    std::size_t size() const { return frames * height * width; }
    std::size_t index(std::size_t t, std::size_t y, std::size_t x) const {
        return (t * height + y) * width + x;
    }
    std::uint8_t& at(std::size_t t, std::size_t y, std::size_t x) { return data[index(t, y, x)]; }
    std::uint8_t at(std::size_t t, std::size_t y, std::size_t x) const { return data[index(t, y, x)]; }
};

// Compressed spatio-temporal feature grid, layout (t, y, x, c) row-major.
struct LatentGrid {
    std::size_t t = 0;
    std::size_t h = 0;
    std::size_t w = 0;
    std::size_t c = 0;
    std::vector<double> data;

    LatentGrid() = default;
    LatentGrid(std::size_t t_, std::size_t h_, std::size_t w_, std::size_t c_, double fill = 0.0)
        : t(t_), h(h_), w(w_), c(c_), data(t_ * h_ * w_ * c_, fill) {}

    std::size_t size() const { return t * h * w * c; }
    std::size_t index(std::size_t ti, std::size_t y, std::size_t x, std::size_t ci) const {
        return ((ti * h + y) * w + x) * c + ci;
    }
    double& at(std::size_t ti, std::size_t y, std::size_t x, std::size_t ci) {
        return data[index(ti, y, x, ci)];
    }
    double at(std::size_t ti, std::size_t y, std::size_t x, std::size_t ci) const {
        return data[index(ti, y, x, ci)];
    }
    bool same_extents(const LatentGrid& o) const {
        return t == o.t && h == o.h && w == o.w && c == o.c;
    }
};

// Binary keep-map on the latent grid, layout (t, y, x).
struct LatentMask {
    std::size_t t = 0;
    std::size_t h = 0;
    std::size_t w = 0;
    std::vector<std::uint8_t> data;

    LatentMask() = default;
    LatentMask(std::size_t t_, std::size_t h_, std::size_t w_, std::uint8_t fill = 1)
        : t(t_), h(h_), w(w_), data(t_ * h_ * w_, fill) {}

    std::size_t size() const { return t * h * w; }
    std::size_t index(std::size_t ti, std::size_t y, std::size_t x) const {
        return (ti * h + y) * w + x;
    }
    std::uint8_t& at(std::size_t ti, std::size_t y, std::size_t x) { return data[index(ti, y, x)]; }
    std::uint8_t at(std::size_t ti, std::size_t y, std::size_t x) const { return data[index(ti, y, x)]; }
};

// Binary hole-map on the latent grid: 1 = hole (inverted polarity vs LatentMask).
struct HoleMap {
    std::size_t t = 0;
    std::size_t h = 0;
    std::size_t w = 0;
    std::vector<std::uint8_t> data;

    HoleMap() = default;
    HoleMap(std::size_t t_, std::size_t h_, std::size_t w_, std::uint8_t fill = 0)
        : t(t_), h(h_), w(w_), data(t_ * h_ * w_, fill) {}

    std::size_t size() const { return t * h * w; }
    std::size_t index(std::size_t ti, std::size_t y, std::size_t x) const {
        return (ti * h + y) * w + x;
    }
    std::uint8_t& at(std::size_t ti, std::size_t y, std::size_t x) { return data[index(ti, y, x)]; }
    std::uint8_t at(std::size_t ti, std::size_t y, std::size_t x) const { return data[index(ti, y, x)]; }
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace vidfill
