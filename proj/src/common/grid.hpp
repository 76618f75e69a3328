#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "common/error.hpp"

namespace vos {

// Row-major H x W grid. The tag keeps the mask flavours from mixing silently.
template <class T, class Tag>
struct Grid {
    using value_type = T;

    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(std::size_t h, std::size_t w, T fill = T{}) : height(h), width(w), data(h * w, fill) {}
    Grid(std::size_t h, std::size_t w, std::vector<T> values) : height(h), width(w), data(std::move(values)) {
        if (data.size() != h * w)
            fail_invalid(fmt::format("grid data has {} values, expected {}x{}", data.size(), h, w));
    }

    std::size_t size() const noexcept { return data.size(); }
    bool empty() const noexcept { return data.empty(); }

    T& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
    const T& at(std::size_t y, std::size_t x) const { return data[y * width + x]; }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    bool same_dims(std::size_t h, std::size_t w) const noexcept { return height == h && width == w; }
    template <class G>
    bool same_dims(const G& o) const noexcept { return height == o.height && width == o.width; }

    friend bool operator==(const Grid&, const Grid&) = default;
};

template <class A, class B>
void require_same_dims(const A& a, const B& b, const char* what) {
    if (!a.same_dims(b))
        fail_invalid(fmt::format("{}: dimension mismatch {}x{} vs {}x{}", what, a.height, a.width, b.height,
                                 b.width));
}

struct InstanceTag {};
struct BinaryTag {};
struct ProbabilityTag {};
struct BoundaryTag {};

// Labels 0..N, 0 = background.
using InstanceMask = Grid<std::uint8_t, InstanceTag>;
// Values in {0,1}.
using BinaryMask = Grid<std::uint8_t, BinaryTag>;
// Values in [0,1].
using ProbabilityMap = Grid<double, ProbabilityTag>;
// Contour pixels of a BinaryMask.
using BoundaryMap = Grid<std::uint8_t, BoundaryTag>;

struct RgbImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels; // interleaved RGB

    RgbImage() = default;
    RgbImage(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w * 3, 0) {}

    std::uint8_t* px(std::size_t y, std::size_t x) { return &pixels[(y * width + x) * 3]; }
    const std::uint8_t* px(std::size_t y, std::size_t x) const { return &pixels[(y * width + x) * 3]; }

    template <class G>
    bool same_dims(const G& o) const noexcept { return height == o.height && width == o.width; }

    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

} // namespace vos
