#pragma once

#include <array>
#include <Eigen/Core>

#include "stitch4d/core.hpp"

namespace stitch4d {

using Rgb = std::array<std::uint8_t, 3>;

/// Row-major 8-bit RGB raster.
struct RgbFrame {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // width*height*3

    RgbFrame() = default;
    RgbFrame(int w, int h, Rgb fill = {0, 0, 0}) : width(w), height(h), data(static_cast<size_t>(w) * h * 3) {
        for (size_t i = 0; i < data.size(); i += 3) {
            data[i] = fill[0];
            data[i + 1] = fill[1];
            data[i + 2] = fill[2];
        }
    }

    Rgb at(int x, int y) const {
        const size_t i = (static_cast<size_t>(y) * width + x) * 3;
        return {data[i], data[i + 1], data[i + 2]};
    }
    void set(int x, int y, Rgb c) {
        const size_t i = (static_cast<size_t>(y) * width + x) * 3;
        data[i] = c[0];
        data[i + 1] = c[1];
        data[i + 2] = c[2];
    }
    bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

/// Row-major float depth raster with a per-pixel validity channel. Valid
/// pixels carry finite depth in (0, d_max].
struct DepthFrame {
    int width = 0;
    int height = 0;
    std::vector<float> data;
    std::vector<std::uint8_t> valid;

    DepthFrame() = default;
    DepthFrame(int w, int h)
        : width(w), height(h), data(static_cast<size_t>(w) * h, 0.0f), valid(static_cast<size_t>(w) * h, 0) {}

    float at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    bool valid_at(int x, int y) const { return valid[static_cast<size_t>(y) * width + x] != 0; }
    void set(int x, int y, float d) {
        const size_t i = static_cast<size_t>(y) * width + x;
        data[i] = d;
        valid[i] = 1;
    }
    void invalidate(int x, int y) {
        const size_t i = static_cast<size_t>(y) * width + x;
        data[i] = 0.0f;
        valid[i] = 0;
    }
    bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    size_t valid_count() const {
        size_t n = 0;
        for (auto v : valid) n += v != 0;
        return n;
    }
};

/// Row-major boolean raster.
struct BitMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    BitMask() = default;
    BitMask(int w, int h, bool fill = false)
        : width(w), height(h), bits(static_cast<size_t>(w) * h, fill ? 1 : 0) {}

    bool at(int x, int y) const { return bits[static_cast<size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool b = true) { bits[static_cast<size_t>(y) * width + x] = b ? 1 : 0; }
    bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    size_t count() const {
        size_t n = 0;
        for (auto b : bits) n += b != 0;
        return n;
    }
    bool empty() const { return count() == 0; }

    bool same_size(const BitMask& o) const { return width == o.width && height == o.height; }
};

inline BitMask mask_union(const BitMask& a, const BitMask& b) {
    if (!a.same_size(b)) throw std::invalid_argument("mask_union: dimension mismatch");
    BitMask out = a;
    for (size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = out.bits[i] | b.bits[i];
    return out;
}

inline BitMask mask_intersect(const BitMask& a, const BitMask& b) {
    if (!a.same_size(b)) throw std::invalid_argument("mask_intersect: dimension mismatch");
    BitMask out = a;
    for (size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = out.bits[i] & b.bits[i];
    return out;
}

inline BitMask mask_complement(const BitMask& a) {
    BitMask out = a;
    for (auto& b : out.bits) b = b ? 0 : 1;
    return out;
}

/// A lifted pixel sample: world position, color and flat source-pixel id
/// (v * width + u in the originating frame).
struct ColoredPoint {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Rgb color = {0, 0, 0};
    std::int32_t source_pixel = -1;
};

struct ColoredPointCloud {
    std::vector<ColoredPoint> points;

    bool all_finite() const {
        for (const auto& p : points)
            if (!p.position.allFinite()) return false;
        return true;
    }
};

/// Triangle mesh over lifted pixels. Triangles index into `vertices`; a
/// degenerate triangle (repeated vertex index) is never stored.
struct LatticeMesh {
    std::vector<ColoredPoint> vertices;
    std::vector<std::array<std::int32_t, 3>> triangles;
};

}  // namespace stitch4d
