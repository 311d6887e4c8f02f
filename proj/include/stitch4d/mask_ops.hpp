#pragma once

#include "stitch4d/types.hpp"

namespace stitch4d {

// Morphology uses a square (Chebyshev) structuring element of the given
// radius; connected components use 8-connectivity throughout.

inline BitMask dilate(const BitMask& m, int radius) {
    if (radius <= 0) return m;
    BitMask out(m.width, m.height);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            bool hit = false;
            for (int dy = -radius; dy <= radius && !hit; ++dy)
                for (int dx = -radius; dx <= radius && !hit; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (m.inside(nx, ny) && m.at(nx, ny)) hit = true;
                }
            out.set(x, y, hit);
        }
    return out;
}

inline BitMask erode(const BitMask& m, int radius) {
    if (radius <= 0) return m;
    BitMask out(m.width, m.height);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            bool all = true;
            for (int dy = -radius; dy <= radius && all; ++dy)
                for (int dx = -radius; dx <= radius && all; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (!m.inside(nx, ny) || !m.at(nx, ny)) all = false;
                }
            out.set(x, y, all);
        }
    return out;
}

inline BitMask morph_close(const BitMask& m, int radius) { return erode(dilate(m, radius), radius); }

/// 8-connected component labels; 0 marks background. Returns the number of
/// components and fills sizes[label-1].
inline int label_components(const BitMask& m, Image2D<std::int32_t>& labels, std::vector<int>& sizes) {
    labels = Image2D<std::int32_t>(m.width, m.height, 0);
    sizes.clear();
    int next = 0;
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            if (!m.at(x, y) || labels.at(x, y) != 0) continue;
            ++next;
            int count = 0;
            stack.push_back({x, y});
            labels.at(x, y) = next;
            while (!stack.empty()) {
                auto [px, py] = stack.back();
                stack.pop_back();
                ++count;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = px + dx, ny = py + dy;
                        if ((dx || dy) && m.inside(nx, ny) && m.at(nx, ny) && labels.at(nx, ny) == 0) {
                            labels.at(nx, ny) = next;
                            stack.push_back({nx, ny});
                        }
                    }
            }
            sizes.push_back(count);
        }
    return next;
}

/// Clears 8-connected components with pixel count < min_size.
inline BitMask remove_small_components(const BitMask& m, int min_size) {
    if (min_size < 0) throw std::invalid_argument("remove_small_components: min_size must be >= 0");
    if (min_size == 0) return m;
    Image2D<std::int32_t> labels;
    std::vector<int> sizes;
    label_components(m, labels, sizes);
    BitMask out = m;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(x, y) && sizes[labels.at(x, y) - 1] < min_size) out.set(x, y, false);
    return out;
}

/// Mask pixels within `thickness` (Chebyshev distance) of a mask/non-mask
/// transition. The image border itself is not a transition.
inline BitMask boundary_ring(const BitMask& mask, int thickness) {
    if (thickness < 1) throw std::invalid_argument("boundary_ring: thickness must be >= 1");
    BitMask out(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            bool near_transition = false;
            for (int dy = -thickness; dy <= thickness && !near_transition; ++dy)
                for (int dx = -thickness; dx <= thickness && !near_transition; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (mask.inside(nx, ny) && !mask.at(nx, ny)) near_transition = true;
                }
            out.set(x, y, near_transition);
        }
    return out;
}

/// Depth discontinuity detector shared by masking and preprocessing:
/// |5-point Laplacian| > threshold, then close(1) + dilate(dilate_radius).
/// A non-positive threshold selects 0.05 * median(valid depth).
inline BitMask depth_edge_mask(const DepthFrame& depth, double lap_thresh, int dilate_radius = 1) {
    if (lap_thresh <= 0.0) {
        std::vector<float> vals;
        vals.reserve(depth.data.size());
        for (size_t i = 0; i < depth.data.size(); ++i)
            if (depth.valid[i]) vals.push_back(depth.data[i]);
        if (vals.empty()) return BitMask(depth.width, depth.height);
        std::nth_element(vals.begin(), vals.begin() + vals.size() / 2, vals.end());
        lap_thresh = 0.05 * vals[vals.size() / 2];
        if (lap_thresh <= 0.0) return BitMask(depth.width, depth.height);
    }
    BitMask raw(depth.width, depth.height);
    static constexpr int off[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (int y = 0; y < depth.height; ++y)
        for (int x = 0; x < depth.width; ++x) {
            if (!depth.valid_at(x, y)) continue;
            double lap = 0.0;
            for (auto& d : off) {
                const int nx = x + d[0], ny = y + d[1];
                if (depth.inside(nx, ny) && depth.valid_at(nx, ny)) lap += depth.at(nx, ny) - depth.at(x, y);
            }
            raw.set(x, y, std::abs(lap) > lap_thresh);
        }
    return dilate(morph_close(raw, 1), dilate_radius);
}

}  // namespace stitch4d
