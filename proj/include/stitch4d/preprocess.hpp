#pragma once

#include "stitch4d/mask_ops.hpp"
#include "stitch4d/types.hpp"

namespace stitch4d {

// Localized cleanup passes applied before lifting and refinement. Each one
// only ever modifies pixels inside its trigger mask and reads exclusively
// from the original (unmodified) inputs.

struct PreprocessStats {
    size_t changed = 0;
    size_t flagged = 0;
};

/// Replaces MAD outliers against the local window median by the mean of the
/// non-outlier valid neighbors. Operates inside erode(region, 1) only; with
/// small_only, flagged components larger than the window size are kept.
inline DepthFrame depth_spikefix(const DepthFrame& depth, const BitMask& region, int window = 7,
                                 double mad_k = 3.0, bool small_only = false,
                                 PreprocessStats* stats = nullptr) {
    if (window < 3 || window % 2 == 0) throw std::invalid_argument("depth_spikefix: window must be odd >= 3");
    if (depth.width != region.width || depth.height != region.height)
        throw std::invalid_argument("depth_spikefix: dimension mismatch");
    const BitMask safe = erode(region, 1);
    const int r = window / 2;

    BitMask flagged(depth.width, depth.height);
    std::vector<float> vals;
    for (int y = 0; y < depth.height; ++y)
        for (int x = 0; x < depth.width; ++x) {
            if (!safe.at(x, y) || !depth.valid_at(x, y)) continue;
            vals.clear();
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (depth.inside(nx, ny) && depth.valid_at(nx, ny)) vals.push_back(depth.at(nx, ny));
                }
            if (vals.size() < 3) continue;
            auto median = [](std::vector<float> v) {
                const size_t m = v.size() / 2;
                std::nth_element(v.begin(), v.begin() + m, v.end());
                return v[m];
            };
            const float med = median(vals);
            std::vector<float> dev(vals.size());
            for (size_t i = 0; i < vals.size(); ++i) dev[i] = std::abs(vals[i] - med);
            const float mad = median(dev);
            if (std::abs(depth.at(x, y) - med) > mad_k * 1.4826 * mad) flagged.set(x, y, true);
        }

    if (small_only) {
        Image2D<std::int32_t> labels;
        std::vector<int> sizes;
        label_components(flagged, labels, sizes);
        for (int y = 0; y < depth.height; ++y)
            for (int x = 0; x < depth.width; ++x)
                if (flagged.at(x, y) && sizes[labels.at(x, y) - 1] > window) flagged.set(x, y, false);
    }

    DepthFrame out = depth;
    for (int y = 0; y < depth.height; ++y)
        for (int x = 0; x < depth.width; ++x) {
            if (!flagged.at(x, y)) continue;
            if (stats) ++stats->flagged;
            double sum = 0.0;
            int n = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if ((dx || dy) && depth.inside(nx, ny) && depth.valid_at(nx, ny) && !flagged.at(nx, ny)) {
                        sum += depth.at(nx, ny);
                        ++n;
                    }
                }
            if (n > 0) {
                out.set(x, y, static_cast<float>(sum / n));
                if (stats) ++stats->changed;
            }
        }
    return out;
}

/// Snaps pixels on depth edges to the most RGB-similar non-edge neighbor,
/// copying both its color and depth. The edge set is |laplacian| > lap_thresh
/// after close+dilate; lap_thresh <= 0 selects 0.05 * median(valid depth).
inline std::pair<RgbFrame, DepthFrame> edge_mapping(const RgbFrame& rgb, const DepthFrame& depth,
                                                    double lap_thresh = 0.0, int radius = 3,
                                                    PreprocessStats* stats = nullptr,
                                                    BitMask* edge_out = nullptr) {
    if (radius < 1) throw std::invalid_argument("edge_mapping: radius must be >= 1");
    if (rgb.width != depth.width || rgb.height != depth.height)
        throw std::invalid_argument("edge_mapping: dimension mismatch");
    const BitMask edges = depth_edge_mask(depth, lap_thresh);
    if (edge_out) *edge_out = edges;

    RgbFrame out_rgb = rgb;
    DepthFrame out_depth = depth;
    for (int y = 0; y < depth.height; ++y)
        for (int x = 0; x < depth.width; ++x) {
            if (!edges.at(x, y)) continue;
            if (stats) ++stats->flagged;
            const Rgb c = rgb.at(x, y);
            int best = -1, bx = 0, by = 0;
            for (int dy = -radius; dy <= radius; ++dy)
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if ((dx == 0 && dy == 0) || !depth.inside(nx, ny)) continue;
                    if (edges.at(nx, ny) || !depth.valid_at(nx, ny)) continue;
                    const Rgb nc = rgb.at(nx, ny);
                    const int dist = std::abs(int(c[0]) - nc[0]) + std::abs(int(c[1]) - nc[1]) +
                                     std::abs(int(c[2]) - nc[2]);
                    if (best < 0 || dist < best) {
                        best = dist;
                        bx = nx;
                        by = ny;
                    }
                }
            if (best < 0) continue;
            out_rgb.set(x, y, rgb.at(bx, by));
            out_depth.set(x, y, depth.at(bx, by));
            if (stats) ++stats->changed;
        }
    return {out_rgb, out_depth};
}

struct MaskRefineConfig {
    int ring_thickness = 2;
    int window = 7;
    int min_component = 16;
    int border_margin = 4;
    double lap_thresh = 0.0;  // <= 0 selects the shared auto threshold
    int edge_dilate = 2;      // widens the cut band to reach mislabeled corners
};

/// Re-evaluates foreground/background labels on the cut mask (boundary ring
/// intersected with depth edges) by comparing the pixel's disparity (1/depth)
/// against the inside/outside mean disparity in a local window. Labels near
/// the frame border are preserved; small components created inside the cut
/// band are removed.
inline BitMask occlusion_mask_refine(const BitMask& mask, const DepthFrame& depth,
                                     const MaskRefineConfig& cfg = {}, PreprocessStats* stats = nullptr,
                                     BitMask* cut_out = nullptr) {
    if (mask.width != depth.width || mask.height != depth.height)
        throw std::invalid_argument("occlusion_mask_refine: dimension mismatch");
    const BitMask ring_in = boundary_ring(mask, cfg.ring_thickness);
    const BitMask ring_out = boundary_ring(mask_complement(mask), cfg.ring_thickness);
    const BitMask edges = depth_edge_mask(depth, cfg.lap_thresh, cfg.edge_dilate);
    BitMask cut = mask_intersect(mask_union(ring_in, ring_out), edges);

    // Preserve the original prediction near the image border.
    for (int y = 0; y < cut.height; ++y)
        for (int x = 0; x < cut.width; ++x)
            if (x < cfg.border_margin || y < cfg.border_margin || x >= cut.width - cfg.border_margin ||
                y >= cut.height - cfg.border_margin)
                cut.set(x, y, false);
    if (cut_out) *cut_out = cut;

    const int r = cfg.window / 2;
    BitMask refined = mask;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (!cut.at(x, y) || !depth.valid_at(x, y)) continue;
            if (stats) ++stats->flagged;
            double in_sum = 0.0, out_sum = 0.0;
            int in_n = 0, out_n = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (!mask.inside(nx, ny) || !depth.valid_at(nx, ny) || cut.at(nx, ny)) continue;
                    const double disp = 1.0 / depth.at(nx, ny);
                    if (mask.at(nx, ny)) {
                        in_sum += disp;
                        ++in_n;
                    } else {
                        out_sum += disp;
                        ++out_n;
                    }
                }
            if (in_n == 0 || out_n == 0) continue;
            const double disp = 1.0 / depth.at(x, y);
            const bool fg = std::abs(disp - in_sum / in_n) <= std::abs(disp - out_sum / out_n);
            if (fg != mask.at(x, y)) {
                refined.set(x, y, fg);
                if (stats) ++stats->changed;
            }
        }

    // Small-component cleanup, restricted to the cut band so the operation
    // stays local: a small foreground component is cleared only when it lies
    // entirely inside the cut mask.
    Image2D<std::int32_t> labels;
    std::vector<int> sizes;
    label_components(refined, labels, sizes);
    std::vector<std::uint8_t> fully_in_cut(sizes.size(), 1);
    for (int y = 0; y < refined.height; ++y)
        for (int x = 0; x < refined.width; ++x)
            if (refined.at(x, y) && !cut.at(x, y)) fully_in_cut[labels.at(x, y) - 1] = 0;
    for (int y = 0; y < refined.height; ++y)
        for (int x = 0; x < refined.width; ++x) {
            if (!refined.at(x, y)) continue;
            const int lbl = labels.at(x, y) - 1;
            if (sizes[lbl] < cfg.min_component && fully_in_cut[lbl]) {
                refined.set(x, y, false);
                if (stats) ++stats->changed;
            }
        }
    return refined;
}

}  // namespace stitch4d
