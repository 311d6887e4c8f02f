#pragma once

#include <limits>

#include "stitch4d/camera.hpp"
#include "stitch4d/mask_ops.hpp"
#include "stitch4d/types.hpp"

namespace stitch4d {

namespace detail {

inline void require_same_dims(int w0, int h0, int w1, int h1, const char* what) {
    if (w0 != w1 || h0 != h1) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

}  // namespace detail

/// One point per valid depth pixel, positioned by unprojection and colored by
/// the source image.
inline ColoredPointCloud lift_point_cloud(const RgbFrame& rgb, const DepthFrame& depth, const Camera& cam) {
    detail::require_same_dims(rgb.width, rgb.height, depth.width, depth.height, "lift_point_cloud");
    ColoredPointCloud pc;
    pc.points.reserve(depth.valid_count());
    for (int y = 0; y < depth.height; ++y)
        for (int x = 0; x < depth.width; ++x) {
            if (!depth.valid_at(x, y)) continue;
            ColoredPoint p;
            p.position = unproject(cam, {double(x), double(y)}, depth.at(x, y));
            p.color = rgb.at(x, y);
            p.source_pixel = y * depth.width + x;
            pc.points.push_back(p);
        }
    return pc;
}

struct LatticeMeshOptions {
    // Triangles whose vertices differ in depth by more than this relative
    // amount are dropped; infinity keeps the raw mesh, curtains included.
    double max_rel_depth_jump = std::numeric_limits<double>::infinity();
    // Directional diagonal adjustment driven by image-space Sobel gradients.
    bool sobel_diagonal_flip = false;
};

/// Image-lattice triangulation: every 2x2 quad of valid pixels yields two
/// triangles split along the (top-left, bottom-right) diagonal. Vertices are
/// shared across quads; one vertex per valid pixel.
inline LatticeMesh lift_lattice_mesh(const RgbFrame& rgb, const DepthFrame& depth, const Camera& cam,
                                     const LatticeMeshOptions& opts = {}) {
    detail::require_same_dims(rgb.width, rgb.height, depth.width, depth.height, "lift_lattice_mesh");
    LatticeMesh mesh;
    Image2D<std::int32_t> vid(depth.width, depth.height, -1);
    for (int y = 0; y < depth.height; ++y)
        for (int x = 0; x < depth.width; ++x) {
            if (!depth.valid_at(x, y)) continue;
            vid.at(x, y) = static_cast<std::int32_t>(mesh.vertices.size());
            ColoredPoint v;
            v.position = unproject(cam, {double(x), double(y)}, depth.at(x, y));
            v.color = rgb.at(x, y);
            v.source_pixel = y * depth.width + x;
            mesh.vertices.push_back(v);
        }

    // Sobel gradient on luma, used only when diagonal flipping is enabled.
    auto luma = [&](int x, int y) {
        const Rgb c = rgb.at(x, y);
        return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
    };
    auto sobel_at = [&](int x, int y) -> std::pair<double, double> {
        auto l = [&](int sx, int sy) {
            return luma(std::clamp(sx, 0, rgb.width - 1), std::clamp(sy, 0, rgb.height - 1));
        };
        const double gx = (l(x + 1, y - 1) + 2 * l(x + 1, y) + l(x + 1, y + 1)) -
                          (l(x - 1, y - 1) + 2 * l(x - 1, y) + l(x - 1, y + 1));
        const double gy = (l(x - 1, y + 1) + 2 * l(x, y + 1) + l(x + 1, y + 1)) -
                          (l(x - 1, y - 1) + 2 * l(x, y - 1) + l(x + 1, y - 1));
        return {gx, gy};
    };

    auto quad_jump_ok = [&](int x, int y) {
        if (!std::isfinite(opts.max_rel_depth_jump)) return true;
        const double d[4] = {depth.at(x, y), depth.at(x + 1, y), depth.at(x, y + 1), depth.at(x + 1, y + 1)};
        double lo = d[0], hi = d[0];
        for (double v : d) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        return (hi - lo) <= opts.max_rel_depth_jump * lo;
    };

    for (int y = 0; y + 1 < depth.height; ++y)
        for (int x = 0; x + 1 < depth.width; ++x) {
            const std::int32_t tl = vid.at(x, y), tr = vid.at(x + 1, y);
            const std::int32_t bl = vid.at(x, y + 1), br = vid.at(x + 1, y + 1);
            if (tl < 0 || tr < 0 || bl < 0 || br < 0) continue;
            if (!quad_jump_ok(x, y)) continue;
            bool flip = false;
            if (opts.sobel_diagonal_flip) {
                auto [gx0, gy0] = sobel_at(x, y);
                auto [gx1, gy1] = sobel_at(x + 1, y + 1);
                const double gx = 0.5 * (gx0 + gx1), gy = 0.5 * (gy0 + gy1);
                // Keep the diagonal most parallel to the image edge, i.e. the
                // one whose direction has the smaller |dot| with the gradient.
                flip = std::abs(gx + gy) > std::abs(-gx + gy);
            }
            if (!flip) {
                mesh.triangles.push_back({tl, tr, br});
                mesh.triangles.push_back({tl, br, bl});
            } else {
                mesh.triangles.push_back({tr, br, bl});
                mesh.triangles.push_back({tr, bl, tl});
            }
        }
    return mesh;
}

struct CurtainOptions {
    int ring_thickness = 1;
    // Color assigned to both curtain ends when a source image is provided;
    // curtains are only ever depth/support-rendered.
    const RgbFrame* fg_rgb = nullptr;
};

/// FG-BG curtain mesh: for every pair of 8-adjacent boundary-ring pixels of
/// the foreground mask, a quad links the two foreground points with the two
/// background points along the same camera rays. Ring pixels lacking a valid
/// background depth, or violating bg >= fg, are skipped.
inline LatticeMesh build_fgbg_curtain(const DepthFrame& fg_depth, const DepthFrame& bg_depth,
                                      const BitMask& fg_mask, const Camera& cam,
                                      const CurtainOptions& opts = {}) {
    detail::require_same_dims(fg_depth.width, fg_depth.height, bg_depth.width, bg_depth.height,
                              "build_fgbg_curtain");
    detail::require_same_dims(fg_depth.width, fg_depth.height, fg_mask.width, fg_mask.height,
                              "build_fgbg_curtain");
    const BitMask ring = boundary_ring(fg_mask, opts.ring_thickness);

    LatticeMesh mesh;
    Image2D<std::int32_t> fg_vid(fg_depth.width, fg_depth.height, -1);
    Image2D<std::int32_t> bg_vid(fg_depth.width, fg_depth.height, -1);

    auto usable = [&](int x, int y) {
        return ring.at(x, y) && fg_depth.valid_at(x, y) && bg_depth.valid_at(x, y) &&
               bg_depth.at(x, y) >= fg_depth.at(x, y);
    };
    auto vertex_pair = [&](int x, int y) {
        if (fg_vid.at(x, y) < 0) {
            ColoredPoint fg, bg;
            fg.position = unproject(cam, {double(x), double(y)}, fg_depth.at(x, y));
            bg.position = unproject(cam, {double(x), double(y)}, bg_depth.at(x, y));
            fg.source_pixel = bg.source_pixel = y * fg_depth.width + x;
            if (opts.fg_rgb) fg.color = bg.color = opts.fg_rgb->at(x, y);
            fg_vid.at(x, y) = static_cast<std::int32_t>(mesh.vertices.size());
            mesh.vertices.push_back(fg);
            bg_vid.at(x, y) = static_cast<std::int32_t>(mesh.vertices.size());
            mesh.vertices.push_back(bg);
        }
        return std::pair{fg_vid.at(x, y), bg_vid.at(x, y)};
    };

    // Forward half of the 8-neighborhood so each unordered pair appears once,
    // with the raster-order-lower pixel first (canonical split).
    static constexpr int fwd[4][2] = {{1, 0}, {-1, 1}, {0, 1}, {1, 1}};
    for (int y = 0; y < fg_depth.height; ++y)
        for (int x = 0; x < fg_depth.width; ++x) {
            if (!usable(x, y)) continue;
            for (auto& d : fwd) {
                const int nx = x + d[0], ny = y + d[1];
                if (!fg_mask.inside(nx, ny) || !usable(nx, ny)) continue;
                auto [fa, ba] = vertex_pair(x, y);
                auto [fb, bb] = vertex_pair(nx, ny);
                // Quad (FGp, FGq, BGq, BGp); zero-area triangles (fg depth ==
                // bg depth) are left to the rasterizer to drop.
                mesh.triangles.push_back({fa, fb, bb});
                mesh.triangles.push_back({fa, bb, ba});
            }
        }
    return mesh;
}

}  // namespace stitch4d
