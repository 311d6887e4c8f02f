#pragma once

#include "stitch4d/mask_ops.hpp"
#include "stitch4d/raster.hpp"

namespace stitch4d {

/// Projection-invalid pixels: the complement of the point-cloud support mask.
inline BitMask projection_hole_mask(const RenderOutput& render) { return mask_complement(render.support); }

/// Silhouette-curtain discrepancy: pixels the mesh render supports where the
/// point-cloud render is either unsupported or disagrees in depth by more
/// than rel_depth_tol relative to the point-cloud depth.
inline BitMask curtain_discrepancy_mask(const RenderOutput& mesh_r, const RenderOutput& pcd_r,
                                        double rel_depth_tol = 0.03) {
    if (!mesh_r.support.same_size(pcd_r.support))
        throw std::invalid_argument("curtain_discrepancy_mask: dimension mismatch");
    BitMask out(mesh_r.support.width, mesh_r.support.height);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            if (!mesh_r.support.at(x, y)) continue;
            if (!pcd_r.support.at(x, y)) {
                out.set(x, y, true);
                continue;
            }
            const double dm = mesh_r.depth.at(x, y), dp = pcd_r.depth.at(x, y);
            out.set(x, y, std::abs(dm - dp) > rel_depth_tol * dp);
        }
    return out;
}

/// Union of the hole and curtain masks with connected components smaller than
/// min_component removed (min_component = 0 keeps the exact union).
inline BitMask info_addition_mask(const BitMask& hole, const BitMask& curtain_disc, const BitMask& curtain_fb,
                                  int min_component = 0) {
    return remove_small_components(mask_union(mask_union(hole, curtain_disc), curtain_fb), min_component);
}

/// The per-(source,target,frame) masks of the information-addition stage.
struct MaskBundle {
    BitMask hole;          // 1 - V^pcd
    BitMask curtain_disc;  // mesh/point-cloud depth discrepancy
    BitMask curtain_fb;    // projected FG-BG curtain coverage
    BitMask info_addition; // cleaned union of the three
};

struct MaskConfig {
    double rel_depth_tol = 0.03;
    int min_component = 16;  // tuned at 672x384
};

inline MaskBundle compute_mask_bundle(const RenderOutput& mesh_r, const RenderOutput& pcd_r,
                                      const BitMask& curtain_fb_support, const MaskConfig& cfg = {}) {
    MaskBundle b;
    b.hole = projection_hole_mask(pcd_r);
    b.curtain_disc = curtain_discrepancy_mask(mesh_r, pcd_r, cfg.rel_depth_tol);
    b.curtain_fb = curtain_fb_support;
    b.info_addition = info_addition_mask(b.hole, b.curtain_disc, b.curtain_fb, cfg.min_component);
    return b;
}

}  // namespace stitch4d
