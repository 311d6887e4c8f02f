#pragma once

#include <tuple>
#include <variant>

#include "stitch4d/addmask.hpp"
#include "stitch4d/frames.hpp"
#include "stitch4d/raster.hpp"

namespace stitch4d {

/// Identifies a geometry layer: which source view produced it, into which
/// target view it was generated (source == target for base layers), and at
/// which expansion step.
struct LayerProvenance {
    std::string source_view;
    std::string target_view;
    int step = 0;
    int frame_idx = 0;

    bool operator==(const LayerProvenance&) const = default;
    bool operator<(const LayerProvenance& o) const {
        return std::tie(frame_idx, source_view, target_view, step) <
               std::tie(o.frame_idx, o.source_view, o.target_view, o.step);
    }
    std::string describe() const {
        return source_view + "->" + target_view + " step " + std::to_string(step) + " frame " +
               std::to_string(frame_idx);
    }
};

struct GeometryLayer {
    LayerProvenance provenance;
    std::variant<LatticeMesh, ColoredPointCloud> geometry;
    Camera camera;  // camera the layer was generated from/into, kept for the manifest

    bool is_mesh() const { return std::holds_alternative<LatticeMesh>(geometry); }
};

/// Time-indexed collection of geometry layers. Layers are append-only; a
/// provenance may appear at most once.
struct SceneAsset {
    std::vector<GeometryLayer> layers;

    bool has_provenance(const LayerProvenance& p) const {
        for (const auto& l : layers)
            if (l.provenance == p) return true;
        return false;
    }
};

/// Back-projected target-view content restricted to the information-addition
/// mask, one point per set mask pixel.
struct StitchCandidate {
    ColoredPointCloud points;
    BitMask origin_mask;
    Camera target_cam;
    int frame_idx = 0;
    LayerProvenance provenance;
};

inline StitchCandidate build_stitch_candidates(const RgbFrame& completed_rgb, const DepthFrame& refined_depth,
                                               const BitMask& mask, const Camera& target_cam, int frame_idx,
                                               const LayerProvenance& provenance = {}) {
    if (completed_rgb.width != refined_depth.width || completed_rgb.height != refined_depth.height ||
        completed_rgb.width != mask.width || completed_rgb.height != mask.height)
        throw std::invalid_argument("build_stitch_candidates: dimension mismatch");
    StitchCandidate cand;
    cand.origin_mask = mask;
    cand.target_cam = target_cam;
    cand.frame_idx = frame_idx;
    cand.provenance = provenance;
    cand.provenance.frame_idx = frame_idx;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            if (!refined_depth.valid_at(x, y))
                throw MissingDepthError("build_stitch_candidates: no refined depth at pixel (" +
                                        std::to_string(x) + ", " + std::to_string(y) + ")");
            ColoredPoint p;
            p.position = unproject(target_cam, {double(x), double(y)}, refined_depth.at(x, y));
            p.color = completed_rgb.at(x, y);
            p.source_pixel = y * mask.width + x;
            cand.points.points.push_back(p);
        }
    return cand;
}

/// Renders the layers of one frame into a camera: meshes are concatenated and
/// rasterized together, point layers are splatted together, and the two are
/// depth-merged (mesh wins ties). Layers are drawn in canonical provenance
/// order so the output is independent of merge order.
inline RenderOutput render_asset(const SceneAsset& asset, int frame_idx, const Camera& cam, int width,
                                 int height, const RasterOptions& opts = {}) {
    std::vector<const GeometryLayer*> frame_layers;
    for (const auto& l : asset.layers)
        if (l.provenance.frame_idx == frame_idx) frame_layers.push_back(&l);
    std::sort(frame_layers.begin(), frame_layers.end(),
              [](const GeometryLayer* a, const GeometryLayer* b) { return a->provenance < b->provenance; });

    LatticeMesh all_mesh;
    ColoredPointCloud all_points;
    for (const auto* l : frame_layers) {
        if (l->is_mesh()) {
            const auto& m = std::get<LatticeMesh>(l->geometry);
            const std::int32_t base = static_cast<std::int32_t>(all_mesh.vertices.size());
            all_mesh.vertices.insert(all_mesh.vertices.end(), m.vertices.begin(), m.vertices.end());
            for (const auto& t : m.triangles)
                all_mesh.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
        } else {
            const auto& p = std::get<ColoredPointCloud>(l->geometry);
            all_points.points.insert(all_points.points.end(), p.points.begin(), p.points.end());
        }
    }
    RenderOutput mesh_r = render_mesh(all_mesh, cam, width, height, true, opts);
    if (all_points.points.empty()) return mesh_r;
    const RenderOutput pts_r = render_points(all_points, cam, width, height, opts);
    return merge_renders(mesh_r, pts_r);
}

struct DisagreementConfig {
    double depth_tol = 0.05;
    double vote_frac = 0.5;
    RasterOptions raster;
};

/// Render-disagreement distillation: the pre-merge asset is rendered into
/// each observed view (the anchor render); a candidate point disagrees in a
/// view when it lands in-frame on an anchor-supported pixel and would occlude
/// it (projected depth nearer than the anchor depth by more than
/// depth_tol * anchor_depth). Points whose disagreement fraction over views
/// with evidence reaches vote_frac are removed; points never visible in any
/// observed view are retained.
inline StitchCandidate render_disagreement_filter(const StitchCandidate& candidate, const SceneAsset& asset,
                                                  const std::vector<Camera>& observed_cams, int width,
                                                  int height, const DisagreementConfig& cfg = {}) {
    if (observed_cams.empty())
        throw std::invalid_argument("render_disagreement_filter: needs at least one observed camera");
    std::vector<RenderOutput> anchors;
    anchors.reserve(observed_cams.size());
    for (const auto& cam : observed_cams)
        anchors.push_back(render_asset(asset, candidate.frame_idx, cam, width, height, cfg.raster));

    StitchCandidate out = candidate;
    out.points.points.clear();
    BitMask kept_mask(candidate.origin_mask.width, candidate.origin_mask.height);
    for (const auto& p : candidate.points.points) {
        int evidence = 0, disagree = 0;
        for (size_t v = 0; v < observed_cams.size(); ++v) {
            Projection pr;
            if (!project_checked(observed_cams[v], p.position, pr) || pr.depth <= cfg.raster.near_plane)
                continue;
            const int px = static_cast<int>(std::lround(pr.pixel.u));
            const int py = static_cast<int>(std::lround(pr.pixel.v));
            if (px < 0 || px >= width || py < 0 || py >= height) continue;
            if (!anchors[v].support.at(px, py)) continue;
            ++evidence;
            const double anchor_z = anchors[v].depth.at(px, py);
            if (pr.depth < anchor_z - cfg.depth_tol * anchor_z) ++disagree;
        }
        if (evidence > 0 && static_cast<double>(disagree) / evidence >= cfg.vote_frac) continue;
        out.points.points.push_back(p);
        if (candidate.origin_mask.width > 0 && p.source_pixel >= 0)
            kept_mask.set(p.source_pixel % kept_mask.width, p.source_pixel / kept_mask.width, true);
    }
    if (candidate.origin_mask.width > 0) out.origin_mask = kept_mask;
    return out;
}

/// Appends the candidate as a new point layer; existing layers are never
/// touched. Duplicate provenance is a conflict.
inline SceneAsset merge_asset(const SceneAsset& asset, const StitchCandidate& candidate) {
    if (asset.has_provenance(candidate.provenance))
        throw ProvenanceConflictError("merge_asset: duplicate layer " + candidate.provenance.describe());
    SceneAsset out = asset;
    GeometryLayer layer;
    layer.provenance = candidate.provenance;
    layer.geometry = candidate.points;
    layer.camera = candidate.target_cam;
    out.layers.push_back(std::move(layer));
    return out;
}

}  // namespace stitch4d
