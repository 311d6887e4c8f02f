// Batch CLI for the geometric 4D stitching toolkit:
//   gen         synthesize an analytic test dataset from a scene description
//   preprocess  localized depth/mask cleanup (spikefix | edgemap | maskrefine)
//   expand      run the full per-target expansion against a dataset
//   render      render an asset along an interpolated camera trajectory
//   refine      pyramidal source-anchored depth refinement on PFM inputs
//   eval        Sim3-aligned trajectory metrics between two camera manifests

#include <iostream>

#include <CLI11.hpp>

#include "stitch4d/stitch4d.hpp"

using namespace stitch4d;

namespace {

RefineConfig refine_config_from(const KeyValueConfig& kv) {
    PipelineConfig pc = PipelineConfig::from_kv(kv);
    return pc.refine;
}

json metrics_to_json(const TrajectoryMetrics& m) {
    json j;
    j["ATE Mean"] = m.ate_mean;
    j["ATE RMSE"] = m.ate_rmse;
    j["Rot Mean (Deg)"] = m.rot_mean_deg;
    j["RPE Trans Mean"] = m.rpe_trans_mean;
    j["Align Scale"] = m.align_scale;
    return j;
}

std::vector<Camera> trajectory_from_manifest(const fs::path& path) {
    auto entries = read_camera_manifest(path);
    std::sort(entries.begin(), entries.end(), [](const ViewEntry& a, const ViewEntry& b) {
        return std::tie(a.frame_idx, a.view_id) < std::tie(b.frame_idx, b.view_id);
    });
    std::vector<Camera> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.cam);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Geometric 4D stitching toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "Plain-text key-value config file")->expected(1);
    auto load_config = [&]() {
        return config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(config_path);
    };

    // --- gen ----------------------------------------------------------------
    auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset from a scene description");
    std::string gen_spec, gen_out;
    gen->add_option("--spec", gen_spec, "Scene description file")->required();
    gen->add_option("--out", gen_out, "Output dataset directory")->required();

    // --- preprocess -----------------------------------------------------------
    auto* pre = app.add_subcommand("preprocess", "Localized depth/mask cleanup");
    pre->require_subcommand(1);
    std::string p_depth, p_region, p_rgb, p_mask, p_out, p_out_rgb;
    int p_window = 7, p_radius = 3;
    double p_mad_k = 3.0, p_lap = 0.0;
    bool p_small_only = false;

    auto* spike = pre->add_subcommand("spikefix", "Replace MAD depth outliers by local means");
    spike->add_option("--depth", p_depth, "Input depth PFM")->required();
    spike->add_option("--region", p_region, "Region mask PNG (default: whole frame)");
    spike->add_option("--out", p_out, "Output depth PFM")->required();
    spike->add_option("--window", p_window, "Odd window size");
    spike->add_option("--mad-k", p_mad_k, "MAD multiplier");
    spike->add_flag("--small-only", p_small_only, "Only fix small outlier components");

    auto* edgemap = pre->add_subcommand("edgemap", "Snap depth-edge pixels to similar neighbors");
    edgemap->add_option("--rgb", p_rgb, "Input RGB PNG")->required();
    edgemap->add_option("--depth", p_depth, "Input depth PFM")->required();
    edgemap->add_option("--out-rgb", p_out_rgb, "Output RGB PNG")->required();
    edgemap->add_option("--out-depth", p_out, "Output depth PFM")->required();
    edgemap->add_option("--lap-thresh", p_lap, "Laplacian threshold (<=0: auto)");
    edgemap->add_option("--radius", p_radius, "Candidate search radius");

    auto* maskref = pre->add_subcommand("maskrefine", "Refine FG/BG labels near occlusion boundaries");
    maskref->add_option("--mask", p_mask, "Input mask PNG")->required();
    maskref->add_option("--depth", p_depth, "Input depth PFM")->required();
    maskref->add_option("--out", p_out, "Output mask PNG")->required();

    // --- expand ----------------------------------------------------------------
    auto* expand = app.add_subcommand("expand", "Expand a 4D asset toward a target view");
    std::string e_dataset, e_source, e_target, e_work, e_out, e_completer;
    expand->add_option("--dataset", e_dataset, "Dataset directory (manifest.json, rgb/, depth/)")
        ->required();
    expand->add_option("--source-view", e_source, "Source view id")->required();
    expand->add_option("--target-view", e_target, "Target view id")->required();
    expand->add_option("--work", e_work, "Working directory for stage artifacts")->required();
    expand->add_option("--out", e_out, "Output asset directory")->required();
    expand->add_option("--completer", e_completer, "oracle | external (overrides config)");

    // --- render ----------------------------------------------------------------
    auto* render = app.add_subcommand("render", "Render an asset along an interpolated trajectory");
    std::string r_asset, r_manifest, r_view0, r_view1, r_out;
    int r_frames = 2, r_width = 0, r_height = 0;
    render->add_option("--asset", r_asset, "Asset directory")->required();
    render->add_option("--manifest", r_manifest, "Camera manifest with the endpoint views")->required();
    render->add_option("--view0", r_view0, "Start view id")->required();
    render->add_option("--view1", r_view1, "End view id")->required();
    render->add_option("--frames", r_frames, "Number of rendered frames (>= 2)");
    render->add_option("--width", r_width, "Raster width (default: manifest)");
    render->add_option("--height", r_height, "Raster height (default: manifest)");
    render->add_option("--out", r_out, "Output frame directory")->required();

    // --- refine ----------------------------------------------------------------
    auto* refine = app.add_subcommand("refine", "Refine a generated depth map against an anchor render");
    std::string f_dff, f_anchor, f_valid, f_out, f_diag;
    refine->add_option("--dff", f_dff, "Generated (feed-forward) depth PFM")->required();
    refine->add_option("--anchor", f_anchor, "Anchor depth PFM")->required();
    refine->add_option("--valid", f_valid, "Anchor validity mask PNG")->required();
    refine->add_option("--out", f_out, "Refined depth PFM")->required();
    refine->add_option("--diagnostics", f_diag, "Optional per-level diagnostics JSON");

    // --- eval ------------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "Trajectory metrics between two camera manifests");
    std::string v_pred, v_ref, v_out;
    eval->add_option("--pred", v_pred, "Predicted camera manifest")->required();
    eval->add_option("--ref", v_ref, "Reference camera manifest")->required();
    eval->add_option("--out", v_out, "Metrics JSON output")->required();

    // Let `--config` appear after the subcommand name.
    for (CLI::App* sub : {gen, pre, spike, edgemap, maskref, expand, render, refine, eval})
        sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            gen_synthetic_scene(read_file(gen_spec), gen_out);
            std::cout << "dataset written to " << gen_out << "\n";
        } else if (*spike) {
            const DepthFrame depth = read_pfm(p_depth);
            const BitMask region = p_region.empty() ? BitMask(depth.width, depth.height, true)
                                                    : read_png_mask(p_region);
            PreprocessStats stats;
            write_pfm(p_out, depth_spikefix(depth, region, p_window, p_mad_k, p_small_only, &stats));
            std::cout << "spikefix: flagged " << stats.flagged << ", changed " << stats.changed
                      << " pixels\n";
        } else if (*edgemap) {
            PreprocessStats stats;
            auto [rgb, depth] = edge_mapping(read_png_rgb(p_rgb), read_pfm(p_depth), p_lap, p_radius,
                                             &stats);
            write_png(p_out_rgb, rgb);
            write_pfm(p_out, depth);
            std::cout << "edgemap: flagged " << stats.flagged << ", changed " << stats.changed
                      << " pixels\n";
        } else if (*maskref) {
            PreprocessStats stats;
            MaskRefineConfig mcfg;
            write_png(p_out, occlusion_mask_refine(read_png_mask(p_mask), read_pfm(p_depth), mcfg, &stats));
            std::cout << "maskrefine: examined " << stats.flagged << ", changed " << stats.changed
                      << " pixels\n";
        } else if (*expand) {
            PipelineConfig cfg = PipelineConfig::from_kv(load_config());
            cfg.dataset_dir = e_dataset;
            cfg.work_dir = e_work;
            cfg.out_dir = e_out;
            if (!e_completer.empty()) cfg.completer = e_completer;
            RunSummary summary;
            run_expand(cfg, e_source, e_target, &summary);
            std::cout << "asset written to " << e_out << " (" << summary.frames.size() << " frames)\n";
        } else if (*render) {
            const SceneAsset asset = read_asset(r_asset);
            const auto manifest = read_camera_manifest(r_manifest);
            const ViewEntry* v0 = nullptr;
            const ViewEntry* v1 = nullptr;
            for (const auto& e : manifest) {
                if (e.view_id == r_view0 && !v0) v0 = &e;
                if (e.view_id == r_view1 && !v1) v1 = &e;
            }
            if (!v0 || !v1) throw std::invalid_argument("render: view id not found in manifest");
            const int w = r_width > 0 ? r_width : v0->width;
            const int h = r_height > 0 ? r_height : v0->height;
            render_novel_views(asset, v0->cam, v1->cam, r_frames, w, h, r_out);
            std::cout << r_frames << " frames written to " << r_out << "\n";
        } else if (*refine) {
            AnchorInput in;
            in.d_ff = read_pfm(f_dff);
            in.d_anchor = read_pfm(f_anchor);
            in.valid = read_png_mask(f_valid);
            for (int y = 0; y < in.valid.height; ++y)
                for (int x = 0; x < in.valid.width; ++x)
                    if (in.valid.at(x, y) && !(in.d_ff.valid_at(x, y) && in.d_anchor.valid_at(x, y)))
                        in.valid.set(x, y, false);
            RefineDiagnostics diag;
            diag.with_objective = !f_diag.empty();
            write_pfm(f_out, refine_depth(in, refine_config_from(load_config()), &diag));
            if (!f_diag.empty()) {
                json j = json::array();
                for (const auto& lv : diag.levels) {
                    json l;
                    l["level"] = lv.level;
                    l["stride"] = lv.stride;
                    l["candidate_cells"] = lv.candidate_cells;
                    l["mad_rejected"] = lv.mad_rejected;
                    l["fit_anchored"] = lv.fit_anchored;
                    l["fill_anchored"] = lv.fill_anchored;
                    l["prop_anchored"] = lv.prop_anchored;
                    l["steps3_used"] = lv.steps3_used;
                    l["steps4_used"] = lv.steps4_used;
                    l["objective"] = lv.objective;
                    j.push_back(l);
                }
                atomic_write(f_diag, j.dump(2) + "\n");
            }
            std::cout << "refined depth written to " << f_out << "\n";
        } else if (*eval) {
            const TrajectoryMetrics m =
                compute_metrics(trajectory_from_manifest(v_pred), trajectory_from_manifest(v_ref));
            atomic_write(v_out, metrics_to_json(m).dump(2) + "\n");
            std::cout << metrics_to_json(m).dump(2) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
