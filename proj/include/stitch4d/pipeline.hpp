#pragma once

#include <chrono>
#include <random>
#include <thread>

#include "stitch4d/addmask.hpp"
#include "stitch4d/frames.hpp"
#include "stitch4d/io.hpp"
#include "stitch4d/preprocess.hpp"
#include "stitch4d/refine.hpp"
#include "stitch4d/stitch.hpp"
#include "stitch4d/synthetic.hpp"

namespace stitch4d {

struct PipelineConfig {
    fs::path dataset_dir;
    fs::path work_dir;
    fs::path out_dir;
    int width = 672, height = 384;  // default raster size; the manifest overrides

    RefineConfig refine;
    MaskConfig mask;
    RasterOptions raster;
    DisagreementConfig stitch;
    CurtainBoundConfig curtain;

    bool spikefix_enabled = true;
    int spikefix_window = 7;
    double spikefix_mad_k = 3.0;
    bool spikefix_small_only = false;
    bool edge_mapping_enabled = false;
    double edge_lap_thresh = 0.0;
    int edge_radius = 3;
    bool mask_refine_enabled = true;
    MaskRefineConfig mask_refine;

    int curtain_ring_thickness = 1;
    double anchor_mesh_rel_jump = 0.05;  // curtain exclusion for base/anchor meshes
    bool use_bg_layers = false;
    bool mesh_candidates = false;  // stitch candidate regions as lattice meshes instead of points

    std::string completer = "oracle";  // oracle | external
    double exchange_timeout_sec = 60.0;
    double exchange_poll_sec = 0.2;
    // Oracle-path corruption applied to the ground-truth target depth so
    // refinement has real work to do.
    double oracle_scale = 1.2;
    double oracle_shift = 0.1;
    double oracle_noise = 0.0;
    unsigned oracle_seed = 1234;

    void validate() const {
        if (width <= 0 || height <= 0) throw std::invalid_argument("pipeline: non-positive resolution");
        if (completer != "oracle" && completer != "external")
            throw std::invalid_argument("pipeline: completer must be 'oracle' or 'external'");
        refine.validate();
    }

    static PipelineConfig from_kv(const KeyValueConfig& kv) {
        PipelineConfig c;
        c.width = kv.get_int("resolution.width", c.width);
        c.height = kv.get_int("resolution.height", c.height);
        c.refine.strides = kv.get_int_list("refine.strides", c.refine.strides);
        c.refine.min_unit_ratio = kv.get_double("refine.min_unit_ratio", c.refine.min_unit_ratio);
        c.refine.epsilon = kv.get_double("refine.epsilon", c.refine.epsilon);
        c.refine.mad_k = kv.get_double("refine.mad_k", c.refine.mad_k);
        c.refine.tau_n = kv.get_double("refine.tau_n", c.refine.tau_n);
        c.refine.tau_inv = kv.get_double("refine.tau_inv", c.refine.tau_inv);
        c.refine.beta = kv.get_double("refine.beta", c.refine.beta);
        c.refine.d_max = kv.get_double("refine.d_max", c.refine.d_max);
        c.refine.tau_l_start_frac = kv.get_double("refine.tau_l_start_frac", c.refine.tau_l_start_frac);
        c.refine.tau_l_end_frac = kv.get_double("refine.tau_l_end_frac", c.refine.tau_l_end_frac);
        if (kv.has("refine.eta3")) c.refine.eta3 = {kv.get_double("refine.eta3", 0.5)};
        if (kv.has("refine.eta4")) c.refine.eta4 = {kv.get_double("refine.eta4", 0.5)};
        if (kv.has("refine.steps3")) c.refine.steps3 = kv.get_int_list("refine.steps3", {});
        if (kv.has("refine.steps4")) c.refine.steps4 = kv.get_int_list("refine.steps4", {});
        if (kv.has("refine.warmup_steps")) c.refine.warmup_steps = kv.get_int_list("refine.warmup_steps", {});
        if (kv.has("refine.n_flag")) c.refine.n_flag = kv.get_int_list("refine.n_flag", {});
        if (kv.has("refine.n_freeze")) c.refine.n_freeze = kv.get_int_list("refine.n_freeze", {});
        c.mask.rel_depth_tol = kv.get_double("mask.rel_depth_tol", c.mask.rel_depth_tol);
        c.mask.min_component = kv.get_int("mask.min_component", c.mask.min_component);
        c.raster.near_plane = kv.get_double("raster.near_plane", c.raster.near_plane);
        c.raster.rel_tol = kv.get_double("raster.rel_tol", c.raster.rel_tol);
        c.raster.w_min = kv.get_double("raster.w_min", c.raster.w_min);
        c.stitch.depth_tol = kv.get_double("stitch.depth_tol", c.stitch.depth_tol);
        c.stitch.vote_frac = kv.get_double("stitch.vote_frac", c.stitch.vote_frac);
        c.curtain.min_component = kv.get_int("curtain.min_component", c.curtain.min_component);
        c.curtain.smooth_curtain = kv.get_bool("curtain.smooth", c.curtain.smooth_curtain);
        c.curtain.smooth_sigma = kv.get_double("curtain.smooth_sigma", c.curtain.smooth_sigma);
        c.spikefix_enabled = kv.get_bool("preprocess.spikefix", c.spikefix_enabled);
        c.spikefix_window = kv.get_int("preprocess.spikefix_window", c.spikefix_window);
        c.spikefix_mad_k = kv.get_double("preprocess.spikefix_mad_k", c.spikefix_mad_k);
        c.spikefix_small_only = kv.get_bool("preprocess.spikefix_small_only", c.spikefix_small_only);
        c.edge_mapping_enabled = kv.get_bool("preprocess.edge_mapping", c.edge_mapping_enabled);
        c.edge_lap_thresh = kv.get_double("preprocess.edge_lap_thresh", c.edge_lap_thresh);
        c.edge_radius = kv.get_int("preprocess.edge_radius", c.edge_radius);
        c.mask_refine_enabled = kv.get_bool("preprocess.mask_refine", c.mask_refine_enabled);
        c.curtain_ring_thickness = kv.get_int("curtain.ring_thickness", c.curtain_ring_thickness);
        c.anchor_mesh_rel_jump = kv.get_double("pipeline.anchor_mesh_rel_jump", c.anchor_mesh_rel_jump);
        c.use_bg_layers = kv.get_bool("pipeline.use_bg_layers", c.use_bg_layers);
        c.mesh_candidates = kv.get_bool("pipeline.mesh_candidates", c.mesh_candidates);
        c.completer = kv.get_string("pipeline.completer", c.completer);
        c.exchange_timeout_sec = kv.get_double("pipeline.exchange_timeout_sec", c.exchange_timeout_sec);
        c.exchange_poll_sec = kv.get_double("pipeline.exchange_poll_sec", c.exchange_poll_sec);
        c.oracle_scale = kv.get_double("oracle.scale", c.oracle_scale);
        c.oracle_shift = kv.get_double("oracle.shift", c.oracle_shift);
        c.oracle_noise = kv.get_double("oracle.noise", c.oracle_noise);
        c.oracle_seed = static_cast<unsigned>(kv.get_int("oracle.seed", static_cast<int>(c.oracle_seed)));
        c.stitch.raster = c.raster;
        return c;
    }
};

// ---------------------------------------------------------------------------
// NVS file-exchange contract: one JSON record per (target view, frame) next
// to the projected image and the information-addition mask. An external
// completer fills completed_image (and a generated-depth PFM next to it, same stem);
// the oracle completer does both in-process from ground-truth renders.
// ---------------------------------------------------------------------------

struct ExchangeRecord {
    std::string target_view;
    int frame_idx = 0;
    std::string projected_image;
    std::string info_mask;
    std::string completed_image;
    std::string status = "pending";  // pending -> completed | failed

    json to_json() const {
        json j;
        j["target_view"] = target_view;
        j["frame_idx"] = frame_idx;
        j["projected_image"] = projected_image;
        j["info_mask"] = info_mask;
        j["completed_image"] = completed_image;
        j["status"] = status;
        return j;
    }
    static ExchangeRecord from_json(const json& j) {
        ExchangeRecord r;
        r.target_view = j.at("target_view").get<std::string>();
        r.frame_idx = j.at("frame_idx").get<int>();
        r.projected_image = j.at("projected_image").get<std::string>();
        r.info_mask = j.at("info_mask").get<std::string>();
        r.completed_image = j.at("completed_image").get<std::string>();
        r.status = j.at("status").get<std::string>();
        return r;
    }
};

/// Deterministic test stand-in for the NVS module: the projected image
/// outside the mask, the ground-truth target inside it.
inline RgbFrame oracle_complete(const RgbFrame& projected, const BitMask& mask, const RgbFrame& gt_target) {
    if (projected.width != mask.width || projected.height != mask.height ||
        projected.width != gt_target.width || projected.height != gt_target.height)
        throw std::invalid_argument("oracle_complete: dimension mismatch");
    RgbFrame out = projected;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(x, y)) out.set(x, y, gt_target.at(x, y));
    return out;
}

/// Configurable affine + relative-noise corruption of an exact depth map,
/// used by the oracle path to give refinement real work.
inline DepthFrame corrupt_depth(const DepthFrame& d, double scale, double shift, double noise,
                                unsigned seed) {
    DepthFrame out = d;
    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int y = 0; y < d.height; ++y)
        for (int x = 0; x < d.width; ++x) {
            if (!d.valid_at(x, y)) continue;
            double v = scale * d.at(x, y) + shift;
            if (noise > 0.0) v += noise * d.at(x, y) * gauss(rng);
            out.set(x, y, static_cast<float>(std::max(v, 1e-6)));
        }
    return out;
}

// ---------------------------------------------------------------------------
// run_expand: the full per-target expansion described by the pipeline, one
// frame sequence per call. Deterministic and resumable: artifacts are written
// atomically, completed exchange records are reused on re-runs.
// ---------------------------------------------------------------------------

struct FrameSummary {
    int frame_idx = 0;
    size_t hole = 0, cdisc = 0, cfb = 0, info = 0;
    size_t candidates = 0, kept = 0;
};

struct RunSummary {
    std::string source_view, target_view;
    int width = 0, height = 0;
    std::map<std::string, double> stage_seconds;
    double refine_seconds_per_frame = 0.0;
    std::vector<FrameSummary> frames;
    RefineDiagnostics refine_diag;

    json to_json() const {
        json j;
        j["source_view"] = source_view;
        j["target_view"] = target_view;
        j["resolution"] = {width, height};
        j["stages"] = stage_seconds;  // timing fields, excluded from byte-identity checks
        j["refine_seconds_per_frame"] = refine_seconds_per_frame;
        j["frames"] = json::array();
        for (const auto& f : frames) {
            json fj;
            fj["frame_idx"] = f.frame_idx;
            fj["masks"] = {{"hole", f.hole}, {"cdisc", f.cdisc}, {"cfb", f.cfb}, {"info", f.info}};
            fj["candidates"] = f.candidates;
            fj["kept"] = f.kept;
            j["frames"].push_back(fj);
        }
        json levels = json::array();
        for (const auto& lv : refine_diag.levels) {
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
            levels.push_back(l);
        }
        j["refine_levels"] = levels;
        return j;
    }
};

namespace detail {

class StageTimer {
  public:
    explicit StageTimer(std::map<std::string, double>& sink) : sink_(sink) {}
    void start(const std::string& name) {
        stop();
        name_ = name;
        t0_ = std::chrono::steady_clock::now();
    }
    void stop() {
        if (name_.empty()) return;
        const auto dt = std::chrono::steady_clock::now() - t0_;
        sink_[name_] += std::chrono::duration<double>(dt).count();
        name_.clear();
    }

  private:
    std::map<std::string, double>& sink_;
    std::string name_;
    std::chrono::steady_clock::time_point t0_;
};

struct DatasetView {
    std::vector<ViewEntry> manifest;

    const ViewEntry& entry(const std::string& view, int frame) const {
        for (const auto& e : manifest)
            if (e.view_id == view && e.frame_idx == frame) return e;
        throw std::invalid_argument("manifest has no entry for view '" + view + "' frame " +
                                    std::to_string(frame));
    }
    std::vector<int> frames_of(const std::string& view) const {
        std::vector<int> out;
        for (const auto& e : manifest)
            if (e.view_id == view) out.push_back(e.frame_idx);
        std::sort(out.begin(), out.end());
        return out;
    }
};

}  // namespace detail

inline SceneAsset run_expand(const PipelineConfig& cfg, const std::string& source_view,
                             const std::string& target_view, RunSummary* summary_out = nullptr) {
    cfg.validate();
    detail::DatasetView ds{read_camera_manifest(cfg.dataset_dir / "manifest.json")};
    const std::vector<int> frames = ds.frames_of(source_view);
    if (frames.empty()) throw std::invalid_argument("run_expand: source view has no frames");
    for (int f : frames) ds.entry(target_view, f);  // target must cover every source frame

    RunSummary summary;
    summary.source_view = source_view;
    summary.target_view = target_view;
    detail::StageTimer timer(summary.stage_seconds);
    fs::create_directories(cfg.work_dir);
    fs::create_directories(cfg.out_dir);

    struct FrameData {
        int frame_idx;
        Camera src_cam, tgt_cam;
        int width, height;
        RgbFrame rgb;
        DepthFrame depth;
        BitMask fg_mask;
        bool has_fg = false;
        DepthFrame bg_depth;
        RgbFrame bg_rgb;
        bool has_bg = false;
        LatticeMesh base_mesh;   // curtain-excluded
        MaskBundle masks;
        RenderOutput pcd_r, anchor_r, cfb_r;
        RgbFrame completed;
        DepthFrame d_ff;
    };
    std::vector<FrameData> fd(frames.size());

    // --- preprocess + lift + render + masks, per frame ----------------------
    SceneAsset asset;
    for (size_t i = 0; i < frames.size(); ++i) {
        FrameData& F = fd[i];
        F.frame_idx = frames[i];
        const ViewEntry& se = ds.entry(source_view, F.frame_idx);
        const ViewEntry& te = ds.entry(target_view, F.frame_idx);
        F.src_cam = se.cam;
        F.tgt_cam = te.cam;
        F.width = te.width;
        F.height = te.height;
        const std::string stem = source_view + "_" + std::to_string(F.frame_idx);

        timer.start("load");
        F.rgb = read_png_rgb(cfg.dataset_dir / "rgb" / (stem + ".png"));
        F.depth = read_pfm(cfg.dataset_dir / "depth" / (stem + ".pfm"));
        const fs::path fg_path = cfg.dataset_dir / "mask" / (stem + "_fg.png");
        if (fs::exists(fg_path)) {
            F.fg_mask = read_png_mask(fg_path);
            F.has_fg = true;
        }
        const fs::path bg_path = cfg.dataset_dir / "bg_depth" / (stem + ".pfm");
        if (fs::exists(bg_path)) {
            F.bg_depth = read_pfm(bg_path);
            F.bg_rgb = read_png_rgb(cfg.dataset_dir / "bg_rgb" / (stem + ".png"));
            F.has_bg = true;
        }

        timer.start("preprocess");
        if (cfg.spikefix_enabled) {
            const BitMask all(F.depth.width, F.depth.height, true);
            F.depth = depth_spikefix(F.depth, all, cfg.spikefix_window, cfg.spikefix_mad_k,
                                     cfg.spikefix_small_only);
        }
        if (cfg.edge_mapping_enabled)
            std::tie(F.rgb, F.depth) = edge_mapping(F.rgb, F.depth, cfg.edge_lap_thresh, cfg.edge_radius);
        if (cfg.mask_refine_enabled && F.has_fg)
            F.fg_mask = occlusion_mask_refine(F.fg_mask, F.depth, cfg.mask_refine);

        timer.start("lift");
        const ColoredPointCloud pcd = lift_point_cloud(F.rgb, F.depth, F.src_cam);
        const LatticeMesh raw_mesh = lift_lattice_mesh(F.rgb, F.depth, F.src_cam);
        LatticeMeshOptions anchor_opts;
        anchor_opts.max_rel_depth_jump = cfg.anchor_mesh_rel_jump;
        F.base_mesh = lift_lattice_mesh(F.rgb, F.depth, F.src_cam, anchor_opts);
        LatticeMesh curtain;
        if (F.has_fg && F.has_bg) {
            CurtainOptions copts;
            copts.ring_thickness = cfg.curtain_ring_thickness;
            copts.fg_rgb = &F.rgb;
            curtain = build_fgbg_curtain(F.depth, F.bg_depth, F.fg_mask, F.src_cam, copts);
        }

        GeometryLayer base;
        base.provenance = {source_view, source_view, 0, F.frame_idx};
        base.geometry = F.base_mesh;
        base.camera = F.src_cam;
        asset.layers.push_back(std::move(base));
        if (cfg.use_bg_layers && F.has_bg) {
            GeometryLayer bg;
            bg.provenance = {source_view, source_view + "_bg", 0, F.frame_idx};
            LatticeMeshOptions bg_opts;
            bg_opts.max_rel_depth_jump = cfg.anchor_mesh_rel_jump;
            // Only the part hidden behind the foreground adds information.
            DepthFrame occluded = F.bg_depth;
            for (int y = 0; y < occluded.height; ++y)
                for (int x = 0; x < occluded.width; ++x)
                    if (!F.fg_mask.at(x, y)) occluded.invalidate(x, y);
            bg.geometry = lift_lattice_mesh(F.bg_rgb, occluded, F.src_cam, bg_opts);
            bg.camera = F.src_cam;
            asset.layers.push_back(std::move(bg));
        }

        timer.start("render");
        const RenderOutput mesh_r = render_mesh(raw_mesh, F.tgt_cam, F.width, F.height, true, cfg.raster);
        F.pcd_r = render_points(pcd, F.tgt_cam, F.width, F.height, cfg.raster);
        F.anchor_r = render_mesh(F.base_mesh, F.tgt_cam, F.width, F.height, false, cfg.raster);
        F.cfb_r = curtain.triangles.empty()
                      ? RenderOutput(F.width, F.height)
                      : render_mesh(curtain, F.tgt_cam, F.width, F.height, false, cfg.raster);

        timer.start("masks");
        F.masks = compute_mask_bundle(mesh_r, F.pcd_r, F.cfb_r.support, cfg.mask);
        const std::string tstem = target_view + "_" + std::to_string(F.frame_idx);
        write_png(cfg.work_dir / "masks" / (tstem + "_hole.png"), F.masks.hole);
        write_png(cfg.work_dir / "masks" / (tstem + "_cdisc.png"), F.masks.curtain_disc);
        write_png(cfg.work_dir / "masks" / (tstem + "_cfb.png"), F.masks.curtain_fb);
        write_png(cfg.work_dir / "masks" / (tstem + "_info.png"), F.masks.info_addition);
        write_png(cfg.work_dir / "proj" / (tstem + "_projected.png"), F.pcd_r.color);
        write_pfm(cfg.work_dir / "anchor" / (tstem + "_danchor.pfm"), F.anchor_r.depth);
        write_png(cfg.work_dir / "anchor" / (tstem + "_vgt.png"), F.anchor_r.support);

        FrameSummary fsum;
        fsum.frame_idx = F.frame_idx;
        fsum.hole = F.masks.hole.count();
        fsum.cdisc = F.masks.curtain_disc.count();
        fsum.cfb = F.masks.curtain_fb.count();
        fsum.info = F.masks.info_addition.count();
        summary.frames.push_back(fsum);
    }

    // --- NVS exchange -------------------------------------------------------
    timer.start("exchange");
    for (size_t i = 0; i < frames.size(); ++i) {
        FrameData& F = fd[i];
        const std::string tstem = target_view + "_" + std::to_string(F.frame_idx);
        const fs::path rec_path = cfg.work_dir / "exchange" / (tstem + ".json");
        const fs::path completed_path = cfg.work_dir / "exchange" / (tstem + "_completed.png");
        const fs::path dff_path = cfg.work_dir / "exchange" / (tstem + "_completed.pfm");

        ExchangeRecord rec;
        rec.target_view = target_view;
        rec.frame_idx = F.frame_idx;
        rec.projected_image = (cfg.work_dir / "proj" / (tstem + "_projected.png")).string();
        rec.info_mask = (cfg.work_dir / "masks" / (tstem + "_info.png")).string();
        rec.completed_image = completed_path.string();

        const bool already_done = fs::exists(rec_path) && fs::exists(completed_path) &&
                                  fs::exists(dff_path) &&
                                  ExchangeRecord::from_json(json::parse(read_file(rec_path))).status ==
                                      "completed";
        if (!already_done) {
            atomic_write(rec_path, rec.to_json().dump(2) + "\n");
            if (cfg.completer == "oracle") {
                const std::string gstem = target_view + "_" + std::to_string(F.frame_idx);
                const RgbFrame gt = read_png_rgb(cfg.dataset_dir / "gt" / (gstem + ".png"));
                const DepthFrame gt_depth = read_pfm(cfg.dataset_dir / "gt_depth" / (gstem + ".pfm"));
                write_png(completed_path, oracle_complete(F.pcd_r.color, F.masks.info_addition, gt));
                write_pfm(dff_path,
                          corrupt_depth(gt_depth, cfg.oracle_scale, cfg.oracle_shift, cfg.oracle_noise,
                                        cfg.oracle_seed + static_cast<unsigned>(F.frame_idx)));
                rec.status = "completed";
                atomic_write(rec_path, rec.to_json().dump(2) + "\n");
            }
        }
    }
    for (size_t i = 0; i < frames.size(); ++i) {
        FrameData& F = fd[i];
        const std::string tstem = target_view + "_" + std::to_string(F.frame_idx);
        const fs::path rec_path = cfg.work_dir / "exchange" / (tstem + ".json");
        const fs::path completed_path = cfg.work_dir / "exchange" / (tstem + "_completed.png");
        const fs::path dff_path = cfg.work_dir / "exchange" / (tstem + "_completed.pfm");
        const auto deadline =
            std::chrono::steady_clock::now() + std::chrono::duration<double>(cfg.exchange_timeout_sec);
        while (!(fs::exists(completed_path) && fs::exists(dff_path))) {
            if (std::chrono::steady_clock::now() >= deadline) {
                ExchangeRecord rec = ExchangeRecord::from_json(json::parse(read_file(rec_path)));
                rec.status = "failed";
                atomic_write(rec_path, rec.to_json().dump(2) + "\n");
                throw ExchangeTimeoutError("exchange: no completed image for frame " +
                                           std::to_string(F.frame_idx));
            }
            std::this_thread::sleep_for(std::chrono::duration<double>(cfg.exchange_poll_sec));
        }
        F.completed = read_png_rgb(completed_path);
        F.d_ff = read_pfm(dff_path);
        ExchangeRecord rec = ExchangeRecord::from_json(json::parse(read_file(rec_path)));
        if (rec.status != "completed") {
            rec.status = "completed";
            atomic_write(rec_path, rec.to_json().dump(2) + "\n");
        }
    }

    // --- refinement (whole sequence as one job) ------------------------------
    timer.start("refine");
    std::vector<AnchorInput> anchors(frames.size());
    for (size_t i = 0; i < frames.size(); ++i) {
        anchors[i].d_ff = fd[i].d_ff;
        anchors[i].d_anchor = fd[i].anchor_r.depth;
        BitMask valid = fd[i].anchor_r.support;
        for (int y = 0; y < valid.height; ++y)
            for (int x = 0; x < valid.width; ++x)
                if (valid.at(x, y) && !fd[i].d_ff.valid_at(x, y)) valid.set(x, y, false);
        anchors[i].valid = valid;
    }
    const auto refine_t0 = std::chrono::steady_clock::now();
    std::vector<DepthFrame> refined = refine_depth_sequence(anchors, cfg.refine, &summary.refine_diag);
    summary.refine_seconds_per_frame =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - refine_t0).count() /
        static_cast<double>(frames.size());
    for (size_t i = 0; i < frames.size(); ++i) {
        refined[i] = curtain_lower_bound(refined[i], fd[i].cfb_r.depth, fd[i].cfb_r.support, cfg.curtain);
        write_pfm(cfg.work_dir / "refined" /
                      (target_view + "_" + std::to_string(fd[i].frame_idx) + "_refined.pfm"),
                  refined[i]);
    }

    // --- stitch --------------------------------------------------------------
    timer.start("stitch");
    DisagreementConfig dcfg = cfg.stitch;
    dcfg.raster = cfg.raster;
    for (size_t i = 0; i < frames.size(); ++i) {
        FrameData& F = fd[i];
        LayerProvenance prov{source_view, target_view, 1, F.frame_idx};
        StitchCandidate cand = build_stitch_candidates(F.completed, refined[i], F.masks.info_addition,
                                                       F.tgt_cam, F.frame_idx, prov);
        summary.frames[i].candidates = cand.points.points.size();
        const StitchCandidate kept =
            render_disagreement_filter(cand, asset, {F.src_cam}, F.width, F.height, dcfg);
        summary.frames[i].kept = kept.points.points.size();
        if (cfg.mesh_candidates) {
            // Lattice-mesh the surviving candidate region of the target raster.
            DepthFrame masked = refined[i];
            for (int y = 0; y < masked.height; ++y)
                for (int x = 0; x < masked.width; ++x)
                    if (!kept.origin_mask.at(x, y)) masked.invalidate(x, y);
            LatticeMeshOptions mopts;
            mopts.max_rel_depth_jump = cfg.anchor_mesh_rel_jump;
            if (asset.has_provenance(prov))
                throw ProvenanceConflictError("run_expand: duplicate layer " + prov.describe());
            GeometryLayer layer;
            layer.provenance = prov;
            layer.geometry = lift_lattice_mesh(F.completed, masked, F.tgt_cam, mopts);
            layer.camera = F.tgt_cam;
            asset.layers.push_back(std::move(layer));
        } else {
            asset = merge_asset(asset, kept);
        }
    }

    timer.start("write");
    write_asset(cfg.out_dir, asset);
    timer.stop();
    summary.width = fd.empty() ? cfg.width : fd[0].width;
    summary.height = fd.empty() ? cfg.height : fd[0].height;
    atomic_write(cfg.out_dir / "run.json", summary.to_json().dump(2) + "\n");
    if (summary_out) *summary_out = summary;
    return asset;
}

// ---------------------------------------------------------------------------
// Novel-view rendering along an interpolated trajectory. Frame k is rendered
// at interpolate_pose(a = k/(n-1)); the endpoints reproduce direct renders at
// cam0 / cam1 bit-exactly. Asset frame indices are clamped to what exists.
// ---------------------------------------------------------------------------

inline void render_novel_views(const SceneAsset& asset, const Camera& cam0, const Camera& cam1,
                               int n_frames, int width, int height, const fs::path& out_dir,
                               const RasterOptions& opts = {}) {
    if (n_frames < 2) throw std::invalid_argument("render_novel_views: n_frames must be >= 2");
    std::vector<int> frame_ids;
    for (const auto& l : asset.layers) frame_ids.push_back(l.provenance.frame_idx);
    std::sort(frame_ids.begin(), frame_ids.end());
    frame_ids.erase(std::unique(frame_ids.begin(), frame_ids.end()), frame_ids.end());
    if (frame_ids.empty()) throw std::invalid_argument("render_novel_views: empty asset");

    fs::create_directories(out_dir);
    for (int k = 0; k < n_frames; ++k) {
        const double a = static_cast<double>(k) / (n_frames - 1);
        const Camera cam = interpolate_pose(cam0, cam1, a);
        const int t = frame_ids[std::min<size_t>(k, frame_ids.size() - 1)];
        const RenderOutput r = render_asset(asset, t, cam, width, height, opts);
        write_png(out_dir / ("frame_" + std::to_string(k) + ".png"), r.color);
        write_pfm(out_dir / ("frame_" + std::to_string(k) + ".pfm"), r.depth);
    }
}

}  // namespace stitch4d
