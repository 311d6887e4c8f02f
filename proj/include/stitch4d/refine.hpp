#pragma once

#include <numeric>

#include "stitch4d/mask_ops.hpp"
#include "stitch4d/types.hpp"

namespace stitch4d {

// ---------------------------------------------------------------------------
// Pyramidal source-anchored depth refinement. A spatially varying scale-shift
// field (s, b) is estimated on a coarse-to-fine patch grid: closed-form
// weighted regression on anchor-supported patches, geometry-gated relaxation
// into unanchored patches, spatio-temporal stabilization of weakly supported
// patches, and structure-aware expansion back to pixel resolution.
// ---------------------------------------------------------------------------

struct RefineConfig {
    std::vector<int> strides{128, 64, 32, 16, 8};
    double min_unit_ratio = 0.3;  // valid-ratio gate for candidate anchors
    double epsilon = 1e-8;
    double mad_k = 3.0;
    double tau_n = 0.5;    // normal-similarity hard gate
    double tau_inv = 0.5;  // invalid-ratio eligibility for regularization
    double beta = 50.0;    // soft-assignment sharpness of the expansion
    double d_max = 1e4;

    // Per-level schedules; empty vectors derive defaults at runtime
    // (eta3 1 = copy semantics, eta4 0.5, steps = 2x grid diagonal,
    // warmup = steps/2, flag/freeze 2, tau_L linearly tightened from
    // tau_l_start_frac*max|lap| down to tau_l_end_frac*max|lap|). A single
    // entry applies to every level. eta3 < 1 leaves a share of the bilinear
    // coarse-level initialization inside freshly promoted anchors, which
    // blends scale/shift across region boundaries.
    std::vector<double> eta3, eta4;
    std::vector<int> steps3, steps4;
    std::vector<int> n_flag, n_freeze;
    std::vector<int> warmup_steps;
    std::vector<double> tau_l;
    double tau_l_start_frac = 0.5;
    double tau_l_end_frac = 0.1;

    // Diagnostic objective weights; never drive updates.
    double lambda1 = 1.0, lambda2 = 1.0, lambda3 = 1.0;

    void validate() const {
        if (strides.empty()) throw std::invalid_argument("refine: strides must be non-empty");
        for (size_t i = 0; i < strides.size(); ++i) {
            if (strides[i] < 2 || strides[i] % 2 != 0)
                throw std::invalid_argument("refine: strides must be even and >= 2");
            if (i > 0 && (strides[i] >= strides[i - 1] || strides[i - 1] % strides[i] != 0))
                throw std::invalid_argument("refine: strides must strictly decrease and divide the previous");
        }
        for (double e : eta3)
            if (!(e > 0.0 && e <= 1.0)) throw std::invalid_argument("refine: eta3 out of (0,1]");
        for (double e : eta4)
            if (!(e > 0.0 && e <= 1.0)) throw std::invalid_argument("refine: eta4 out of (0,1]");
        if (!(min_unit_ratio > 0.0 && min_unit_ratio <= 1.0))
            throw std::invalid_argument("refine: min_unit_ratio out of (0,1]");
        if (!(d_max > 0.0)) throw std::invalid_argument("refine: d_max must be positive");
    }
};

/// The refinement inputs for one frame: the generated (feed-forward) depth,
/// anchor depth rendered from trusted geometry, and the anchor validity mask.
struct AnchorInput {
    DepthFrame d_ff;
    DepthFrame d_anchor;
    BitMask valid;

    void validate() const {
        if (d_ff.width != d_anchor.width || d_ff.height != d_anchor.height ||
            d_ff.width != valid.width || d_ff.height != valid.height)
            throw std::invalid_argument("AnchorInput: dimension mismatch");
        for (int y = 0; y < valid.height; ++y)
            for (int x = 0; x < valid.width; ++x)
                if (valid.at(x, y)) {
                    const float a = d_ff.at(x, y), b = d_anchor.at(x, y);
                    if (!d_ff.valid_at(x, y) || !d_anchor.valid_at(x, y) || !(a > 0) || !(b > 0) ||
                        !std::isfinite(a) || !std::isfinite(b))
                        throw std::invalid_argument("AnchorInput: valid pixel with bad depth");
                }
    }
};

/// Per-level scale/shift grids with anchor bookkeeping. Cells are indexed
/// (frame, gy, gx); scale/shift hold NaN until first written.
struct RefineState {
    int level = -1;  // pyramid index, -1 before the first level
    int stride = 0;
    int frames = 0, gw = 0, gh = 0;
    std::vector<double> scale, shift;
    std::vector<std::uint8_t> anchor;      // A: anchored cells (fit + propagation)
    std::vector<std::uint8_t> unresolved;  // F: GT-supported cells not yet anchored
    std::vector<std::uint8_t> early_flag;  // Phi: cells updated in the first n_flag sweeps
    std::vector<std::uint8_t> gt_anchor;   // fit/fill-derived anchors, protected in regularization

    size_t cell(int f, int gx, int gy) const {
        return (static_cast<size_t>(f) * gh + gy) * gw + gx;
    }
    size_t cells() const { return static_cast<size_t>(frames) * gh * gw; }
};

struct LevelDiagnostics {
    int level = 0, stride = 0;
    long candidate_cells = 0, mad_rejected = 0, fit_anchored = 0, fill_anchored = 0, prop_anchored = 0;
    int steps3_used = 0, steps4_used = 0;
    double objective = 0.0;
};

struct RefineDiagnostics {
    std::vector<LevelDiagnostics> levels;
    double seconds = 0.0;
    bool with_objective = false;
};

namespace detail {

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
        m = 0.5 * (m + v[mid - 1]);
    }
    return m;
}

// Reject if |v - median| > k * 1.4826 * MAD.
inline std::vector<std::uint8_t> mad_inliers(const std::vector<double>& v, double k) {
    std::vector<std::uint8_t> in(v.size(), 1);
    if (v.size() < 2) return in;
    const double med = median_of(v);
    std::vector<double> dev(v.size());
    for (size_t i = 0; i < v.size(); ++i) dev[i] = std::abs(v[i] - med);
    const double mad = median_of(dev);
    const double thr = k * 1.4826 * mad;
    for (size_t i = 0; i < v.size(); ++i) in[i] = std::abs(v[i] - med) <= thr ? 1 : 0;
    return in;
}

inline double segment_max(const Image2D<double>& field, int x0, int y0, int x1, int y1,
                          bool skip_start = false) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    double m = 0.0;
    int x = x0, y = y0;
    bool first = true;
    while (true) {
        if (!first || !skip_start) m = std::max(m, std::abs(field.at(x, y)));
        first = false;
        if (x == x1 && y == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y += sy;
        }
    }
    return m;
}

// Barrier from a pixel to an anchor center: max |laplacian| along the segment
// excluding the pixel itself, so a pixel sitting on a discontinuity is still
// assigned to its own side. A pixel exactly on the center sees the center's
// own response.
inline double segment_barrier(const Image2D<double>& lap, int x, int y, int cx, int cy) {
    if (x == cx && y == cy) return std::abs(lap.at(x, y));
    return segment_max(lap, x, y, cx, cy, /*skip_start=*/true);
}

}  // namespace detail

/// Precomputed padded inputs plus per-level patch statistics. The image is
/// padded on the right/bottom to a multiple of the coarsest stride plus one
/// guard pixel so every grid center owns a full patch.
class RefineContext {
  public:
    RefineContext(const std::vector<AnchorInput>& inputs, const RefineConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        if (inputs.empty()) throw std::invalid_argument("refine: no frames");
        ow_ = inputs[0].d_ff.width;
        oh_ = inputs[0].d_ff.height;
        frames_ = static_cast<int>(inputs.size());
        for (const auto& in : inputs) {
            in.validate();
            if (in.d_ff.width != ow_ || in.d_ff.height != oh_)
                throw std::invalid_argument("refine: inconsistent frame dimensions");
        }
        const int s1 = cfg_.strides.front();
        pw_ = ((ow_ + s1 - 1) / s1) * s1 + 1;
        ph_ = ((oh_ + s1 - 1) / s1) * s1 + 1;

        size_t total_valid = 0;
        dff_.resize(frames_);
        dgt_.resize(frames_);
        ffv_.resize(frames_);
        mgt_.resize(frames_);
        lap_.resize(frames_);
        for (int f = 0; f < frames_; ++f) {
            const auto& in = inputs[f];
            dff_[f] = Image2D<double>(pw_, ph_, 0.0);
            dgt_[f] = Image2D<double>(pw_, ph_, 0.0);
            ffv_[f] = Image2D<std::uint8_t>(pw_, ph_, 0);
            mgt_[f] = Image2D<std::uint8_t>(pw_, ph_, 0);
            for (int y = 0; y < ph_; ++y)
                for (int x = 0; x < pw_; ++x) {
                    const int sxp = std::min(x, ow_ - 1), syp = std::min(y, oh_ - 1);
                    dff_[f].at(x, y) = in.d_ff.at(sxp, syp);
                    ffv_[f].at(x, y) = in.d_ff.valid_at(sxp, syp) ? 1 : 0;
                    if (x < ow_ && y < oh_) {
                        dgt_[f].at(x, y) = in.d_anchor.at(x, y);
                        const bool m = in.valid.at(x, y) && in.d_ff.valid_at(x, y) &&
                                       in.d_anchor.valid_at(x, y);
                        mgt_[f].at(x, y) = m ? 1 : 0;
                        total_valid += m;
                    }
                }
            build_frame_fields(f);
        }
        if (total_valid == 0) throw NoAnchorError("refine: empty anchor validity mask");
        levels_.resize(cfg_.strides.size());
    }

    const RefineConfig& config() const { return cfg_; }
    int frames() const { return frames_; }
    int padded_width() const { return pw_; }
    int padded_height() const { return ph_; }
    int orig_width() const { return ow_; }
    int orig_height() const { return oh_; }
    int level_count() const { return static_cast<int>(cfg_.strides.size()); }
    double max_abs_laplacian() const { return max_abs_lap_; }
    const Image2D<double>& dff(int f) const { return dff_[f]; }
    const Image2D<double>& dgt(int f) const { return dgt_[f]; }
    const Image2D<std::uint8_t>& ff_valid(int f) const { return ffv_[f]; }
    const Image2D<std::uint8_t>& gt_valid(int f) const { return mgt_[f]; }
    const Image2D<double>& laplacian(int f) const { return lap_[f]; }

    // --- per-level schedule -------------------------------------------------

    double eta3(int k) const { return sched(cfg_.eta3, k, 1.0); }
    double eta4(int k) const { return sched(cfg_.eta4, k, 0.5); }
    int n_flag(int k) const { return sched(cfg_.n_flag, k, 2); }
    int n_freeze(int k) const { return sched(cfg_.n_freeze, k, 2); }
    int steps3(int k) const { return cfg_.steps3.empty() ? default_steps(k) : sched(cfg_.steps3, k, 0); }
    int steps4(int k) const { return cfg_.steps4.empty() ? default_steps(k) : sched(cfg_.steps4, k, 0); }
    int warmup(int k) const {
        return cfg_.warmup_steps.empty() ? steps3(k) / 2 : sched(cfg_.warmup_steps, k, 0);
    }
    double tau_l(int k) const {
        if (!cfg_.tau_l.empty()) return sched(cfg_.tau_l, k, 0.0);
        const int K = level_count();
        const double t = K > 1 ? static_cast<double>(k) / (K - 1) : 0.0;
        const double frac = cfg_.tau_l_start_frac + (cfg_.tau_l_end_frac - cfg_.tau_l_start_frac) * t;
        return std::max(frac * max_abs_lap_, 1e-12);
    }

    // --- per-level patch statistics ------------------------------------------

    struct LevelData {
        int level = 0, stride = 0, gw = 0, gh = 0;
        // per (frame, cell)
        std::vector<double> sw, sx, sy;       // valid-pixel count and sums of generated / anchor depth
        std::vector<double> cxx, cxy;         // centered second moments
        std::vector<double> area;             // clipped patch pixel count
        std::vector<double> nx, ny, nz;       // unit patch normal from the generated depth
        std::vector<std::uint8_t> center_ff_valid;
        std::vector<double> fit_s, fit_b;
        std::vector<std::uint8_t> candidate;
        // spatial edge data, right of / below each cell (last col/row unused)
        std::vector<double> seg_right, seg_down;  // segment-max |laplacian|
        std::vector<double> nrm_right, nrm_down;  // normal similarity in [0,1]
        std::vector<double> nrm_time;             // similarity cell(f)->(f+1)

        size_t cell(int f, int gx, int gy) const {
            return (static_cast<size_t>(f) * gh + gy) * gw + gx;
        }
    };

    const LevelData& level(int k) const {
        if (k < 0 || k >= level_count()) throw std::invalid_argument("refine: level out of range");
        if (levels_[k].gw == 0) build_level(k);
        return levels_[k];
    }

    RefineState make_state(int k) const {
        const LevelData& ld = level(k);
        RefineState st;
        st.level = k;
        st.stride = ld.stride;
        st.frames = frames_;
        st.gw = ld.gw;
        st.gh = ld.gh;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        st.scale.assign(st.cells(), nan);
        st.shift.assign(st.cells(), nan);
        st.anchor.assign(st.cells(), 0);
        st.unresolved.assign(st.cells(), 0);
        st.early_flag.assign(st.cells(), 0);
        st.gt_anchor.assign(st.cells(), 0);
        return st;
    }

  private:
    template <typename T>
    static T sched(const std::vector<T>& v, int k, T fallback) {
        if (v.empty()) return fallback;
        return v[std::min<size_t>(k, v.size() - 1)];
    }

    int default_steps(int k) const {
        const LevelData& ld = level(k);
        return 2 * static_cast<int>(std::ceil(std::hypot(ld.gw, ld.gh)));
    }

    void build_frame_fields(int f) {
        lap_[f] = Image2D<double>(pw_, ph_, 0.0);
        const auto& d = dff_[f];
        const auto& v = ffv_[f];
        for (int y = 0; y < ph_; ++y)
            for (int x = 0; x < pw_; ++x) {
                if (!v.at(x, y)) continue;
                double lap = 0.0;
                static constexpr int off[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
                for (auto& o : off) {
                    const int nx2 = x + o[0], ny2 = y + o[1];
                    if (nx2 >= 0 && nx2 < pw_ && ny2 >= 0 && ny2 < ph_ && v.at(nx2, ny2))
                        lap += d.at(nx2, ny2) - d.at(x, y);
                }
                lap_[f].at(x, y) = lap;
                max_abs_lap_ = std::max(max_abs_lap_, std::abs(lap));
            }

        // Depth-gradient normals n ~ (-dD/du, -dD/dv, 1), accumulated through
        // summed-area tables for O(1) patch averages at every level.
        auto grad = [&](int x, int y, int ax) {
            const int dx = ax == 0 ? 1 : 0, dy = ax == 0 ? 0 : 1;
            const bool fwd = x + dx < pw_ && y + dy < ph_ && v.at(x + dx, y + dy);
            const bool bwd = x - dx >= 0 && y - dy >= 0 && v.at(x - dx, y - dy);
            if (fwd && bwd) return 0.5 * (d.at(x + dx, y + dy) - d.at(x - dx, y - dy));
            if (fwd) return d.at(x + dx, y + dy) - d.at(x, y);
            if (bwd) return d.at(x, y) - d.at(x - dx, y - dy);
            return 0.0;
        };
        auto normal = [&](int x, int y, int comp) -> double {
            if (!v.at(x, y)) return 0.0;
            const double gx = grad(x, y, 0), gy = grad(x, y, 1);
            const double inv = 1.0 / std::sqrt(gx * gx + gy * gy + 1.0);
            return comp == 0 ? -gx * inv : comp == 1 ? -gy * inv : inv;
        };
        sat_v_.push_back(detail::Sat(pw_, ph_, [&](int x, int y) { return mgt_[f].at(x, y) ? 1.0 : 0.0; }));
        sat_vx_.push_back(
            detail::Sat(pw_, ph_, [&](int x, int y) { return mgt_[f].at(x, y) ? d.at(x, y) : 0.0; }));
        sat_vy_.push_back(detail::Sat(
            pw_, ph_, [&](int x, int y) { return mgt_[f].at(x, y) ? dgt_[f].at(x, y) : 0.0; }));
        sat_nx_.push_back(detail::Sat(pw_, ph_, [&](int x, int y) { return normal(x, y, 0); }));
        sat_ny_.push_back(detail::Sat(pw_, ph_, [&](int x, int y) { return normal(x, y, 1); }));
        sat_nz_.push_back(detail::Sat(pw_, ph_, [&](int x, int y) { return normal(x, y, 2); }));
    }

    void build_level(int k) const {
        LevelData ld;
        ld.level = k;
        ld.stride = cfg_.strides[k];
        const int s = ld.stride, r = s / 2;
        ld.gw = (pw_ - 1) / s + 1;
        ld.gh = (ph_ - 1) / s + 1;
        const size_t n = static_cast<size_t>(frames_) * ld.gw * ld.gh;
        ld.sw.resize(n);
        ld.sx.resize(n);
        ld.sy.resize(n);
        ld.cxx.resize(n);
        ld.cxy.resize(n);
        ld.area.resize(n);
        ld.nx.resize(n);
        ld.ny.resize(n);
        ld.nz.resize(n);
        ld.center_ff_valid.resize(n);
        ld.fit_s.resize(n);
        ld.fit_b.resize(n);
        ld.candidate.resize(n);
        ld.seg_right.assign(n, 0.0);
        ld.seg_down.assign(n, 0.0);
        ld.nrm_right.assign(n, 0.0);
        ld.nrm_down.assign(n, 0.0);
        if (frames_ > 1) ld.nrm_time.assign(static_cast<size_t>(frames_ - 1) * ld.gw * ld.gh, 0.0);

        const double eps = cfg_.epsilon;
        for (int f = 0; f < frames_; ++f) {
            for (int gy = 0; gy < ld.gh; ++gy)
                for (int gx = 0; gx < ld.gw; ++gx) {
                    const size_t i = ld.cell(f, gx, gy);
                    const int cx = gx * s, cy = gy * s;
                    const int x0 = std::max(0, cx - r), x1 = std::min(pw_ - 1, cx + r);
                    const int y0 = std::max(0, cy - r), y1 = std::min(ph_ - 1, cy + r);
                    ld.area[i] = static_cast<double>(x1 - x0 + 1) * (y1 - y0 + 1);
                    const double sw = sat_v_[f].sum(x0, y0, x1, y1);
                    const double sx = sat_vx_[f].sum(x0, y0, x1, y1);
                    const double sy = sat_vy_[f].sum(x0, y0, x1, y1);
                    ld.sw[i] = sw;
                    ld.sx[i] = sx;
                    ld.sy[i] = sy;

                    // Centered second moments computed directly; the SAT route
                    // cancels catastrophically for near-constant patches.
                    double cxx = 0.0, cxy = 0.0;
                    if (sw > 0.0) {
                        const double mx = sx / sw, my = sy / sw;
                        for (int y = y0; y <= y1; ++y)
                            for (int x = x0; x <= x1; ++x) {
                                if (!mgt_[f].at(x, y)) continue;
                                const double ddx = dff_[f].at(x, y) - mx;
                                cxx += ddx * ddx;
                                cxy += ddx * (dgt_[f].at(x, y) - my);
                            }
                    }
                    ld.cxx[i] = cxx;
                    ld.cxy[i] = cxy;

                    double nx = sat_nx_[f].sum(x0, y0, x1, y1);
                    double ny = sat_ny_[f].sum(x0, y0, x1, y1);
                    double nz = sat_nz_[f].sum(x0, y0, x1, y1);
                    const double nn = std::sqrt(nx * nx + ny * ny + nz * nz);
                    if (nn > 1e-12) {
                        nx /= nn;
                        ny /= nn;
                        nz /= nn;
                    } else {
                        nx = ny = 0.0;
                        nz = 1.0;
                    }
                    ld.nx[i] = nx;
                    ld.ny[i] = ny;
                    ld.nz[i] = nz;
                    ld.center_ff_valid[i] = ffv_[f].at(cx, cy);

                    // Closed-form weighted regression, expressed on centered
                    // moments: equivalent to
                    //   s = (Sw*Sxy - Sx*Sy) / (Sw*Sxx - Sx^2 + eps)
                    //   b = (Sy - s*Sx) / (Sw + eps)
                    const double s_fit = sw > 0.0 ? cxy / (cxx + eps / sw) : 0.0;
                    const double b_fit = (sy - s_fit * sx) / (sw + eps);
                    ld.fit_s[i] = s_fit;
                    ld.fit_b[i] = b_fit;
                    const double ratio = ld.area[i] > 0 ? sw / ld.area[i] : 0.0;
                    ld.candidate[i] =
                        (ratio >= cfg_.min_unit_ratio && std::isfinite(s_fit) && std::isfinite(b_fit)) ? 1 : 0;
                }

            for (int gy = 0; gy < ld.gh; ++gy)
                for (int gx = 0; gx < ld.gw; ++gx) {
                    const size_t i = ld.cell(f, gx, gy);
                    auto sim = [&](size_t j) {
                        return (ld.nx[i] * ld.nx[j] + ld.ny[i] * ld.ny[j] + ld.nz[i] * ld.nz[j] + 1.0) / 2.0;
                    };
                    if (gx + 1 < ld.gw) {
                        const size_t j = ld.cell(f, gx + 1, gy);
                        ld.seg_right[i] = detail::segment_max(lap_[f], gx * s, gy * s, (gx + 1) * s, gy * s);
                        ld.nrm_right[i] = sim(j);
                    }
                    if (gy + 1 < ld.gh) {
                        const size_t j = ld.cell(f, gx, gy + 1);
                        ld.seg_down[i] = detail::segment_max(lap_[f], gx * s, gy * s, gx * s, (gy + 1) * s);
                        ld.nrm_down[i] = sim(j);
                    }
                    if (f + 1 < frames_) {
                        const size_t j = ld.cell(f + 1, gx, gy);
                        ld.nrm_time[i] =
                            (ld.nx[i] * ld.nx[j] + ld.ny[i] * ld.ny[j] + ld.nz[i] * ld.nz[j] + 1.0) / 2.0;
                    }
                }
        }
        levels_[k] = std::move(ld);
    }

    RefineConfig cfg_;
    int ow_ = 0, oh_ = 0, pw_ = 0, ph_ = 0, frames_ = 0;
    double max_abs_lap_ = 0.0;
    std::vector<Image2D<double>> dff_, dgt_, lap_;
    std::vector<Image2D<std::uint8_t>> ffv_, mgt_;
    std::vector<detail::Sat> sat_v_, sat_vx_, sat_vy_, sat_nx_, sat_ny_, sat_nz_;
    mutable std::vector<LevelData> levels_;
};

// ---------------------------------------------------------------------------
// Stage 1: coarse-to-fine grid initialization. The first level starts
// uninitialized; later levels bilinearly upsample the previous fields on the
// patch-center grid, so values at coinciding centers are retained exactly.
// ---------------------------------------------------------------------------

inline RefineState upsample_fields(const RefineContext& ctx, const RefineState& prev, int level) {
    RefineState st = ctx.make_state(level);
    if (level == 0 || prev.level < 0) return st;
    if (prev.stride % st.stride != 0 || prev.gw > st.gw || prev.gh > st.gh)
        throw std::invalid_argument("upsample_fields: new grid must refine the previous one");

    const double ratio = static_cast<double>(st.stride) / prev.stride;
    for (int f = 0; f < st.frames; ++f)
        for (int gy = 0; gy < st.gh; ++gy)
            for (int gx = 0; gx < st.gw; ++gx) {
                const double px = gx * ratio, py = gy * ratio;
                const int x0 = std::min(static_cast<int>(px), prev.gw - 1);
                const int y0 = std::min(static_cast<int>(py), prev.gh - 1);
                const int x1 = std::min(x0 + 1, prev.gw - 1);
                const int y1 = std::min(y0 + 1, prev.gh - 1);
                const double fx = px - x0, fy = py - y0;
                const double w[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
                const size_t src[4] = {prev.cell(f, x0, y0), prev.cell(f, x1, y0), prev.cell(f, x0, y1),
                                       prev.cell(f, x1, y1)};
                double ws = 0.0, as = 0.0, bs = 0.0;
                for (int k = 0; k < 4; ++k) {
                    if (w[k] <= 0.0 || std::isnan(prev.scale[src[k]])) continue;
                    ws += w[k];
                    as += w[k] * prev.scale[src[k]];
                    bs += w[k] * prev.shift[src[k]];
                }
                if (ws > 0.0) {
                    const size_t i = st.cell(f, gx, gy);
                    st.scale[i] = as / ws;
                    st.shift[i] = bs / ws;
                }
            }
    return st;
}

// ---------------------------------------------------------------------------
// Stage 2: closed-form scale-shift fitting on GT-supported patches. Candidate
// anchors pass the valid-ratio and finiteness tests, then MAD outlier gates
// applied separately to {s} and {b}; GT-supported cells that fall out are
// filled iteratively from anchored 3x3 neighbors.
// ---------------------------------------------------------------------------

inline void gt_anchor_fit(const RefineContext& ctx, RefineState& st, LevelDiagnostics* diag = nullptr) {
    const auto& ld = ctx.level(st.level);
    const double k = ctx.config().mad_k;

    for (int f = 0; f < st.frames; ++f) {
        std::vector<size_t> cand;
        for (int gy = 0; gy < st.gh; ++gy)
            for (int gx = 0; gx < st.gw; ++gx) {
                const size_t i = st.cell(f, gx, gy);
                if (ld.candidate[i]) cand.push_back(i);
            }
        std::vector<double> ss(cand.size()), bs(cand.size());
        for (size_t c = 0; c < cand.size(); ++c) {
            ss[c] = ld.fit_s[cand[c]];
            bs[c] = ld.fit_b[cand[c]];
        }
        const auto in_s = detail::mad_inliers(ss, k);
        const auto in_b = detail::mad_inliers(bs, k);
        for (size_t c = 0; c < cand.size(); ++c) {
            if (diag) ++diag->candidate_cells;
            if (in_s[c] && in_b[c]) {
                st.anchor[cand[c]] = 1;
                st.scale[cand[c]] = ss[c];
                st.shift[cand[c]] = bs[c];
                if (diag) ++diag->fit_anchored;
            } else if (diag) {
                ++diag->mad_rejected;
            }
        }
    }

    // Unresolved GT-supported cells (any valid pixel, not anchored).
    for (size_t i = 0; i < st.cells(); ++i)
        st.unresolved[i] = (ld.sw[i] > 0.0 && !st.anchor[i]) ? 1 : 0;

    // Restore rejected / weakly supported cells from anchored 3x3 neighbors,
    // wavefront style with double-buffered sweeps.
    while (true) {
        struct Fill {
            size_t i;
            double s, b;
        };
        std::vector<Fill> fills;
        for (int f = 0; f < st.frames; ++f)
            for (int gy = 0; gy < st.gh; ++gy)
                for (int gx = 0; gx < st.gw; ++gx) {
                    const size_t i = st.cell(f, gx, gy);
                    if (!st.unresolved[i]) continue;
                    double as = 0.0, ab = 0.0;
                    int n = 0;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            if (!dx && !dy) continue;
                            const int nx = gx + dx, ny = gy + dy;
                            if (nx < 0 || nx >= st.gw || ny < 0 || ny >= st.gh) continue;
                            const size_t j = st.cell(f, nx, ny);
                            if (!st.anchor[j]) continue;
                            as += st.scale[j];
                            ab += st.shift[j];
                            ++n;
                        }
                    if (n > 0) fills.push_back({i, as / n, ab / n});
                }
        if (fills.empty()) break;
        for (const auto& fl : fills) {
            st.anchor[fl.i] = 1;
            st.unresolved[fl.i] = 0;
            st.scale[fl.i] = fl.s;
            st.shift[fl.i] = fl.b;
            if (diag) ++diag->fill_anchored;
        }
    }

    for (size_t i = 0; i < st.cells(); ++i) st.gt_anchor[i] = st.anchor[i];
}

namespace detail {

enum class WeightStage { Prop, Reg };

// Edge weight between two cells of one frame; dir 0 = right, 1 = down.
inline double edge_weight(const RefineContext::LevelData& ld, size_t from, int dir, bool permissive,
                          WeightStage stage, double tau_l, double tau_n) {
    const double nrm = dir == 0 ? ld.nrm_right[from] : ld.nrm_down[from];
    if (permissive) return nrm;
    if (nrm < tau_n) return 0.0;
    if (stage == WeightStage::Reg && ld.level <= 1) return nrm * nrm;  // stronger normal guidance
    const double seg = dir == 0 ? ld.seg_right[from] : ld.seg_down[from];
    if (seg >= tau_l) return 0.0;
    return nrm;
}

inline double temporal_weight(const RefineContext::LevelData& ld, size_t from_earlier, bool permissive,
                              double tau_n) {
    const double nrm = ld.nrm_time[from_earlier];
    if (permissive) return nrm;
    if (nrm < tau_n) return 0.0;
    return ld.level <= 1 ? nrm * nrm : nrm;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage 3: geometry-aware relaxation from anchored to unanchored patches.
// (s, b)_i <- (1-eta) (s, b)_i + eta * weighted neighbor average over anchored
// neighbors. Warm-up sweeps use the soft normal similarity only; strict
// sweeps add the Laplacian segment gate and the normal hard gate. Updated
// cells are promoted to anchors; the first n_flag sweeps are recorded in Phi.
// ---------------------------------------------------------------------------

inline void prop_to_non_anchor(const RefineContext& ctx, RefineState& st, LevelDiagnostics* diag = nullptr) {
    const auto& ld = ctx.level(st.level);
    const double eta = ctx.eta3(st.level);
    const double tau_l = ctx.tau_l(st.level);
    const double tau_n = ctx.config().tau_n;
    const int steps = ctx.steps3(st.level);
    const int warm = ctx.warmup(st.level);
    const int flag_steps = ctx.n_flag(st.level);

    struct Upd {
        size_t i;
        double s, b;
    };
    std::vector<Upd> updates;
    for (int it = 1; it <= steps; ++it) {
        const bool permissive = it <= warm;
        updates.clear();
        for (int f = 0; f < st.frames; ++f)
            for (int gy = 0; gy < st.gh; ++gy)
                for (int gx = 0; gx < st.gw; ++gx) {
                    const size_t i = st.cell(f, gx, gy);
                    if (st.anchor[i]) continue;
                    double wsum = 0.0, as = 0.0, ab = 0.0;
                    auto take = [&](size_t j, double w) {
                        if (w <= 0.0 || !st.anchor[j]) return;
                        wsum += w;
                        as += w * st.scale[j];
                        ab += w * st.shift[j];
                    };
                    using detail::WeightStage;
                    if (gx > 0)
                        take(st.cell(f, gx - 1, gy), detail::edge_weight(ld, ld.cell(f, gx - 1, gy), 0,
                                                                         permissive, WeightStage::Prop,
                                                                         tau_l, tau_n));
                    if (gx + 1 < st.gw)
                        take(st.cell(f, gx + 1, gy),
                             detail::edge_weight(ld, i, 0, permissive, WeightStage::Prop, tau_l, tau_n));
                    if (gy > 0)
                        take(st.cell(f, gx, gy - 1), detail::edge_weight(ld, ld.cell(f, gx, gy - 1), 1,
                                                                         permissive, WeightStage::Prop,
                                                                         tau_l, tau_n));
                    if (gy + 1 < st.gh)
                        take(st.cell(f, gx, gy + 1),
                             detail::edge_weight(ld, i, 1, permissive, WeightStage::Prop, tau_l, tau_n));
                    if (wsum <= 0.0) continue;
                    const double ns = as / wsum, nb = ab / wsum;
                    if (std::isnan(st.scale[i]))
                        updates.push_back({i, ns, nb});
                    else
                        updates.push_back(
                            {i, (1.0 - eta) * st.scale[i] + eta * ns, (1.0 - eta) * st.shift[i] + eta * nb});
                }
        if (updates.empty()) {
            if (diag) diag->steps3_used = it - 1;
            return;
        }
        for (const auto& u : updates) {
            st.scale[u.i] = u.s;
            st.shift[u.i] = u.b;
            st.anchor[u.i] = 1;
            if (it <= flag_steps) st.early_flag[u.i] = 1;
            if (diag) ++diag->prop_anchored;
        }
        if (diag) diag->steps3_used = it;
    }
}

// ---------------------------------------------------------------------------
// Stage 4: spatio-temporal regularization of invalid / weakly supported
// patches on the 6-neighbor (t, y, x) graph. GT-aligned cells are never
// modified; Phi-flagged cells stay frozen for the first n_freeze sweeps.
// Single-frame inputs use the 4-neighbor spatial subgraph. The geometry gates
// are active from the first sweep: a permissive phase here would diffuse
// values across discontinuities that the propagation stage kept separated.
// ---------------------------------------------------------------------------

inline void non_anchor_reg(const RefineContext& ctx, RefineState& st, LevelDiagnostics* diag = nullptr) {
    const auto& ld = ctx.level(st.level);
    const double eta = ctx.eta4(st.level);
    const double tau_l = ctx.tau_l(st.level);
    const double tau_n = ctx.config().tau_n;
    const double tau_inv = ctx.config().tau_inv;
    const int steps = ctx.steps4(st.level);
    const int freeze = ctx.n_freeze(st.level);

    std::vector<std::uint8_t> eligible(st.cells(), 0);
    for (size_t i = 0; i < st.cells(); ++i) {
        if (st.gt_anchor[i]) continue;
        const double inv_ratio = ld.area[i] > 0 ? 1.0 - ld.sw[i] / ld.area[i] : 1.0;
        eligible[i] = (inv_ratio >= tau_inv && ld.center_ff_valid[i]) ? 1 : 0;
    }

    struct Upd {
        size_t i;
        double s, b;
    };
    std::vector<Upd> updates;
    for (int it = 1; it <= steps; ++it) {
        const bool permissive = false;
        updates.clear();
        for (int f = 0; f < st.frames; ++f)
            for (int gy = 0; gy < st.gh; ++gy)
                for (int gx = 0; gx < st.gw; ++gx) {
                    const size_t i = st.cell(f, gx, gy);
                    if (!eligible[i]) continue;
                    if (it <= freeze && st.early_flag[i]) continue;
                    double wsum = 0.0, as = 0.0, ab = 0.0;
                    auto take = [&](size_t j, double w) {
                        // Diffusion stays within non-GT neighborhoods.
                        if (w <= 0.0 || st.gt_anchor[j] || std::isnan(st.scale[j])) return;
                        wsum += w;
                        as += w * st.scale[j];
                        ab += w * st.shift[j];
                    };
                    using detail::WeightStage;
                    if (gx > 0)
                        take(st.cell(f, gx - 1, gy), detail::edge_weight(ld, ld.cell(f, gx - 1, gy), 0,
                                                                         permissive, WeightStage::Reg,
                                                                         tau_l, tau_n));
                    if (gx + 1 < st.gw)
                        take(st.cell(f, gx + 1, gy),
                             detail::edge_weight(ld, i, 0, permissive, WeightStage::Reg, tau_l, tau_n));
                    if (gy > 0)
                        take(st.cell(f, gx, gy - 1), detail::edge_weight(ld, ld.cell(f, gx, gy - 1), 1,
                                                                         permissive, WeightStage::Reg,
                                                                         tau_l, tau_n));
                    if (gy + 1 < st.gh)
                        take(st.cell(f, gx, gy + 1),
                             detail::edge_weight(ld, i, 1, permissive, WeightStage::Reg, tau_l, tau_n));
                    if (f > 0)
                        take(st.cell(f - 1, gx, gy),
                             detail::temporal_weight(ld, ld.cell(f - 1, gx, gy), permissive, tau_n));
                    if (f + 1 < st.frames)
                        take(st.cell(f + 1, gx, gy), detail::temporal_weight(ld, i, permissive, tau_n));
                    if (wsum <= 0.0) continue;
                    const double ns = as / wsum, nb = ab / wsum;
                    if (std::isnan(st.scale[i]))
                        updates.push_back({i, ns, nb});
                    else
                        updates.push_back(
                            {i, (1.0 - eta) * st.scale[i] + eta * ns, (1.0 - eta) * st.shift[i] + eta * nb});
                }
        if (!updates.empty())
            for (const auto& u : updates) {
                st.scale[u.i] = u.s;
                st.shift[u.i] = u.b;
            }
        if (diag) diag->steps4_used = it;
    }
}

/// Fills cells still uninitialized after a level's sweeps by ungated
/// averaging from initialized 6-neighbors; frames with no reachable value at
/// all fall back to the identity correction (1, 0).
inline void fill_uninitialized(RefineState& st) {
    while (true) {
        struct Fill {
            size_t i;
            double s, b;
        };
        std::vector<Fill> fills;
        for (int f = 0; f < st.frames; ++f)
            for (int gy = 0; gy < st.gh; ++gy)
                for (int gx = 0; gx < st.gw; ++gx) {
                    const size_t i = st.cell(f, gx, gy);
                    if (!std::isnan(st.scale[i])) continue;
                    double as = 0.0, ab = 0.0;
                    int n = 0;
                    auto take = [&](size_t j) {
                        if (std::isnan(st.scale[j])) return;
                        as += st.scale[j];
                        ab += st.shift[j];
                        ++n;
                    };
                    if (gx > 0) take(st.cell(f, gx - 1, gy));
                    if (gx + 1 < st.gw) take(st.cell(f, gx + 1, gy));
                    if (gy > 0) take(st.cell(f, gx, gy - 1));
                    if (gy + 1 < st.gh) take(st.cell(f, gx, gy + 1));
                    if (f > 0) take(st.cell(f - 1, gx, gy));
                    if (f + 1 < st.frames) take(st.cell(f + 1, gx, gy));
                    if (n > 0) fills.push_back({i, as / n, ab / n});
                }
        if (fills.empty()) break;
        for (const auto& fl : fills) {
            st.scale[fl.i] = fl.s;
            st.shift[fl.i] = fl.b;
        }
    }
    for (size_t i = 0; i < st.cells(); ++i)
        if (std::isnan(st.scale[i])) {
            st.scale[i] = 1.0;
            st.shift[i] = 0.0;
        }
}

// ---------------------------------------------------------------------------
// Full-resolution expansion: each pixel blends the 4 nearest final-level
// anchors with structure-aware softmax weights alpha_i ~ exp(-beta * l_i),
// where l_i is the max |laplacian| along the pixel-to-anchor-center segment.
// ---------------------------------------------------------------------------

struct DenseFields {
    std::vector<Image2D<double>> scale, shift;  // per frame, padded domain
};

inline DenseFields expand_to_full_res(const RefineContext& ctx, const RefineState& st) {
    const int s = st.stride;
    const double beta = ctx.config().beta;
    DenseFields out;
    out.scale.resize(st.frames);
    out.shift.resize(st.frames);
    const int pw = ctx.padded_width(), ph = ctx.padded_height();
    for (int f = 0; f < st.frames; ++f) {
        out.scale[f] = Image2D<double>(pw, ph, 0.0);
        out.shift[f] = Image2D<double>(pw, ph, 0.0);
        const auto& lap = ctx.laplacian(f);
        for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x) {
                const int gx0 = std::min(x / s, st.gw - 1), gy0 = std::min(y / s, st.gh - 1);
                const int gx1 = std::min(gx0 + 1, st.gw - 1), gy1 = std::min(gy0 + 1, st.gh - 1);
                const int cand[4][2] = {{gx0, gy0}, {gx1, gy0}, {gx0, gy1}, {gx1, gy1}};
                double barrier[4];
                double bmin = std::numeric_limits<double>::infinity();
                for (int k = 0; k < 4; ++k) {
                    barrier[k] = detail::segment_barrier(lap, x, y, cand[k][0] * s, cand[k][1] * s);
                    bmin = std::min(bmin, barrier[k]);
                }
                double wsum = 0.0, sv = 0.0, bv = 0.0;
                for (int k = 0; k < 4; ++k) {
                    const double a = std::exp(-beta * (barrier[k] - bmin));
                    const size_t i = st.cell(f, cand[k][0], cand[k][1]);
                    wsum += a;
                    sv += a * st.scale[i];
                    bv += a * st.shift[i];
                }
                out.scale[f].at(x, y) = sv / wsum;
                out.shift[f].at(x, y) = bv / wsum;
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Diagnostic objective (monitoring only): anchor alignment, geometry-aware
// smoothness over all edges, and the non-anchor stabilization term.
// ---------------------------------------------------------------------------

inline double diagnostic_objective(const RefineContext& ctx, const RefineState& st) {
    const auto& cfg = ctx.config();
    const auto& ld = ctx.level(st.level);
    const double tau_l = ctx.tau_l(st.level);

    double term1 = 0.0;
    if (cfg.lambda1 != 0.0) {
        RefineState filled = st;
        fill_uninitialized(filled);
        const DenseFields dense = expand_to_full_res(ctx, filled);
        for (int f = 0; f < st.frames; ++f) {
            const auto& mgt = ctx.gt_valid(f);
            for (int y = 0; y < ctx.padded_height(); ++y)
                for (int x = 0; x < ctx.padded_width(); ++x) {
                    if (!mgt.at(x, y)) continue;
                    const double d = dense.scale[f].at(x, y) * ctx.dff(f).at(x, y) +
                                     dense.shift[f].at(x, y);
                    term1 += std::abs(d - ctx.dgt(f).at(x, y));
                }
        }
    }

    double term2 = 0.0, term3 = 0.0;
    auto edge_term = [&](size_t i, size_t j, double w) {
        if (w <= 0.0 || std::isnan(st.scale[i]) || std::isnan(st.scale[j])) return;
        const double d = std::abs(st.scale[i] - st.scale[j]) + std::abs(st.shift[i] - st.shift[j]);
        term2 += w * d;
        if (!st.gt_anchor[i] && !st.gt_anchor[j]) term3 += w * d;
    };
    using detail::WeightStage;
    for (int f = 0; f < st.frames; ++f)
        for (int gy = 0; gy < st.gh; ++gy)
            for (int gx = 0; gx < st.gw; ++gx) {
                const size_t i = st.cell(f, gx, gy);
                if (gx + 1 < st.gw)
                    edge_term(i, st.cell(f, gx + 1, gy),
                              detail::edge_weight(ld, i, 0, false, WeightStage::Prop, tau_l, cfg.tau_n));
                if (gy + 1 < st.gh)
                    edge_term(i, st.cell(f, gx, gy + 1),
                              detail::edge_weight(ld, i, 1, false, WeightStage::Prop, tau_l, cfg.tau_n));
                if (f + 1 < st.frames)
                    edge_term(i, st.cell(f + 1, gx, gy), detail::temporal_weight(ld, i, false, cfg.tau_n));
            }
    return cfg.lambda1 * term1 + cfg.lambda2 * term2 + cfg.lambda3 * term3;
}

// ---------------------------------------------------------------------------
// Driver.
// ---------------------------------------------------------------------------

inline std::vector<DepthFrame> refine_depth_sequence(const std::vector<AnchorInput>& inputs,
                                                     const RefineConfig& cfg,
                                                     RefineDiagnostics* diag = nullptr) {
    RefineContext ctx(inputs, cfg);
    RefineState st;
    for (int k = 0; k < ctx.level_count(); ++k) {
        LevelDiagnostics lv;
        lv.level = k;
        lv.stride = cfg.strides[k];
        st = upsample_fields(ctx, st, k);
        gt_anchor_fit(ctx, st, diag ? &lv : nullptr);
        prop_to_non_anchor(ctx, st, diag ? &lv : nullptr);
        non_anchor_reg(ctx, st, diag ? &lv : nullptr);
        fill_uninitialized(st);
        if (diag) {
            if (diag->with_objective) lv.objective = diagnostic_objective(ctx, st);
            diag->levels.push_back(lv);
        }
    }

    const DenseFields dense = expand_to_full_res(ctx, st);
    std::vector<DepthFrame> out(inputs.size());
    for (size_t f = 0; f < inputs.size(); ++f) {
        out[f] = inputs[f].d_ff;
        for (int y = 0; y < out[f].height; ++y)
            for (int x = 0; x < out[f].width; ++x) {
                if (!inputs[f].d_ff.valid_at(x, y)) continue;
                const double d = inputs[f].d_ff.at(x, y);
                const double refd = dense.scale[f].at(x, y) * d + dense.shift[f].at(x, y);
                out[f].set(x, y, static_cast<float>(std::clamp(refd, 1e-6, cfg.d_max)));
            }
    }
    return out;
}

inline DepthFrame refine_depth(const AnchorInput& input, const RefineConfig& cfg,
                               RefineDiagnostics* diag = nullptr) {
    return refine_depth_sequence({input}, cfg, diag)[0];
}

// ---------------------------------------------------------------------------
// Curtain depth lower bound: within the cleaned application mask the output
// never comes nearer than the curtain depth.
// ---------------------------------------------------------------------------

struct CurtainBoundConfig {
    int min_component = 16;
    bool smooth_curtain = false;  // masked Gaussian smoothing of the curtain depth
    double smooth_sigma = 1.0;
};

inline DepthFrame masked_gaussian(const DepthFrame& d, double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kern(2 * r + 1);
    for (int i = -r; i <= r; ++i) kern[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    DepthFrame out = d;
    for (int y = 0; y < d.height; ++y)
        for (int x = 0; x < d.width; ++x) {
            if (!d.valid_at(x, y)) continue;
            double ws = 0.0, vs = 0.0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (!d.inside(nx, ny) || !d.valid_at(nx, ny)) continue;
                    const double w = kern[dx + r] * kern[dy + r];
                    ws += w;
                    vs += w * d.at(nx, ny);
                }
            out.data[static_cast<size_t>(y) * d.width + x] = static_cast<float>(vs / ws);
        }
    return out;
}

inline DepthFrame curtain_lower_bound(const DepthFrame& d_refined, const DepthFrame& d_curtain,
                                      const BitMask& apply_mask, const CurtainBoundConfig& cfg = {}) {
    if (d_refined.width != d_curtain.width || d_refined.height != d_curtain.height ||
        d_refined.width != apply_mask.width || d_refined.height != apply_mask.height)
        throw std::invalid_argument("curtain_lower_bound: dimension mismatch");
    const BitMask cleaned = remove_small_components(apply_mask, cfg.min_component);
    const DepthFrame curtain = cfg.smooth_curtain ? masked_gaussian(d_curtain, cfg.smooth_sigma) : d_curtain;
    DepthFrame out = d_refined;
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            if (!cleaned.at(x, y) || !curtain.valid_at(x, y)) continue;
            if (!out.valid_at(x, y))
                out.set(x, y, curtain.at(x, y));
            else
                out.set(x, y, std::max(out.at(x, y), curtain.at(x, y)));
        }
    return out;
}

}  // namespace stitch4d
