#pragma once

#include <Eigen/Dense>

#include "stitch4d/camera.hpp"

namespace stitch4d {

/// Similarity transform x -> s * R * x + t with s > 0 and R in SO(3).
struct Sim3Transform {
    double s = 1.0;
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();

    Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return s * (R * x) + t; }
};

/// Closed-form least-squares similarity aligning src onto dst (Umeyama),
/// with the determinant-sign correction ensuring det(R) = +1.
inline Sim3Transform umeyama_sim3(const std::vector<Eigen::Vector3d>& src,
                                  const std::vector<Eigen::Vector3d>& dst) {
    if (src.size() != dst.size()) throw std::invalid_argument("umeyama_sim3: size mismatch");
    const size_t n = src.size();
    if (n < 3) throw DegenerateInputError("umeyama_sim3: needs at least 3 correspondences");

    Eigen::Vector3d mu_s = Eigen::Vector3d::Zero(), mu_d = Eigen::Vector3d::Zero();
    for (size_t i = 0; i < n; ++i) {
        mu_s += src[i];
        mu_d += dst[i];
    }
    mu_s /= double(n);
    mu_d /= double(n);

    double var_s = 0.0;
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d ds = src[i] - mu_s;
        var_s += ds.squaredNorm();
        cov += (dst[i] - mu_d) * ds.transpose();
    }
    var_s /= double(n);
    cov /= double(n);
    if (var_s < 1e-18) throw DegenerateInputError("umeyama_sim3: source points are coincident");

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Vector3d d = Eigen::Vector3d::Ones();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) d(2) = -1.0;

    Sim3Transform out;
    out.R = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
    out.s = svd.singularValues().dot(d) / var_s;
    out.t = mu_d - out.s * (out.R * mu_s);
    return out;
}

/// Camera-motion fidelity metrics after Sim3 alignment of camera centers.
struct TrajectoryMetrics {
    double ate_mean = 0.0;
    double ate_rmse = 0.0;
    double rot_mean_deg = 0.0;
    double rpe_trans_mean = 0.0;
    double align_scale = 1.0;  // the s mapping pred into ref
};

inline TrajectoryMetrics compute_metrics(const std::vector<Camera>& pred, const std::vector<Camera>& ref) {
    if (pred.size() != ref.size()) throw std::invalid_argument("compute_metrics: trajectory length mismatch");
    const size_t n = pred.size();
    if (n < 3) throw DegenerateInputError("compute_metrics: needs at least 3 poses");

    std::vector<Eigen::Vector3d> cp(n), cr(n);
    for (size_t i = 0; i < n; ++i) {
        cp[i] = pred[i].center();
        cr[i] = ref[i].center();
    }
    const Sim3Transform align = umeyama_sim3(cp, cr);

    TrajectoryMetrics m;
    m.align_scale = align.s;
    double sq = 0.0;
    std::vector<Eigen::Vector3d> ca(n);
    for (size_t i = 0; i < n; ++i) {
        ca[i] = align.apply(cp[i]);
        const double e = (ca[i] - cr[i]).norm();
        m.ate_mean += e;
        sq += e * e;
    }
    m.ate_mean /= double(n);
    m.ate_rmse = std::sqrt(sq / double(n));

    for (size_t i = 0; i < n; ++i) {
        // World frames related by x_ref = sR x_pred + t, so the aligned
        // world-to-camera rotation is R_pred * R_align^T.
        const Eigen::Matrix3d err = pred[i].R * align.R.transpose() * ref[i].R.transpose();
        const double c = std::clamp((err.trace() - 1.0) / 2.0, -1.0, 1.0);
        m.rot_mean_deg += std::acos(c) * 180.0 / M_PI;
    }
    m.rot_mean_deg /= double(n);

    for (size_t i = 0; i + 1 < n; ++i)
        m.rpe_trans_mean += ((ca[i + 1] - ca[i]) - (cr[i + 1] - cr[i])).norm();
    m.rpe_trans_mean /= double(n - 1);
    return m;
}

}  // namespace stitch4d
