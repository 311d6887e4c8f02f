#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "stitch4d/core.hpp"

namespace stitch4d {

/// Continuous image-plane coordinate. Integer (u,v) refers to the pixel
/// center; the homogeneous form is [u, v, 1]^T.
struct PixelCoord {
    double u = 0.0;
    double v = 0.0;
};

/// Zero-skew pinhole camera with world-to-camera extrinsics (R, tau).
struct Camera {
    double fx = 1.0, fy = 1.0;
    double cx = 0.0, cy = 0.0;
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d tau = Eigen::Vector3d::Zero();

    Eigen::Vector3d center() const { return -R.transpose() * tau; }

    bool is_valid(double tol = 1e-9) const {
        if (!(fx > 0.0) || !(fy > 0.0)) return false;
        if (!std::isfinite(cx) || !std::isfinite(cy)) return false;
        const Eigen::Matrix3d err = R.transpose() * R - Eigen::Matrix3d::Identity();
        if (err.cwiseAbs().maxCoeff() > tol) return false;
        return std::abs(R.determinant() - 1.0) <= tol;
    }

    void validate(double tol = 1e-9) const {
        if (!is_valid(tol)) throw std::invalid_argument("camera: R not in SO(3) or non-positive focal length");
    }

    static Camera identity() { return Camera{}; }
};

struct Quaternion {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    Quaternion normalized() const {
        const double n = norm();
        if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("quaternion: zero or non-finite norm");
        return {w / n, x / n, y / n, z / n};
    }
};

struct Projection {
    PixelCoord pixel;
    double depth = 0.0;   // camera-space z, returned as-is
    bool behind = false;  // depth <= 0
};

/// X = R^T (d K^{-1} [u,v,1]^T - tau). Requires d > 0 and finite.
inline Eigen::Vector3d unproject(const Camera& cam, const PixelCoord& p, double d) {
    if (!(d > 0.0) || !std::isfinite(d)) throw std::invalid_argument("unproject: depth must be finite and > 0");
    const Eigen::Vector3d ray((p.u - cam.cx) / cam.fx, (p.v - cam.cy) / cam.fy, 1.0);
    return cam.R.transpose() * (d * ray - cam.tau);
}

/// Perspective projection q = K(RX + tau); depth is e3^T (RX + tau).
/// Points behind the camera are flagged, not errored, so rasterizers can cull.
inline Projection project(const Camera& cam, const Eigen::Vector3d& X) {
    const Eigen::Vector3d q = cam.R * X + cam.tau;
    if (std::abs(q.z()) < 1e-12) throw DegenerateProjectionError("project: point on the principal plane");
    Projection out;
    out.pixel.u = cam.fx * q.x() / q.z() + cam.cx;
    out.pixel.v = cam.fy * q.y() / q.z() + cam.cy;
    out.depth = q.z();
    out.behind = q.z() <= 0.0;
    return out;
}

/// Non-throwing variant used by rasterizers; returns false when degenerate.
inline bool project_checked(const Camera& cam, const Eigen::Vector3d& X, Projection& out) {
    const Eigen::Vector3d q = cam.R * X + cam.tau;
    if (std::abs(q.z()) < 1e-12) return false;
    out.pixel.u = cam.fx * q.x() / q.z() + cam.cx;
    out.pixel.v = cam.fy * q.y() / q.z() + cam.cy;
    out.depth = q.z();
    out.behind = q.z() <= 0.0;
    return true;
}

/// Shepperd's method. R must be orthonormal within 1e-6.
inline Quaternion rotation_to_quaternion(const Eigen::Matrix3d& R) {
    const Eigen::Matrix3d err = R.transpose() * R - Eigen::Matrix3d::Identity();
    if (err.cwiseAbs().maxCoeff() > 1e-6 || std::abs(R.determinant() - 1.0) > 1e-6)
        throw std::invalid_argument("rotation_to_quaternion: matrix not orthonormal");

    Quaternion q;
    const double tr = R(0, 0) + R(1, 1) + R(2, 2);
    if (tr > 0.0) {
        double s = std::sqrt(tr + 1.0) * 2.0;
        q.w = 0.25 * s;
        q.x = (R(2, 1) - R(1, 2)) / s;
        q.y = (R(0, 2) - R(2, 0)) / s;
        q.z = (R(1, 0) - R(0, 1)) / s;
    } else if (R(0, 0) > R(1, 1) && R(0, 0) > R(2, 2)) {
        double s = std::sqrt(1.0 + R(0, 0) - R(1, 1) - R(2, 2)) * 2.0;
        q.w = (R(2, 1) - R(1, 2)) / s;
        q.x = 0.25 * s;
        q.y = (R(0, 1) + R(1, 0)) / s;
        q.z = (R(0, 2) + R(2, 0)) / s;
    } else if (R(1, 1) > R(2, 2)) {
        double s = std::sqrt(1.0 + R(1, 1) - R(0, 0) - R(2, 2)) * 2.0;
        q.w = (R(0, 2) - R(2, 0)) / s;
        q.x = (R(0, 1) + R(1, 0)) / s;
        q.y = 0.25 * s;
        q.z = (R(1, 2) + R(2, 1)) / s;
    } else {
        double s = std::sqrt(1.0 + R(2, 2) - R(0, 0) - R(1, 1)) * 2.0;
        q.w = (R(1, 0) - R(0, 1)) / s;
        q.x = (R(0, 2) + R(2, 0)) / s;
        q.y = (R(1, 2) + R(2, 1)) / s;
        q.z = 0.25 * s;
    }
    return q.normalized();
}

inline Eigen::Matrix3d quaternion_to_rotation(const Quaternion& q_in) {
    if (!std::isfinite(q_in.w) || !std::isfinite(q_in.x) || !std::isfinite(q_in.y) || !std::isfinite(q_in.z))
        throw std::invalid_argument("quaternion_to_rotation: non-finite component");
    const Quaternion q = q_in.normalized();
    Eigen::Matrix3d R;
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return R;
}

/// Spherical linear interpolation; antipodal pairs resolved by sign flip so
/// the shorter arc is taken.
inline Quaternion slerp(const Quaternion& a_in, const Quaternion& b_in, double t) {
    const Quaternion a = a_in.normalized();
    Quaternion b = b_in.normalized();
    double dot = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
    if (dot < 0.0) {
        b = {-b.w, -b.x, -b.y, -b.z};
        dot = -dot;
    }
    if (dot > 1.0 - 1e-12) {
        // Nearly parallel: fall back to normalized lerp.
        Quaternion q{a.w + t * (b.w - a.w), a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.z + t * (b.z - a.z)};
        return q.normalized();
    }
    const double theta = std::acos(std::clamp(dot, -1.0, 1.0));
    const double s = std::sin(theta);
    const double wa = std::sin((1.0 - t) * theta) / s;
    const double wb = std::sin(t * theta) / s;
    return Quaternion{wa * a.w + wb * b.w, wa * a.x + wb * b.x, wa * a.y + wb * b.y, wa * a.z + wb * b.z}
        .normalized();
}

/// SLERP on rotations, linear interpolation of camera centers; intrinsics are
/// copied from cam0. Endpoints return the inputs exactly.
inline Camera interpolate_pose(const Camera& cam0, const Camera& cam1, double a) {
    if (a == 0.0) return cam0;
    if (a == 1.0) return cam1;
    const Quaternion q = slerp(rotation_to_quaternion(cam0.R), rotation_to_quaternion(cam1.R), a);
    const Eigen::Vector3d c = (1.0 - a) * cam0.center() + a * cam1.center();
    Camera out = cam0;
    out.R = quaternion_to_rotation(q);
    out.tau = -out.R * c;
    return out;
}

}  // namespace stitch4d
