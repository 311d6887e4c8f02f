#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "stitch4d/camera.hpp"

using namespace stitch4d;

namespace {

// Independent unprojection oracle: evaluates R^T (d K^{-1} p - tau) with an
// explicit adjugate-based 3x3 inverse, no shared code with the implementation.
Eigen::Vector3d unproject_oracle(const Camera& c, double u, double v, double d) {
    double K[3][3] = {{c.fx, 0, c.cx}, {0, c.fy, c.cy}, {0, 0, 1}};
    double det = K[0][0] * (K[1][1] * K[2][2] - K[1][2] * K[2][1]) -
                 K[0][1] * (K[1][0] * K[2][2] - K[1][2] * K[2][0]) +
                 K[0][2] * (K[1][0] * K[2][1] - K[1][1] * K[2][0]);
    double inv[3][3];
    inv[0][0] = (K[1][1] * K[2][2] - K[1][2] * K[2][1]) / det;
    inv[0][1] = (K[0][2] * K[2][1] - K[0][1] * K[2][2]) / det;
    inv[0][2] = (K[0][1] * K[1][2] - K[0][2] * K[1][1]) / det;
    inv[1][0] = (K[1][2] * K[2][0] - K[1][0] * K[2][2]) / det;
    inv[1][1] = (K[0][0] * K[2][2] - K[0][2] * K[2][0]) / det;
    inv[1][2] = (K[0][2] * K[1][0] - K[0][0] * K[1][2]) / det;
    inv[2][0] = (K[1][0] * K[2][1] - K[1][1] * K[2][0]) / det;
    inv[2][1] = (K[0][1] * K[2][0] - K[0][0] * K[2][1]) / det;
    inv[2][2] = (K[0][0] * K[1][1] - K[0][1] * K[1][0]) / det;
    const double p[3] = {u, v, 1.0};
    double ray[3] = {0, 0, 0};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) ray[i] += inv[i][j] * p[j];
    Eigen::Vector3d cam_pt(d * ray[0] - c.tau(0), d * ray[1] - c.tau(1), d * ray[2] - c.tau(2));
    return c.R.transpose() * cam_pt;
}

Camera random_camera(std::mt19937& rng) {
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    Camera c;
    c.fx = 50.0 + 200.0 * std::abs(uni(rng));
    c.fy = 50.0 + 200.0 * std::abs(uni(rng));
    c.cx = 320.0 + 50.0 * uni(rng);
    c.cy = 240.0 + 50.0 * uni(rng);
    const Eigen::Vector3d axis = Eigen::Vector3d(uni(rng), uni(rng), uni(rng)).normalized();
    const double angle = 3.0 * uni(rng);
    c.R = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
    c.tau = Eigen::Vector3d(uni(rng), uni(rng), uni(rng)) * 2.0;
    return c;
}

Eigen::Matrix3d random_rotation(std::mt19937& rng) {
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    const Eigen::Vector3d axis = Eigen::Vector3d(uni(rng), uni(rng), uni(rng)).normalized();
    return Eigen::AngleAxisd(3.0 * uni(rng), axis).toRotationMatrix();
}

}  // namespace

TEST_CASE("unproject identity cases") {
    const Camera cam;  // identity, fx=fy=1, cx=cy=0
    CHECK(unproject(cam, {0, 0}, 1.0).isApprox(Eigen::Vector3d(0, 0, 1), 1e-15));
    CHECK(unproject(cam, {2, 3}, 2.0).isApprox(Eigen::Vector3d(4, 6, 2), 1e-15));
}

TEST_CASE("unproject rejects bad depth") {
    const Camera cam;
    CHECK_THROWS_AS(unproject(cam, {0, 0}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(unproject(cam, {0, 0}, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(unproject(cam, {0, 0}, std::numeric_limits<double>::quiet_NaN()),
                    std::invalid_argument);
}

TEST_CASE("project identity cases") {
    const Camera cam;
    const Projection p1 = project(cam, {0, 0, 1});
    CHECK(p1.pixel.u == Catch::Approx(0.0).margin(1e-15));
    CHECK(p1.depth == Catch::Approx(1.0));
    CHECK_FALSE(p1.behind);
    const Projection p2 = project(cam, {1, 2, 2});
    CHECK(p2.pixel.u == Catch::Approx(0.5));
    CHECK(p2.pixel.v == Catch::Approx(1.0));
    CHECK(p2.depth == Catch::Approx(2.0));
}

TEST_CASE("project flags behind-camera points and errors on degenerate ones") {
    const Camera cam;
    CHECK(project(cam, {0, 0, -1}).behind);
    CHECK_THROWS_AS(project(cam, {1, 1, 0}), DegenerateProjectionError);
}

TEST_CASE("unproject matches the explicit-formula oracle") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> uni(0.1, 5.0);
    std::uniform_real_distribution<double> pix(-100.0, 700.0);
    for (int i = 0; i < 500; ++i) {
        const Camera cam = random_camera(rng);
        const double u = pix(rng), v = pix(rng), d = uni(rng);
        const Eigen::Vector3d got = unproject(cam, {u, v}, d);
        const Eigen::Vector3d want = unproject_oracle(cam, u, v, d);
        CHECK((got - want).norm() < 1e-9);
    }
}

TEST_CASE("project(unproject) roundtrip under 1e-9") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> uni(0.1, 5.0);
    std::uniform_real_distribution<double> pix(0.0, 640.0);
    for (int i = 0; i < 1000; ++i) {
        const Camera cam = random_camera(rng);
        const double u = pix(rng), v = pix(rng), d = uni(rng);
        const Projection p = project(cam, unproject(cam, {u, v}, d));
        CHECK(std::abs(p.pixel.u - u) < 1e-9 * std::max(1.0, std::abs(u)));
        CHECK(std::abs(p.pixel.v - v) < 1e-9 * std::max(1.0, std::abs(v)));
        CHECK(std::abs(p.depth - d) < 1e-9 * d);
    }
}

TEST_CASE("unproject is equivariant under rigid world transforms") {
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> uni(0.5, 3.0);
    for (int i = 0; i < 100; ++i) {
        const Camera cam = random_camera(rng);
        const Eigen::Matrix3d G = random_rotation(rng);
        const Eigen::Vector3d g(uni(rng), uni(rng), uni(rng));
        // Transform the camera so that camera coordinates are unchanged when
        // the world moves by (G, g): R' = R G^T, tau' = tau - R G^T g... the
        // camera that sees the transformed world identically.
        Camera moved = cam;
        moved.R = cam.R * G.transpose();
        moved.tau = cam.tau - cam.R * G.transpose() * g;
        const Eigen::Vector3d x = unproject(cam, {uni(rng) * 100, uni(rng) * 100}, uni(rng));
        const Projection p = project(cam, x);
        const Eigen::Vector3d moved_x = G * x + g;
        const Eigen::Vector3d got = unproject(moved, p.pixel, p.depth);
        CHECK((got - moved_x).norm() < 1e-9);
    }
}

TEST_CASE("rotation/quaternion conversions") {
    const Quaternion qi = rotation_to_quaternion(Eigen::Matrix3d::Identity());
    CHECK(qi.w == Catch::Approx(1.0));
    CHECK(std::abs(qi.x) + std::abs(qi.y) + std::abs(qi.z) < 1e-12);

    Eigen::Matrix3d rx180;
    rx180 << 1, 0, 0, 0, -1, 0, 0, 0, -1;
    const Quaternion q180 = rotation_to_quaternion(rx180);
    CHECK(std::abs(q180.w) < 1e-12);
    CHECK(std::abs(q180.x) == Catch::Approx(1.0));

    Eigen::Matrix3d bad = Eigen::Matrix3d::Identity();
    bad(0, 0) = 1.5;
    CHECK_THROWS_AS(rotation_to_quaternion(bad), std::invalid_argument);
    CHECK_THROWS_AS(quaternion_to_rotation({0, 0, 0, 0}), std::invalid_argument);

    std::mt19937 rng(17);
    for (int i = 0; i < 1000; ++i) {
        const Eigen::Matrix3d R = random_rotation(rng);
        const Eigen::Matrix3d back = quaternion_to_rotation(rotation_to_quaternion(R));
        CHECK((back - R).norm() < 1e-9);
    }
}

TEST_CASE("interpolate_pose endpoints and midpoint") {
    std::mt19937 rng(19);
    const Camera cam0 = random_camera(rng);
    Camera cam1 = random_camera(rng);
    cam1.fx = cam0.fx;  // interpolation copies intrinsics from cam0 anyway

    const Camera at0 = interpolate_pose(cam0, cam1, 0.0);
    CHECK((at0.R - cam0.R).norm() == 0.0);
    CHECK((at0.tau - cam0.tau).norm() == 0.0);
    const Camera at1 = interpolate_pose(cam0, cam1, 1.0);
    CHECK((at1.R - cam1.R).norm() == 0.0);

    const Camera mid = interpolate_pose(cam0, cam1, 0.5);
    const Eigen::Vector3d want = 0.5 * (cam0.center() + cam1.center());
    CHECK((mid.center() - want).norm() < 1e-12);
}

TEST_CASE("interpolate_pose slerp symmetry for a 90 degree yaw") {
    Camera cam0;
    Camera cam1;
    cam1.R = Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitY()).toRotationMatrix();
    const Camera mid = interpolate_pose(cam0, cam1, 0.5);
    const Eigen::Matrix3d want = Eigen::AngleAxisd(M_PI / 4, Eigen::Vector3d::UnitY()).toRotationMatrix();
    CHECK((mid.R - want).norm() < 1e-12);
}

TEST_CASE("interpolate_pose center is affine and rotation angle monotone in a") {
    std::mt19937 rng(23);
    const Camera cam0 = random_camera(rng);
    const Camera cam1 = random_camera(rng);
    double prev_angle = -1.0;
    for (int k = 0; k <= 10; ++k) {
        const double a = k / 10.0;
        const Camera c = interpolate_pose(cam0, cam1, a);
        const Eigen::Vector3d want = (1 - a) * cam0.center() + a * cam1.center();
        CHECK((c.center() - want).norm() < 1e-12);
        const Eigen::Matrix3d rel = c.R * cam0.R.transpose();
        const double angle = std::acos(std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0));
        CHECK(angle >= prev_angle - 1e-9);
        prev_angle = angle;
    }
}

TEST_CASE("camera validity checks") {
    Camera c;
    CHECK(c.is_valid());
    c.fx = -1.0;
    CHECK_FALSE(c.is_valid());
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = Camera{};
    c.R(0, 1) = 1e-6;
    CHECK_FALSE(c.is_valid());
}
