#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "stitch4d/frames.hpp"
#include "stitch4d/stitch.hpp"

using namespace stitch4d;

namespace {

// A wall: fronto-parallel plane at depth z covering the camera frustum.
GeometryLayer wall_layer(const Camera& cam, int w, int h, float z, Rgb color,
                         const std::string& source = "src") {
    RgbFrame rgb(w, h, color);
    DepthFrame depth(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) depth.set(x, y, z);
    GeometryLayer layer;
    layer.provenance = {source, source, 0, 0};
    layer.geometry = lift_lattice_mesh(rgb, depth, cam);
    layer.camera = cam;
    return layer;
}

Camera small_cam(int w, int h) {
    Camera c;
    c.fx = c.fy = w;
    c.cx = (w - 1) / 2.0;
    c.cy = (h - 1) / 2.0;
    return c;
}

}  // namespace

TEST_CASE("build_stitch_candidates basics") {
    const Camera cam;  // identity intrinsics
    RgbFrame rgb(8, 8, {1, 2, 3});
    DepthFrame depth(8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) depth.set(x, y, 2.0f);

    SECTION("empty mask yields an empty candidate") {
        const BitMask mask(8, 8);
        const StitchCandidate c = build_stitch_candidates(rgb, depth, mask, cam, 3);
        CHECK(c.points.points.empty());
        CHECK(c.frame_idx == 3);
    }
    SECTION("one pixel back-projects through the camera") {
        BitMask mask(8, 8);
        mask.set(3, 4, true);
        const StitchCandidate c = build_stitch_candidates(rgb, depth, mask, cam, 0);
        REQUIRE(c.points.points.size() == 1);
        CHECK((c.points.points[0].position - Eigen::Vector3d(6, 8, 2)).norm() < 1e-12);
        CHECK(c.points.points[0].color == Rgb{1, 2, 3});
    }
    SECTION("missing depth names the offending pixel") {
        BitMask mask(8, 8);
        mask.set(5, 6, true);
        depth.invalidate(5, 6);
        try {
            build_stitch_candidates(rgb, depth, mask, cam, 0);
            FAIL("expected MissingDepthError");
        } catch (const MissingDepthError& e) {
            CHECK(std::string(e.what()).find("(5, 6)") != std::string::npos);
        }
    }
    SECTION("random mask matches the per-pixel unproject oracle exactly") {
        std::mt19937 rng(191);
        BitMask mask(8, 8);
        int set = 0;
        while (set < 64) {
            const int x = rng() % 8, y = rng() % 8;
            if (!mask.at(x, y)) {
                mask.set(x, y, true);
                ++set;
            }
            if (set >= 20) break;
        }
        Camera cam2 = small_cam(8, 8);
        cam2.R = Eigen::AngleAxisd(0.3, Eigen::Vector3d(0, 1, 0)).toRotationMatrix();
        cam2.tau = {0.1, 0.0, -0.2};
        const StitchCandidate c = build_stitch_candidates(rgb, depth, mask, cam2, 0);
        CHECK(c.points.points.size() == mask.count());
        for (const auto& p : c.points.points) {
            const int x = p.source_pixel % 8, y = p.source_pixel / 8;
            CHECK((p.position - unproject(cam2, {double(x), double(y)}, 2.0)).norm() == 0.0);
        }
    }
}

TEST_CASE("disagreement filter keeps consistent points and removes occluders") {
    const int W = 32, H = 32;
    const Camera cam = small_cam(W, H);
    SceneAsset asset;
    asset.layers.push_back(wall_layer(cam, W, H, 2.0f, {100, 100, 100}));

    // Candidate points along the optical axis: on the wall, in front, behind.
    StitchCandidate cand;
    cand.frame_idx = 0;
    cand.target_cam = cam;
    cand.origin_mask = BitMask(W, H);
    auto add_point = [&](double z) {
        ColoredPoint p;
        p.position = unproject(cam, {15.5, 15.5}, z);
        p.source_pixel = 0;
        cand.points.points.push_back(p);
    };
    add_point(2.0);   // coincident: retained
    add_point(1.0);   // in front of the wall: removed
    add_point(3.5);   // behind the wall (occluded): retained
    cand.origin_mask = BitMask(0, 0);

    DisagreementConfig cfg;  // depth_tol 0.05, vote_frac 0.5
    const StitchCandidate kept = render_disagreement_filter(cand, asset, {cam}, W, H, cfg);
    REQUIRE(kept.points.points.size() == 2);
    CHECK(kept.points.points[0].position.z() == Catch::Approx(2.0));
    CHECK(kept.points.points[1].position.z() == Catch::Approx(3.5));

    SECTION("points outside every observed frustum are retained") {
        StitchCandidate outside;
        outside.frame_idx = 0;
        outside.target_cam = cam;
        outside.origin_mask = BitMask(0, 0);
        ColoredPoint p;
        p.position = {100.0, 100.0, 1.0};  // projects far outside the frame
        outside.points.points.push_back(p);
        const StitchCandidate r = render_disagreement_filter(outside, asset, {cam}, W, H, cfg);
        CHECK(r.points.points.size() == 1);
    }
    SECTION("filtering is anti-monotone in depth_tol") {
        std::mt19937 rng(193);
        std::uniform_real_distribution<double> uz(0.5, 4.0);
        std::uniform_real_distribution<double> up(2.0, 29.0);
        StitchCandidate many;
        many.frame_idx = 0;
        many.target_cam = cam;
        many.origin_mask = BitMask(0, 0);
        for (int i = 0; i < 200; ++i) {
            ColoredPoint p;
            p.position = unproject(cam, {up(rng), up(rng)}, uz(rng));
            many.points.points.push_back(p);
        }
        size_t prev = 0;
        for (double tol : {0.01, 0.05, 0.2, 0.5}) {
            DisagreementConfig c2;
            c2.depth_tol = tol;
            const size_t kept_n =
                render_disagreement_filter(many, asset, {cam}, W, H, c2).points.points.size();
            CHECK(kept_n >= prev);
            prev = kept_n;
        }
    }
    CHECK_THROWS_AS(render_disagreement_filter(cand, asset, {}, W, H, cfg), std::invalid_argument);
}

TEST_CASE("merge_asset appends without touching existing layers") {
    const int W = 16, H = 16;
    const Camera cam = small_cam(W, H);
    SceneAsset asset;
    asset.layers.push_back(wall_layer(cam, W, H, 2.0f, {50, 60, 70}));
    const LatticeMesh before = std::get<LatticeMesh>(asset.layers[0].geometry);

    StitchCandidate cand;
    cand.frame_idx = 0;
    cand.target_cam = cam;
    cand.provenance = {"src", "tgt", 1, 0};
    const SceneAsset merged = merge_asset(asset, cand);
    CHECK(merged.layers.size() == 2);
    const LatticeMesh& after = std::get<LatticeMesh>(merged.layers[0].geometry);
    CHECK(after.vertices.size() == before.vertices.size());
    CHECK(after.triangles == before.triangles);

    CHECK_THROWS_AS(merge_asset(merged, cand), ProvenanceConflictError);
}

TEST_CASE("merging candidates does not disturb source-view renders") {
    // Wall plus a candidate filling a side region at the same wall depth:
    // rendering back into the source view must be unchanged on previously
    // supported pixels (within color rounding and depth tolerance).
    const int W = 24, H = 24;
    const Camera cam = small_cam(W, H);
    SceneAsset asset;
    asset.layers.push_back(wall_layer(cam, W, H, 2.0f, {80, 90, 100}));
    const RenderOutput before = render_asset(asset, 0, cam, W, H);

    StitchCandidate cand;
    cand.frame_idx = 0;
    cand.target_cam = cam;
    cand.provenance = {"src", "tgt", 1, 0};
    cand.origin_mask = BitMask(0, 0);
    std::mt19937 rng(197);
    std::uniform_real_distribution<double> up(1.0, 22.0);
    for (int i = 0; i < 60; ++i) {
        ColoredPoint p;
        p.position = unproject(cam, {up(rng), up(rng)}, 2.0);
        p.color = {80, 90, 100};
        cand.points.points.push_back(p);
    }
    const SceneAsset merged = merge_asset(asset, cand);
    const RenderOutput after = render_asset(merged, 0, cam, W, H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (!before.support.at(x, y)) continue;
            REQUIRE(after.support.at(x, y));
            CHECK(std::abs(after.depth.at(x, y) - before.depth.at(x, y)) < 1e-4f);
            for (int c = 0; c < 3; ++c)
                CHECK(std::abs(int(after.color.at(x, y)[c]) - int(before.color.at(x, y)[c])) <= 1);
        }
}

TEST_CASE("renders are independent of merge order") {
    const int W = 16, H = 16;
    const Camera cam = small_cam(W, H);
    SceneAsset base;
    base.layers.push_back(wall_layer(cam, W, H, 2.5f, {10, 20, 30}));

    auto make_cand = [&](const std::string& tgt, double z, unsigned seed) {
        StitchCandidate c;
        c.frame_idx = 0;
        c.target_cam = cam;
        c.provenance = {"src", tgt, 1, 0};
        c.origin_mask = BitMask(0, 0);
        std::mt19937 rng(seed);
        std::uniform_real_distribution<double> up(1.0, 14.0);
        for (int i = 0; i < 40; ++i) {
            ColoredPoint p;
            p.position = unproject(cam, {up(rng), up(rng)}, z);
            p.color = {std::uint8_t(rng()), std::uint8_t(rng()), std::uint8_t(rng())};
            c.points.points.push_back(p);
        }
        return c;
    };
    const StitchCandidate a = make_cand("tgt_a", 1.8, 1), b = make_cand("tgt_b", 2.1, 2);
    const SceneAsset ab = merge_asset(merge_asset(base, a), b);
    const SceneAsset ba = merge_asset(merge_asset(base, b), a);
    CHECK(ab.layers.size() == 3);
    const RenderOutput r1 = render_asset(ab, 0, cam, W, H);
    const RenderOutput r2 = render_asset(ba, 0, cam, W, H);
    CHECK(r1.depth.data == r2.depth.data);
    CHECK(r1.color.data == r2.color.data);
    CHECK(r1.support.bits == r2.support.bits);
}

TEST_CASE("progressive expansion shrinks the hole mask") {
    // After merging target-view candidates, the hole mask recomputed from the
    // merged asset must be a subset of the pre-merge hole mask.
    const int W = 32, H = 32;
    const Camera src = small_cam(W, H);
    Camera tgt = src;
    tgt.tau = {-0.4, 0, 0};  // shifted center reveals unseen area
    SceneAsset asset;
    asset.layers.push_back(wall_layer(src, W, H, 2.0f, {120, 130, 140}));

    const RenderOutput pre = render_asset(asset, 0, tgt, W, H);
    const BitMask pre_hole = mask_complement(pre.support);

    StitchCandidate cand;
    cand.frame_idx = 0;
    cand.target_cam = tgt;
    cand.provenance = {"src", "tgt", 1, 0};
    cand.origin_mask = BitMask(0, 0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (pre_hole.at(x, y)) {
                ColoredPoint p;
                p.position = unproject(tgt, {double(x), double(y)}, 2.0);
                p.color = {120, 130, 140};
                cand.points.points.push_back(p);
            }
    const SceneAsset merged = merge_asset(asset, cand);
    const RenderOutput post = render_asset(merged, 0, tgt, W, H);
    const BitMask post_hole = mask_complement(post.support);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (post_hole.at(x, y)) CHECK(pre_hole.at(x, y));
}
