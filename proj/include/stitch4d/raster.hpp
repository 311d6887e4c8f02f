#pragma once

#include "stitch4d/camera.hpp"
#include "stitch4d/types.hpp"

namespace stitch4d {

/// Color, support and depth produced by rendering geometry into a camera.
/// support(p) = 0 implies the depth is invalid at p; rendered depths are > 0.
struct RenderOutput {
    RgbFrame color;
    BitMask support;
    DepthFrame depth;

    RenderOutput() = default;
    RenderOutput(int w, int h) : color(w, h), support(w, h), depth(w, h) {}
};

struct RasterOptions {
    double near_plane = 1e-4;
    // Point splatting: contributions farther than rel_tol * z_min at a pixel
    // are discarded; support requires accumulated weight >= w_min. Chosen so
    // a single point always supports its nearest pixel.
    double rel_tol = 0.01;
    double w_min = 0.05;
};

/// Bilinear splatting with depth-ordered visibility. Each point with camera
/// depth beyond the near plane splats onto its four enclosing pixels with
/// bilinear weights; per-pixel visibility keeps contributions within
/// rel_tol of the nearest depth and blends them by weight.
inline RenderOutput render_points(const ColoredPointCloud& pc, const Camera& cam, int width, int height,
                                  const RasterOptions& opts = {}) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("render_points: non-positive raster size");
    RenderOutput out(width, height);

    struct Splat {
        int u0, v0;
        double w[4];
        double z;
        Rgb color;
    };
    std::vector<Splat> splats;
    splats.reserve(pc.points.size());
    for (const auto& p : pc.points) {
        Projection pr;
        if (!project_checked(cam, p.position, pr)) continue;
        if (pr.depth <= opts.near_plane) continue;
        const double fu = pr.pixel.u - std::floor(pr.pixel.u);
        const double fv = pr.pixel.v - std::floor(pr.pixel.v);
        Splat s;
        s.u0 = static_cast<int>(std::floor(pr.pixel.u));
        s.v0 = static_cast<int>(std::floor(pr.pixel.v));
        if (s.u0 < -1 || s.u0 > width - 1 || s.v0 < -1 || s.v0 > height - 1) continue;
        s.w[0] = (1.0 - fu) * (1.0 - fv);
        s.w[1] = fu * (1.0 - fv);
        s.w[2] = (1.0 - fu) * fv;
        s.w[3] = fu * fv;
        s.z = pr.depth;
        s.color = p.color;
        splats.push_back(s);
    }

    static constexpr int corner[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    const double inf = std::numeric_limits<double>::infinity();
    Image2D<double> zmin(width, height, inf);
    for (const auto& s : splats)
        for (int k = 0; k < 4; ++k) {
            if (s.w[k] <= 0.0) continue;
            const int x = s.u0 + corner[k][0], y = s.v0 + corner[k][1];
            if (x < 0 || x >= width || y < 0 || y >= height) continue;
            zmin.at(x, y) = std::min(zmin.at(x, y), s.z);
        }

    Image2D<double> acc_w(width, height, 0.0), acc_z(width, height, 0.0);
    Image2D<double> acc_r(width, height, 0.0), acc_g(width, height, 0.0), acc_b(width, height, 0.0);
    for (const auto& s : splats)
        for (int k = 0; k < 4; ++k) {
            if (s.w[k] <= 0.0) continue;
            const int x = s.u0 + corner[k][0], y = s.v0 + corner[k][1];
            if (x < 0 || x >= width || y < 0 || y >= height) continue;
            if (s.z > zmin.at(x, y) * (1.0 + opts.rel_tol)) continue;
            acc_w.at(x, y) += s.w[k];
            acc_z.at(x, y) += s.w[k] * s.z;
            acc_r.at(x, y) += s.w[k] * s.color[0];
            acc_g.at(x, y) += s.w[k] * s.color[1];
            acc_b.at(x, y) += s.w[k] * s.color[2];
        }

    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double w = acc_w.at(x, y);
            if (w < opts.w_min) continue;
            out.support.set(x, y, true);
            out.depth.set(x, y, static_cast<float>(acc_z.at(x, y) / w));
            auto ch = [&](double v) {
                return static_cast<std::uint8_t>(std::clamp(std::lround(v / w), 0l, 255l));
            };
            out.color.set(x, y, {ch(acc_r.at(x, y)), ch(acc_g.at(x, y)), ch(acc_b.at(x, y))});
        }
    return out;
}

namespace detail {

inline double edge_fn(double ax, double ay, double bx, double by, double px, double py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

// Half-open top-left fill rule in y-down image coordinates with
// positive-area winding: top edge = horizontal going +x, left edge = going -y.
inline bool edge_top_left(double ax, double ay, double bx, double by) {
    if (by == ay) return bx > ax;
    return by < ay;
}

}  // namespace detail

/// Rasterizes projected triangles with perspective-correct barycentric
/// interpolation of depth (and color on request). The z-buffer keeps the
/// nearest fragment; no back-face culling; triangles with any vertex at or
/// behind the near plane are dropped rather than clipped.
inline RenderOutput render_mesh(const LatticeMesh& mesh, const Camera& cam, int width, int height,
                                bool want_color = true, const RasterOptions& opts = {}) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("render_mesh: non-positive raster size");
    RenderOutput out(width, height);
    const double inf = std::numeric_limits<double>::infinity();
    Image2D<double> zbuf(width, height, inf);

    struct Vtx {
        double u, v, z;
        bool ok;
    };
    // Vertices landing within rounding noise of a pixel center are snapped to
    // it, so lattice self-reprojection covers its pixels regardless of the
    // last-ulp outcome of the projective roundtrip.
    auto snap = [](double v) {
        const double r = std::round(v);
        return std::abs(v - r) < 1e-9 ? r : v;
    };
    std::vector<Vtx> proj(mesh.vertices.size());
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        Projection pr;
        const bool ok = project_checked(cam, mesh.vertices[i].position, pr) && pr.depth > opts.near_plane;
        proj[i] = {ok ? snap(pr.pixel.u) : 0.0, ok ? snap(pr.pixel.v) : 0.0, ok ? pr.depth : 0.0, ok};
    }

    for (const auto& tri : mesh.triangles) {
        int i0 = tri[0], i1 = tri[1], i2 = tri[2];
        if (!proj[i0].ok || !proj[i1].ok || !proj[i2].ok) continue;
        double area2 = detail::edge_fn(proj[i0].u, proj[i0].v, proj[i1].u, proj[i1].v, proj[i2].u, proj[i2].v);
        if (area2 == 0.0) continue;
        if (area2 < 0.0) {
            std::swap(i1, i2);
            area2 = -area2;
        }
        const Vtx& a = proj[i0];
        const Vtx& b = proj[i1];
        const Vtx& c = proj[i2];

        const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({a.u, b.u, c.u}))));
        const int x1 = std::min(width - 1, static_cast<int>(std::floor(std::max({a.u, b.u, c.u}))));
        const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({a.v, b.v, c.v}))));
        const int y1 = std::min(height - 1, static_cast<int>(std::floor(std::max({a.v, b.v, c.v}))));
        if (x0 > x1 || y0 > y1) continue;

        const bool tl0 = detail::edge_top_left(a.u, a.v, b.u, b.v);
        const bool tl1 = detail::edge_top_left(b.u, b.v, c.u, c.v);
        const bool tl2 = detail::edge_top_left(c.u, c.v, a.u, a.v);

        const Rgb c0 = mesh.vertices[i0].color, c1 = mesh.vertices[i1].color, c2 = mesh.vertices[i2].color;
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double e0 = detail::edge_fn(a.u, a.v, b.u, b.v, x, y);
                const double e1 = detail::edge_fn(b.u, b.v, c.u, c.v, x, y);
                const double e2 = detail::edge_fn(c.u, c.v, a.u, a.v, x, y);
                const bool in = (e0 > 0 || (e0 == 0 && tl0)) && (e1 > 0 || (e1 == 0 && tl1)) &&
                                (e2 > 0 || (e2 == 0 && tl2));
                if (!in) continue;
                const double l0 = e1 / area2, l1 = e2 / area2, l2 = e0 / area2;
                const double inv_z = l0 / a.z + l1 / b.z + l2 / c.z;
                const double z = 1.0 / inv_z;
                if (z >= zbuf.at(x, y)) continue;
                zbuf.at(x, y) = z;
                out.support.set(x, y, true);
                out.depth.set(x, y, static_cast<float>(z));
                if (want_color) {
                    auto ch = [&](int k) {
                        const double v = (l0 * c0[k] / a.z + l1 * c1[k] / b.z + l2 * c2[k] / c.z) / inv_z;
                        return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
                    };
                    out.color.set(x, y, {ch(0), ch(1), ch(2)});
                }
            }
    }
    return out;
}

/// Depth-merges render outputs: per pixel the nearest supported fragment
/// wins. The earlier input also keeps coincident surfaces: the later one must
/// be nearer by more than rel_tie relative, so stitched points lying on an
/// existing surface never displace it (splat blending jitters their depth by
/// a fraction of a pixel's worth of surface slope).
inline RenderOutput merge_renders(const RenderOutput& a, const RenderOutput& b, double rel_tie = 0.01) {
    if (!a.support.same_size(b.support)) throw std::invalid_argument("merge_renders: dimension mismatch");
    RenderOutput out = a;
    for (int y = 0; y < a.support.height; ++y)
        for (int x = 0; x < a.support.width; ++x) {
            if (!b.support.at(x, y)) continue;
            if (out.support.at(x, y) && b.depth.at(x, y) > out.depth.at(x, y) * (1.0 - rel_tie)) continue;
            out.support.set(x, y, true);
            out.depth.set(x, y, b.depth.at(x, y));
            out.color.set(x, y, b.color.at(x, y));
        }
    return out;
}

}  // namespace stitch4d
