#pragma once

#include "stitch4d/io.hpp"

namespace stitch4d {

// ---------------------------------------------------------------------------
// Synthetic scene description: axis-aligned planes and rectangles with
// analytically exact depth under any camera. Grammar (one statement per
// line, '#' comments):
//
//   resolution W H
//   intrinsics FX FY CX CY                (optional; default fx=fy=W, centered)
//   frames N                              (optional; default 1)
//   plane z Z color R G B [tilt GX GY]
//   rect x X0 X1 y Y0 Y1 z Z color R G B [fg] [vel DX DY DZ]
//   camera ID pos X Y Z [yaw D] [pitch D] [roll D]
//   interp PREFIX CAM0 CAM1 COUNT         (COUNT interior SLERP/lerp poses)
// ---------------------------------------------------------------------------

struct ScenePrimitive {
    bool is_rect = false;
    double z = 1.0;
    double tilt_x = 0.0, tilt_y = 0.0;  // plane: z(x, y) = z + tilt_x*x + tilt_y*y
    double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;
    Rgb color = {128, 128, 128};
    bool fg = false;
    Eigen::Vector3d vel = Eigen::Vector3d::Zero();  // rect offset per frame
};

struct SceneCameraDef {
    std::string id;
    Camera cam;
};

struct SceneSpec {
    int width = 64, height = 48;
    int frames = 1;
    double fx = 0, fy = 0, cx = 0, cy = 0;
    std::vector<ScenePrimitive> primitives;
    std::vector<SceneCameraDef> cameras;

    const Camera* find_camera(const std::string& id) const {
        for (const auto& c : cameras)
            if (c.id == id) return &c.cam;
        return nullptr;
    }

    static SceneSpec parse(const std::string& text);
};

namespace detail {

inline Eigen::Matrix3d euler_cam_to_world(double yaw_deg, double pitch_deg, double roll_deg) {
    const double y = yaw_deg * M_PI / 180.0, p = pitch_deg * M_PI / 180.0, r = roll_deg * M_PI / 180.0;
    Eigen::Matrix3d Ry, Rx, Rz;
    Ry << std::cos(y), 0, std::sin(y), 0, 1, 0, -std::sin(y), 0, std::cos(y);
    Rx << 1, 0, 0, 0, std::cos(p), -std::sin(p), 0, std::sin(p), std::cos(p);
    Rz << std::cos(r), -std::sin(r), 0, std::sin(r), std::cos(r), 0, 0, 0, 1;
    return Ry * Rx * Rz;
}

}  // namespace detail

inline SceneSpec SceneSpec::parse(const std::string& text) {
    SceneSpec spec;
    std::istringstream ss(text);
    std::string line;
    int line_no = 0;
    bool intrinsics_set = false;
    auto bad = [&](const std::string& msg) { return ParseError(msg, line_no); };

    while (std::getline(ss, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        std::string stmt;
        if (!(ls >> stmt)) continue;

        auto need_num = [&](double& v) {
            if (!(ls >> v)) throw bad("expected a number in '" + stmt + "' statement");
        };
        if (stmt == "resolution") {
            double w, h;
            need_num(w);
            need_num(h);
            if (w < 1 || h < 1) throw bad("resolution must be positive");
            spec.width = int(w);
            spec.height = int(h);
        } else if (stmt == "intrinsics") {
            need_num(spec.fx);
            need_num(spec.fy);
            need_num(spec.cx);
            need_num(spec.cy);
            intrinsics_set = true;
        } else if (stmt == "frames") {
            double n;
            need_num(n);
            if (n < 1) throw bad("frames must be >= 1");
            spec.frames = int(n);
        } else if (stmt == "plane" || stmt == "rect") {
            ScenePrimitive p;
            p.is_rect = stmt == "rect";
            std::string key;
            bool have_z = false;
            while (ls >> key) {
                if (key == "z") {
                    need_num(p.z);
                    have_z = true;
                } else if (key == "x" && p.is_rect) {
                    need_num(p.x0);
                    need_num(p.x1);
                } else if (key == "y" && p.is_rect) {
                    need_num(p.y0);
                    need_num(p.y1);
                } else if (key == "color") {
                    double r, g, b;
                    need_num(r);
                    need_num(g);
                    need_num(b);
                    p.color = {std::uint8_t(r), std::uint8_t(g), std::uint8_t(b)};
                } else if (key == "tilt" && !p.is_rect) {
                    need_num(p.tilt_x);
                    need_num(p.tilt_y);
                } else if (key == "fg" && p.is_rect) {
                    p.fg = true;
                } else if (key == "vel" && p.is_rect) {
                    need_num(p.vel.x());
                    need_num(p.vel.y());
                    need_num(p.vel.z());
                } else {
                    throw bad("unknown key '" + key + "' in " + stmt);
                }
            }
            if (!have_z) throw bad(stmt + " needs a z value");
            if (p.is_rect && (p.x0 >= p.x1 || p.y0 >= p.y1)) throw bad("rect bounds must be increasing");
            spec.primitives.push_back(p);
        } else if (stmt == "camera") {
            SceneCameraDef def;
            if (!(ls >> def.id)) throw bad("camera needs an id");
            Eigen::Vector3d pos = Eigen::Vector3d::Zero();
            double yaw = 0, pitch = 0, roll = 0;
            std::string key;
            while (ls >> key) {
                if (key == "pos") {
                    need_num(pos.x());
                    need_num(pos.y());
                    need_num(pos.z());
                } else if (key == "yaw") {
                    need_num(yaw);
                } else if (key == "pitch") {
                    need_num(pitch);
                } else if (key == "roll") {
                    need_num(roll);
                } else {
                    throw bad("unknown key '" + key + "' in camera");
                }
            }
            def.cam.R = detail::euler_cam_to_world(yaw, pitch, roll).transpose();
            def.cam.tau = -def.cam.R * pos;
            spec.cameras.push_back(def);
        } else if (stmt == "interp") {
            std::string prefix, a, b;
            double count;
            if (!(ls >> prefix >> a >> b >> count) || count < 1) throw bad("interp PREFIX CAM0 CAM1 COUNT");
            const Camera* c0 = spec.find_camera(a);
            const Camera* c1 = spec.find_camera(b);
            if (!c0 || !c1) throw bad("interp references unknown camera");
            for (int k = 1; k <= int(count); ++k) {
                SceneCameraDef def;
                def.id = prefix + "_" + std::to_string(k - 1);
                def.cam = interpolate_pose(*c0, *c1, double(k) / (count + 1));
                spec.cameras.push_back(def);
            }
        } else {
            throw bad("unknown statement '" + stmt + "'");
        }
    }
    if (spec.cameras.empty()) throw ParseError("scene needs at least one camera", line_no);
    if (spec.primitives.empty()) throw ParseError("scene needs at least one primitive", line_no);
    if (!intrinsics_set) {
        spec.fx = spec.fy = spec.width;
        spec.cx = (spec.width - 1) / 2.0;
        spec.cy = (spec.height - 1) / 2.0;
    }
    for (auto& c : spec.cameras) {
        c.cam.fx = spec.fx;
        c.cam.fy = spec.fy;
        c.cam.cx = spec.cx;
        c.cam.cy = spec.cy;
    }
    return spec;
}

struct SceneSample {
    bool hit = false;
    double depth = 0.0;
    Rgb color = {0, 0, 0};
    bool fg = false;
};

/// Exact nearest-hit ray cast through pixel center (u, v) at the given frame.
inline SceneSample trace_scene(const SceneSpec& spec, const Camera& cam, int frame, double u, double v,
                               bool include_fg = true) {
    const Eigen::Vector3d c = cam.center();
    const Eigen::Vector3d w =
        cam.R.transpose() * Eigen::Vector3d((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
    SceneSample best;
    for (const auto& p : spec.primitives) {
        if (p.fg && !include_fg) continue;
        double t;
        if (p.is_rect) {
            const Eigen::Vector3d off = p.vel * frame;
            const double zr = p.z + off.z();
            if (std::abs(w.z()) < 1e-15) continue;
            t = (zr - c.z()) / w.z();
            if (t <= 1e-9) continue;
            const double hx = c.x() + t * w.x(), hy = c.y() + t * w.y();
            if (hx < p.x0 + off.x() || hx > p.x1 + off.x() || hy < p.y0 + off.y() || hy > p.y1 + off.y())
                continue;
        } else {
            const double den = w.z() - p.tilt_x * w.x() - p.tilt_y * w.y();
            if (std::abs(den) < 1e-15) continue;
            t = (p.z + p.tilt_x * c.x() + p.tilt_y * c.y() - c.z()) / den;
            if (t <= 1e-9) continue;
        }
        if (!best.hit || t < best.depth) {
            best.hit = true;
            best.depth = t;  // camera-space depth equals the ray parameter
            best.color = p.color;
            best.fg = p.fg;
        }
    }
    return best;
}

inline void render_scene(const SceneSpec& spec, const Camera& cam, int frame, bool include_fg,
                         RgbFrame& rgb, DepthFrame& depth, BitMask* fg_mask = nullptr) {
    rgb = RgbFrame(spec.width, spec.height);
    depth = DepthFrame(spec.width, spec.height);
    if (fg_mask) *fg_mask = BitMask(spec.width, spec.height);
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
            const SceneSample s = trace_scene(spec, cam, frame, x, y, include_fg);
            if (!s.hit) continue;
            rgb.set(x, y, s.color);
            depth.set(x, y, static_cast<float>(s.depth));
            if (fg_mask && s.fg) fg_mask->set(x, y, true);
        }
}

inline bool scene_has_fg(const SceneSpec& spec) {
    for (const auto& p : spec.primitives)
        if (p.fg) return true;
    return false;
}

/// Writes the full synthetic dataset: camera manifest, per-(view, frame) RGB
/// PNG + depth PFM, FG masks and background-only layers when the scene has
/// foreground, and ground-truth renders for every camera for oracle
/// completion.
inline void gen_synthetic_scene(const std::string& spec_text, const fs::path& out_dir) {
    const SceneSpec spec = SceneSpec::parse(spec_text);
    const bool has_fg = scene_has_fg(spec);
    fs::create_directories(out_dir);
    atomic_write(out_dir / "scene.txt", spec_text);

    std::vector<ViewEntry> entries;
    for (const auto& def : spec.cameras)
        for (int f = 0; f < spec.frames; ++f) {
            ViewEntry e;
            e.view_id = def.id;
            e.frame_idx = f;
            e.cam = def.cam;
            e.width = spec.width;
            e.height = spec.height;
            entries.push_back(e);

            RgbFrame rgb;
            DepthFrame depth;
            BitMask fg;
            render_scene(spec, def.cam, f, true, rgb, depth, has_fg ? &fg : nullptr);
            const std::string stem = def.id + "_" + std::to_string(f);
            write_png(out_dir / "rgb" / (stem + ".png"), rgb);
            write_pfm(out_dir / "depth" / (stem + ".pfm"), depth);
            write_png(out_dir / "gt" / (stem + ".png"), rgb);
            write_pfm(out_dir / "gt_depth" / (stem + ".pfm"), depth);
            if (has_fg) {
                write_png(out_dir / "mask" / (stem + "_fg.png"), fg);
                RgbFrame bg_rgb;
                DepthFrame bg_depth;
                render_scene(spec, def.cam, f, false, bg_rgb, bg_depth, nullptr);
                write_png(out_dir / "bg_rgb" / (stem + ".png"), bg_rgb);
                write_pfm(out_dir / "bg_depth" / (stem + ".pfm"), bg_depth);
            }
        }
    write_camera_manifest(out_dir / "manifest.json", entries);
}

}  // namespace stitch4d
