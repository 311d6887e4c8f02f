#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <png.h>
#include <json.hpp>

#include "stitch4d/camera.hpp"
#include "stitch4d/stitch.hpp"
#include "stitch4d/types.hpp"

namespace stitch4d {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Atomic writes: everything lands via write-temp-then-rename so partially
// written stage artifacts never exist on disk.
// ---------------------------------------------------------------------------

inline void atomic_write(const fs::path& path, const std::string& bytes) {
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open for writing: " + tmp.string());
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// PFM depth maps: grayscale "Pf", scale -1.0 (little-endian), rows stored
// bottom-to-top. Invalid pixels are encoded as 0; on read, validity is
// (finite && > 0).
// ---------------------------------------------------------------------------

inline void write_pfm(const fs::path& path, const DepthFrame& d) {
    std::string out = "Pf\n" + std::to_string(d.width) + " " + std::to_string(d.height) + "\n-1.0\n";
    out.reserve(out.size() + d.data.size() * 4);
    for (int y = d.height - 1; y >= 0; --y)
        for (int x = 0; x < d.width; ++x) {
            const float v = d.valid_at(x, y) ? d.at(x, y) : 0.0f;
            char buf[4];
            std::memcpy(buf, &v, 4);
            out.append(buf, 4);
        }
    atomic_write(path, out);
}

inline DepthFrame read_pfm(const fs::path& path) {
    const std::string bytes = read_file(path);
    std::istringstream ss(bytes);
    std::string magic;
    int w = 0, h = 0;
    double scale = 0.0;
    ss >> magic >> w >> h >> scale;
    if (magic != "Pf" || w <= 0 || h <= 0) throw std::runtime_error("bad PFM header: " + path.string());
    if (scale >= 0.0) throw std::runtime_error("big-endian PFM not supported: " + path.string());
    ss.get();  // single whitespace after the scale
    const size_t offset = static_cast<size_t>(ss.tellg());
    if (bytes.size() < offset + static_cast<size_t>(w) * h * 4)
        throw std::runtime_error("truncated PFM: " + path.string());
    DepthFrame d(w, h);
    size_t pos = offset;
    for (int y = h - 1; y >= 0; --y)
        for (int x = 0; x < w; ++x, pos += 4) {
            float v;
            std::memcpy(&v, bytes.data() + pos, 4);
            if (std::isfinite(v) && v > 0.0f) d.set(x, y, v);
        }
    return d;
}

// ---------------------------------------------------------------------------
// PNG images via libpng. RGB frames as 8-bit RGB, masks as 8-bit gray 0/255.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string encode_png(int width, int height, int channels, const std::uint8_t* rows_data) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    std::string out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png write error");
    }
    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep data, png_size_t len) {
            auto* s = static_cast<std::string*>(png_get_io_ptr(p));
            s->append(reinterpret_cast<char*>(data), len);
        },
        nullptr);
    png_set_IHDR(png, info, width, height, 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y)
        rows[y] = const_cast<png_bytep>(rows_data + static_cast<size_t>(y) * width * channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

struct PngReadState {
    const std::uint8_t* data;
    size_t size;
    size_t pos;
};

inline void decode_png(const std::string& bytes, int want_channels, int& width, int& height,
                       std::vector<std::uint8_t>& out) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png read error");
    }
    PngReadState state{reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size(), 0};
    png_set_read_fn(png, &state, [](png_structp p, png_bytep data, png_size_t len) {
        auto* s = static_cast<PngReadState*>(png_get_io_ptr(p));
        if (s->pos + len > s->size) png_error(p, "unexpected end of PNG data");
        std::memcpy(data, s->data + s->pos, len);
        s->pos += len;
    });
    png_read_info(png, info);
    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));

    png_set_strip_16(png);
    png_set_packing(png);
    png_set_strip_alpha(png);
    const png_byte color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (want_channels == 3) {
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    } else {
        if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_GRAY_ALPHA)
            png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    png_read_update_info(png, info);

    out.assign(static_cast<size_t>(width) * height * want_channels, 0);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y)
        rows[y] = out.data() + static_cast<size_t>(y) * width * want_channels;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
}

}  // namespace detail

inline void write_png(const fs::path& path, const RgbFrame& img) {
    atomic_write(path, detail::encode_png(img.width, img.height, 3, img.data.data()));
}

inline void write_png(const fs::path& path, const BitMask& mask) {
    std::vector<std::uint8_t> gray(mask.bits.size());
    for (size_t i = 0; i < mask.bits.size(); ++i) gray[i] = mask.bits[i] ? 255 : 0;
    atomic_write(path, detail::encode_png(mask.width, mask.height, 1, gray.data()));
}

inline RgbFrame read_png_rgb(const fs::path& path) {
    RgbFrame img;
    detail::decode_png(read_file(path), 3, img.width, img.height, img.data);
    return img;
}

inline BitMask read_png_mask(const fs::path& path) {
    int w = 0, h = 0;
    std::vector<std::uint8_t> gray;
    detail::decode_png(read_file(path), 1, w, h, gray);
    BitMask m(w, h);
    for (size_t i = 0; i < gray.size(); ++i) m.bits[i] = gray[i] >= 128 ? 1 : 0;
    return m;
}

// ---------------------------------------------------------------------------
// ASCII PLY with a source_pixel vertex property; meshes carry faces.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void ply_vertices(std::string& out, const std::vector<ColoredPoint>& vs) {
    for (const auto& v : vs) {
        out += fmt_double(v.position.x()) + " " + fmt_double(v.position.y()) + " " +
               fmt_double(v.position.z()) + " " + std::to_string(v.color[0]) + " " +
               std::to_string(v.color[1]) + " " + std::to_string(v.color[2]) + " " +
               std::to_string(v.source_pixel) + "\n";
    }
}

inline std::string ply_header(size_t n_vertices, size_t n_faces, bool with_faces) {
    std::string h =
        "ply\nformat ascii 1.0\nelement vertex " + std::to_string(n_vertices) +
        "\nproperty double x\nproperty double y\nproperty double z\nproperty uchar red\n"
        "property uchar green\nproperty uchar blue\nproperty int source_pixel\n";
    if (with_faces)
        h += "element face " + std::to_string(n_faces) + "\nproperty list uchar int vertex_indices\n";
    h += "end_header\n";
    return h;
}

}  // namespace detail

inline void write_ply(const fs::path& path, const ColoredPointCloud& pc) {
    std::string out = detail::ply_header(pc.points.size(), 0, false);
    detail::ply_vertices(out, pc.points);
    atomic_write(path, out);
}

inline void write_ply(const fs::path& path, const LatticeMesh& mesh) {
    std::string out = detail::ply_header(mesh.vertices.size(), mesh.triangles.size(), true);
    detail::ply_vertices(out, mesh.vertices);
    for (const auto& t : mesh.triangles)
        out += "3 " + std::to_string(t[0]) + " " + std::to_string(t[1]) + " " + std::to_string(t[2]) + "\n";
    atomic_write(path, out);
}

/// Reads the ASCII PLY flavor written above (tolerates float/double vertex
/// properties in x y z r g b source_pixel order).
inline void read_ply(const fs::path& path, std::vector<ColoredPoint>& vertices,
                     std::vector<std::array<std::int32_t, 3>>* triangles) {
    std::istringstream ss(read_file(path));
    std::string line;
    size_t n_vertices = 0, n_faces = 0;
    bool in_header = true;
    while (in_header && std::getline(ss, line)) {
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "element") {
            std::string kind;
            size_t n;
            ls >> kind >> n;
            if (kind == "vertex") n_vertices = n;
            if (kind == "face") n_faces = n;
        } else if (tok == "end_header") {
            in_header = false;
        } else if (tok == "format") {
            std::string f;
            ls >> f;
            if (f != "ascii") throw std::runtime_error("only ascii PLY supported: " + path.string());
        }
    }
    vertices.clear();
    vertices.reserve(n_vertices);
    for (size_t i = 0; i < n_vertices; ++i) {
        if (!std::getline(ss, line)) throw std::runtime_error("truncated PLY: " + path.string());
        std::istringstream ls(line);
        ColoredPoint p;
        double x, y, z;
        int r, g, b;
        ls >> x >> y >> z >> r >> g >> b >> p.source_pixel;
        if (!ls) throw std::runtime_error("bad PLY vertex: " + path.string());
        p.position = {x, y, z};
        p.color = {std::uint8_t(r), std::uint8_t(g), std::uint8_t(b)};
        vertices.push_back(p);
    }
    if (triangles) {
        triangles->clear();
        triangles->reserve(n_faces);
        for (size_t i = 0; i < n_faces; ++i) {
            if (!std::getline(ss, line)) throw std::runtime_error("truncated PLY: " + path.string());
            std::istringstream ls(line);
            int n, a, b, c;
            ls >> n >> a >> b >> c;
            if (!ls || n != 3) throw std::runtime_error("only triangle faces supported: " + path.string());
            triangles->push_back({a, b, c});
        }
    }
}

// ---------------------------------------------------------------------------
// Camera manifest: JSON array with one entry per (view, frame).
// ---------------------------------------------------------------------------

struct ViewEntry {
    std::string view_id;
    int frame_idx = 0;
    Camera cam;
    int width = 0, height = 0;
};

inline json camera_to_json(const Camera& c) {
    json j;
    j["fx"] = c.fx;
    j["fy"] = c.fy;
    j["cx"] = c.cx;
    j["cy"] = c.cy;
    std::vector<double> r(9), t(3);
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) r[i * 3 + k] = c.R(i, k);
    for (int i = 0; i < 3; ++i) t[i] = c.tau(i);
    j["R"] = r;
    j["tau"] = t;
    return j;
}

inline Camera camera_from_json(const json& j) {
    Camera c;
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    const auto r = j.at("R").get<std::vector<double>>();
    const auto t = j.at("tau").get<std::vector<double>>();
    if (r.size() != 9 || t.size() != 3) throw std::runtime_error("camera manifest: bad R/tau length");
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) c.R(i, k) = r[i * 3 + k];
    for (int i = 0; i < 3; ++i) c.tau(i) = t[i];
    return c;
}

inline void write_camera_manifest(const fs::path& path, const std::vector<ViewEntry>& entries) {
    json arr = json::array();
    for (const auto& e : entries) {
        json j = camera_to_json(e.cam);
        j["view_id"] = e.view_id;
        j["frame_idx"] = e.frame_idx;
        j["width"] = e.width;
        j["height"] = e.height;
        arr.push_back(j);
    }
    atomic_write(path, arr.dump(2) + "\n");
}

inline std::vector<ViewEntry> read_camera_manifest(const fs::path& path) {
    const json arr = json::parse(read_file(path));
    std::vector<ViewEntry> out;
    for (const auto& j : arr) {
        ViewEntry e;
        e.view_id = j.at("view_id").get<std::string>();
        e.frame_idx = j.at("frame_idx").get<int>();
        e.width = j.at("width").get<int>();
        e.height = j.at("height").get<int>();
        e.cam = camera_from_json(j);
        out.push_back(e);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Asset directory: asset.json manifest plus one PLY per layer.
// ---------------------------------------------------------------------------

inline std::string layer_file_name(const LayerProvenance& p, bool is_mesh) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d", p.frame_idx);
    return std::string(buf) + "_" + p.source_view + "_" + p.target_view + "_s" + std::to_string(p.step) +
           (is_mesh ? "_mesh.ply" : "_points.ply");
}

inline void write_asset(const fs::path& dir, const SceneAsset& asset) {
    fs::create_directories(dir / "layers");
    std::vector<const GeometryLayer*> sorted;
    for (const auto& l : asset.layers) sorted.push_back(&l);
    std::sort(sorted.begin(), sorted.end(),
              [](const GeometryLayer* a, const GeometryLayer* b) { return a->provenance < b->provenance; });
    json manifest = json::array();
    for (const auto* l : sorted) {
        const std::string file = layer_file_name(l->provenance, l->is_mesh());
        json j;
        j["frame_idx"] = l->provenance.frame_idx;
        j["source_view"] = l->provenance.source_view;
        j["target_view"] = l->provenance.target_view;
        j["step"] = l->provenance.step;
        j["kind"] = l->is_mesh() ? "mesh" : "points";
        j["file"] = "layers/" + file;
        j["camera"] = camera_to_json(l->camera);
        manifest.push_back(j);
        const fs::path out = dir / "layers" / file;
        if (fs::exists(out)) continue;  // resumed runs keep prior artifacts
        if (l->is_mesh())
            write_ply(out, std::get<LatticeMesh>(l->geometry));
        else
            write_ply(out, std::get<ColoredPointCloud>(l->geometry));
    }
    atomic_write(dir / "asset.json", manifest.dump(2) + "\n");
}

inline SceneAsset read_asset(const fs::path& dir) {
    const json manifest = json::parse(read_file(dir / "asset.json"));
    SceneAsset asset;
    for (const auto& j : manifest) {
        GeometryLayer layer;
        layer.provenance.frame_idx = j.at("frame_idx").get<int>();
        layer.provenance.source_view = j.at("source_view").get<std::string>();
        layer.provenance.target_view = j.at("target_view").get<std::string>();
        layer.provenance.step = j.at("step").get<int>();
        layer.camera = camera_from_json(j.at("camera"));
        const fs::path file = dir / j.at("file").get<std::string>();
        if (j.at("kind").get<std::string>() == "mesh") {
            LatticeMesh m;
            read_ply(file, m.vertices, &m.triangles);
            layer.geometry = std::move(m);
        } else {
            ColoredPointCloud pc;
            read_ply(file, pc.points, nullptr);
            layer.geometry = std::move(pc);
        }
        asset.layers.push_back(std::move(layer));
    }
    return asset;
}

// ---------------------------------------------------------------------------
// Plain-text key-value config: `key value` or `key = value` per line, '#'
// starts a comment.
// ---------------------------------------------------------------------------

struct KeyValueConfig {
    std::map<std::string, std::string> values;

    static KeyValueConfig parse(const std::string& text) {
        KeyValueConfig cfg;
        std::istringstream ss(text);
        std::string line;
        int line_no = 0;
        while (std::getline(ss, line)) {
            ++line_no;
            const size_t hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            std::string key, rest;
            std::istringstream ls(line);
            if (!(ls >> key)) continue;
            std::getline(ls, rest);
            size_t b = rest.find_first_not_of(" \t=");
            rest = b == std::string::npos ? "" : rest.substr(b);
            const size_t e = rest.find_last_not_of(" \t\r");
            rest = e == std::string::npos ? "" : rest.substr(0, e + 1);
            if (rest.empty()) throw ParseError("config key without value: " + key, line_no);
            cfg.values[key] = rest;
        }
        return cfg;
    }

    static KeyValueConfig load(const fs::path& path) { return parse(read_file(path)); }

    bool has(const std::string& key) const { return values.count(key) != 0; }
    std::string get_string(const std::string& key, const std::string& dflt) const {
        auto it = values.find(key);
        return it == values.end() ? dflt : it->second;
    }
    double get_double(const std::string& key, double dflt) const {
        auto it = values.find(key);
        return it == values.end() ? dflt : std::stod(it->second);
    }
    int get_int(const std::string& key, int dflt) const {
        auto it = values.find(key);
        return it == values.end() ? dflt : std::stoi(it->second);
    }
    bool get_bool(const std::string& key, bool dflt) const {
        auto it = values.find(key);
        if (it == values.end()) return dflt;
        return it->second == "1" || it->second == "true" || it->second == "on" || it->second == "yes";
    }
    std::vector<int> get_int_list(const std::string& key, std::vector<int> dflt) const {
        auto it = values.find(key);
        if (it == values.end()) return dflt;
        std::vector<int> out;
        std::string item;
        std::istringstream ls(it->second);
        while (std::getline(ls, item, ',')) out.push_back(std::stoi(item));
        return out;
    }
};

}  // namespace stitch4d
