#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stitch4d {

// ---------------------------------------------------------------------------
// Error types. Contract violations use std::invalid_argument directly; the
// named types below exist where callers are expected to branch on the failure.
// ---------------------------------------------------------------------------

struct DegenerateProjectionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoAnchorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingDepthError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ProvenanceConflictError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExchangeTimeoutError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Parse failures carry the offending line for CLI reporting.
struct ParseError : std::runtime_error {
    int line = 0;
    ParseError(const std::string& msg, int line_no)
        : std::runtime_error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
};

// ---------------------------------------------------------------------------
// Small dense 2D grid used for scalar fields (SATs, scale/shift grids, ...).
// ---------------------------------------------------------------------------

template <typename T>
struct Image2D {
    int width = 0;
    int height = 0;
    std::vector<T> data;

    Image2D() = default;
    Image2D(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    T& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    const T& at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    size_t size() const { return data.size(); }
};

namespace detail {

inline bool nearly_equal(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// Summed-area table with one row/column of leading zeros; query in O(1).
struct Sat {
    int width = 0, height = 0;
    std::vector<double> acc;  // (width+1) x (height+1)

    Sat() = default;
    template <typename F>
    Sat(int w, int h, F value) : width(w), height(h), acc(static_cast<size_t>(w + 1) * (h + 1), 0.0) {
        for (int y = 0; y < h; ++y) {
            double row = 0.0;
            for (int x = 0; x < w; ++x) {
                row += value(x, y);
                acc[static_cast<size_t>(y + 1) * (w + 1) + (x + 1)] =
                    acc[static_cast<size_t>(y) * (w + 1) + (x + 1)] + row;
            }
        }
    }

    // Inclusive rectangle sum over [x0,x1] x [y0,y1], clamped to bounds.
    double sum(int x0, int y0, int x1, int y1) const {
        x0 = std::max(x0, 0);
        y0 = std::max(y0, 0);
        x1 = std::min(x1, width - 1);
        y1 = std::min(y1, height - 1);
        if (x0 > x1 || y0 > y1) return 0.0;
        const int w1 = width + 1;
        return acc[static_cast<size_t>(y1 + 1) * w1 + (x1 + 1)] -
               acc[static_cast<size_t>(y0) * w1 + (x1 + 1)] -
               acc[static_cast<size_t>(y1 + 1) * w1 + x0] +
               acc[static_cast<size_t>(y0) * w1 + x0];
    }
};

}  // namespace detail
}  // namespace stitch4d
