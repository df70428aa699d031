#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "effdepth/errors.hpp"

namespace effdepth {

/// Axis-aligned pixel rectangle: origin (x, y), extent w x h.
struct Rect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool operator==(const Rect&) const = default;
};

/// Median / mean-absolute-deviation pair used by scale-shift normalization.
struct NormalizationStats {
    double t = 0.0; // median
    double s = 0.0; // mean absolute deviation around the median
};

/// H x W grid of inverse-depth scalars (float32) with an optional validity
/// mask. Values at masked-valid positions are guaranteed finite; a missing
/// mask means every position is valid. Immutable after construction.
class DepthGrid {
public:
    DepthGrid(int width, int height, std::vector<float> values)
        : DepthGrid(width, height, std::move(values), {}) {}

    DepthGrid(int width, int height, std::vector<float> values,
              std::vector<std::uint8_t> mask)
        : width_(width), height_(height), values_(std::move(values)),
          mask_(std::move(mask)) {
        if (width_ < 1 || height_ < 1) {
            throw InvalidParameterError("DepthGrid: dimensions must be >= 1, got " +
                                        std::to_string(width_) + "x" +
                                        std::to_string(height_));
        }
        const std::size_t n =
            static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
        if (values_.size() != n) {
            throw InvalidParameterError(
                "DepthGrid: value count " + std::to_string(values_.size()) +
                " does not match " + std::to_string(width_) + "x" +
                std::to_string(height_));
        }
        if (!mask_.empty() && mask_.size() != n) {
            throw InvalidParameterError("DepthGrid: mask size mismatch");
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (is_valid_index(i) && !std::isfinite(values_[i])) {
                throw InvalidParameterError(
                    "DepthGrid: non-finite value at valid position " +
                    std::to_string(i));
            }
        }
    }

    static DepthGrid constant(int width, int height, float value) {
        return DepthGrid(width, height,
                         std::vector<float>(static_cast<std::size_t>(width) *
                                                static_cast<std::size_t>(height),
                                            value));
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return values_.size(); }

    float at(int x, int y) const {
        return values_[static_cast<std::size_t>(y) * width_ + x];
    }
    bool is_valid(int x, int y) const {
        return is_valid_index(static_cast<std::size_t>(y) * width_ + x);
    }

    bool has_mask() const { return !mask_.empty(); }
    bool fully_valid() const {
        if (mask_.empty()) return true;
        return std::all_of(mask_.begin(), mask_.end(),
                           [](std::uint8_t m) { return m != 0; });
    }
    std::size_t valid_count() const {
        if (mask_.empty()) return values_.size();
        return static_cast<std::size_t>(
            std::count_if(mask_.begin(), mask_.end(),
                          [](std::uint8_t m) { return m != 0; }));
    }

    const std::vector<float>& values() const { return values_; }
    const std::vector<std::uint8_t>& mask() const { return mask_; }

    bool is_valid_index(std::size_t i) const {
        return mask_.empty() || mask_[i] != 0;
    }

private:
    int width_;
    int height_;
    std::vector<float> values_;
    std::vector<std::uint8_t> mask_; // empty = all valid
};

namespace detail {

inline void require_same_dims(const DepthGrid& a, const DepthGrid& b,
                              const char* op) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw DimensionMismatchError(
            std::string(op) + ": grids differ in size, " +
            std::to_string(a.width()) + "x" + std::to_string(a.height()) +
            " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
    }
}

} // namespace detail

/// Median of a scalar list; even counts average the two middle order
/// statistics. Throws EmptyInputError on an empty list.
inline double median(std::vector<double> values) {
    if (values.empty()) throw EmptyInputError("median: empty input");
    const std::size_t n = values.size();
    const std::size_t mid = n / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    double hi = values[mid];
    if (n % 2 == 1) return hi;
    double lo = *std::max_element(values.begin(), values.begin() + mid);
    return 0.5 * (lo + hi);
}

inline double median(const std::vector<float>& values) {
    return median(std::vector<double>(values.begin(), values.end()));
}

/// Extract rectangle r from the grid; mask is cropped identically.
inline DepthGrid crop(const DepthGrid& grid, const Rect& r) {
    if (r.w < 1 || r.h < 1 || r.x < 0 || r.y < 0 ||
        r.x + r.w > grid.width() || r.y + r.h > grid.height()) {
        throw BoundsError("crop: rect (" + std::to_string(r.x) + "," +
                          std::to_string(r.y) + "," + std::to_string(r.w) + "," +
                          std::to_string(r.h) + ") outside " +
                          std::to_string(grid.width()) + "x" +
                          std::to_string(grid.height()) + " grid");
    }
    std::vector<float> out(static_cast<std::size_t>(r.w) * r.h);
    std::vector<std::uint8_t> out_mask;
    if (grid.has_mask()) out_mask.resize(out.size());
    for (int y = 0; y < r.h; ++y) {
        for (int x = 0; x < r.w; ++x) {
            const std::size_t di = static_cast<std::size_t>(y) * r.w + x;
            out[di] = grid.at(r.x + x, r.y + y);
            if (grid.has_mask())
                out_mask[di] = grid.is_valid(r.x + x, r.y + y) ? 1 : 0;
        }
    }
    return DepthGrid(r.w, r.h, std::move(out), std::move(out_mask));
}

/// Bilinear resampling with half-pixel-centered coordinates and clamp-to-edge
/// borders. Requires a fully valid grid: interpolation across holes is not
/// defined.
inline DepthGrid resize_bilinear(const DepthGrid& grid, int new_w, int new_h) {
    if (new_w < 1 || new_h < 1) {
        throw InvalidParameterError("resize_bilinear: target dims must be >= 1");
    }
    if (!grid.fully_valid()) {
        throw UnsupportedInputError(
            "resize_bilinear: grid has invalid pixels; resampling with holes "
            "is not defined");
    }
    const int sw = grid.width();
    const int sh = grid.height();
    const double sx_scale = static_cast<double>(sw) / new_w;
    const double sy_scale = static_cast<double>(sh) / new_h;
    std::vector<float> out(static_cast<std::size_t>(new_w) * new_h);
    for (int y = 0; y < new_h; ++y) {
        double sy = (y + 0.5) * sy_scale - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(sh - 1));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, sh - 1);
        const double fy = sy - y0;
        for (int x = 0; x < new_w; ++x) {
            double sx = (x + 0.5) * sx_scale - 0.5;
            sx = std::clamp(sx, 0.0, static_cast<double>(sw - 1));
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, sw - 1);
            const double fx = sx - x0;
            const double top =
                (1.0 - fx) * grid.at(x0, y0) + fx * grid.at(x1, y0);
            const double bot =
                (1.0 - fx) * grid.at(x0, y1) + fx * grid.at(x1, y1);
            out[static_cast<std::size_t>(y) * new_w + x] =
                static_cast<float>((1.0 - fy) * top + fy * bot);
        }
    }
    return DepthGrid(new_w, new_h, std::move(out));
}

namespace detail {

inline std::vector<double> valid_values(const DepthGrid& grid) {
    std::vector<double> vals;
    vals.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid.is_valid_index(i)) vals.push_back(grid.values()[i]);
    }
    return vals;
}

/// Median + mean absolute deviation of the values at the given positions.
inline NormalizationStats ssi_stats(std::vector<double> vals) {
    if (vals.empty()) throw EmptyInputError("normalize_ssi: no valid pixels");
    NormalizationStats st;
    st.t = median(vals);
    double acc = 0.0;
    for (double v : vals) acc += std::abs(v - st.t);
    st.s = acc / static_cast<double>(vals.size());
    return st;
}

} // namespace detail

/// Shift by the valid-pixel median and divide by the mean absolute deviation,
/// so the output has median 0 and mean |.| = 1 over valid pixels. Invalid
/// pixels pass through untouched along with the mask.
inline std::pair<DepthGrid, NormalizationStats>
normalize_ssi(const DepthGrid& grid) {
    NormalizationStats st = detail::ssi_stats(detail::valid_values(grid));
    if (st.s == 0.0) {
        throw DegenerateScaleError(
            "normalize_ssi: constant grid, scale s(d) = 0");
    }
    std::vector<float> out(grid.values());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (grid.is_valid_index(i)) {
            out[i] = static_cast<float>((out[i] - st.t) / st.s);
        }
    }
    return {DepthGrid(grid.width(), grid.height(), std::move(out),
                      grid.mask()),
            st};
}

/// Affinely map valid values onto [-1, 1]: min -> -1, max -> +1 exactly.
inline DepthGrid normalize_minmax(const DepthGrid& grid) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    std::size_t n_valid = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!grid.is_valid_index(i)) continue;
        const double v = grid.values()[i];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        ++n_valid;
    }
    if (n_valid == 0 || hi <= lo) {
        throw DegenerateRangeError(
            "normalize_minmax: needs at least two distinct valid values");
    }
    const double span = hi - lo;
    std::vector<float> out(grid.values());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!grid.is_valid_index(i)) continue;
        const double v = out[i];
        if (v == lo) {
            out[i] = -1.0f;
        } else if (v == hi) {
            out[i] = 1.0f;
        } else {
            out[i] = static_cast<float>(2.0 * (v - lo) / span - 1.0);
        }
    }
    return DepthGrid(grid.width(), grid.height(), std::move(out), grid.mask());
}

} // namespace effdepth
