#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "effdepth/errors.hpp"
#include "effdepth/grid.hpp"

namespace effdepth {

/// Knobs for patch-based boosting. Defaults follow the published recipe:
/// 640x640 patches, 320 px overlap, reference pass at longest side 518,
/// and no boosting at all unless one image side exceeds 960.
struct BoostConfig {
    int patch = 640;
    int overlap = 320;
    int reference_size = 518;
    int passthrough_max_side = 960;
    double degenerate_variance_eps = 1e-8;
};

/// Per-patch scale/offset correction: aligned = s * patch + o.
struct AffineAlignment {
    double s = 1.0;
    double o = 0.0;
};

/// Tile placement along one axis. All tiles on an axis share one extent
/// (min(patch, axis length)); starts are ascending and the last tile always
/// ends flush with the axis.
struct AxisTiles {
    std::vector<int> starts;
    int len = 0;
};

/// A full 2-D tiling: the cross product of the two axis placements, listed
/// row-major (y outer, x inner), plus everything needed to evaluate the
/// separable blend ramps.
struct TilePlan {
    int image_w = 0;
    int image_h = 0;
    int patch = 640;
    int overlap = 320;
    AxisTiles x;
    AxisTiles y;
    std::vector<Rect> tiles;
};

namespace detail {

inline void validate_boost_config(const BoostConfig& cfg) {
    if (cfg.patch < 1) {
        throw InvalidParameterError("BoostConfig: patch must be >= 1, got " +
                                    std::to_string(cfg.patch));
    }
    if (cfg.overlap <= 0 || cfg.overlap >= cfg.patch) {
        throw InvalidParameterError(
            "BoostConfig: requires 0 < overlap < patch, got overlap " +
            std::to_string(cfg.overlap) + ", patch " +
            std::to_string(cfg.patch));
    }
    if (cfg.reference_size < 1) {
        throw InvalidParameterError(
            "BoostConfig: reference_size must be >= 1, got " +
            std::to_string(cfg.reference_size));
    }
    if (!(cfg.degenerate_variance_eps >= 0.0)) {
        throw InvalidParameterError(
            "BoostConfig: degenerate_variance_eps must be >= 0");
    }
}

// Single-axis placement: one tile if the axis fits inside a patch, otherwise
// n = ceil((L - patch)/(patch - overlap)) + 1 tiles spread evenly via
// start_i = round(i * (L - patch)/(n - 1)). Even spreading keeps every
// consecutive overlap >= the configured overlap and lands the last tile
// flush with the axis end.
inline AxisTiles plan_axis(int length, int patch, int overlap) {
    AxisTiles axis;
    if (length <= patch) {
        axis.len = length;
        axis.starts = {0};
        return axis;
    }
    axis.len = patch;
    const int span = length - patch;
    const int stride = patch - overlap;
    const int n = static_cast<int>((span + stride - 1) / stride) + 1;
    axis.starts.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        axis.starts[static_cast<std::size_t>(i)] = static_cast<int>(
            std::llround(static_cast<double>(i) * span / (n - 1)));
    }
    return axis;
}

} // namespace detail

inline TilePlan plan_tiles(int image_w, int image_h, const BoostConfig& cfg) {
    if (image_w < 1 || image_h < 1) {
        throw InvalidParameterError("plan_tiles: image dimensions must be >= 1");
    }
    detail::validate_boost_config(cfg);
    TilePlan plan;
    plan.image_w = image_w;
    plan.image_h = image_h;
    plan.patch = cfg.patch;
    plan.overlap = cfg.overlap;
    plan.x = detail::plan_axis(image_w, cfg.patch, cfg.overlap);
    plan.y = detail::plan_axis(image_h, cfg.patch, cfg.overlap);
    plan.tiles.reserve(plan.x.starts.size() * plan.y.starts.size());
    for (int sy : plan.y.starts) {
        for (int sx : plan.x.starts) {
            plan.tiles.push_back(Rect{sx, sy, plan.x.len, plan.y.len});
        }
    }
    return plan;
}

/// Raw (unnormalized) tent weight of an axis tile [start, start+len) at
/// pixel x: the distance from the pixel center to the nearer tile edge.
/// Strictly positive for every pixel the tile covers.
inline double tent_weight(int start, int len, int x) {
    const double c = x + 0.5;
    return std::min(c - start, start + len - c);
}

/// Normalized per-axis blend weights: result[i][x - start_i] is tile i's
/// weight at axis pixel x, with the weights of all covering tiles summing
/// to 1 at every pixel. The 2-D blend weight of tile (ix, iy) is the
/// product wx[ix] * wy[iy]; because the tile set is a full cross product,
/// the products inherit the per-pixel partition of unity.
inline std::vector<std::vector<double>>
normalized_axis_weights(const AxisTiles& axis, int length) {
    std::vector<double> total(static_cast<std::size_t>(length), 0.0);
    for (int start : axis.starts) {
        for (int x = start; x < start + axis.len; ++x) {
            total[static_cast<std::size_t>(x)] += tent_weight(start, axis.len, x);
        }
    }
    std::vector<std::vector<double>> weights(axis.starts.size());
    for (std::size_t i = 0; i < axis.starts.size(); ++i) {
        const int start = axis.starts[i];
        weights[i].resize(static_cast<std::size_t>(axis.len));
        for (int x = start; x < start + axis.len; ++x) {
            weights[i][static_cast<std::size_t>(x - start)] =
                tent_weight(start, axis.len, x) / total[static_cast<std::size_t>(x)];
        }
    }
    return weights;
}

/// Normalized blend weight of one tile at an image pixel (0 outside the
/// tile). Convenience scalar form of normalized_axis_weights for spot
/// checks; blend() uses the precomputed arrays.
inline double blend_weight(const TilePlan& plan, std::size_t tile_index,
                           int x, int y) {
    if (tile_index >= plan.tiles.size()) {
        throw BoundsError("blend_weight: tile index out of range");
    }
    const std::size_t nx = plan.x.starts.size();
    const std::size_t ix = tile_index % nx;
    const std::size_t iy = tile_index / nx;
    const Rect& t = plan.tiles[tile_index];
    if (x < t.x || x >= t.x + t.w || y < t.y || y >= t.y + t.h) return 0.0;
    double tx = 0.0;
    for (int start : plan.x.starts) {
        if (x >= start && x < start + plan.x.len)
            tx += tent_weight(start, plan.x.len, x);
    }
    double ty = 0.0;
    for (int start : plan.y.starts) {
        if (y >= start && y < start + plan.y.len)
            ty += tent_weight(start, plan.y.len, y);
    }
    return (tent_weight(plan.x.starts[ix], plan.x.len, x) / tx) *
           (tent_weight(plan.y.starts[iy], plan.y.len, y) / ty);
}

/// Least-squares (s, o) minimizing sum((ref - (s*patch + o))^2) over jointly
/// valid pixels, solved via the centered normal equations in double. A patch
/// whose value variance falls below eps makes the system singular; the
/// fallback keeps the patch as-is and matches means (s = 1, o = mean(ref) -
/// mean(patch)).
inline AffineAlignment solve_alignment(const DepthGrid& reference,
                                       const DepthGrid& patch,
                                       double degenerate_variance_eps = 1e-8) {
    detail::require_same_dims(reference, patch, "solve_alignment");
    double sum_r = 0.0, sum_p = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < patch.size(); ++i) {
        if (!patch.is_valid_index(i) || !reference.is_valid_index(i)) continue;
        sum_r += reference.values()[i];
        sum_p += patch.values()[i];
        ++n;
    }
    if (n == 0) throw EmptyInputError("solve_alignment: empty joint valid mask");
    const double mean_r = sum_r / static_cast<double>(n);
    const double mean_p = sum_p / static_cast<double>(n);
    double spp = 0.0, spr = 0.0;
    for (std::size_t i = 0; i < patch.size(); ++i) {
        if (!patch.is_valid_index(i) || !reference.is_valid_index(i)) continue;
        const double dp = patch.values()[i] - mean_p;
        const double dr = reference.values()[i] - mean_r;
        spp += dp * dp;
        spr += dp * dr;
    }
    if (spp / static_cast<double>(n) < degenerate_variance_eps) {
        return AffineAlignment{1.0, mean_r - mean_p};
    }
    AffineAlignment a;
    a.s = spr / spp;
    a.o = mean_r - a.s * mean_p;
    return a;
}

/// Apply aligned = s * grid + o pixelwise (mask passes through).
inline DepthGrid apply_alignment(const DepthGrid& grid,
                                 const AffineAlignment& a) {
    std::vector<float> out(grid.values());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (grid.is_valid_index(i))
            out[i] = static_cast<float>(a.s * out[i] + a.o);
    }
    if (grid.has_mask()) {
        return DepthGrid(grid.width(), grid.height(), std::move(out),
                         grid.mask());
    }
    return DepthGrid(grid.width(), grid.height(), std::move(out));
}

/// Weighted sum of the aligned patches under the plan's separable ramps.
/// Weights are convex at every pixel, so each output value stays within the
/// range of the patch values contributing there.
inline DepthGrid blend(const TilePlan& plan,
                       const std::vector<DepthGrid>& patches) {
    if (patches.size() != plan.tiles.size()) {
        throw DimensionMismatchError(
            "blend: expected " + std::to_string(plan.tiles.size()) +
            " patches, got " + std::to_string(patches.size()));
    }
    for (std::size_t k = 0; k < patches.size(); ++k) {
        const Rect& t = plan.tiles[k];
        if (patches[k].width() != t.w || patches[k].height() != t.h) {
            throw DimensionMismatchError(
                "blend: patch " + std::to_string(k) + " is " +
                std::to_string(patches[k].width()) + "x" +
                std::to_string(patches[k].height()) + ", tile wants " +
                std::to_string(t.w) + "x" + std::to_string(t.h));
        }
        if (!patches[k].fully_valid()) {
            throw UnsupportedInputError("blend: patch " + std::to_string(k) +
                                        " has invalid pixels");
        }
    }
    const auto wx = normalized_axis_weights(plan.x, plan.image_w);
    const auto wy = normalized_axis_weights(plan.y, plan.image_h);
    const std::size_t nx = plan.x.starts.size();
    std::vector<double> acc(
        static_cast<std::size_t>(plan.image_w) * plan.image_h, 0.0);
    for (std::size_t k = 0; k < patches.size(); ++k) {
        const Rect& t = plan.tiles[k];
        const auto& col_w = wx[k % nx];
        const auto& row_w = wy[k / nx];
        for (int y = 0; y < t.h; ++y) {
            const double wr = row_w[static_cast<std::size_t>(y)];
            const std::size_t row =
                static_cast<std::size_t>(t.y + y) * plan.image_w + t.x;
            for (int x = 0; x < t.w; ++x) {
                acc[row + x] += wr * col_w[static_cast<std::size_t>(x)] *
                                patches[k].at(x, y);
            }
        }
    }
    std::vector<float> out(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i)
        out[i] = static_cast<float>(acc[i]);
    return DepthGrid(plan.image_w, plan.image_h, std::move(out));
}

} // namespace effdepth
