#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "effdepth/errors.hpp"
#include "effdepth/grid.hpp"

namespace effdepth {

/// Weights for the three-term objective; defaults are the trained values.
struct LossWeights {
    double alpha_l = 0.4;
    double alpha_edge = 0.2;
    double alpha_lpips = 0.4;
};

/// Pluggable perceptual distance over two grids normalized to [-1, 1].
/// Must return 0 for identical inputs and a finite nonnegative value
/// otherwise. A channel-replicating adapter, not this module, is responsible
/// for feeding single-channel depth to models that expect RGB.
using PerceptualBackend =
    std::function<double(const DepthGrid&, const DepthGrid&)>;

/// Trivial built-in perceptual stand-in: mean absolute difference over
/// jointly valid pixels. Useful for wiring and regression tests.
inline double mean_abs_diff_backend(const DepthGrid& a, const DepthGrid& b) {
    detail::require_same_dims(a, b, "mean_abs_diff_backend");
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a.is_valid_index(i) || !b.is_valid_index(i)) continue;
        acc += std::abs(static_cast<double>(a.values()[i]) - b.values()[i]);
        ++n;
    }
    if (n == 0) throw EmptyInputError("mean_abs_diff_backend: empty joint mask");
    return acc / static_cast<double>(n);
}

namespace detail {

// Joint-mask scale/shift stats of one grid, accumulated in double.
inline NormalizationStats joint_ssi_stats(const DepthGrid& g,
                                          const DepthGrid& other) {
    std::vector<double> vals;
    vals.reserve(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g.is_valid_index(i) && other.is_valid_index(i)) {
            vals.push_back(g.values()[i]);
        }
    }
    if (vals.empty()) throw EmptyInputError("loss: empty joint valid mask");
    return ssi_stats(std::move(vals));
}

inline void require_nondegenerate(const NormalizationStats& st,
                                  const char* which) {
    if (st.s == 0.0) {
        throw DegenerateScaleError(std::string("loss: ") + which +
                                   " grid is constant over the joint mask");
    }
}

} // namespace detail

/// Scale/shift-invariant mean absolute error: both grids are median/MAD
/// normalized over the joint valid mask, then compared pixelwise. All
/// intermediates are carried in double so affine-related pairs land well
/// below the 1e-6 invariance bound.
inline double loss_ssi(const DepthGrid& pred, const DepthGrid& gt) {
    detail::require_same_dims(pred, gt, "loss_ssi");
    const NormalizationStats sp = detail::joint_ssi_stats(pred, gt);
    const NormalizationStats sg = detail::joint_ssi_stats(gt, pred);
    detail::require_nondegenerate(sp, "pred");
    detail::require_nondegenerate(sg, "gt");
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!pred.is_valid_index(i) || !gt.is_valid_index(i)) continue;
        const double p = (pred.values()[i] - sp.t) / sp.s;
        const double g = (gt.values()[i] - sg.t) / sg.s;
        acc += std::abs(p - g);
        ++n;
    }
    return acc / static_cast<double>(n);
}

namespace detail {

// 3x3 kernel [[-1,-1,-1],[-1,8,-1],[-1,-1,-1]] with replicate padding,
// evaluated on a double-valued plane.
inline std::vector<double> laplacian_plane(const std::vector<double>& v, int w,
                                           int h) {
    std::vector<double> out(v.size());
    for (int y = 0; y < h; ++y) {
        const int ym = std::max(y - 1, 0);
        const int yp = std::min(y + 1, h - 1);
        for (int x = 0; x < w; ++x) {
            const int xm = std::max(x - 1, 0);
            const int xp = std::min(x + 1, w - 1);
            const double center = v[static_cast<std::size_t>(y) * w + x];
            double ring = v[static_cast<std::size_t>(ym) * w + xm] +
                          v[static_cast<std::size_t>(ym) * w + x] +
                          v[static_cast<std::size_t>(ym) * w + xp] +
                          v[static_cast<std::size_t>(y) * w + xm] +
                          v[static_cast<std::size_t>(y) * w + xp] +
                          v[static_cast<std::size_t>(yp) * w + xm] +
                          v[static_cast<std::size_t>(yp) * w + x] +
                          v[static_cast<std::size_t>(yp) * w + xp];
            out[static_cast<std::size_t>(y) * w + x] = 8.0 * center - ring;
        }
    }
    return out;
}

inline void require_edge_input(const DepthGrid& g, const char* op) {
    if (g.width() < 3 || g.height() < 3) {
        throw UnsupportedInputError(std::string(op) +
                                    ": grid smaller than the 3x3 kernel");
    }
    if (!g.fully_valid()) {
        throw UnsupportedInputError(std::string(op) +
                                    ": masked holes are not supported");
    }
}

} // namespace detail

/// Correlation with the standard 3x3 Laplacian kernel, replicate padding.
/// Output dimensions equal input dimensions.
inline DepthGrid laplacian(const DepthGrid& grid) {
    detail::require_edge_input(grid, "laplacian");
    std::vector<double> plane(grid.values().begin(), grid.values().end());
    std::vector<double> lap =
        detail::laplacian_plane(plane, grid.width(), grid.height());
    std::vector<float> out(lap.size());
    for (std::size_t i = 0; i < lap.size(); ++i)
        out[i] = static_cast<float>(lap[i]);
    return DepthGrid(grid.width(), grid.height(), std::move(out));
}

/// RMS difference between the Laplacians of the scale/shift-normalized maps.
/// Normalizing first keeps edge magnitudes comparable across inputs with
/// arbitrary affine gauges.
inline double loss_edge(const DepthGrid& pred, const DepthGrid& gt) {
    detail::require_same_dims(pred, gt, "loss_edge");
    detail::require_edge_input(pred, "loss_edge");
    detail::require_edge_input(gt, "loss_edge");
    const int w = pred.width();
    const int h = pred.height();
    const NormalizationStats sp = detail::joint_ssi_stats(pred, gt);
    const NormalizationStats sg = detail::joint_ssi_stats(gt, pred);
    detail::require_nondegenerate(sp, "pred");
    detail::require_nondegenerate(sg, "gt");
    std::vector<double> np(pred.size());
    std::vector<double> ng(gt.size());
    for (std::size_t i = 0; i < np.size(); ++i) {
        np[i] = (pred.values()[i] - sp.t) / sp.s;
        ng[i] = (gt.values()[i] - sg.t) / sg.s;
    }
    const std::vector<double> lp = detail::laplacian_plane(np, w, h);
    const std::vector<double> lg = detail::laplacian_plane(ng, w, h);
    double acc = 0.0;
    for (std::size_t i = 0; i < lp.size(); ++i) {
        const double d = lp[i] - lg[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(lp.size()));
}

/// Perceptual distance between the min-max normalized maps ([-1, 1]).
inline double loss_lpips(const DepthGrid& pred, const DepthGrid& gt,
                         const PerceptualBackend& backend) {
    detail::require_same_dims(pred, gt, "loss_lpips");
    return backend(normalize_minmax(pred), normalize_minmax(gt));
}

/// The three loss components plus their weighted combination.
struct LossBreakdown {
    double l = 0.0;
    double edge = 0.0;
    double lpips = 0.0;
    double total = 0.0;
};

inline LossBreakdown combine(double l, double edge, double lpips,
                             const LossWeights& w = {}) {
    LossBreakdown b;
    b.l = l;
    b.edge = edge;
    b.lpips = lpips;
    b.total = w.alpha_l * l + w.alpha_edge * edge + w.alpha_lpips * lpips;
    return b;
}

inline LossBreakdown loss_total(const DepthGrid& pred, const DepthGrid& gt,
                                const PerceptualBackend& backend,
                                const LossWeights& w = {}) {
    return combine(loss_ssi(pred, gt), loss_edge(pred, gt),
                   loss_lpips(pred, gt, backend), w);
}

} // namespace effdepth
