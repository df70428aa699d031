#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "effdepth/errors.hpp"
#include "effdepth/grid.hpp"
#include "effdepth/tiling.hpp"

namespace effdepth {

struct PixelCoord {
    int x = 0;
    int y = 0;
    bool operator==(const PixelCoord&) const = default;
};

enum class OrdinalRelation { A_CLOSER, B_CLOSER };

/// Human ordinal label: which of two pixels is closer to the camera.
struct OrdinalPair {
    PixelCoord a;
    PixelCoord b;
    OrdinalRelation relation = OrdinalRelation::A_CLOSER;
};

enum class AlignMode { LEAST_SQUARES_INVDEPTH, NONE };

struct EvalConfig {
    double delta_threshold = 1.25;
    /// Optional per-dataset maximum usable depth; ground-truth pixels whose
    /// depth exceeds it are dropped from the evaluation mask.
    std::optional<double> depth_cap;
    AlignMode align = AlignMode::LEAST_SQUARES_INVDEPTH;
    /// Relative inverse-depth difference under which a pair is predicted
    /// "equal"; ordinal labels are strict, so "equal" always disagrees.
    double whdr_margin = 0.0;
};

struct MetricsReport {
    double abs_rel = 0.0;
    double one_minus_delta1_pct = 0.0;
    std::optional<double> whdr;
    std::size_t n_valid = 0;
    AffineAlignment alignment;
};

namespace detail {

inline void validate_eval_config(const EvalConfig& cfg) {
    if (!(cfg.delta_threshold > 1.0)) {
        throw InvalidParameterError(
            "EvalConfig: delta_threshold must be > 1, got " +
            std::to_string(cfg.delta_threshold));
    }
    if (!(cfg.whdr_margin >= 0.0)) {
        throw InvalidParameterError("EvalConfig: whdr_margin must be >= 0");
    }
    if (cfg.depth_cap && !(*cfg.depth_cap > 0.0)) {
        throw InvalidParameterError("EvalConfig: depth_cap must be > 0");
    }
}

// Evaluation mask: jointly valid pixels with positive ground-truth inverse
// depth, restricted by the depth cap (applied to GT depth) when present.
inline std::vector<std::uint8_t> eval_mask(const DepthGrid& pred,
                                           const DepthGrid& gt,
                                           const EvalConfig& cfg) {
    std::vector<std::uint8_t> mask(gt.size(), 0);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!pred.is_valid_index(i) || !gt.is_valid_index(i)) continue;
        const double g = gt.values()[i];
        if (!(g > 0.0)) continue;
        if (cfg.depth_cap && 1.0 / g > *cfg.depth_cap) continue;
        mask[i] = 1;
    }
    return mask;
}

inline std::size_t count_mask(const std::vector<std::uint8_t>& mask) {
    std::size_t n = 0;
    for (std::uint8_t m : mask) n += m;
    return n;
}

// Inverse depth -> depth with the same positive floor the alignment clamp
// uses, so inversion is always defined.
inline constexpr double kAlignFloor = 1e-8;

inline double to_depth(double inv) { return 1.0 / std::max(inv, kAlignFloor); }

} // namespace detail

/// Fit pred onto gt by least-squares scale/shift in inverse-depth space over
/// the evaluation mask, then clamp below at a small positive floor so the
/// result can be inverted to depth. NONE mode returns pred unchanged. The
/// fitted (s, o) is also available via solve_alignment on the masked grids.
inline DepthGrid align_prediction(const DepthGrid& pred, const DepthGrid& gt,
                                  const EvalConfig& cfg,
                                  AffineAlignment* fitted = nullptr) {
    detail::require_same_dims(pred, gt, "align_prediction");
    detail::validate_eval_config(cfg);
    if (cfg.align == AlignMode::NONE) {
        if (fitted) *fitted = AffineAlignment{1.0, 0.0};
        return pred;
    }
    std::vector<std::uint8_t> mask = detail::eval_mask(pred, gt, cfg);
    if (detail::count_mask(mask) == 0) {
        throw EmptyInputError("align_prediction: empty evaluation mask");
    }
    const DepthGrid masked_pred(pred.width(), pred.height(),
                                std::vector<float>(pred.values()), mask);
    const DepthGrid masked_gt(gt.width(), gt.height(),
                              std::vector<float>(gt.values()),
                              std::move(mask));
    double mean_p = 0.0, var_p = 0.0;
    {
        std::size_t n = 0;
        for (std::size_t i = 0; i < masked_pred.size(); ++i) {
            if (!masked_pred.is_valid_index(i)) continue;
            mean_p += masked_pred.values()[i];
            ++n;
        }
        mean_p /= static_cast<double>(n);
        for (std::size_t i = 0; i < masked_pred.size(); ++i) {
            if (!masked_pred.is_valid_index(i)) continue;
            const double d = masked_pred.values()[i] - mean_p;
            var_p += d * d;
        }
        var_p /= static_cast<double>(n);
    }
    if (var_p < 1e-8) {
        throw DegenerateScaleError(
            "align_prediction: prediction is constant over the evaluation mask");
    }
    const AffineAlignment a = solve_alignment(masked_gt, masked_pred);
    if (fitted) *fitted = a;
    std::vector<float> out(pred.values());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!pred.is_valid_index(i)) continue;
        out[i] = static_cast<float>(
            std::max(a.s * out[i] + a.o, detail::kAlignFloor));
    }
    if (pred.has_mask()) {
        return DepthGrid(pred.width(), pred.height(), std::move(out),
                         pred.mask());
    }
    return DepthGrid(pred.width(), pred.height(), std::move(out));
}

/// Mean absolute relative depth error |depth_pred - depth_gt| / depth_gt
/// over the evaluation mask, with depth = 1/inverse-depth.
inline double abs_rel(const DepthGrid& pred_aligned, const DepthGrid& gt,
                      const EvalConfig& cfg = {}) {
    detail::require_same_dims(pred_aligned, gt, "abs_rel");
    detail::validate_eval_config(cfg);
    const std::vector<std::uint8_t> mask =
        detail::eval_mask(pred_aligned, gt, cfg);
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!mask[i]) continue;
        const double dp = detail::to_depth(pred_aligned.values()[i]);
        const double dg = 1.0 / gt.values()[i];
        acc += std::abs(dp - dg) / dg;
        ++n;
    }
    if (n == 0) throw EmptyInputError("abs_rel: empty evaluation mask");
    return acc / static_cast<double>(n);
}

/// 100 * (1 - delta1), where delta1 is the fraction of masked pixels whose
/// depth ratio max(pred/gt, gt/pred) stays under cfg.delta_threshold.
inline double delta1(const DepthGrid& pred_aligned, const DepthGrid& gt,
                     const EvalConfig& cfg = {}) {
    detail::require_same_dims(pred_aligned, gt, "delta1");
    detail::validate_eval_config(cfg);
    const std::vector<std::uint8_t> mask =
        detail::eval_mask(pred_aligned, gt, cfg);
    std::size_t n = 0, under = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!mask[i]) continue;
        const double dp = detail::to_depth(pred_aligned.values()[i]);
        const double dg = 1.0 / gt.values()[i];
        const double ratio = std::max(dp / dg, dg / dp);
        if (ratio < cfg.delta_threshold) ++under;
        ++n;
    }
    if (n == 0) throw EmptyInputError("delta1: empty evaluation mask");
    return 100.0 * (1.0 - static_cast<double>(under) / static_cast<double>(n));
}

/// Disagreement rate between predicted pixel-pair orderings and ordinal
/// labels. Ordering uses raw inverse depth, so any monotone gauge gives the
/// same answer at margin 0; a pair predicted "equal" (difference within the
/// margin) always counts as a disagreement.
inline double whdr(const DepthGrid& pred, const std::vector<OrdinalPair>& pairs,
                   const EvalConfig& cfg = {}) {
    detail::validate_eval_config(cfg);
    if (pairs.empty()) throw EmptyInputError("whdr: empty pair list");
    auto check = [&](const PixelCoord& c) {
        if (c.x < 0 || c.x >= pred.width() || c.y < 0 || c.y >= pred.height()) {
            throw BoundsError("whdr: pair coordinate (" + std::to_string(c.x) +
                              ", " + std::to_string(c.y) + ") outside " +
                              std::to_string(pred.width()) + "x" +
                              std::to_string(pred.height()) + " grid");
        }
    };
    std::size_t disagree = 0;
    for (const OrdinalPair& p : pairs) {
        check(p.a);
        check(p.b);
        if (p.a == p.b) {
            throw InvalidParameterError("whdr: pair references one pixel twice");
        }
        const double va = pred.at(p.a.x, p.a.y);
        const double vb = pred.at(p.b.x, p.b.y);
        bool match = false;
        if (va - vb > cfg.whdr_margin * std::abs(vb)) {
            match = p.relation == OrdinalRelation::A_CLOSER;
        } else if (vb - va > cfg.whdr_margin * std::abs(va)) {
            match = p.relation == OrdinalRelation::B_CLOSER;
        } // predicted equal: labels are strict, never a match
        if (!match) ++disagree;
    }
    return static_cast<double>(disagree) / static_cast<double>(pairs.size());
}

/// One sample end to end: align, then the scalar metrics; WHDR only when
/// pair labels are supplied.
inline MetricsReport evaluate_sample(const DepthGrid& pred, const DepthGrid& gt,
                                     const std::vector<OrdinalPair>* pairs,
                                     const EvalConfig& cfg = {}) {
    MetricsReport r;
    const DepthGrid aligned = align_prediction(pred, gt, cfg, &r.alignment);
    r.abs_rel = abs_rel(aligned, gt, cfg);
    r.one_minus_delta1_pct = delta1(aligned, gt, cfg);
    r.n_valid = detail::count_mask(detail::eval_mask(aligned, gt, cfg));
    if (pairs) r.whdr = whdr(aligned, *pairs, cfg);
    return r;
}

} // namespace effdepth
