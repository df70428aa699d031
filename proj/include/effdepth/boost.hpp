#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "effdepth/backends.hpp"
#include "effdepth/errors.hpp"
#include "effdepth/grid.hpp"
#include "effdepth/tiling.hpp"

namespace effdepth {

struct BoostResult {
    DepthGrid depth = DepthGrid::constant(1, 1, 0.0f);
    TilePlan plan;
    /// True when the image was small enough to skip boosting entirely;
    /// depth is then bit-identical to one whole-image backend call.
    bool passthrough = false;
    /// Per-tile corrections, in plan.tiles order (empty on pass-through).
    std::vector<AffineAlignment> alignments;
    int backend_calls = 0;
};

namespace detail {

inline void check_backend_dims(const DepthGrid& g, int w, int h,
                               const std::string& what) {
    if (g.width() != w || g.height() != h) {
        throw BackendError(what + ": backend returned " +
                           std::to_string(g.width()) + "x" +
                           std::to_string(g.height()) + ", requested " +
                           std::to_string(w) + "x" + std::to_string(h));
    }
}

// Reference inference resolution: longest side pinned to the backend's
// native size (or the config's), the other side scaled to preserve aspect
// ratio, both at least 1.
inline std::pair<int, int> reference_dims(int w, int h, int long_side) {
    if (w >= h) {
        const int rh = std::max(
            1, static_cast<int>(std::llround(static_cast<double>(h) *
                                             long_side / w)));
        return {long_side, rh};
    }
    const int rw = std::max(
        1, static_cast<int>(std::llround(static_cast<double>(w) *
                                         long_side / h)));
    return {rw, long_side};
}

inline std::pair<double, double> mean_and_variance(const DepthGrid& g) {
    double mean = 0.0;
    for (float v : g.values()) mean += v;
    mean /= static_cast<double>(g.size());
    double var = 0.0;
    for (float v : g.values()) {
        const double d = v - mean;
        var += d * d;
    }
    return {mean, var / static_cast<double>(g.size())};
}

} // namespace detail

/// Patch-based boosting: infer depth per overlapping tile, fix each tile's
/// affine gauge against a whole-image reference inference (computed at the
/// backend's working resolution and upsampled), and feather the tiles into
/// one seamless high-resolution map. The reference steers alignment only;
/// none of its pixels reach the output. Images whose long side is at most
/// cfg.passthrough_max_side skip all of this and return the plain backend
/// result.
///
/// `jobs` caps tile-level parallelism (0 = hardware concurrency); the
/// backend's own max_concurrency() is always honored. Output is
/// bit-identical regardless of jobs.
inline BoostResult simple_boost_detailed(const ImageSource& image,
                                         DepthBackend& backend,
                                         const BoostConfig& cfg = {},
                                         int jobs = 0) {
    detail::validate_boost_config(cfg);
    const int W = image.width();
    const int H = image.height();
    BoostResult result;
    if (std::max(W, H) <= cfg.passthrough_max_side) {
        result.depth = backend.infer(image, Rect{0, 0, W, H}, W, H);
        detail::check_backend_dims(result.depth, W, H, "pass-through");
        result.plan.image_w = W;
        result.plan.image_h = H;
        result.plan.patch = cfg.patch;
        result.plan.overlap = cfg.overlap;
        result.plan.x = AxisTiles{{0}, W};
        result.plan.y = AxisTiles{{0}, H};
        result.plan.tiles = {Rect{0, 0, W, H}};
        result.passthrough = true;
        result.backend_calls = 1;
        return result;
    }
    result.plan = plan_tiles(W, H, cfg);
    const TilePlan& plan = result.plan;

    const int long_side = backend.native_size().value_or(cfg.reference_size);
    const auto [rw, rh] = detail::reference_dims(W, H, long_side);
    DepthGrid reference_small = backend.infer(image, Rect{0, 0, W, H}, rw, rh);
    detail::check_backend_dims(reference_small, rw, rh, "reference");
    if (!reference_small.fully_valid()) {
        throw BackendError("reference: backend returned invalid pixels");
    }
    const DepthGrid reference = resize_bilinear(reference_small, W, H);

    const std::size_t n_tiles = plan.tiles.size();
    std::vector<DepthGrid> patches(n_tiles, DepthGrid::constant(1, 1, 0.0f));
    std::vector<std::exception_ptr> failures(n_tiles);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    int n_workers = jobs > 0 ? jobs
                             : static_cast<int>(std::max(
                                   1u, std::thread::hardware_concurrency()));
    n_workers = std::max(1, std::min({n_workers, backend.max_concurrency(),
                                      static_cast<int>(n_tiles)}));
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n_tiles || abort.load()) return;
            const Rect& t = plan.tiles[i];
            try {
                DepthGrid g = backend.infer(image, t, t.w, t.h);
                detail::check_backend_dims(g, t.w, t.h,
                                           "tile " + std::to_string(i));
                if (!g.fully_valid()) {
                    throw BackendError("backend returned invalid pixels");
                }
                patches[i] = std::move(g);
            } catch (...) {
                failures[i] = std::current_exception();
                abort.store(true);
            }
        }
    };
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(n_workers));
        for (int i = 0; i < n_workers; ++i) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
    }
    for (std::size_t i = 0; i < n_tiles; ++i) {
        if (!failures[i]) continue;
        const Rect& t = plan.tiles[i];
        try {
            std::rethrow_exception(failures[i]);
        } catch (const std::exception& e) {
            throw BackendError("tile " + std::to_string(i) + " (rect " +
                               std::to_string(t.x) + "," + std::to_string(t.y) +
                               " " + std::to_string(t.w) + "x" +
                               std::to_string(t.h) + "): " + e.what());
        }
    }

    result.alignments.reserve(n_tiles);
    std::vector<DepthGrid> aligned;
    aligned.reserve(n_tiles);
    for (std::size_t i = 0; i < n_tiles; ++i) {
        const DepthGrid ref_crop = crop(reference, plan.tiles[i]);
        const auto [ref_mean, ref_var] = detail::mean_and_variance(ref_crop);
        AffineAlignment a;
        if (ref_var < cfg.degenerate_variance_eps) {
            // A flat reference pins only the offset; keep the patch's own
            // scale rather than collapsing it onto the constant.
            const double patch_mean =
                detail::mean_and_variance(patches[i]).first;
            a = AffineAlignment{1.0, ref_mean - patch_mean};
        } else {
            a = solve_alignment(ref_crop, patches[i],
                                cfg.degenerate_variance_eps);
        }
        result.alignments.push_back(a);
        aligned.push_back(apply_alignment(patches[i], a));
    }
    result.depth = blend(plan, aligned);
    result.backend_calls = static_cast<int>(n_tiles) + 1;
    return result;
}

inline DepthGrid simple_boost(const ImageSource& image, DepthBackend& backend,
                              const BoostConfig& cfg = {}, int jobs = 0) {
    return simple_boost_detailed(image, backend, cfg, jobs).depth;
}

} // namespace effdepth
