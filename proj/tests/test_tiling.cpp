#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "effdepth/tiling.hpp"
#include "oracles.hpp"

using effdepth::AffineAlignment;
using effdepth::BoostConfig;
using effdepth::DepthGrid;
using effdepth::Rect;
using effdepth::TilePlan;

namespace {

std::vector<int> starts_for(int length, int patch = 640, int overlap = 320) {
    BoostConfig cfg;
    cfg.patch = patch;
    cfg.overlap = overlap;
    return effdepth::plan_tiles(length, 1, cfg).x.starts;
}

void check_axis(const std::vector<int>& starts, int len, int length,
                int overlap) {
    ASSERT_FALSE(starts.empty());
    EXPECT_EQ(starts.front(), 0);
    EXPECT_EQ(starts.back() + len, length);
    for (std::size_t i = 1; i < starts.size(); ++i) {
        EXPECT_GT(starts[i], starts[i - 1]);
        // Adjacent tiles overlap by at least the configured amount; in
        // particular every pixel between them is covered.
        EXPECT_GE(starts[i - 1] + len - starts[i], overlap);
    }
}

} // namespace

TEST(PlanTiles, ExactFitIsSingleTile) {
    const TilePlan plan = effdepth::plan_tiles(640, 640, {});
    ASSERT_EQ(plan.tiles.size(), 1u);
    EXPECT_EQ(plan.tiles[0], (Rect{0, 0, 640, 640}));
}

TEST(PlanTiles, SmallImageTileShrinksToExtent) {
    const TilePlan plan = effdepth::plan_tiles(500, 300, {});
    ASSERT_EQ(plan.tiles.size(), 1u);
    EXPECT_EQ(plan.tiles[0], (Rect{0, 0, 500, 300}));
}

TEST(PlanTiles, Axis1024) {
    EXPECT_EQ(starts_for(1024), (std::vector<int>{0, 192, 384}));
}

TEST(PlanTiles, Axis1280) {
    EXPECT_EQ(starts_for(1280), (std::vector<int>{0, 320, 640}));
}

TEST(PlanTiles, Axis1920) {
    EXPECT_EQ(starts_for(1920), (std::vector<int>{0, 320, 640, 960, 1280}));
}

TEST(PlanTiles, FigureSizedImageYields18Tiles) {
    const TilePlan plan = effdepth::plan_tiles(1024, 2048, {});
    EXPECT_EQ(plan.tiles.size(), 18u);
    EXPECT_EQ(plan.x.starts, (std::vector<int>{0, 192, 384}));
    EXPECT_EQ(plan.y.starts,
              (std::vector<int>{0, 282, 563, 845, 1126, 1408}));
    // Row-major order: y outer, x inner.
    EXPECT_EQ(plan.tiles[0], (Rect{0, 0, 640, 640}));
    EXPECT_EQ(plan.tiles[1], (Rect{192, 0, 640, 640}));
    EXPECT_EQ(plan.tiles[3], (Rect{0, 282, 640, 640}));
}

TEST(PlanTiles, ValidatesConfig) {
    BoostConfig cfg;
    cfg.overlap = 700; // >= patch
    EXPECT_THROW(effdepth::plan_tiles(1000, 1000, cfg),
                 effdepth::InvalidParameterError);
    cfg = {};
    cfg.overlap = 0;
    EXPECT_THROW(effdepth::plan_tiles(1000, 1000, cfg),
                 effdepth::InvalidParameterError);
    cfg = {};
    cfg.patch = 0;
    EXPECT_THROW(effdepth::plan_tiles(1000, 1000, cfg),
                 effdepth::InvalidParameterError);
    EXPECT_THROW(effdepth::plan_tiles(0, 10, {}),
                 effdepth::InvalidParameterError);
}

TEST(PlanTiles, CoverageAndOverlapProperties) {
    oracles::Rng rng(50);
    for (int trial = 0; trial < 500; ++trial) {
        const int w = rng.uniform_int(1, 4096);
        const int h = rng.uniform_int(1, 4096);
        const TilePlan plan = effdepth::plan_tiles(w, h, {});
        check_axis(plan.x.starts, plan.x.len, w, 320);
        check_axis(plan.y.starts, plan.y.len, h, 320);
        EXPECT_EQ(plan.tiles.size(),
                  plan.x.starts.size() * plan.y.starts.size());
        if (w >= 640) EXPECT_EQ(plan.x.len, 640);
        if (h >= 640) EXPECT_EQ(plan.y.len, 640);
    }
}

TEST(Blend, PartitionOfUnityOnSampledPlans) {
    oracles::Rng rng(51);
    for (int trial = 0; trial < 8; ++trial) {
        const int w = rng.uniform_int(600, 2200);
        const int h = rng.uniform_int(600, 2200);
        const TilePlan plan = effdepth::plan_tiles(w, h, {});
        // Blending all-ones patches exposes the weight sum at every pixel.
        std::vector<DepthGrid> ones;
        for (const Rect& t : plan.tiles) {
            ones.push_back(DepthGrid::constant(t.w, t.h, 1.0f));
        }
        const DepthGrid out = effdepth::blend(plan, ones);
        for (float v : out.values()) ASSERT_NEAR(v, 1.0f, 1e-6);
    }
}

TEST(Blend, SingleTileIsIdentity) {
    oracles::Rng rng(52);
    const TilePlan plan = effdepth::plan_tiles(480, 360, {});
    ASSERT_EQ(plan.tiles.size(), 1u);
    const DepthGrid patch = oracles::random_grid(rng, 480, 360, 0.0f, 2.0f);
    const DepthGrid out = effdepth::blend(plan, {patch});
    EXPECT_EQ(out.values(), patch.values());
}

TEST(Blend, ConstantPatchesStayConstant) {
    const TilePlan plan = effdepth::plan_tiles(960, 640, {});
    ASSERT_GT(plan.tiles.size(), 1u);
    std::vector<DepthGrid> patches;
    for (const Rect& t : plan.tiles) {
        patches.push_back(DepthGrid::constant(t.w, t.h, 4.5f));
    }
    const DepthGrid out = effdepth::blend(plan, patches);
    for (float v : out.values()) EXPECT_NEAR(v, 4.5f, 1e-6);
}

TEST(Blend, TwoTileRampIsMonotoneAndMatchesOracle) {
    // 960x64 with 640px tiles: two tiles starting at 0 and 320, overlapping
    // on [320, 640).
    const TilePlan plan = effdepth::plan_tiles(960, 64, {});
    ASSERT_EQ(plan.x.starts, (std::vector<int>{0, 320}));
    ASSERT_EQ(plan.tiles.size(), 2u);
    std::vector<DepthGrid> patches = {DepthGrid::constant(640, 64, 0.0f),
                                      DepthGrid::constant(640, 64, 10.0f)};
    const DepthGrid out = effdepth::blend(plan, patches);
    for (int x = 0; x < 320; ++x) EXPECT_FLOAT_EQ(out.at(x, 32), 0.0f);
    for (int x = 640; x < 960; ++x) EXPECT_FLOAT_EQ(out.at(x, 32), 10.0f);
    float prev = 0.0f;
    for (int x = 320; x < 640; ++x) {
        const float v = out.at(x, 32);
        EXPECT_GT(v, prev);
        EXPECT_NEAR(v, oracles::blend_at(plan, patches, x, 32), 1e-6);
        prev = v;
    }
    // Endpoints of the ramp, evaluated at pixel centers.
    EXPECT_NEAR(out.at(320, 32), 10.0 * 0.5 / 320.0, 1e-6);
    EXPECT_NEAR(out.at(639, 32), 10.0 * 319.5 / 320.0, 1e-6);
}

TEST(Blend, MatchesScalarOracleOnRandomPatches) {
    oracles::Rng rng(53);
    const TilePlan plan = effdepth::plan_tiles(1100, 900, {});
    std::vector<DepthGrid> patches;
    for (const Rect& t : plan.tiles) {
        patches.push_back(oracles::random_grid(rng, t.w, t.h, -1.0f, 3.0f));
    }
    const DepthGrid out = effdepth::blend(plan, patches);
    for (int trial = 0; trial < 2000; ++trial) {
        const int x = rng.uniform_int(0, 1099);
        const int y = rng.uniform_int(0, 899);
        EXPECT_NEAR(out.at(x, y), oracles::blend_at(plan, patches, x, y), 1e-6)
            << "(" << x << "," << y << ")";
    }
}

TEST(Blend, OutputWithinContributingPatchBounds) {
    oracles::Rng rng(54);
    const TilePlan plan = effdepth::plan_tiles(960, 960, {});
    std::vector<DepthGrid> patches;
    for (const Rect& t : plan.tiles) {
        patches.push_back(oracles::random_grid(rng, t.w, t.h, 0.0f, 1.0f));
    }
    const DepthGrid out = effdepth::blend(plan, patches);
    for (int y = 0; y < 960; ++y) {
        for (int x = 0; x < 960; ++x) {
            float lo = 1e30f, hi = -1e30f;
            for (std::size_t i = 0; i < plan.tiles.size(); ++i) {
                const Rect& t = plan.tiles[i];
                if (x < t.x || x >= t.x + t.w || y < t.y || y >= t.y + t.h)
                    continue;
                const float v = patches[i].at(x - t.x, y - t.y);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            ASSERT_GE(out.at(x, y), lo - 1e-6f);
            ASSERT_LE(out.at(x, y), hi + 1e-6f);
        }
    }
}

TEST(Blend, RejectsMismatchedPatches) {
    const TilePlan plan = effdepth::plan_tiles(960, 64, {});
    EXPECT_THROW(
        effdepth::blend(plan, {DepthGrid::constant(640, 64, 0.0f)}),
        effdepth::DimensionMismatchError);
    EXPECT_THROW(effdepth::blend(plan, {DepthGrid::constant(640, 64, 0.0f),
                                        DepthGrid::constant(639, 64, 0.0f)}),
                 effdepth::DimensionMismatchError);
}

TEST(SolveAlignment, SelfAlignmentIsIdentity) {
    oracles::Rng rng(55);
    const DepthGrid g = oracles::random_grid(rng, 8, 8, 0.0f, 2.0f);
    const AffineAlignment a = effdepth::solve_alignment(g, g);
    EXPECT_NEAR(a.s, 1.0, 1e-12);
    EXPECT_NEAR(a.o, 0.0, 1e-12);
}

TEST(SolveAlignment, RecoversExactAffineRelation) {
    oracles::Rng rng(56);
    // Snap inputs to multiples of 2^-16 so 2*v + 3 is exact in float and the
    // reference really is an affine image of the patch, bit for bit.
    std::vector<float> patch_vals(64);
    for (float& v : patch_vals) {
        v = static_cast<float>(std::nearbyint(rng.uniform(0.0, 2.0) * 65536.0) /
                               65536.0);
    }
    const DepthGrid patch(8, 8, patch_vals);
    std::vector<float> ref_vals(patch_vals);
    for (float& v : ref_vals) v = 2.0f * v + 3.0f;
    const DepthGrid reference(8, 8, std::move(ref_vals));
    const AffineAlignment a = effdepth::solve_alignment(reference, patch);
    EXPECT_NEAR(a.s, 2.0, 1e-9);
    EXPECT_NEAR(a.o, 3.0, 1e-9);
}

TEST(SolveAlignment, MatchesExtendedPrecisionOracle) {
    oracles::Rng rng(57);
    for (int trial = 0; trial < 200; ++trial) {
        const int w = rng.uniform_int(2, 64);
        const int h = rng.uniform_int(2, 64);
        const DepthGrid patch = oracles::random_grid(rng, w, h, -2.0f, 6.0f);
        const DepthGrid ref = oracles::random_grid(rng, w, h, 0.0f, 4.0f);
        const AffineAlignment a = effdepth::solve_alignment(ref, patch);
        std::vector<double> x(patch.values().begin(), patch.values().end());
        std::vector<double> y(ref.values().begin(), ref.values().end());
        const oracles::AffineFit f = oracles::fit_affine(x, y);
        const double scale =
            std::max({std::abs(static_cast<double>(f.s)),
                      std::abs(static_cast<double>(f.o)), 1.0});
        EXPECT_NEAR(a.s, static_cast<double>(f.s), 1e-9 * scale);
        EXPECT_NEAR(a.o, static_cast<double>(f.o), 1e-9 * scale);
    }
}

TEST(SolveAlignment, UsesJointMaskOnly) {
    // Wildly wrong values at jointly-invalid pixels must not matter.
    const DepthGrid patch(2, 2, {1.0f, 2.0f, 3.0f, 1000.0f}, {1, 1, 1, 0});
    const DepthGrid ref(2, 2, {5.0f, 7.0f, 9.0f, -999.0f});
    const AffineAlignment a = effdepth::solve_alignment(ref, patch);
    EXPECT_NEAR(a.s, 2.0, 1e-9);
    EXPECT_NEAR(a.o, 3.0, 1e-9);
}

TEST(SolveAlignment, ConstantPatchFallsBackToMeanOffset) {
    const DepthGrid patch = DepthGrid::constant(4, 4, 2.0f);
    oracles::Rng rng(58);
    const DepthGrid ref = oracles::random_grid(rng, 4, 4, 5.0f, 6.0f);
    const AffineAlignment a = effdepth::solve_alignment(ref, patch);
    EXPECT_DOUBLE_EQ(a.s, 1.0);
    double mean_ref = 0.0;
    for (float v : ref.values()) mean_ref += v;
    mean_ref /= 16.0;
    EXPECT_NEAR(a.o, mean_ref - 2.0, 1e-9);
}

TEST(SolveAlignment, EmptyJointMaskThrows) {
    const DepthGrid a(1, 2, {1.0f, 2.0f}, {1, 0});
    const DepthGrid b(1, 2, {1.0f, 2.0f}, {0, 1});
    EXPECT_THROW(effdepth::solve_alignment(a, b), effdepth::EmptyInputError);
}

TEST(SolveAlignment, EquivariantUnderPatchAffine) {
    oracles::Rng rng(59);
    const DepthGrid patch = oracles::random_grid(rng, 8, 8, 1.0f, 3.0f);
    const DepthGrid ref = oracles::random_grid(rng, 8, 8, 0.0f, 5.0f);
    const AffineAlignment base = effdepth::solve_alignment(ref, patch);
    const double a = 2.5, b = -1.25;
    std::vector<float> scaled(patch.values());
    for (float& v : scaled) v = static_cast<float>(a * v + b);
    const AffineAlignment t =
        effdepth::solve_alignment(ref, DepthGrid(8, 8, std::move(scaled)));
    EXPECT_NEAR(t.s, base.s / a, 1e-6 * std::abs(base.s / a));
    EXPECT_NEAR(t.o, base.o - base.s * b / a,
                1e-6 * std::max(1.0, std::abs(base.o - base.s * b / a)));
}

TEST(ApplyAlignment, MapsValuesAndKeepsMask) {
    const DepthGrid g(2, 2, {1.0f, 2.0f, 3.0f, 4.0f}, {1, 0, 1, 1});
    const DepthGrid out = effdepth::apply_alignment(g, {2.0, 0.5});
    EXPECT_FLOAT_EQ(out.at(0, 0), 2.5f);
    EXPECT_FLOAT_EQ(out.at(1, 1), 8.5f);
    EXPECT_FALSE(out.is_valid(1, 0));
}

TEST(BlendWeight, SpotChecksAgainstTentFormula) {
    const TilePlan plan = effdepth::plan_tiles(960, 64, {});
    // Outside the tile the weight is 0; interior weights renormalize the
    // two overlapping tents.
    EXPECT_DOUBLE_EQ(effdepth::blend_weight(plan, 1, 100, 32), 0.0);
    EXPECT_DOUBLE_EQ(effdepth::blend_weight(plan, 0, 100, 32), 1.0);
    const double w0 = effdepth::blend_weight(plan, 0, 480, 32);
    const double w1 = effdepth::blend_weight(plan, 1, 480, 32);
    EXPECT_NEAR(w0 + w1, 1.0, 1e-12);
    EXPECT_NEAR(w0, (640.0 - 480.5) / ((640.0 - 480.5) + (480.5 - 320.0)),
                1e-12);
}
