#include <atomic>
#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "effdepth/backends.hpp"
#include "effdepth/boost.hpp"
#include "effdepth/losses.hpp"
#include "oracles.hpp"

using effdepth::DepthGrid;
using effdepth::DirectoryBackend;
using effdepth::Image;
using effdepth::ProcessBackend;
using effdepth::Rect;
using effdepth::SceneKind;
using effdepth::SyntheticBackend;
using effdepth::SyntheticImageSource;
using effdepth::SyntheticScene;

namespace {

SyntheticScene ramp(double base, double gx, double gy) {
    SyntheticScene s;
    s.kind = SceneKind::RAMP;
    s.base = base;
    s.gx = gx;
    s.gy = gy;
    return s;
}

std::string stub_path() { return EFFDEPTH_STUB_PATH; }

/// Scoped environment variable override.
class ScopedEnv {
public:
    ScopedEnv(const char* name, const char* value) : name_(name) {
        const char* old = std::getenv(name);
        if (old) saved_ = old;
        ::setenv(name, value, 1);
    }
    ~ScopedEnv() {
        if (saved_) {
            ::setenv(name_, saved_->c_str(), 1);
        } else {
            ::unsetenv(name_);
        }
    }

private:
    const char* name_;
    std::optional<std::string> saved_;
};

} // namespace

TEST(SyntheticBackendTest, CropResolutionSamplesIntegerCoordinates) {
    const SyntheticScene scene = ramp(1.0, 2.0, 4.0);
    SyntheticBackend backend(scene);
    const SyntheticImageSource src(scene, 8, 8, "img");
    const DepthGrid g = backend.infer(src, Rect{2, 1, 4, 4}, 4, 4);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            const double u = (2.0 + x) / 8.0;
            const double v = (1.0 + y) / 8.0;
            EXPECT_EQ(g.at(x, y), static_cast<float>(1.0 + 2.0 * u + 4.0 * v));
        }
    }
}

TEST(SyntheticBackendTest, ResamplingUsesHalfPixelCenters) {
    const SyntheticScene scene = ramp(1.0, 2.0, 0.0);
    SyntheticBackend backend(scene);
    const SyntheticImageSource src(scene, 4, 1, "img");
    const DepthGrid g = backend.infer(src, Rect{0, 0, 4, 1}, 2, 1);
    // Output centers map to source coords 0.5 and 2.5.
    EXPECT_EQ(g.at(0, 0), static_cast<float>(1.0 + 2.0 * (0.5 / 4.0)));
    EXPECT_EQ(g.at(1, 0), static_cast<float>(1.0 + 2.0 * (2.5 / 4.0)));
}

TEST(SyntheticBackendTest, RepeatCallsAreBitIdentical) {
    SyntheticScene scene;
    scene.kind = SceneKind::RADIAL;
    effdepth::JitterSpec j;
    j.seed = 17;
    scene.jitter = j;
    SyntheticBackend backend(scene);
    const SyntheticImageSource src(scene, 100, 80, "img");
    const DepthGrid a = backend.infer(src, Rect{3, 5, 40, 30}, 20, 15);
    const DepthGrid b = backend.infer(src, Rect{3, 5, 40, 30}, 20, 15);
    EXPECT_EQ(a.values(), b.values());
}

TEST(SyntheticBackendTest, JitterIsRecoverablePerCrop) {
    SyntheticScene clean = ramp(1.0, 1.0, 0.5);
    SyntheticScene jittered = clean;
    effdepth::JitterSpec spec;
    spec.seed = 42;
    jittered.jitter = spec;
    SyntheticBackend clean_backend(clean);
    SyntheticBackend jitter_backend(jittered);
    const SyntheticImageSource src(clean, 200, 160, "img");
    oracles::Rng rng(80);
    for (int trial = 0; trial < 10; ++trial) {
        const int w = rng.uniform_int(8, 60);
        const int h = rng.uniform_int(8, 60);
        const Rect crop{rng.uniform_int(0, 200 - w), rng.uniform_int(0, 160 - h),
                        w, h};
        const DepthGrid truth = clean_backend.infer(src, crop, w, h);
        const DepthGrid noisy = jitter_backend.infer(src, crop, w, h);
        const effdepth::AffineAlignment a =
            effdepth::solve_alignment(noisy, truth);
        const auto [s, o] = effdepth::jitter_for_crop(spec, crop);
        EXPECT_NEAR(a.s, s, 1e-5);
        EXPECT_NEAR(a.o, o, 1e-5);
    }
}

TEST(SyntheticBackendTest, DistinctCropsDrawDistinctJitter) {
    effdepth::JitterSpec spec;
    spec.seed = 7;
    const auto a = effdepth::jitter_for_crop(spec, Rect{0, 0, 640, 640});
    const auto b = effdepth::jitter_for_crop(spec, Rect{320, 0, 640, 640});
    EXPECT_NE(a, b);
}

TEST(SyntheticBackendTest, NonPositiveScenesAreRejected) {
    EXPECT_THROW(SyntheticBackend(ramp(1.0, -1.5, 0.0)),
                 effdepth::InvalidParameterError);
    EXPECT_THROW(SyntheticBackend(ramp(0.0, 1.0, 1.0)),
                 effdepth::InvalidParameterError);
    SyntheticScene sin;
    sin.kind = SceneKind::SINUSOID;
    sin.base = 0.4;
    sin.amp = 0.5;
    EXPECT_THROW(SyntheticBackend{sin}, effdepth::InvalidParameterError);
    SyntheticScene bad_jitter = ramp(1.0, 1.0, 0.0);
    bad_jitter.jitter = effdepth::JitterSpec{0, 2.0, 0.5, 0.0, 0.0};
    EXPECT_THROW(SyntheticBackend{bad_jitter},
                 effdepth::InvalidParameterError);
}

TEST(SyntheticBackendTest, OutOfBoundsCropThrows) {
    const SyntheticScene scene = ramp(1.0, 1.0, 0.0);
    SyntheticBackend backend(scene);
    const SyntheticImageSource src(scene, 16, 16, "img");
    EXPECT_THROW(backend.infer(src, Rect{8, 8, 16, 16}, 4, 4),
                 effdepth::BoundsError);
    EXPECT_THROW(backend.infer(src, Rect{0, 0, 16, 16}, 0, 4),
                 effdepth::InvalidParameterError);
}

TEST(SyntheticImageSourceTest, SquashesDepthIntoUnitInterval) {
    const SyntheticScene scene = ramp(2.0, 1.0, 0.0);
    const SyntheticImageSource src(scene, 10, 4, "img");
    const Image img = src.read(Rect{0, 0, 10, 4});
    ASSERT_EQ(img.channel_count(), 1);
    EXPECT_EQ(img.channel(0).at(0, 0), static_cast<float>(2.0 / 3.0));
    for (float v : img.channel(0).values()) {
        EXPECT_GT(v, 0.0f);
        EXPECT_LT(v, 1.0f);
    }
}

TEST(DirectoryBackendTest, KeyNamesCropAndOptionalResolution) {
    EXPECT_EQ(effdepth::directory_key("img", Rect{0, 0, 4, 4}, 4, 4),
              "img_crop_0_0_4_4.pfm");
    EXPECT_EQ(effdepth::directory_key("img", Rect{12, 30, 640, 480}, 345, 518),
              "img_crop_12_30_640_480_at_345x518.pfm");
}

TEST(DirectoryBackendTest, ServesStoredGridsVerbatim) {
    oracles::Rng rng(81);
    const oracles::TempDir dir("dirbackend");
    const DepthGrid stored = oracles::random_grid(rng, 6, 5, 0.1f, 2.0f);
    effdepth::write_file(dir.file("img_crop_1_2_6_5.pfm"),
                         effdepth::write_pfm(stored));
    DirectoryBackend backend(dir.path());
    const SyntheticImageSource src(ramp(1.0, 1.0, 0.0), 20, 20, "img");
    const DepthGrid got = backend.infer(src, Rect{1, 2, 6, 5}, 6, 5);
    EXPECT_EQ(got.values(), stored.values());
}

TEST(DirectoryBackendTest, MissingEntryNamesTheExpectedKey) {
    const oracles::TempDir dir("dirmiss");
    DirectoryBackend backend(dir.path());
    const SyntheticImageSource src(ramp(1.0, 1.0, 0.0), 20, 20, "img");
    try {
        backend.infer(src, Rect{0, 0, 8, 8}, 4, 4);
        FAIL() << "expected MissingEntryError";
    } catch (const effdepth::MissingEntryError& e) {
        EXPECT_NE(std::string(e.what()).find("img_crop_0_0_8_8_at_4x4.pfm"),
                  std::string::npos);
    }
}

TEST(DirectoryBackendTest, WrongStoredResolutionIsRejected) {
    const oracles::TempDir dir("dirdims");
    effdepth::write_file(dir.file("img_crop_0_0_4_4.pfm"),
                         effdepth::write_pfm(DepthGrid::constant(3, 3, 1.0f)));
    DirectoryBackend backend(dir.path());
    const SyntheticImageSource src(ramp(1.0, 1.0, 0.0), 20, 20, "img");
    EXPECT_THROW(backend.infer(src, Rect{0, 0, 4, 4}, 4, 4),
                 effdepth::BackendError);
}

TEST(DirectoryBackendTest, PrecomputedReplayMatchesLiveBoost) {
    // Dump every request a boost run makes, then replay the run offline.
    SyntheticScene scene = ramp(1.0, 1.0, 0.5);
    effdepth::JitterSpec j;
    j.seed = 3;
    scene.jitter = j;
    SyntheticBackend live(scene);
    const SyntheticImageSource src(scene, 1100, 700, "img");
    const oracles::TempDir dir("dirreplay");
    const effdepth::TilePlan plan = effdepth::plan_tiles(1100, 700, {});
    const auto dump = [&](const Rect& crop, int ow, int oh) {
        effdepth::write_file(
            dir.file(effdepth::directory_key("img", crop, ow, oh)),
            effdepth::write_pfm(live.infer(src, crop, ow, oh)));
    };
    dump(Rect{0, 0, 1100, 700}, 518, 330); // round(700*518/1100) = 330
    for (const Rect& t : plan.tiles) dump(t, t.w, t.h);

    DirectoryBackend replay(dir.path());
    const DepthGrid offline = effdepth::simple_boost(src, replay);
    const DepthGrid online = effdepth::simple_boost(src, live);
    EXPECT_EQ(offline.values(), online.values());
}

TEST(ProcessBackendTest, RunsCommandAndParsesOutput) {
    const oracles::TempDir dir("procconst");
    ProcessBackend backend(stub_path() +
                               " constant 0.5 {ow} {oh} {output} # {input}",
                           dir.path());
    const SyntheticImageSource src(ramp(1.0, 1.0, 0.0), 32, 16, "img");
    const DepthGrid g = backend.infer(src, Rect{0, 0, 32, 16}, 8, 4);
    ASSERT_EQ(g.width(), 8);
    ASSERT_EQ(g.height(), 4);
    for (float v : g.values()) EXPECT_EQ(v, 0.5f);
}

TEST(ProcessBackendTest, MatchesInProcessBackendBitForBit) {
    // The stub reimplements the scene from the placeholder geometry alone,
    // so transport (files, substitution, PFM) is the only thing under test.
    const SyntheticScene scene = ramp(1.25, 0.75, 0.5);
    SyntheticBackend in_process(scene);
    const oracles::TempDir dir("procscene");
    ProcessBackend external(stub_path() +
                                " scene 1.25 0.75 0.5 {x} {y} {w} {h} {ow} "
                                "{oh} {iw} {ih} {output} # {input}",
                            dir.path());
    const SyntheticImageSource src(scene, 64, 48, "img");
    const Rect crops[] = {{0, 0, 64, 48}, {8, 4, 32, 40}, {1, 1, 63, 47}};
    for (const Rect& crop : crops) {
        const DepthGrid a = in_process.infer(src, crop, crop.w, crop.h);
        const DepthGrid b = external.infer(src, crop, crop.w, crop.h);
        EXPECT_EQ(a.values(), b.values());
    }
    // Resampled request exercises the half-pixel path end to end.
    const DepthGrid a = in_process.infer(src, Rect{0, 0, 64, 48}, 33, 25);
    const DepthGrid b = external.infer(src, Rect{0, 0, 64, 48}, 33, 25);
    EXPECT_EQ(a.values(), b.values());
}

TEST(ProcessBackendTest, InputFileHoldsTheResizedCrop) {
    const SyntheticScene scene = ramp(1.0, 2.0, 1.0);
    const SyntheticImageSource src(scene, 40, 30, "img");
    const oracles::TempDir dir("procecho");
    ProcessBackend backend(stub_path() + " echo {input} {output}", dir.path());
    const Rect crop{5, 3, 16, 12};
    const DepthGrid same_res = backend.infer(src, crop, 16, 12);
    EXPECT_EQ(same_res.values(), src.read(crop).channel(0).values());
    const DepthGrid down = backend.infer(src, crop, 8, 6);
    const DepthGrid want =
        effdepth::resize_bilinear(src.read(crop), 8, 6).channel(0);
    EXPECT_EQ(down.values(), want.values());
}

TEST(ProcessBackendTest, NonZeroExitCodeIsReported) {
    const oracles::TempDir dir("procexit");
    ProcessBackend backend("exit 3 # {input} {output}", dir.path());
    const SyntheticImageSource src(ramp(1.0, 1.0, 0.0), 8, 8, "img");
    try {
        backend.infer(src, Rect{0, 0, 8, 8}, 8, 8);
        FAIL() << "expected BackendError";
    } catch (const effdepth::BackendError& e) {
        EXPECT_NE(std::string(e.what()).find("exit code 3"), std::string::npos);
    }
}

TEST(ProcessBackendTest, HungCommandIsKilledAtTheTimeout) {
    const ScopedEnv timeout("EFFDEPTH_BACKEND_TIMEOUT_SECS", "0.2");
    const oracles::TempDir dir("prochang");
    ProcessBackend backend("sleep 30 # {input} {output}", dir.path());
    const SyntheticImageSource src(ramp(1.0, 1.0, 0.0), 8, 8, "img");
    const auto start = std::chrono::steady_clock::now();
    try {
        backend.infer(src, Rect{0, 0, 8, 8}, 8, 8);
        FAIL() << "expected BackendError";
    } catch (const effdepth::BackendError& e) {
        EXPECT_NE(std::string(e.what()).find("timed out"), std::string::npos);
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    EXPECT_LT(elapsed, 5.0);
}

TEST(ProcessBackendTest, TemplateMustNameInputAndOutput) {
    EXPECT_THROW(ProcessBackend("echo hi"), effdepth::InvalidParameterError);
    EXPECT_THROW(ProcessBackend("echo {input}"),
                 effdepth::InvalidParameterError);
    EXPECT_THROW(ProcessBackend("x {input} {output}", {}, std::nullopt, 0),
                 effdepth::InvalidParameterError);
}

TEST(ProcessBackendTest, MalformedOrMissingOutputIsBackendError) {
    const oracles::TempDir dir("procbad");
    const SyntheticImageSource src(ramp(1.0, 1.0, 0.0), 8, 8, "img");
    ProcessBackend garbage("printf bogus > {output} # {input}", dir.path());
    try {
        garbage.infer(src, Rect{0, 0, 8, 8}, 8, 8);
        FAIL() << "expected BackendError";
    } catch (const effdepth::BackendError& e) {
        EXPECT_NE(std::string(e.what()).find("malformed"), std::string::npos);
    }
    ProcessBackend silent("true # {input} {output}", dir.path());
    try {
        silent.infer(src, Rect{0, 0, 8, 8}, 8, 8);
        FAIL() << "expected BackendError";
    } catch (const effdepth::BackendError& e) {
        EXPECT_NE(std::string(e.what()).find("no output"), std::string::npos);
    }
}

TEST(ProcessBackendTest, WrongResolutionOutputIsResampled) {
    const oracles::TempDir dir("procresample");
    ProcessBackend backend(stub_path() + " constant 0.5 3 3 {output} # {input}",
                           dir.path());
    const SyntheticImageSource src(ramp(1.0, 1.0, 0.0), 16, 16, "img");
    const DepthGrid g = backend.infer(src, Rect{0, 0, 16, 16}, 6, 6);
    ASSERT_EQ(g.width(), 6);
    for (float v : g.values()) EXPECT_EQ(v, 0.5f);
}

TEST(ProcessBackendTest, ConcurrencyCapBoundsInFlightCalls) {
    /// Wraps a synthetic backend, tracking the peak number of overlapping
    /// infer calls.
    class Counting : public effdepth::DepthBackend {
    public:
        explicit Counting(SyntheticScene scene) : inner_(scene) {}
        DepthGrid infer(const effdepth::ImageSource& image, const Rect& crop,
                        int out_w, int out_h) override {
            const int now = in_flight_.fetch_add(1) + 1;
            int peak = peak_.load();
            while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
            DepthGrid g = inner_.infer(image, crop, out_w, out_h);
            in_flight_.fetch_sub(1);
            return g;
        }
        int max_concurrency() const override { return 2; }
        int peak() const { return peak_.load(); }

    private:
        SyntheticBackend inner_;
        std::atomic<int> in_flight_{0};
        std::atomic<int> peak_{0};
    };
    const SyntheticScene scene = ramp(1.0, 1.0, 0.5);
    Counting backend(scene);
    const SyntheticImageSource src(scene, 1100, 1400, "img");
    effdepth::simple_boost(src, backend, {}, 8);
    EXPECT_LE(backend.peak(), 2);
    EXPECT_GE(backend.peak(), 1);
}

TEST(PerceptualProcess, MatchesBuiltinMeanAbsDiff) {
    oracles::Rng rng(82);
    const oracles::TempDir dir("lpips");
    const effdepth::PerceptualBackend external =
        effdepth::process_perceptual_backend(
            stub_path() + " meanabs {input_a} {input_b} {output}", dir.path());
    const DepthGrid a = oracles::random_grid(rng, 12, 10, -1.0f, 1.0f);
    const DepthGrid b = oracles::random_grid(rng, 12, 10, -1.0f, 1.0f);
    EXPECT_NEAR(external(a, b), effdepth::mean_abs_diff_backend(a, b), 1e-12);
}

TEST(PerceptualProcess, FailuresSurfaceAsBackendErrors) {
    const oracles::TempDir dir("lpipsbad");
    const effdepth::PerceptualBackend failing =
        effdepth::process_perceptual_backend(
            "false # {input_a} {input_b} {output}", dir.path());
    const DepthGrid g = DepthGrid::constant(2, 2, 1.0f);
    EXPECT_THROW(failing(g, g), effdepth::BackendError);
    EXPECT_THROW(effdepth::process_perceptual_backend("echo {input_a}"),
                 effdepth::InvalidParameterError);
}

TEST(ParseBackendSpec, SyntheticSpecConfiguresSceneAndJitter) {
    const auto parsed =
        effdepth::parse_backend_spec("synthetic:ramp?seed=7&base=2&gx=0.5");
    SyntheticScene want = ramp(2.0, 0.5, 0.0);
    effdepth::JitterSpec j;
    j.seed = 7;
    want.jitter = j;
    SyntheticBackend reference(want);
    const SyntheticImageSource src(want, 64, 64, "img");
    const DepthGrid a = parsed->infer(src, Rect{4, 4, 32, 32}, 32, 32);
    const DepthGrid b = reference.infer(src, Rect{4, 4, 32, 32}, 32, 32);
    EXPECT_EQ(a.values(), b.values());
}

TEST(ParseBackendSpec, DirSpecPointsAtTheGivenRoot) {
    const oracles::TempDir dir("specdir");
    const auto parsed = effdepth::parse_backend_spec("dir:" +
                                                     dir.path().string());
    const SyntheticImageSource src(ramp(1.0, 1.0, 0.0), 8, 8, "img");
    try {
        parsed->infer(src, Rect{0, 0, 8, 8}, 8, 8);
        FAIL() << "expected MissingEntryError";
    } catch (const effdepth::MissingEntryError& e) {
        EXPECT_NE(std::string(e.what()).find(dir.path().string()),
                  std::string::npos);
    }
}

TEST(ParseBackendSpec, CmdSpecBuildsAProcessBackend) {
    const oracles::TempDir dir("speccmd");
    const auto parsed = effdepth::parse_backend_spec(
        "cmd:" + stub_path() + " constant 1 {ow} {oh} {output} # {input}",
        dir.path());
    const SyntheticImageSource src(ramp(1.0, 1.0, 0.0), 8, 8, "img");
    const DepthGrid g = parsed->infer(src, Rect{0, 0, 8, 8}, 8, 8);
    EXPECT_EQ(g.at(3, 3), 1.0f);
}

TEST(ParseBackendSpec, MalformedSpecsThrowUsageError) {
    for (const char* spec : {
             "synthetic:cube",
             "synthetic:ramp?base=abc",
             "synthetic:ramp?foo=1",
             "synthetic:ramp?=1",
             "synthetic:sinusoid?base=0.4&0",
             "synthetic:ramp?gx=-5",
             "dir:",
             "cmd:echo hi",
             "quux:thing",
             "",
         }) {
        EXPECT_THROW(effdepth::parse_backend_spec(spec), effdepth::UsageError)
            << spec;
    }
}
