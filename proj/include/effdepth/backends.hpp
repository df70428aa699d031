#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "effdepth/errors.hpp"
#include "effdepth/grid.hpp"
#include "effdepth/image.hpp"
#include "effdepth/losses.hpp"
#include "effdepth/pfm.hpp"
#include "effdepth/png_io.hpp"
#include "effdepth/subprocess.hpp"

namespace effdepth {

/// Where backend input pixels come from. Backends that synthesize or look up
/// their answers only touch the id and dimensions; the process backend pulls
/// actual pixels per crop.
class ImageSource {
public:
    virtual ~ImageSource() = default;
    virtual int width() const = 0;
    virtual int height() const = 0;
    /// Stable identifier, used as the cache key by the directory backend.
    virtual const std::string& id() const = 0;
    virtual Image read(const Rect& crop) const = 0;
};

class MemoryImageSource : public ImageSource {
public:
    MemoryImageSource(Image image, std::string id)
        : image_(std::move(image)), id_(std::move(id)) {}

    int width() const override { return image_.width(); }
    int height() const override { return image_.height(); }
    const std::string& id() const override { return id_; }
    Image read(const Rect& r) const override { return crop(image_, r); }

private:
    Image image_;
    std::string id_;
};

/// A single-image depth estimator: crop in, fully valid inverse-depth grid
/// of exactly the requested dimensions out. Implementations must be
/// deterministic (identical request and seed, bit-identical grid) and safe
/// to call from up to max_concurrency() threads at once.
class DepthBackend {
public:
    virtual ~DepthBackend() = default;
    virtual DepthGrid infer(const ImageSource& image, const Rect& crop,
                            int out_w, int out_h) = 0;
    virtual int max_concurrency() const {
        return std::numeric_limits<int>::max();
    }
    /// Preferred long-side resolution for whole-image inference, if the
    /// model has one; overrides the boost config's reference size.
    virtual std::optional<int> native_size() const { return std::nullopt; }
};

namespace detail {

inline void validate_infer_request(const ImageSource& image, const Rect& crop,
                                   int out_w, int out_h) {
    if (crop.w < 1 || crop.h < 1 || crop.x < 0 || crop.y < 0 ||
        crop.x + crop.w > image.width() || crop.y + crop.h > image.height()) {
        throw BoundsError("backend: crop (" + std::to_string(crop.x) + ", " +
                          std::to_string(crop.y) + ", " +
                          std::to_string(crop.w) + "x" +
                          std::to_string(crop.h) + ") outside " +
                          std::to_string(image.width()) + "x" +
                          std::to_string(image.height()) + " image");
    }
    if (out_w < 1 || out_h < 1) {
        throw InvalidParameterError("backend: output dims must be >= 1");
    }
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// [0, 1) from 53 high-quality bits; hand-rolled so sequences are stable
// across standard libraries.
inline double unit_double(std::uint64_t x) {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

} // namespace detail

enum class SceneKind { RAMP, RADIAL, SINUSOID };

/// Seeded per-call affine corruption: each crop rectangle maps to its own
/// (s, o), mimicking the inconsistent value ranges independent patch
/// inferences exhibit, while staying exactly reproducible.
struct JitterSpec {
    std::uint64_t seed = 0;
    double scale_min = 0.5;
    double scale_max = 2.0;
    double offset_min = -0.5;
    double offset_max = 0.5;
};

/// Analytic inverse-depth scene over normalized coordinates u = x/W,
/// v = y/H:
///   RAMP      base + gx*u + gy*v
///   RADIAL    base + amp * sqrt((u-0.5)^2 + (v-0.5)^2)
///   SINUSOID  base + amp * sin(2*pi*fx*u) * cos(2*pi*fy*v)
struct SyntheticScene {
    SceneKind kind = SceneKind::RAMP;
    double base = 1.0;
    double gx = 1.0;
    double gy = 0.0;
    double amp = 0.5;
    double fx = 2.0;
    double fy = 2.0;
    std::optional<JitterSpec> jitter;
};

namespace detail {

inline void validate_scene(const SyntheticScene& s) {
    bool positive = false;
    switch (s.kind) {
        case SceneKind::RAMP:
            // Affine in (u, v): positivity on the unit square reduces to
            // positivity at its corners.
            positive = s.base > 0.0 && s.base + s.gx > 0.0 &&
                       s.base + s.gy > 0.0 && s.base + s.gx + s.gy > 0.0;
            break;
        case SceneKind::RADIAL:
            positive = s.base > 0.0 && s.base + s.amp * std::sqrt(0.5) > 0.0;
            break;
        case SceneKind::SINUSOID:
            positive = s.base - std::abs(s.amp) > 0.0;
            break;
    }
    if (!positive || !std::isfinite(s.base)) {
        throw InvalidParameterError(
            "SyntheticScene: inverse depth must stay positive over the image");
    }
    if (s.jitter) {
        const JitterSpec& j = *s.jitter;
        if (!(j.scale_min <= j.scale_max) || !(j.offset_min <= j.offset_max)) {
            throw InvalidParameterError("SyntheticScene: bad jitter bounds");
        }
    }
}

inline double scene_value(const SyntheticScene& s, double xc, double yc,
                          int image_w, int image_h) {
    const double u = xc / image_w;
    const double v = yc / image_h;
    switch (s.kind) {
        case SceneKind::RAMP:
            return s.base + s.gx * u + s.gy * v;
        case SceneKind::RADIAL: {
            const double du = u - 0.5;
            const double dv = v - 0.5;
            return s.base + s.amp * std::sqrt(du * du + dv * dv);
        }
        case SceneKind::SINUSOID: {
            constexpr double tau = 6.283185307179586476925286766559;
            return s.base +
                   s.amp * std::sin(tau * s.fx * u) * std::cos(tau * s.fy * v);
        }
    }
    return s.base;
}

} // namespace detail

/// The (s, o) the jittered synthetic backend applies for a given crop.
/// Exposed so tests can predict and invert the corruption.
inline std::pair<double, double> jitter_for_crop(const JitterSpec& j,
                                                 const Rect& crop) {
    std::uint64_t k = j.seed;
    k = detail::splitmix64(k ^ static_cast<std::uint64_t>(
                                   static_cast<std::int64_t>(crop.x)));
    k = detail::splitmix64(k ^ static_cast<std::uint64_t>(
                                   static_cast<std::int64_t>(crop.y)));
    k = detail::splitmix64(k ^ static_cast<std::uint64_t>(
                                   static_cast<std::int64_t>(crop.w)));
    k = detail::splitmix64(k ^ static_cast<std::uint64_t>(
                                   static_cast<std::int64_t>(crop.h)));
    const double us = detail::unit_double(detail::splitmix64(k));
    const double uo = detail::unit_double(detail::splitmix64(k + 1));
    return {j.scale_min + us * (j.scale_max - j.scale_min),
            j.offset_min + uo * (j.offset_max - j.offset_min)};
}

/// Exact analytic oracle: evaluates the scene at the sample positions the
/// requested resampling implies (integer coordinates when output dims match
/// the crop, half-pixel-mapped centers otherwise), then applies the per-crop
/// jitter if configured.
class SyntheticBackend : public DepthBackend {
public:
    explicit SyntheticBackend(SyntheticScene scene) : scene_(scene) {
        detail::validate_scene(scene_);
    }

    DepthGrid infer(const ImageSource& image, const Rect& crop, int out_w,
                    int out_h) override {
        detail::validate_infer_request(image, crop, out_w, out_h);
        const int W = image.width();
        const int H = image.height();
        double s = 1.0, o = 0.0;
        if (scene_.jitter) {
            std::tie(s, o) = jitter_for_crop(*scene_.jitter, crop);
        }
        const double sx = static_cast<double>(crop.w) / out_w;
        const double sy = static_cast<double>(crop.h) / out_h;
        std::vector<float> vals(static_cast<std::size_t>(out_w) * out_h);
        for (int y = 0; y < out_h; ++y) {
            const double yc =
                crop.y + (out_h == crop.h ? y : (y + 0.5) * sy - 0.5);
            for (int x = 0; x < out_w; ++x) {
                const double xc =
                    crop.x + (out_w == crop.w ? x : (x + 0.5) * sx - 0.5);
                const double d = detail::scene_value(scene_, xc, yc, W, H);
                vals[static_cast<std::size_t>(y) * out_w + x] =
                    static_cast<float>(s * d + o);
            }
        }
        return DepthGrid(out_w, out_h, std::move(vals));
    }

    const SyntheticScene& scene() const { return scene_; }

private:
    SyntheticScene scene_;
};

inline std::unique_ptr<DepthBackend> synthetic_backend(SyntheticScene scene) {
    return std::make_unique<SyntheticBackend>(scene);
}

/// Renders the scene as a gray image (d -> d/(1+d), a (0,1) squashing) so
/// synthetic pipelines have real pixels to push through process transports.
class SyntheticImageSource : public ImageSource {
public:
    SyntheticImageSource(SyntheticScene scene, int width, int height,
                         std::string id)
        : scene_(scene), width_(width), height_(height), id_(std::move(id)) {
        detail::validate_scene(scene_);
        if (width_ < 1 || height_ < 1) {
            throw InvalidParameterError(
                "SyntheticImageSource: dimensions must be >= 1");
        }
    }

    int width() const override { return width_; }
    int height() const override { return height_; }
    const std::string& id() const override { return id_; }

    Image read(const Rect& r) const override {
        if (r.x < 0 || r.y < 0 || r.w < 1 || r.h < 1 ||
            r.x + r.w > width_ || r.y + r.h > height_) {
            throw BoundsError("SyntheticImageSource: crop out of bounds");
        }
        std::vector<float> vals(static_cast<std::size_t>(r.w) * r.h);
        for (int y = 0; y < r.h; ++y) {
            for (int x = 0; x < r.w; ++x) {
                const double d = detail::scene_value(scene_, r.x + x, r.y + y,
                                                     width_, height_);
                vals[static_cast<std::size_t>(y) * r.w + x] =
                    static_cast<float>(d / (1.0 + d));
            }
        }
        return Image::gray(DepthGrid(r.w, r.h, std::move(vals)));
    }

private:
    SyntheticScene scene_;
    int width_;
    int height_;
    std::string id_;
};

/// Filename a directory backend expects for one inference request:
/// "{id}_crop_{x}_{y}_{w}_{h}.pfm", with an "_at_{ow}x{oh}" suffix when the
/// output resolution differs from the crop.
inline std::string directory_key(const std::string& id, const Rect& crop,
                                 int out_w, int out_h) {
    std::string key = id + "_crop_" + std::to_string(crop.x) + "_" +
                      std::to_string(crop.y) + "_" + std::to_string(crop.w) +
                      "_" + std::to_string(crop.h);
    if (out_w != crop.w || out_h != crop.h) {
        key += "_at_" + std::to_string(out_w) + "x" + std::to_string(out_h);
    }
    return key + ".pfm";
}

/// Serves precomputed depth from a directory of PFM files keyed by
/// directory_key. Useful for replaying expensive model outputs offline.
class DirectoryBackend : public DepthBackend {
public:
    explicit DirectoryBackend(std::filesystem::path root)
        : root_(std::move(root)) {}

    DepthGrid infer(const ImageSource& image, const Rect& crop, int out_w,
                    int out_h) override {
        detail::validate_infer_request(image, crop, out_w, out_h);
        const std::string key = directory_key(image.id(), crop, out_w, out_h);
        const std::filesystem::path path = root_ / key;
        if (!std::filesystem::exists(path)) {
            throw MissingEntryError("directory backend: no entry '" + key +
                                    "' under " + root_.string());
        }
        DepthGrid grid = read_pfm(read_file(path));
        if (grid.width() != out_w || grid.height() != out_h) {
            throw BackendError("directory backend: '" + key + "' is " +
                               std::to_string(grid.width()) + "x" +
                               std::to_string(grid.height()) + ", expected " +
                               std::to_string(out_w) + "x" +
                               std::to_string(out_h));
        }
        return grid;
    }

    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
};

inline std::unique_ptr<DepthBackend>
directory_backend(std::filesystem::path root) {
    return std::make_unique<DirectoryBackend>(std::move(root));
}

/// Runs an external program per inference. The command template must name
/// {input} and {output}; {x} {y} {w} {h} {ow} {oh} {iw} {ih} also expand
/// (crop rect, output dims, full image dims). The input file holds the crop
/// resized to the requested output resolution: a PFM for single-channel
/// sources (bit-exact transport) or an 8-bit PNG for RGB. The program must
/// exit 0 and write a PFM depth map at {output}; output at a different
/// resolution is bilinearly resampled to the request.
class ProcessBackend : public DepthBackend {
public:
    explicit ProcessBackend(std::string command_template,
                            std::filesystem::path io_dir = {},
                            std::optional<int> native = std::nullopt,
                            int max_concurrency = 1)
        : template_(std::move(command_template)),
          io_dir_(std::move(io_dir)),
          native_(native),
          max_concurrency_(max_concurrency),
          timeout_secs_(backend_timeout_secs()) {
        if (template_.find("{input}") == std::string::npos ||
            template_.find("{output}") == std::string::npos) {
            throw InvalidParameterError(
                "process backend: command template must contain {input} and "
                "{output}, got '" + template_ + "'");
        }
        if (max_concurrency_ < 1) {
            throw InvalidParameterError(
                "process backend: max_concurrency must be >= 1");
        }
        if (io_dir_.empty()) {
            io_dir_ = std::filesystem::temp_directory_path() /
                      ("effdepth_backend_" + std::to_string(::getpid()));
        }
        std::filesystem::create_directories(io_dir_);
    }

    DepthGrid infer(const ImageSource& image, const Rect& crop, int out_w,
                    int out_h) override {
        detail::validate_infer_request(image, crop, out_w, out_h);
        Image in = image.read(crop);
        if (in.width() != out_w || in.height() != out_h) {
            in = resize_bilinear(in, out_w, out_h);
        }
        const std::string base = "call_" + std::to_string(::getpid()) + "_" +
                                 std::to_string(counter_.fetch_add(1));
        const bool gray = in.channel_count() == 1;
        const std::filesystem::path input =
            io_dir_ / (base + (gray ? "_in.pfm" : "_in.png"));
        const std::filesystem::path output = io_dir_ / (base + "_out.pfm");
        const std::filesystem::path log = io_dir_ / (base + "_log.txt");
        struct Scratch {
            std::vector<std::filesystem::path> paths;
            ~Scratch() {
                std::error_code ec;
                for (const auto& p : paths) std::filesystem::remove(p, ec);
            }
        } scratch{{input, output, log}};
        write_file(input, gray ? write_pfm(in.channel(0)) : write_png8(in));
        std::string cmd = template_;
        const std::pair<const char*, std::string> subs[] = {
            {"{input}", input.string()},   {"{output}", output.string()},
            {"{x}", std::to_string(crop.x)},  {"{y}", std::to_string(crop.y)},
            {"{w}", std::to_string(crop.w)},  {"{h}", std::to_string(crop.h)},
            {"{ow}", std::to_string(out_w)},  {"{oh}", std::to_string(out_h)},
            {"{iw}", std::to_string(image.width())},
            {"{ih}", std::to_string(image.height())},
        };
        for (const auto& [key, value] : subs) {
            for (std::size_t pos = cmd.find(key); pos != std::string::npos;
                 pos = cmd.find(key, pos + value.size())) {
                cmd.replace(pos, std::string(key).size(), value);
            }
        }
        const CommandResult r = run_command(cmd, timeout_secs_, log);
        if (r.timed_out) {
            throw BackendError("backend command timed out after " +
                               std::to_string(timeout_secs_) + "s: " + cmd);
        }
        if (r.exit_code != 0) {
            throw BackendError(
                "backend command failed with exit code " +
                std::to_string(r.exit_code) + ": " + cmd +
                (r.output.empty() ? "" : "\noutput:\n" + r.output));
        }
        if (!std::filesystem::exists(output)) {
            throw BackendError("backend command wrote no output file: " + cmd);
        }
        DepthGrid grid = [&] {
            try {
                return read_pfm(read_file(output));
            } catch (const FormatError& e) {
                throw BackendError(std::string("backend output malformed: ") +
                                   e.what());
            }
        }();
        if (grid.width() != out_w || grid.height() != out_h) {
            grid = resize_bilinear(grid, out_w, out_h);
        }
        return grid;
    }

    int max_concurrency() const override { return max_concurrency_; }
    std::optional<int> native_size() const override { return native_; }

private:
    std::string template_;
    std::filesystem::path io_dir_;
    std::optional<int> native_;
    int max_concurrency_;
    double timeout_secs_;
    std::atomic<std::uint64_t> counter_{0};
};

inline std::unique_ptr<DepthBackend>
process_backend(std::string command_template,
                std::filesystem::path io_dir = {}) {
    return std::make_unique<ProcessBackend>(std::move(command_template),
                                            std::move(io_dir));
}

/// Perceptual plug-in over an external program. Both [-1,1] maps travel as
/// PFMs ({input_a}, {input_b}); the program prints or writes one scalar
/// distance to {output}. Channel replication for RGB-hungry models happens
/// inside the external program.
inline PerceptualBackend
process_perceptual_backend(std::string command_template,
                           std::filesystem::path io_dir = {}) {
    for (const char* key : {"{input_a}", "{input_b}", "{output}"}) {
        if (command_template.find(key) == std::string::npos) {
            throw InvalidParameterError(
                std::string("perceptual backend: template must contain ") +
                key);
        }
    }
    if (io_dir.empty()) {
        io_dir = std::filesystem::temp_directory_path() /
                 ("effdepth_perceptual_" + std::to_string(::getpid()));
    }
    std::filesystem::create_directories(io_dir);
    auto counter = std::make_shared<std::atomic<std::uint64_t>>(0);
    const double timeout = backend_timeout_secs();
    return [command_template, io_dir, counter,
            timeout](const DepthGrid& a, const DepthGrid& b) -> double {
        const std::string base = "lpips_" + std::to_string(::getpid()) + "_" +
                                 std::to_string(counter->fetch_add(1));
        const std::filesystem::path pa = io_dir / (base + "_a.pfm");
        const std::filesystem::path pb = io_dir / (base + "_b.pfm");
        const std::filesystem::path out = io_dir / (base + "_out.txt");
        const std::filesystem::path log = io_dir / (base + "_log.txt");
        struct Scratch {
            std::vector<std::filesystem::path> paths;
            ~Scratch() {
                std::error_code ec;
                for (const auto& p : paths) std::filesystem::remove(p, ec);
            }
        } scratch{{pa, pb, out, log}};
        write_file(pa, write_pfm(a));
        write_file(pb, write_pfm(b));
        std::string cmd = command_template;
        const std::pair<const char*, std::string> subs[] = {
            {"{input_a}", pa.string()},
            {"{input_b}", pb.string()},
            {"{output}", out.string()},
        };
        for (const auto& [key, value] : subs) {
            for (std::size_t pos = cmd.find(key); pos != std::string::npos;
                 pos = cmd.find(key, pos + value.size())) {
                cmd.replace(pos, std::string(key).size(), value);
            }
        }
        const CommandResult r = run_command(cmd, timeout, log);
        if (r.timed_out || r.exit_code != 0) {
            throw BackendError("perceptual command failed (" +
                               (r.timed_out ? std::string("timeout")
                                            : "exit " +
                                                  std::to_string(r.exit_code)) +
                               "): " + cmd);
        }
        const std::string text = read_file(out);
        try {
            return std::stod(text);
        } catch (const std::exception&) {
            throw BackendError("perceptual command wrote no parsable scalar: '" +
                               text + "'");
        }
    };
}

/// Backend spec mini-language:
///   synthetic:KIND[?key=value&...]   KIND in {ramp, radial, sinusoid};
///       keys: seed (enables jitter), base, gx, gy, amp, fx, fy,
///       smin, smax, omin, omax (jitter bounds)
///   dir:/path/to/precomputed
///   cmd:program --in {input} --out {output}
inline std::unique_ptr<DepthBackend>
parse_backend_spec(const std::string& spec,
                   const std::filesystem::path& io_dir = {}) {
    auto usage = [&](const std::string& why) -> UsageError {
        return UsageError("backend spec '" + spec + "': " + why);
    };
    if (spec.rfind("synthetic:", 0) == 0) {
        const std::string rest = spec.substr(10);
        const std::size_t q = rest.find('?');
        const std::string kind_str = rest.substr(0, q);
        SyntheticScene scene;
        if (kind_str == "ramp") {
            scene.kind = SceneKind::RAMP;
        } else if (kind_str == "radial") {
            scene.kind = SceneKind::RADIAL;
        } else if (kind_str == "sinusoid") {
            scene.kind = SceneKind::SINUSOID;
        } else {
            throw usage("unknown scene kind '" + kind_str + "'");
        }
        JitterSpec jitter;
        bool jittered = false;
        if (q != std::string::npos) {
            std::string params = rest.substr(q + 1);
            std::size_t pos = 0;
            while (pos < params.size()) {
                std::size_t amp_pos = params.find('&', pos);
                if (amp_pos == std::string::npos) amp_pos = params.size();
                const std::string kv = params.substr(pos, amp_pos - pos);
                pos = amp_pos + 1;
                const std::size_t eq = kv.find('=');
                if (eq == std::string::npos || eq == 0) {
                    throw usage("malformed parameter '" + kv + "'");
                }
                const std::string key = kv.substr(0, eq);
                const std::string value = kv.substr(eq + 1);
                double num = 0.0;
                try {
                    std::size_t used = 0;
                    num = std::stod(value, &used);
                    if (used != value.size()) throw std::invalid_argument(value);
                } catch (const std::exception&) {
                    throw usage("parameter '" + key + "' has non-numeric value '"
                                + value + "'");
                }
                if (key == "seed") {
                    jitter.seed = static_cast<std::uint64_t>(num);
                    jittered = true;
                } else if (key == "base") { scene.base = num;
                } else if (key == "gx")   { scene.gx = num;
                } else if (key == "gy")   { scene.gy = num;
                } else if (key == "amp")  { scene.amp = num;
                } else if (key == "fx")   { scene.fx = num;
                } else if (key == "fy")   { scene.fy = num;
                } else if (key == "smin") { jitter.scale_min = num; jittered = true;
                } else if (key == "smax") { jitter.scale_max = num; jittered = true;
                } else if (key == "omin") { jitter.offset_min = num; jittered = true;
                } else if (key == "omax") { jitter.offset_max = num; jittered = true;
                } else {
                    throw usage("unknown parameter '" + key + "'");
                }
            }
        }
        if (jittered) scene.jitter = jitter;
        try {
            return synthetic_backend(scene);
        } catch (const InvalidParameterError& e) {
            throw usage(e.what());
        }
    }
    if (spec.rfind("dir:", 0) == 0) {
        const std::string path = spec.substr(4);
        if (path.empty()) throw usage("missing directory path");
        return directory_backend(path);
    }
    if (spec.rfind("cmd:", 0) == 0) {
        const std::string tmpl = spec.substr(4);
        try {
            return std::make_unique<ProcessBackend>(tmpl, io_dir);
        } catch (const InvalidParameterError& e) {
            throw usage(e.what());
        }
    }
    throw usage("unrecognized scheme (want synthetic:, dir:, or cmd:)");
}

} // namespace effdepth
