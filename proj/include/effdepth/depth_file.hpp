#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "effdepth/errors.hpp"
#include "effdepth/fsutil.hpp"
#include "effdepth/grid.hpp"
#include "effdepth/manifest.hpp"
#include "effdepth/pfm.hpp"
#include "effdepth/png_io.hpp"

namespace effdepth {

enum class DepthFileFormat { PFM_GRAY, PNG16_WITH_SIDECAR, RAW_F32LE };

inline DepthFileFormat format_for_path(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pfm") return DepthFileFormat::PFM_GRAY;
    if (ext == ".png") return DepthFileFormat::PNG16_WITH_SIDECAR;
    if (ext == ".raw" || ext == ".f32") return DepthFileFormat::RAW_F32LE;
    throw FormatError("unrecognized depth file extension '" + ext + "' on " +
                      path.string() + " (want .pfm, .png, .raw, or .f32)");
}

namespace detail {

inline std::filesystem::path sidecar_path(const std::filesystem::path& png) {
    std::filesystem::path p = png;
    p += ".json";
    return p;
}

} // namespace detail

/// Quantize to 16-bit gray PNG plus a JSON sidecar {"scale", "offset"} such
/// that value = sample * scale + offset. Worst-case per-pixel error is half
/// a quantization step, within the (max-min)/65535 budget.
inline void save_depth_png16(const std::filesystem::path& path,
                             const DepthGrid& grid) {
    if (!grid.fully_valid()) {
        throw UnsupportedInputError(
            "png16 depth cannot represent invalid pixels; use .pfm");
    }
    const auto [lo_it, hi_it] =
        std::minmax_element(grid.values().begin(), grid.values().end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    const double step = (hi - lo) / 65535.0;
    std::vector<std::uint16_t> q(grid.size());
    if (step > 0.0) {
        for (std::size_t i = 0; i < q.size(); ++i) {
            const double t = (grid.values()[i] - lo) / step;
            q[i] = static_cast<std::uint16_t>(
                std::clamp(std::llround(t), 0LL, 65535LL));
        }
    }
    write_file(path, write_png16_gray(q, grid.width(), grid.height()));
    nlohmann::json sidecar{{"scale", step}, {"offset", lo}};
    write_file(detail::sidecar_path(path), sidecar.dump(2) + "\n");
}

inline DepthGrid load_depth_png16(const std::filesystem::path& path) {
    const std::filesystem::path sc = detail::sidecar_path(path);
    if (!std::filesystem::exists(sc)) {
        throw FormatError("png16 depth requires a sidecar: " + sc.string() +
                          " not found");
    }
    const nlohmann::json j = detail::parse_json(read_file(sc), "sidecar");
    if (!j.is_object() || !j.contains("scale") || !j.contains("offset") ||
        !j["scale"].is_number() || !j["offset"].is_number()) {
        throw FormatError("sidecar " + sc.string() +
                          " must contain numeric 'scale' and 'offset'");
    }
    const double scale = j["scale"].get<double>();
    const double offset = j["offset"].get<double>();
    int w = 0, h = 0;
    const std::vector<std::uint16_t> q = read_png16_gray(read_file(path), w, h);
    std::vector<float> vals(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
        vals[i] = static_cast<float>(q[i] * scale + offset);
    }
    return DepthGrid(w, h, std::move(vals));
}

/// Write a depth grid in the format implied by the extension.
inline void save_depth(const std::filesystem::path& path,
                       const DepthGrid& grid) {
    switch (format_for_path(path)) {
        case DepthFileFormat::PFM_GRAY:
            write_file(path, write_pfm(grid));
            return;
        case DepthFileFormat::PNG16_WITH_SIDECAR:
            save_depth_png16(path, grid);
            return;
        case DepthFileFormat::RAW_F32LE:
            write_file(path, write_raw_f32le(grid));
            return;
    }
}

/// Read a depth grid, format implied by the extension. Raw dumps carry no
/// header, so they need the dimensions spelled out via load_depth_raw.
inline DepthGrid load_depth(const std::filesystem::path& path) {
    switch (format_for_path(path)) {
        case DepthFileFormat::PFM_GRAY:
            return read_pfm(read_file(path));
        case DepthFileFormat::PNG16_WITH_SIDECAR:
            return load_depth_png16(path);
        case DepthFileFormat::RAW_F32LE:
            throw UsageError("raw depth files carry no dimensions; use "
                             "load_depth_raw(path, width, height)");
    }
    throw FormatError("unreachable");
}

inline DepthGrid load_depth_raw(const std::filesystem::path& path, int width,
                                int height) {
    return read_raw_f32le(read_file(path), width, height);
}

} // namespace effdepth
