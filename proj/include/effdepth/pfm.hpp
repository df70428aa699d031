#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "effdepth/bimodal.hpp"
#include "effdepth/errors.hpp"
#include "effdepth/grid.hpp"

namespace effdepth {

namespace detail {

inline std::uint32_t bswap32(std::uint32_t v) {
    return ((v & 0xff000000u) >> 24) | ((v & 0x00ff0000u) >> 8) |
           ((v & 0x0000ff00u) << 8) | ((v & 0x000000ffu) << 24);
}

// Append one float as 4 little-endian bytes.
inline void put_f32le(std::string& out, float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    if constexpr (std::endian::native == std::endian::big) u = bswap32(u);
    char b[4];
    std::memcpy(b, &u, 4);
    out.append(b, 4);
}

inline float get_f32(const char* p, bool file_little_endian) {
    std::uint32_t u;
    std::memcpy(&u, p, 4);
    const bool host_little = std::endian::native == std::endian::little;
    if (host_little != file_little_endian) u = bswap32(u);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

// Whitespace-delimited header tokenizer. PFM headers are ASCII tokens
// (magic, width, height, scale) with exactly one whitespace character
// separating the scale from the binary payload.
class PfmHeaderReader {
public:
    explicit PfmHeaderReader(std::string_view bytes) : bytes_(bytes) {}

    std::string token() {
        while (pos_ < bytes_.size() && is_space(bytes_[pos_])) ++pos_;
        const std::size_t start = pos_;
        while (pos_ < bytes_.size() && !is_space(bytes_[pos_])) ++pos_;
        if (start == pos_) throw FormatError("pfm: truncated header");
        return std::string(bytes_.substr(start, pos_ - start));
    }

    // Consume the single whitespace byte that terminates the header.
    std::size_t payload_offset() {
        if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) {
            throw FormatError("pfm: missing separator before payload");
        }
        return pos_ + 1;
    }

private:
    static bool is_space(char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
               c == '\v';
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

inline int parse_dim(const std::string& tok, const char* what) {
    std::size_t used = 0;
    long v = 0;
    try {
        v = std::stol(tok, &used);
    } catch (const std::exception&) {
        throw FormatError(std::string("pfm: bad ") + what + " '" + tok + "'");
    }
    if (used != tok.size() || v < 1 || v > (1L << 30)) {
        throw FormatError(std::string("pfm: bad ") + what + " '" + tok + "'");
    }
    return static_cast<int>(v);
}

inline double parse_scale(const std::string& tok) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(tok, &used);
    } catch (const std::exception&) {
        throw FormatError("pfm: bad scale '" + tok + "'");
    }
    if (used != tok.size() || v == 0.0 || !std::isfinite(v)) {
        throw FormatError("pfm: bad scale '" + tok + "'");
    }
    return v;
}

// Shared reader for "Pf"-family payloads: `planes` full planes, each stored
// bottom-up row-major. Returns raw floats, plane-major.
inline std::vector<float> read_pf_planes(std::string_view bytes,
                                         const char* magic, int planes,
                                         int& width, int& height) {
    PfmHeaderReader hdr(bytes);
    const std::string tag = hdr.token();
    if (tag != magic) {
        if (tag == "PF" && std::string_view(magic) == "Pf") {
            throw FormatError(
                "pfm: 'PF' is a 3-channel color map, not a single-channel "
                "depth grid");
        }
        throw FormatError("pfm: expected '" + std::string(magic) +
                          "' header, got '" + tag + "'");
    }
    width = parse_dim(hdr.token(), "width");
    height = parse_dim(hdr.token(), "height");
    const double scale = parse_scale(hdr.token());
    const bool file_little = scale < 0.0;
    const std::size_t off = hdr.payload_offset();
    const std::size_t count = static_cast<std::size_t>(width) * height *
                              static_cast<std::size_t>(planes);
    if (bytes.size() - off < count * 4) {
        throw FormatError("pfm: truncated payload, expected " +
                          std::to_string(count * 4) + " bytes, have " +
                          std::to_string(bytes.size() - off));
    }
    std::vector<float> vals(count);
    const char* p = bytes.data() + off;
    for (std::size_t plane = 0; plane < static_cast<std::size_t>(planes);
         ++plane) {
        for (int y = 0; y < height; ++y) {
            // File rows run bottom-up.
            const std::size_t row = static_cast<std::size_t>(height - 1 - y);
            float* dst = vals.data() + plane * width * height +
                         static_cast<std::size_t>(y) * width;
            const char* src =
                p + (plane * width * height + row * width) * 4;
            for (int x = 0; x < width; ++x) {
                dst[x] = get_f32(src + static_cast<std::size_t>(x) * 4,
                                 file_little);
            }
        }
    }
    return vals;
}

inline void write_pf_planes(std::string& out, const char* magic, int width,
                            int height, int planes, const float* vals) {
    out += magic;
    out += '\n';
    out += std::to_string(width) + " " + std::to_string(height) + "\n";
    out += "-1.0\n"; // negative scale: little-endian payload
    for (std::size_t plane = 0; plane < static_cast<std::size_t>(planes);
         ++plane) {
        for (int y = height - 1; y >= 0; --y) {
            const float* row = vals + plane * width * height +
                               static_cast<std::size_t>(y) * width;
            for (int x = 0; x < width; ++x) put_f32le(out, row[x]);
        }
    }
}

} // namespace detail

/// Serialize a grid as a single-channel PFM ("Pf"). Rows are stored
/// bottom-up; the scale line is always "-1.0" (little-endian payload);
/// invalid pixels are written as quiet NaN.
inline std::string write_pfm(const DepthGrid& grid) {
    std::vector<float> vals(grid.values());
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (!grid.is_valid_index(i))
            vals[i] = std::numeric_limits<float>::quiet_NaN();
    }
    std::string out;
    out.reserve(vals.size() * 4 + 64);
    detail::write_pf_planes(out, "Pf", grid.width(), grid.height(), 1,
                            vals.data());
    return out;
}

/// Parse a single-channel PFM. The scale's sign selects payload endianness;
/// its magnitude is ignored (values are never rescaled, keeping write-read
/// round trips bit-exact). Non-finite pixels come back masked invalid.
inline DepthGrid read_pfm(std::string_view bytes) {
    int w = 0, h = 0;
    std::vector<float> vals = detail::read_pf_planes(bytes, "Pf", 1, w, h);
    std::vector<std::uint8_t> mask(vals.size(), 1);
    bool any_invalid = false;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (!std::isfinite(vals[i])) {
            mask[i] = 0;
            any_invalid = true;
        }
    }
    if (any_invalid) return DepthGrid(w, h, std::move(vals), std::move(mask));
    return DepthGrid(w, h, std::move(vals));
}

/// Headerless row-major (top-down) little-endian float32 dump. Dimensions
/// travel out of band; invalid pixels use the same NaN convention as PFM.
inline std::string write_raw_f32le(const DepthGrid& grid) {
    std::string out;
    out.reserve(grid.size() * 4);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const float v = grid.is_valid_index(i)
                            ? grid.values()[i]
                            : std::numeric_limits<float>::quiet_NaN();
        detail::put_f32le(out, v);
    }
    return out;
}

inline DepthGrid read_raw_f32le(std::string_view bytes, int width, int height) {
    if (width < 1 || height < 1) {
        throw InvalidParameterError("read_raw_f32le: dimensions must be >= 1");
    }
    const std::size_t count = static_cast<std::size_t>(width) * height;
    if (bytes.size() != count * 4) {
        throw FormatError("raw_f32le: expected " + std::to_string(count * 4) +
                          " bytes for " + std::to_string(width) + "x" +
                          std::to_string(height) + ", have " +
                          std::to_string(bytes.size()));
    }
    std::vector<float> vals(count);
    for (std::size_t i = 0; i < count; ++i) {
        vals[i] = detail::get_f32(bytes.data() + i * 4, true);
    }
    std::vector<std::uint8_t> mask(count, 1);
    bool any_invalid = false;
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::isfinite(vals[i])) {
            mask[i] = 0;
            any_invalid = true;
        }
    }
    if (any_invalid) {
        return DepthGrid(width, height, std::move(vals), std::move(mask));
    }
    return DepthGrid(width, height, std::move(vals));
}

/// Mixture fields use a 5-plane PFM variant tagged "Pf5": same header shape,
/// then the pi, mu1, b1, mu2, b2 planes in that order, each bottom-up.
inline std::string write_bimodal_field(const BimodalField& field) {
    const std::size_t n = static_cast<std::size_t>(field.width()) *
                          field.height();
    std::vector<float> planes(n * 5);
    for (std::size_t i = 0; i < n; ++i) {
        const BimodalParams& p = field.params()[i];
        planes[i] = p.pi;
        planes[n + i] = p.mu1;
        planes[2 * n + i] = p.b1;
        planes[3 * n + i] = p.mu2;
        planes[4 * n + i] = p.b2;
    }
    std::string out;
    out.reserve(planes.size() * 4 + 64);
    detail::write_pf_planes(out, "Pf5", field.width(), field.height(), 5,
                            planes.data());
    return out;
}

inline BimodalField read_bimodal_field(std::string_view bytes) {
    int w = 0, h = 0;
    std::vector<float> planes = detail::read_pf_planes(bytes, "Pf5", 5, w, h);
    const std::size_t n = static_cast<std::size_t>(w) * h;
    std::vector<BimodalParams> params(n);
    for (std::size_t i = 0; i < n; ++i) {
        params[i] = BimodalParams{planes[i], planes[n + i], planes[2 * n + i],
                                  planes[3 * n + i], planes[4 * n + i]};
    }
    return BimodalField(w, h, std::move(params));
}

} // namespace effdepth
