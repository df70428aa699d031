#pragma once

#include <bit>
#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include <png.h>

#include "effdepth/errors.hpp"
#include "effdepth/image.hpp"

namespace effdepth {

namespace detail {

struct PngReadSource {
    const char* data;
    std::size_t size;
    std::size_t pos;
};

struct PngErrorSink {
    std::string msg;
};

inline void png_read_cb(png_structp png, png_bytep out, png_size_t n) {
    auto* src = static_cast<PngReadSource*>(png_get_io_ptr(png));
    if (src->pos + n > src->size) {
        png_error(png, "unexpected end of PNG stream");
    }
    std::memcpy(out, src->data + src->pos, n);
    src->pos += n;
}

inline void png_write_cb(png_structp png, png_bytep data, png_size_t n) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), n);
}

inline void png_flush_cb(png_structp) {}

// Capture the message, then take libpng's longjmp exit. The throw happens
// back on the C++ side of the setjmp.
inline void png_error_cb(png_structp png, png_const_charp msg) {
    auto* sink = static_cast<PngErrorSink*>(png_get_error_ptr(png));
    if (sink && msg) sink->msg = msg;
    longjmp(png_jmpbuf(png), 1);
}

inline void png_warn_cb(png_structp, png_const_charp) {}

inline bool is_png(std::string_view bytes) {
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G',
                                         '\r', '\n', 0x1a, '\n'};
    return bytes.size() >= 8 && std::memcmp(bytes.data(), sig, 8) == 0;
}

// 8-bit interleaved rows -> [0,1] channel planes.
inline Image planes_from_rows8(const std::vector<unsigned char>& rows, int w,
                               int h, int channels) {
    std::vector<std::vector<float>> planes(
        static_cast<std::size_t>(channels),
        std::vector<float>(static_cast<std::size_t>(w) * h));
    for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i) {
        for (int c = 0; c < channels; ++c) {
            planes[static_cast<std::size_t>(c)][i] =
                static_cast<float>(rows[i * channels + c]) / 255.0f;
        }
    }
    std::vector<DepthGrid> grids;
    grids.reserve(static_cast<std::size_t>(channels));
    for (auto& p : planes) grids.emplace_back(w, h, std::move(p));
    return Image(std::move(grids));
}

} // namespace detail

/// Decode an 8-bit PNG into [0,1] channel planes. Palette and low-bit
/// images are expanded, 16-bit samples are reduced to 8, and any alpha
/// channel is dropped, leaving 1 (gray) or 3 (RGB) channels.
inline Image read_png(std::string_view bytes) {
    detail::PngReadSource src{bytes.data(), bytes.size(), 0};
    detail::PngErrorSink err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err,
                                             detail::png_error_cb,
                                             detail::png_warn_cb);
    if (!png) throw FormatError("png: failed to allocate reader");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw FormatError("png: failed to allocate info");
    }
    std::vector<unsigned char> data;
    std::vector<png_bytep> row_ptrs;
    int w = 0, h = 0, channels = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png: " + (err.msg.empty() ? "decode error" : err.msg));
    }
    png_set_read_fn(png, &src, detail::png_read_cb);
    png_read_info(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (depth == 16) png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    w = static_cast<int>(png_get_image_width(png, info));
    h = static_cast<int>(png_get_image_height(png, info));
    channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png: unsupported channel count " +
                          std::to_string(channels));
    }
    data.resize(static_cast<std::size_t>(w) * h * channels);
    row_ptrs.resize(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) {
        row_ptrs[static_cast<std::size_t>(y)] =
            data.data() + static_cast<std::size_t>(y) * w * channels;
    }
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return detail::planes_from_rows8(data, w, h, channels);
}

/// Encode [0,1] channel planes as an 8-bit gray or RGB PNG (values clamped,
/// then rounded to the nearest of 256 levels).
inline std::string write_png8(const Image& img) {
    detail::PngErrorSink err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err,
                                              detail::png_error_cb,
                                              detail::png_warn_cb);
    if (!png) throw FormatError("png: failed to allocate writer");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw FormatError("png: failed to allocate info");
    }
    const int w = img.width();
    const int h = img.height();
    const int channels = img.channel_count();
    std::string out;
    std::vector<unsigned char> data(static_cast<std::size_t>(w) * h * channels);
    for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i) {
        for (int c = 0; c < channels; ++c) {
            float v = img.channel(c).values()[i];
            v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
            data[i * channels + c] =
                static_cast<unsigned char>(v * 255.0f + 0.5f);
        }
    }
    std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) {
        row_ptrs[static_cast<std::size_t>(y)] =
            data.data() + static_cast<std::size_t>(y) * w * channels;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("png: " + (err.msg.empty() ? "encode error" : err.msg));
    }
    png_set_write_fn(png, &out, detail::png_write_cb, detail::png_flush_cb);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w),
                 static_cast<png_uint_32>(h), 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, row_ptrs.data());
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
    return out;
}

/// Encode raw 16-bit gray samples (used by the quantized depth format).
inline std::string write_png16_gray(const std::vector<std::uint16_t>& samples,
                                    int w, int h) {
    if (w < 1 || h < 1 ||
        samples.size() != static_cast<std::size_t>(w) * h) {
        throw InvalidParameterError("write_png16_gray: bad dimensions");
    }
    detail::PngErrorSink err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err,
                                              detail::png_error_cb,
                                              detail::png_warn_cb);
    if (!png) throw FormatError("png: failed to allocate writer");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw FormatError("png: failed to allocate info");
    }
    std::string out;
    std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) {
        row_ptrs[static_cast<std::size_t>(y)] =
            reinterpret_cast<png_bytep>(const_cast<std::uint16_t*>(
                samples.data() + static_cast<std::size_t>(y) * w));
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("png: " + (err.msg.empty() ? "encode error" : err.msg));
    }
    png_set_write_fn(png, &out, detail::png_write_cb, detail::png_flush_cb);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w),
                 static_cast<png_uint_32>(h), 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if constexpr (std::endian::native == std::endian::little) png_set_swap(png);
    png_write_image(png, row_ptrs.data());
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
    return out;
}

/// Decode a 16-bit gray PNG back to raw samples.
inline std::vector<std::uint16_t> read_png16_gray(std::string_view bytes,
                                                  int& w, int& h) {
    detail::PngReadSource src{bytes.data(), bytes.size(), 0};
    detail::PngErrorSink err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err,
                                             detail::png_error_cb,
                                             detail::png_warn_cb);
    if (!png) throw FormatError("png: failed to allocate reader");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw FormatError("png: failed to allocate info");
    }
    std::vector<std::uint16_t> samples;
    std::vector<png_bytep> row_ptrs;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png: " + (err.msg.empty() ? "decode error" : err.msg));
    }
    png_set_read_fn(png, &src, detail::png_read_cb);
    png_read_info(png, info);
    if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY ||
        png_get_bit_depth(png, info) != 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png: expected 16-bit gray depth image");
    }
    if constexpr (std::endian::native == std::endian::little) png_set_swap(png);
    png_read_update_info(png, info);
    w = static_cast<int>(png_get_image_width(png, info));
    h = static_cast<int>(png_get_image_height(png, info));
    samples.resize(static_cast<std::size_t>(w) * h);
    row_ptrs.resize(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) {
        row_ptrs[static_cast<std::size_t>(y)] = reinterpret_cast<png_bytep>(
            samples.data() + static_cast<std::size_t>(y) * w);
    }
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return samples;
}

namespace detail {

// PNM header tokenizer: whitespace-separated ASCII fields with '#' comments.
class PnmHeaderReader {
public:
    explicit PnmHeaderReader(std::string_view bytes) : bytes_(bytes) {}

    std::string token() {
        skip();
        const std::size_t start = pos_;
        while (pos_ < bytes_.size() && !is_space(bytes_[pos_])) ++pos_;
        if (start == pos_) throw FormatError("ppm: truncated header");
        return std::string(bytes_.substr(start, pos_ - start));
    }

    int int_token(const char* what) {
        const std::string tok = token();
        std::size_t used = 0;
        long v = 0;
        try {
            v = std::stol(tok, &used);
        } catch (const std::exception&) {
            throw FormatError(std::string("ppm: bad ") + what + " '" + tok + "'");
        }
        if (used != tok.size() || v < 0) {
            throw FormatError(std::string("ppm: bad ") + what + " '" + tok + "'");
        }
        return static_cast<int>(v);
    }

    std::size_t payload_offset() {
        if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) {
            throw FormatError("ppm: missing separator before payload");
        }
        return pos_ + 1;
    }

private:
    static bool is_space(char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
               c == '\v';
    }
    void skip() {
        while (pos_ < bytes_.size()) {
            if (is_space(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

} // namespace detail

/// Decode binary PGM ("P5", gray) or PPM ("P6", RGB) with maxval 255.
inline Image read_pnm(std::string_view bytes) {
    detail::PnmHeaderReader hdr(bytes);
    const std::string magic = hdr.token();
    int channels = 0;
    if (magic == "P5") {
        channels = 1;
    } else if (magic == "P6") {
        channels = 3;
    } else {
        throw FormatError("ppm: unsupported magic '" + magic + "'");
    }
    const int w = hdr.int_token("width");
    const int h = hdr.int_token("height");
    const int maxval = hdr.int_token("maxval");
    if (w < 1 || h < 1) throw FormatError("ppm: bad dimensions");
    if (maxval != 255) {
        throw FormatError("ppm: only maxval 255 is supported, got " +
                          std::to_string(maxval));
    }
    const std::size_t off = hdr.payload_offset();
    const std::size_t count = static_cast<std::size_t>(w) * h * channels;
    if (bytes.size() - off < count) {
        throw FormatError("ppm: truncated payload");
    }
    std::vector<unsigned char> data(count);
    std::memcpy(data.data(), bytes.data() + off, count);
    return detail::planes_from_rows8(data, w, h, channels);
}

/// Decode an image payload, dispatching on the PNG signature vs PNM magic.
inline Image read_image(std::string_view bytes) {
    if (detail::is_png(bytes)) return read_png(bytes);
    if (bytes.size() >= 2 && bytes[0] == 'P' &&
        (bytes[1] == '5' || bytes[1] == '6')) {
        return read_pnm(bytes);
    }
    throw FormatError("read_image: unrecognized format (want PNG, P5, or P6)");
}

} // namespace effdepth
