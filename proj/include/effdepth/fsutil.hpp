#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include "effdepth/errors.hpp"

namespace effdepth {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open file: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    if (in.bad()) throw FormatError("read failed: " + path.string());
    return bytes;
}

inline void write_file(const std::filesystem::path& path,
                       std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot create file: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw FormatError("write failed: " + path.string());
}

/// Resolve a manifest-relative path: absolute paths pass through, relative
/// ones are anchored at `base`.
inline std::string resolve_relative(const std::filesystem::path& base,
                                    const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_absolute()) return p.string();
    return (base / p).lexically_normal().string();
}

} // namespace effdepth
