#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "effdepth/errors.hpp"
#include "effdepth/fsutil.hpp"
#include "effdepth/metrics.hpp"

namespace effdepth {

/// One dataset sample: an input image plus whatever supervision exists for
/// it. Fields this toolkit does not know about survive read/write untouched
/// in `extra`.
struct ManifestEntry {
    std::string id;
    std::string image_path;
    std::optional<std::string> pred_path;
    std::optional<std::string> gt_path;
    std::optional<std::string> pairs_path;
    std::optional<double> depth_cap;
    nlohmann::json extra = nlohmann::json::object();
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    nlohmann::json extra = nlohmann::json::object();
};

namespace detail {

inline std::pair<std::size_t, std::size_t> line_column(std::string_view text,
                                                       std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

inline nlohmann::json parse_json(std::string_view text, const char* what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        // parse_error.byte is 1-based and points one past the offending byte.
        const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
        const auto [line, col] = line_column(text, byte);
        throw FormatError(std::string(what) + ": JSON syntax error at line " +
                          std::to_string(line) + ", column " +
                          std::to_string(col) + ": " + e.what());
    }
}

inline std::string require_string(const nlohmann::json& obj, const char* key,
                                  const std::string& where) {
    if (!obj.contains(key)) {
        throw FormatError("manifest: " + where + " is missing required field '" +
                          key + "'");
    }
    if (!obj[key].is_string()) {
        throw FormatError("manifest: " + where + " field '" + key +
                          "' must be a string");
    }
    return obj[key].get<std::string>();
}

inline std::optional<std::string>
optional_string(const nlohmann::json& obj, const char* key,
                const std::string& where) {
    if (!obj.contains(key)) return std::nullopt;
    if (!obj[key].is_string()) {
        throw FormatError("manifest: " + where + " field '" + key +
                          "' must be a string");
    }
    return obj[key].get<std::string>();
}

} // namespace detail

/// Parse a manifest from JSON text. Paths are kept verbatim; resolution
/// against the manifest's directory happens in load_manifest.
inline Manifest read_manifest(std::string_view text) {
    const nlohmann::json j = detail::parse_json(text, "manifest");
    if (!j.is_object()) {
        throw FormatError("manifest: top level must be a JSON object");
    }
    if (!j.contains("entries") || !j["entries"].is_array()) {
        throw FormatError("manifest: missing 'entries' array");
    }
    Manifest m;
    std::set<std::string> seen;
    for (const nlohmann::json& je : j["entries"]) {
        if (!je.is_object()) {
            throw FormatError("manifest: entries must be JSON objects");
        }
        ManifestEntry e;
        const std::string where =
            "entry " + std::to_string(m.entries.size());
        e.id = detail::require_string(je, "id", where);
        if (!seen.insert(e.id).second) {
            throw FormatError("manifest: duplicate id '" + e.id + "'");
        }
        e.image_path = detail::require_string(je, "image_path", where);
        e.pred_path = detail::optional_string(je, "pred_path", where);
        e.gt_path = detail::optional_string(je, "gt_path", where);
        e.pairs_path = detail::optional_string(je, "pairs_path", where);
        if (je.contains("depth_cap")) {
            if (!je["depth_cap"].is_number()) {
                throw FormatError("manifest: entry '" + e.id +
                                  "' depth_cap must be a number");
            }
            e.depth_cap = je["depth_cap"].get<double>();
        }
        for (const auto& [key, value] : je.items()) {
            if (key != "id" && key != "image_path" && key != "pred_path" &&
                key != "gt_path" && key != "pairs_path" && key != "depth_cap") {
                e.extra[key] = value;
            }
        }
        m.entries.push_back(std::move(e));
    }
    for (const auto& [key, value] : j.items()) {
        if (key != "entries") m.extra[key] = value;
    }
    return m;
}

inline std::string write_manifest(const Manifest& m) {
    nlohmann::json j = m.extra.is_object() ? m.extra : nlohmann::json::object();
    j["entries"] = nlohmann::json::array();
    for (const ManifestEntry& e : m.entries) {
        nlohmann::json je =
            e.extra.is_object() ? e.extra : nlohmann::json::object();
        je["id"] = e.id;
        je["image_path"] = e.image_path;
        if (e.pred_path) je["pred_path"] = *e.pred_path;
        if (e.gt_path) je["gt_path"] = *e.gt_path;
        if (e.pairs_path) je["pairs_path"] = *e.pairs_path;
        if (e.depth_cap) je["depth_cap"] = *e.depth_cap;
        j["entries"].push_back(std::move(je));
    }
    return j.dump(2) + "\n";
}

/// Read a manifest file and anchor every relative path at the manifest's
/// directory, so entries stay valid regardless of the process working dir.
inline Manifest load_manifest(const std::filesystem::path& path) {
    Manifest m = read_manifest(read_file(path));
    const std::filesystem::path base = path.has_parent_path()
                                           ? path.parent_path()
                                           : std::filesystem::path(".");
    for (ManifestEntry& e : m.entries) {
        e.image_path = resolve_relative(base, e.image_path);
        if (e.pred_path) e.pred_path = resolve_relative(base, *e.pred_path);
        if (e.gt_path) e.gt_path = resolve_relative(base, *e.gt_path);
        if (e.pairs_path) e.pairs_path = resolve_relative(base, *e.pairs_path);
    }
    return m;
}

/// Structural check for evaluation runs: every entry must carry ground truth
/// (gt_path) or ordinal labels (pairs_path).
inline void validate_manifest_for_eval(const Manifest& m) {
    for (const ManifestEntry& e : m.entries) {
        if (!e.gt_path && !e.pairs_path) {
            throw FormatError("manifest: entry '" + e.id +
                              "' has neither gt_path nor pairs_path");
        }
    }
}

/// Ordinal pair labels: a JSON array of {"a": [x, y], "b": [x, y],
/// "closer": "a" | "b"} objects.
inline std::vector<OrdinalPair> read_pairs(std::string_view text) {
    const nlohmann::json j = detail::parse_json(text, "pairs");
    if (!j.is_array()) throw FormatError("pairs: top level must be an array");
    std::vector<OrdinalPair> pairs;
    pairs.reserve(j.size());
    auto coord = [](const nlohmann::json& jc, std::size_t idx) {
        if (!jc.is_array() || jc.size() != 2 || !jc[0].is_number_integer() ||
            !jc[1].is_number_integer()) {
            throw FormatError("pairs: entry " + std::to_string(idx) +
                              " coordinates must be [x, y] integer arrays");
        }
        return PixelCoord{jc[0].get<int>(), jc[1].get<int>()};
    };
    for (std::size_t i = 0; i < j.size(); ++i) {
        const nlohmann::json& jp = j[i];
        if (!jp.is_object() || !jp.contains("a") || !jp.contains("b") ||
            !jp.contains("closer")) {
            throw FormatError("pairs: entry " + std::to_string(i) +
                              " must have 'a', 'b', and 'closer'");
        }
        OrdinalPair p;
        p.a = coord(jp["a"], i);
        p.b = coord(jp["b"], i);
        const std::string closer = jp["closer"].is_string()
                                       ? jp["closer"].get<std::string>()
                                       : std::string();
        if (closer == "a") {
            p.relation = OrdinalRelation::A_CLOSER;
        } else if (closer == "b") {
            p.relation = OrdinalRelation::B_CLOSER;
        } else {
            throw FormatError("pairs: entry " + std::to_string(i) +
                              " 'closer' must be \"a\" or \"b\"");
        }
        pairs.push_back(p);
    }
    return pairs;
}

inline std::string write_pairs(const std::vector<OrdinalPair>& pairs) {
    nlohmann::json j = nlohmann::json::array();
    for (const OrdinalPair& p : pairs) {
        j.push_back({{"a", {p.a.x, p.a.y}},
                     {"b", {p.b.x, p.b.y}},
                     {"closer",
                      p.relation == OrdinalRelation::A_CLOSER ? "a" : "b"}});
    }
    return j.dump(2) + "\n";
}

} // namespace effdepth
