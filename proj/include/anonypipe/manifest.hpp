#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "anonypipe/error.hpp"
#include "anonypipe/types.hpp"

namespace anonypipe {

inline constexpr const char* kManifestSchema = "anonypipe-manifest";
inline constexpr int kManifestVersion = 1;

/// One face as persisted in the run manifest.
struct ManifestFace {
    BoundingBox box;
    FaceStatus status = FaceStatus::anonymized;
    std::optional<std::string> prompt;
    std::optional<std::uint32_t> seed;
    double confidence = 0.0;

    friend bool operator==(const ManifestFace&, const ManifestFace&) = default;
};

/// One image as persisted in the run manifest. Paths are relative to the
/// run's input/output roots. Entries that failed as a whole carry `error`
/// and no output path or faces.
struct ManifestEntry {
    std::string image_id;
    std::string source_path;
    std::string output_path;
    std::vector<ManifestFace> faces;
    std::optional<std::string> error;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
    std::vector<ManifestEntry> entries;

    friend bool operator==(const Manifest&, const Manifest&) = default;
};

namespace detail {

inline nlohmann::json face_to_json(const ManifestFace& face) {
    nlohmann::json j;
    j["box"] = {{"x", face.box.x}, {"y", face.box.y}, {"w", face.box.w}, {"h", face.box.h}};
    j["status"] = to_string(face.status);
    if (face.prompt) j["prompt"] = *face.prompt;
    if (face.seed) j["seed"] = *face.seed;
    j["confidence"] = face.confidence;
    return j;
}

inline ManifestFace face_from_json(const nlohmann::json& j) {
    ManifestFace face;
    const auto& box = j.at("box");
    face.box = BoundingBox{box.at("x").get<int>(), box.at("y").get<int>(), box.at("w").get<int>(),
                           box.at("h").get<int>()};
    face.status = face_status_from_string(j.at("status").get<std::string>());
    if (j.contains("prompt")) face.prompt = j.at("prompt").get<std::string>();
    if (j.contains("seed")) face.seed = j.at("seed").get<std::uint32_t>();
    face.confidence = j.at("confidence").get<double>();
    return face;
}

}  // namespace detail

/**
 * Serializes a manifest as line-delimited JSON: a schema/version header line
 * followed by one record per image. The encoding is deterministic (sorted
 * object keys), so identical manifests serialize to identical bytes.
 */
inline std::string serialize_manifest(const Manifest& manifest) {
    std::string out;
    nlohmann::json header;
    header["schema"] = kManifestSchema;
    header["version"] = kManifestVersion;
    out += header.dump();
    out += '\n';
    for (const auto& entry : manifest.entries) {
        nlohmann::json j;
        j["image_id"] = entry.image_id;
        j["source_path"] = entry.source_path;
        if (entry.error) {
            j["error"] = *entry.error;
        } else {
            j["output_path"] = entry.output_path;
            j["faces"] = nlohmann::json::array();
            for (const auto& face : entry.faces) j["faces"].push_back(detail::face_to_json(face));
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

/// Parses serialize_manifest() output. Header schema/version must match;
/// unknown record fields are ignored for forward compatibility.
inline Manifest parse_manifest(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw ValidationError("manifest: empty file, expected a header line");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("manifest: bad header line: ") + e.what());
    }
    if (!header.contains("schema") || header["schema"] != kManifestSchema)
        throw ValidationError("manifest: missing or unknown schema in header");
    if (!header.contains("version") || !header["version"].is_number_integer() ||
        header["version"].get<int>() != kManifestVersion)
        throw ValidationError("manifest: unsupported version, expected " +
                              std::to_string(kManifestVersion));

    Manifest manifest;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            ManifestEntry entry;
            entry.image_id = j.at("image_id").get<std::string>();
            entry.source_path = j.at("source_path").get<std::string>();
            if (j.contains("error")) {
                entry.error = j.at("error").get<std::string>();
            } else {
                entry.output_path = j.at("output_path").get<std::string>();
                for (const auto& f : j.at("faces")) entry.faces.push_back(detail::face_from_json(f));
            }
            manifest.entries.push_back(std::move(entry));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("manifest: bad record on line " + std::to_string(line_no) + ": " +
                                  e.what());
        }
    }
    return manifest;
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write manifest " + path.string());
    out << serialize_manifest(manifest);
    if (!out)
        throw IoError("failed writing manifest " + path.string());
}

inline Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot read manifest " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_manifest(buf.str());
}

}  // namespace anonypipe
