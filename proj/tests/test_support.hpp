#pragma once

// Shared fixtures and helpers for the test suites.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "anonypipe/attributes.hpp"
#include "anonypipe/detection.hpp"
#include "anonypipe/image.hpp"
#include "anonypipe/inpainting.hpp"
#include "anonypipe/pipeline.hpp"

namespace testsupport {

using namespace anonypipe;
namespace fs = std::filesystem;

inline ImageRecord random_image(std::mt19937& rng, std::string id, int height, int width) {
    ImageRecord img = ImageRecord::blank(std::move(id), height, width);
    std::uniform_int_distribution<int> byte(0, 255);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(byte(rng));
    return img;
}

inline BoundingBox random_inside_box(std::mt19937& rng, int height, int width, int min_side = 1,
                                     int max_side = 0) {
    if (max_side <= 0) max_side = std::min(height, width);
    std::uniform_int_distribution<int> w_dist(min_side, std::min(max_side, width));
    std::uniform_int_distribution<int> h_dist(min_side, std::min(max_side, height));
    const int w = w_dist(rng);
    const int h = h_dist(rng);
    std::uniform_int_distribution<int> x_dist(0, width - w);
    std::uniform_int_distribution<int> y_dist(0, height - h);
    return BoundingBox{x_dist(rng), y_dist(rng), w, h};
}

/// Nested-loop reference rasterizer, independent of rasterize_mask.
inline BinaryMask oracle_mask(const BoundingBox& box, int height, int width) {
    BinaryMask m = BinaryMask::zeros(height, width);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c)
            m.at(r, c) = (r >= box.y && r < box.y + box.h && c >= box.x && c < box.x + box.w) ? 1 : 0;
    return m;
}

/// Detector that returns a preset list, for in-memory pipeline tests.
class FixedDetector : public FaceDetector {
public:
    std::vector<FaceDetection> detections;
    int calls = 0;

    FixedDetector() = default;
    explicit FixedDetector(std::vector<FaceDetection> dets) : detections(std::move(dets)) {}

    std::vector<FaceDetection> detect(const ImageRecord&) override {
        ++calls;
        return detections;
    }
};

class ThrowingDetector : public FaceDetector {
public:
    std::vector<FaceDetection> detect(const ImageRecord&) override {
        throw BackendError("detector exploded");
    }
};

/// Extractor that answers every (id, index) crop with attributes cycled from
/// the face index, and records the crops it saw.
class CyclingExtractor : public AttributeExtractor {
public:
    std::vector<ImageRecord> crops;

    RawAttributeScores extract(const ImageRecord& face_crop) override {
        crops.push_back(face_crop);
        const auto hash_pos = face_crop.id.rfind('#');
        if (hash_pos == std::string::npos)
            throw BackendError("cycling extractor: crop id has no face index");
        const int k = std::stoi(face_crop.id.substr(hash_pos + 1));
        RawAttributeScores raw;
        raw.age = 20.0 + k;
        const Gender g = kAllGenders[static_cast<std::size_t>(k) % kAllGenders.size()];
        const Ethnicity t = kAllEthnicities[static_cast<std::size_t>(k) % kAllEthnicities.size()];
        const Emotion m = kAllEmotions[static_cast<std::size_t>(k) % kAllEmotions.size()];
        for (Gender x : kAllGenders) raw.gender_scores[gender_label(x)] = (x == g) ? 1.0 : 0.0;
        for (Ethnicity x : kAllEthnicities)
            raw.ethnicity_scores[ethnicity_label(x)] = (x == t) ? 1.0 : 0.0;
        for (Emotion x : kAllEmotions) raw.emotion_scores[emotion_label(x)] = (x == m) ? 1.0 : 0.0;
        return raw;
    }
};

class FailingExtractor : public AttributeExtractor {
public:
    RawAttributeScores extract(const ImageRecord&) override {
        throw BackendError("extractor exploded");
    }
};

class FailingInpainter : public InpaintBackend {
public:
    int calls = 0;
    ImageRecord inpaint(const ImageRecord&, const BinaryMask&, const std::string&, std::uint32_t,
                        const InpaintParams&) override {
        ++calls;
        throw BackendError("inpainter exploded");
    }
};

/// Self-deleting temporary directory.
struct TempDir {
    fs::path path;

    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path = fs::temp_directory_path() /
               ("anonypipe_" + tag + "_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter.fetch_add(1)));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

inline void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline std::vector<std::uint8_t> read_bytes(const fs::path& p) {
    const std::string s = read_text(p);
    return std::vector<std::uint8_t>(s.begin(), s.end());
}

struct CommandResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr combined
};

/// Runs a shell command and captures combined output and exit code.
inline CommandResult run_command(const std::string& command) {
    CommandResult result;
    FILE* pipe = ::popen((command + " 2>&1").c_str(), "r");
    if (pipe == nullptr) {
        result.output = "popen failed";
        return result;
    }
    char buffer[4096];
    std::size_t n = 0;
    while ((n = std::fread(buffer, 1, sizeof buffer, pipe)) > 0) result.output.append(buffer, n);
    const int status = ::pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

/// Path to the built CLI binary, provided by CMake through the environment.
inline std::string cli_path() {
    const char* p = std::getenv("ANONYPIPE_CLI");
    return p == nullptr ? std::string() : std::string(p);
}

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'')
            out += "'\\''";
        else
            out.push_back(c);
    }
    out += "'";
    return out;
}

}  // namespace testsupport
