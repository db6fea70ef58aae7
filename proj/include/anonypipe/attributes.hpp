#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "anonypipe/detection.hpp"
#include "anonypipe/error.hpp"
#include "anonypipe/image.hpp"
#include "anonypipe/types.hpp"

namespace anonypipe {

enum class Gender { man, woman };
enum class Ethnicity { asian, indian, black, white, middle_eastern, latino_hispanic };
enum class Emotion { angry, disgust, fear, happy, sad, surprise, neutral };

inline constexpr std::array<Gender, 2> kAllGenders = {Gender::man, Gender::woman};
inline constexpr std::array<Ethnicity, 6> kAllEthnicities = {
    Ethnicity::asian,          Ethnicity::indian, Ethnicity::black,
    Ethnicity::white,          Ethnicity::middle_eastern,
    Ethnicity::latino_hispanic};
inline constexpr std::array<Emotion, 7> kAllEmotions = {
    Emotion::angry, Emotion::disgust,  Emotion::fear,    Emotion::happy,
    Emotion::sad,   Emotion::surprise, Emotion::neutral};

inline const char* gender_label(Gender g) {
    switch (g) {
        case Gender::man: return "Man";
        case Gender::woman: return "Woman";
    }
    throw ValidationError("unknown Gender value");
}

inline const char* ethnicity_label(Ethnicity e) {
    switch (e) {
        case Ethnicity::asian: return "asian";
        case Ethnicity::indian: return "indian";
        case Ethnicity::black: return "black";
        case Ethnicity::white: return "white";
        case Ethnicity::middle_eastern: return "middle eastern";
        case Ethnicity::latino_hispanic: return "latino hispanic";
    }
    throw ValidationError("unknown Ethnicity value");
}

inline const char* emotion_label(Emotion e) {
    switch (e) {
        case Emotion::angry: return "angry";
        case Emotion::disgust: return "disgust";
        case Emotion::fear: return "fear";
        case Emotion::happy: return "happy";
        case Emotion::sad: return "sad";
        case Emotion::surprise: return "surprise";
        case Emotion::neutral: return "neutral";
    }
    throw ValidationError("unknown Emotion value");
}

namespace detail {
// Canonical form for label comparison: lowercase, underscores become spaces.
inline std::string canonical_label(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) out.push_back(c == '_' ? ' ' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}
}  // namespace detail

inline Gender parse_gender(const std::string& s) {
    const std::string c = detail::canonical_label(s);
    for (Gender g : kAllGenders)
        if (c == detail::canonical_label(gender_label(g))) return g;
    throw ValidationError("unknown gender label '" + s + "'");
}

inline Ethnicity parse_ethnicity(const std::string& s) {
    const std::string c = detail::canonical_label(s);
    for (Ethnicity e : kAllEthnicities)
        if (c == ethnicity_label(e)) return e;
    throw ValidationError("unknown ethnicity label '" + s + "'");
}

inline Emotion parse_emotion(const std::string& s) {
    const std::string c = detail::canonical_label(s);
    for (Emotion e : kAllEmotions)
        if (c == emotion_label(e)) return e;
    throw ValidationError("unknown emotion label '" + s + "'");
}

/// Raw backend output: an age estimate plus non-negative score maps for the
/// three categorical attributes.
struct RawAttributeScores {
    double age = 0.0;
    std::map<std::string, double> gender_scores;
    std::map<std::string, double> ethnicity_scores;
    std::map<std::string, double> emotion_scores;
};

/// The four conditioning attributes a prompt is built from.
struct FaceAttributes {
    int age = 1;  // years, >= 1
    Gender gender = Gender::man;
    Ethnicity ethnicity = Ethnicity::asian;
    Emotion emotion = Emotion::neutral;

    friend bool operator==(const FaceAttributes&, const FaceAttributes&) = default;
};

/// Attribute-extractor backend: maps a face crop to raw scores.
class AttributeExtractor {
public:
    virtual ~AttributeExtractor() = default;
    virtual RawAttributeScores extract(const ImageRecord& face_crop) = 0;
};

/**
 * Copies the sub-image covered by pad_box(box, margin_ratio) out of `image`.
 * `box` must already be clamped to the image. The source is never modified;
 * the crop keeps the source image's id and path.
 */
inline ImageRecord crop_face(const ImageRecord& image, const BoundingBox& box, double margin_ratio) {
    image.validate();
    if (!box_inside_frame(box, image.height, image.width))
        throw ValidationError("crop_face: box must be clamped to the image first");
    const BoundingBox padded = pad_box(box, margin_ratio, image.height, image.width);
    ImageRecord crop;
    crop.id = image.id;
    crop.source_path = image.source_path;
    crop.height = padded.h;
    crop.width = padded.w;
    crop.pixels.resize(static_cast<std::size_t>(padded.h) * padded.w * ImageRecord::kChannels);
    const std::size_t row_bytes = static_cast<std::size_t>(padded.w) * ImageRecord::kChannels;
    for (int r = 0; r < padded.h; ++r) {
        const std::uint8_t* src = image.row_ptr(padded.y + r) +
                                  static_cast<std::size_t>(padded.x) * ImageRecord::kChannels;
        std::memcpy(crop.row_ptr(r), src, row_bytes);
    }
    return crop;
}

namespace detail {

// Argmax label of a score map; ties go to the lexicographically smallest
// label (std::map iterates in ascending key order, so keeping strict maxima
// is enough).
inline std::string argmax_label(const std::map<std::string, double>& scores, const char* field) {
    if (scores.empty())
        throw ValidationError(std::string("normalize_attributes: ") + field + " score map is empty");
    const std::string* best = nullptr;
    double best_score = 0.0;
    for (const auto& [label, score] : scores) {
        if (!std::isfinite(score))
            throw ValidationError(std::string("normalize_attributes: non-finite ") + field +
                                  " score for label '" + label + "'");
        if (score < 0.0)
            throw ValidationError(std::string("normalize_attributes: negative ") + field +
                                  " score for label '" + label + "'");
        if (best == nullptr || score > best_score) {
            best = &label;
            best_score = score;
        }
    }
    return *best;
}

}  // namespace detail

/**
 * Collapses raw scores into discrete attributes: argmax per categorical map
 * (ties broken by ascending label order) and round-half-up age with a floor
 * of 1 year.
 */
inline FaceAttributes normalize_attributes(const RawAttributeScores& raw) {
    if (!std::isfinite(raw.age) || raw.age < 0.0)
        throw ValidationError("normalize_attributes: age must be finite and >= 0");
    FaceAttributes out;
    out.age = std::max(1, static_cast<int>(std::floor(raw.age + 0.5)));
    out.gender = parse_gender(detail::argmax_label(raw.gender_scores, "gender"));
    out.ethnicity = parse_ethnicity(detail::argmax_label(raw.ethnicity_scores, "ethnicity"));
    out.emotion = parse_emotion(detail::argmax_label(raw.emotion_scores, "emotion"));
    return out;
}

/**
 * Deterministic extractor for tests and fixture runs: attributes come from a
 * sidecar table keyed by (image_id, face_index).
 *
 * Table format: one record per face, `image_id face_index age gender
 * ethnicity emotion`, whitespace-separated; multi-word labels use
 * underscores (`latino_hispanic`, `middle_eastern`). Blank lines and '#'
 * comments are ignored.
 *
 * The extract() interface only receives a crop, so the pipeline encodes the
 * lookup key into the crop id as `<image_id>#<face_index>`; this stub parses
 * it back out. A key with no table entry is a backend failure.
 */
class StubTableExtractor : public AttributeExtractor {
public:
    struct Entry {
        double age = 0.0;
        Gender gender = Gender::man;
        Ethnicity ethnicity = Ethnicity::asian;
        Emotion emotion = Emotion::neutral;
    };

    StubTableExtractor() = default;
    explicit StubTableExtractor(std::map<std::pair<std::string, int>, Entry> table)
        : table_(std::move(table)) {}

    static StubTableExtractor from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in)
            throw BackendError("stub extractor: cannot open table " + path.string());
        std::map<std::pair<std::string, int>, Entry> table;
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos || line[first] == '#') continue;
            std::istringstream ls(line);
            std::string image_id, gender, ethnicity, emotion;
            int face_index = 0;
            double age = 0.0;
            if (!(ls >> image_id >> face_index >> age >> gender >> ethnicity >> emotion))
                throw BackendError("stub extractor: malformed line " + std::to_string(line_no) +
                                   " in " + path.string());
            if (!(std::isfinite(age) && age >= 0.0) || face_index < 0)
                throw BackendError("stub extractor: bad age or face index on line " +
                                   std::to_string(line_no) + " in " + path.string());
            Entry e;
            e.age = age;
            try {
                e.gender = parse_gender(gender);
                e.ethnicity = parse_ethnicity(ethnicity);
                e.emotion = parse_emotion(emotion);
            } catch (const ValidationError& err) {
                throw BackendError("stub extractor: " + std::string(err.what()) + " on line " +
                                   std::to_string(line_no) + " in " + path.string());
            }
            table[{image_id, face_index}] = e;
        }
        return StubTableExtractor(std::move(table));
    }

    RawAttributeScores extract(const ImageRecord& face_crop) override {
        const auto hash_pos = face_crop.id.rfind('#');
        if (hash_pos == std::string::npos || hash_pos + 1 == face_crop.id.size())
            throw BackendError("stub extractor: crop id '" + face_crop.id +
                               "' does not carry a '#<face_index>' suffix");
        const std::string image_id = face_crop.id.substr(0, hash_pos);
        int face_index = -1;
        try {
            face_index = std::stoi(face_crop.id.substr(hash_pos + 1));
        } catch (const std::exception&) {
            throw BackendError("stub extractor: crop id '" + face_crop.id +
                               "' has a non-numeric face index");
        }
        const auto it = table_.find({image_id, face_index});
        if (it == table_.end())
            throw BackendError("stub extractor: no table entry for (" + image_id + ", " +
                               std::to_string(face_index) + ")");
        const Entry& e = it->second;
        RawAttributeScores raw;
        raw.age = e.age;
        for (Gender g : kAllGenders) raw.gender_scores[gender_label(g)] = (g == e.gender) ? 1.0 : 0.0;
        for (Ethnicity t : kAllEthnicities)
            raw.ethnicity_scores[ethnicity_label(t)] = (t == e.ethnicity) ? 1.0 : 0.0;
        for (Emotion m : kAllEmotions) raw.emotion_scores[emotion_label(m)] = (m == e.emotion) ? 1.0 : 0.0;
        return raw;
    }

    std::size_t size() const { return table_.size(); }

private:
    std::map<std::pair<std::string, int>, Entry> table_;
};

}  // namespace anonypipe
