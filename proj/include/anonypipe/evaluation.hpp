#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "anonypipe/attributes.hpp"
#include "anonypipe/error.hpp"
#include "anonypipe/image.hpp"
#include "anonypipe/pipeline.hpp"

namespace anonypipe {

/// Face-recognition embedding backend: fixed-dimension finite vectors.
class FaceEmbedder {
public:
    virtual ~FaceEmbedder() = default;
    virtual std::vector<double> embed(const ImageRecord& face_crop) = 0;
};

/**
 * Cosine distance 1 - a.b / (|a||b|), clamped to [0, 2]. Identical vectors
 * compare to exactly 0. Zero-norm vectors and dimension mismatches throw.
 */
inline double identity_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw ValidationError("identity_distance: dimension mismatch (" + std::to_string(a.size()) +
                              " vs " + std::to_string(b.size()) + ")");
    if (a.empty())
        throw ValidationError("identity_distance: vectors must be non-empty");
    double dot = 0.0, na = 0.0, nb = 0.0;
    bool equal = true;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
            throw ValidationError("identity_distance: non-finite component");
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
        equal = equal && a[i] == b[i];
    }
    if (na == 0.0 || nb == 0.0)
        throw ValidationError("identity_distance: zero-norm vector");
    if (equal) return 0.0;
    const double d = 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(d, 0.0, 2.0);
}

/**
 * Deterministic pixel-based embedder for tests and fixture runs: the crop is
 * mean-pooled over a grid_size x grid_size grid per channel, plus a constant
 * 1.0 component so the embedding never has zero norm.
 */
class GridMeanEmbedder : public FaceEmbedder {
public:
    explicit GridMeanEmbedder(int grid_size = 4) : grid_(grid_size) {
        if (grid_size < 1)
            throw ValidationError("GridMeanEmbedder: grid size must be >= 1");
    }

    int dimension() const { return grid_ * grid_ * ImageRecord::kChannels + 1; }

    std::vector<double> embed(const ImageRecord& face_crop) override {
        face_crop.validate();
        std::vector<double> out;
        out.reserve(static_cast<std::size_t>(dimension()));
        for (int gr = 0; gr < grid_; ++gr) {
            const int r0 = gr * face_crop.height / grid_;
            const int r1 = (gr + 1) * face_crop.height / grid_;
            for (int gc = 0; gc < grid_; ++gc) {
                const int c0 = gc * face_crop.width / grid_;
                const int c1 = (gc + 1) * face_crop.width / grid_;
                for (int ch = 0; ch < ImageRecord::kChannels; ++ch) {
                    double sum = 0.0;
                    long count = 0;
                    for (int r = r0; r < r1; ++r)
                        for (int c = c0; c < c1; ++c) {
                            sum += face_crop.at(r, c, ch);
                            ++count;
                        }
                    out.push_back(count > 0 ? sum / count : 0.0);
                }
            }
        }
        out.push_back(1.0);
        return out;
    }

private:
    int grid_;
};

/// One original/anonymized face comparison.
struct PairRecord {
    std::string image_id;
    int face_index = 0;
    double identity_distance = 0.0;
    bool age_match = false;
    bool gender_match = false;
    bool ethnicity_match = false;
    bool emotion_match = false;
};

struct PairError {
    std::string image_id;
    int face_index = -1;  // -1 when the whole image is affected
    std::string message;
};

struct DistanceStats {
    double mean = 0.0;
    double median = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct AgreementRates {
    double age = 0.0;
    double gender = 0.0;
    double ethnicity = 0.0;
    double emotion = 0.0;
};

/// Aggregated evaluation outcome. Statistics are recomputed from the pair
/// list so they can never disagree with it; they are absent when no pairs
/// were evaluated.
struct EvalReport {
    std::vector<PairRecord> pairs;
    std::vector<PairError> errors;
    std::size_t skipped_faces = 0;  // faces excluded because they were not anonymized

    std::optional<DistanceStats> distance_stats() const {
        if (pairs.empty()) return std::nullopt;
        std::vector<double> d;
        d.reserve(pairs.size());
        for (const auto& p : pairs) d.push_back(p.identity_distance);
        std::sort(d.begin(), d.end());
        DistanceStats s;
        s.min = d.front();
        s.max = d.back();
        double sum = 0.0;
        for (double v : d) sum += v;
        s.mean = sum / static_cast<double>(d.size());
        const std::size_t mid = d.size() / 2;
        s.median = d.size() % 2 == 1 ? d[mid] : (d[mid - 1] + d[mid]) / 2.0;
        return s;
    }

    std::optional<AgreementRates> agreement_rates() const {
        if (pairs.empty()) return std::nullopt;
        AgreementRates r;
        for (const auto& p : pairs) {
            r.age += p.age_match ? 1.0 : 0.0;
            r.gender += p.gender_match ? 1.0 : 0.0;
            r.ethnicity += p.ethnicity_match ? 1.0 : 0.0;
            r.emotion += p.emotion_match ? 1.0 : 0.0;
        }
        const double n = static_cast<double>(pairs.size());
        r.age /= n;
        r.gender /= n;
        r.ethnicity /= n;
        r.emotion /= n;
        return r;
    }
};

/**
 * Compares every anonymized face against its original: identity distance
 * between embeddings of the two crops at the recorded box, and attribute
 * agreement by re-running the extractor on both crops (age must agree within
 * age_tolerance_years; the categorical attributes must match exactly).
 * Faces the pipeline skipped or failed are excluded and counted separately;
 * a missing original image or a failing pair produces an error entry.
 */
inline EvalReport evaluate_pairs(const std::vector<ImageRecord>& originals,
                                 const std::vector<AnonymizationResult>& results,
                                 FaceEmbedder& embedder, AttributeExtractor& extractor,
                                 int age_tolerance_years) {
    if (age_tolerance_years < 0)
        throw ValidationError("evaluate_pairs: age tolerance must be >= 0");
    std::map<std::string, const ImageRecord*> by_id;
    for (const auto& img : originals) by_id[img.id] = &img;

    EvalReport report;
    for (const auto& result : results) {
        const auto orig_it = by_id.find(result.image_id);
        for (std::size_t k = 0; k < result.faces.size(); ++k) {
            const FaceRecord& face = result.faces[k];
            if (face.status != FaceStatus::anonymized) {
                ++report.skipped_faces;
                continue;
            }
            if (orig_it == by_id.end()) {
                report.errors.push_back({result.image_id, static_cast<int>(k),
                                         "missing original image '" + result.image_id + "'"});
                continue;
            }
            try {
                const std::string crop_id = result.image_id + "#" + std::to_string(k);
                ImageRecord crop_orig = crop_face(*orig_it->second, face.detection.box, 0.0);
                ImageRecord crop_anon = crop_face(result.output, face.detection.box, 0.0);
                crop_orig.id = crop_id;
                crop_anon.id = crop_id;

                PairRecord pair;
                pair.image_id = result.image_id;
                pair.face_index = static_cast<int>(k);
                pair.identity_distance =
                    identity_distance(embedder.embed(crop_orig), embedder.embed(crop_anon));
                const FaceAttributes attrs_orig = normalize_attributes(extractor.extract(crop_orig));
                const FaceAttributes attrs_anon = normalize_attributes(extractor.extract(crop_anon));
                pair.age_match = std::abs(attrs_orig.age - attrs_anon.age) <= age_tolerance_years;
                pair.gender_match = attrs_orig.gender == attrs_anon.gender;
                pair.ethnicity_match = attrs_orig.ethnicity == attrs_anon.ethnicity;
                pair.emotion_match = attrs_orig.emotion == attrs_anon.emotion;
                report.pairs.push_back(std::move(pair));
            } catch (const std::exception& e) {
                report.errors.push_back({result.image_id, static_cast<int>(k), e.what()});
            }
        }
    }
    return report;
}

}  // namespace anonypipe
