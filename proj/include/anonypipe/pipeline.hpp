#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "anonypipe/attributes.hpp"
#include "anonypipe/detection.hpp"
#include "anonypipe/error.hpp"
#include "anonypipe/image.hpp"
#include "anonypipe/inpainting.hpp"
#include "anonypipe/prompting.hpp"
#include "anonypipe/types.hpp"

namespace anonypipe {

/// How the inpainting seed for each face is chosen.
struct SeedPolicy {
    enum class Kind { fixed, per_face_derived };

    Kind kind = Kind::per_face_derived;
    std::uint32_t seed = 0;  // used by Kind::fixed

    static SeedPolicy fixed(std::uint32_t seed) { return SeedPolicy{Kind::fixed, seed}; }
    static SeedPolicy per_face_derived() { return SeedPolicy{Kind::per_face_derived, 0}; }

    friend bool operator==(const SeedPolicy&, const SeedPolicy&) = default;
};

/**
 * Seed for one face. The fixed policy returns its seed unchanged; the
 * per-face policy hashes (image_id, face_index) with FNV-1a so reruns are
 * reproducible without correlating faces.
 */
inline std::uint32_t derive_seed(const SeedPolicy& policy, const std::string& image_id,
                                 int face_index) {
    if (policy.kind == SeedPolicy::Kind::fixed) return policy.seed;
    std::uint64_t h = detail::fnv1a64(image_id);
    std::uint64_t ix = static_cast<std::uint64_t>(static_cast<std::int64_t>(face_index));
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>(ix >> (8 * i));
    h = detail::fnv1a64(std::string_view(bytes, 8), h);
    return static_cast<std::uint32_t>(h ^ (h >> 32));
}

/// Everything the per-image pipeline needs to know.
struct PipelineConfig {
    int min_face_side = 100;                      // faces smaller than this are skipped
    double detection_confidence_threshold = 0.5;  // faces below are skipped
    double mask_padding_ratio = 0.0;              // extra margin around the box in the mask
    double extract_margin_ratio = 0.0;            // extra margin around the attribute crop
    SeedPolicy seed_policy = SeedPolicy::per_face_derived();
    std::string prompt_template = kDefaultPromptTemplate;
    EmotionNounMap emotion_nouns = default_emotion_nouns();
    BlendMode blend_mode = BlendMode::hard();
    InpaintParams inpaint;

    void validate() const {
        if (min_face_side < 1)
            throw ValidationError("PipelineConfig: min_face_side must be >= 1");
        if (!(detection_confidence_threshold >= 0.0 && detection_confidence_threshold <= 1.0))
            throw ValidationError("PipelineConfig: detection_confidence_threshold must be in [0,1]");
        if (!(mask_padding_ratio >= 0.0))
            throw ValidationError("PipelineConfig: mask_padding_ratio must be >= 0");
        if (!(extract_margin_ratio >= 0.0))
            throw ValidationError("PipelineConfig: extract_margin_ratio must be >= 0");
        if (blend_mode.kind == BlendKind::feathered && blend_mode.feather_radius < 0)
            throw ValidationError("PipelineConfig: feather_radius must be >= 0");
        PromptTemplate::parse(prompt_template);
        for (Emotion e : kAllEmotions) {
            const auto it = emotion_nouns.find(e);
            if (it == emotion_nouns.end() || it->second.empty())
                throw ValidationError(std::string("PipelineConfig: emotion_nouns is missing '") +
                                      emotion_label(e) + "'");
        }
        inpaint.validate();
    }
};

/// One face's outcome, in processing order.
struct FaceRecord {
    FaceDetection detection;  // box clamped to the frame (raw when fully out of frame)
    std::optional<FaceAttributes> attributes;
    std::optional<std::string> prompt;
    std::optional<std::uint32_t> seed;
    FaceStatus status = FaceStatus::backend_failed;
};

/// Output image plus per-face provenance for one input image.
struct AnonymizationResult {
    std::string image_id;
    ImageRecord output;
    std::vector<FaceRecord> faces;
};

namespace detail {

struct PendingFace {
    FaceDetection detection;    // clamped box, except when out of frame
    bool in_frame = false;
    std::int64_t sort_area = 0;
};

// Deterministic processing order: descending box area, ties by (y, x), then
// by detector output order.
inline std::vector<PendingFace> order_faces(const std::vector<FaceDetection>& detections,
                                            int height, int width) {
    std::vector<PendingFace> faces;
    faces.reserve(detections.size());
    for (const auto& det : detections) {
        if (!(det.confidence >= 0.0 && det.confidence <= 1.0))
            throw BackendError("detector returned confidence outside [0,1]");
        if (det.box.w < 1 || det.box.h < 1)
            throw BackendError("detector returned a box with a side < 1");
        PendingFace face;
        face.detection = det;
        const bool overlaps = det.box.x < width && det.box.right() > 0 && det.box.y < height &&
                              det.box.bottom() > 0;
        if (overlaps) {
            face.detection.box = clamp_box(det.box, height, width);
            face.in_frame = true;
            face.sort_area = face.detection.box.area();
        }
        faces.push_back(std::move(face));
    }
    std::stable_sort(faces.begin(), faces.end(), [](const PendingFace& a, const PendingFace& b) {
        if (a.sort_area != b.sort_area) return a.sort_area > b.sort_area;
        if (a.detection.box.y != b.detection.box.y) return a.detection.box.y < b.detection.box.y;
        return a.detection.box.x < b.detection.box.x;
    });
    return faces;
}

}  // namespace detail

/**
 * Runs the three stages over one image: detect faces, extract and normalize
 * attributes, then inpaint each face mask in turn.
 *
 * Faces are processed sequentially on a working image, largest box first, so
 * face k+1 sees the pixels produced for faces 1..k. Attribute crops always
 * come from the original input. A backend failure marks that face
 * backend_failed and processing continues; a detector failure aborts the
 * whole image. Pixels outside the union of anonymized masks are returned
 * bit-identical to the input.
 */
inline AnonymizationResult anonymize_image(const ImageRecord& image, const PipelineConfig& config,
                                           FaceDetector& detector, AttributeExtractor& extractor,
                                           InpaintBackend& inpainter) {
    image.validate();
    config.validate();
    const PromptTemplate tmpl = PromptTemplate::parse(config.prompt_template);

    const std::vector<FaceDetection> detections = detector.detect(image);
    const auto ordered = detail::order_faces(detections, image.height, image.width);

    AnonymizationResult result;
    result.image_id = image.id;
    result.output = image;
    result.faces.reserve(ordered.size());

    for (std::size_t k = 0; k < ordered.size(); ++k) {
        const auto& pending = ordered[k];
        FaceRecord record;
        record.detection = pending.detection;

        if (pending.detection.confidence < config.detection_confidence_threshold) {
            record.status = FaceStatus::skipped_low_confidence;
            result.faces.push_back(std::move(record));
            continue;
        }
        if (!pending.in_frame || !resolution_gate(pending.detection.box, config.min_face_side)) {
            record.status = FaceStatus::skipped_low_resolution;
            result.faces.push_back(std::move(record));
            continue;
        }

        try {
            ImageRecord crop =
                crop_face(image, pending.detection.box, config.extract_margin_ratio);
            crop.id = image.id + "#" + std::to_string(k);
            record.attributes = normalize_attributes(extractor.extract(crop));
            record.prompt = build_prompt(*record.attributes, tmpl, config.emotion_nouns);
            record.seed = derive_seed(config.seed_policy, image.id, static_cast<int>(k));

            const BoundingBox padded = pad_box(pending.detection.box, config.mask_padding_ratio,
                                               image.height, image.width);
            const BinaryMask mask = rasterize_mask(padded, image.height, image.width);
            const ImageRecord generated =
                inpainter.inpaint(result.output, mask, *record.prompt, *record.seed, config.inpaint);
            if (generated.height != image.height || generated.width != image.width)
                throw BackendError("inpaint backend returned " + std::to_string(generated.height) +
                                   "x" + std::to_string(generated.width) + " for a " +
                                   std::to_string(image.height) + "x" +
                                   std::to_string(image.width) + " input");
            result.output = composite(result.output, generated, mask, config.blend_mode);
            record.status = FaceStatus::anonymized;
        } catch (const std::exception&) {
            record.status = FaceStatus::backend_failed;
        }
        result.faces.push_back(std::move(record));
    }
    return result;
}

/// Batch outcome: per-image results in input order plus per-image errors.
struct BatchReport {
    struct ImageError {
        std::string image_id;
        std::string message;
    };

    std::vector<AnonymizationResult> results;
    std::vector<ImageError> errors;

    std::size_t images_processed() const { return results.size(); }

    std::size_t total_faces() const {
        std::size_t n = 0;
        for (const auto& r : results) n += r.faces.size();
        return n;
    }

    std::size_t count(FaceStatus status) const {
        std::size_t n = 0;
        for (const auto& r : results)
            for (const auto& f : r.faces)
                if (f.status == status) ++n;
        return n;
    }
};

/**
 * Sequentially anonymizes a list of images with one shared backend set.
 * Ids must be non-empty and unique across the batch. A failing image gets an
 * error entry and the batch continues.
 */
inline BatchReport anonymize_batch(const std::vector<ImageRecord>& images,
                                   const PipelineConfig& config, FaceDetector& detector,
                                   AttributeExtractor& extractor, InpaintBackend& inpainter) {
    config.validate();
    std::set<std::string> ids;
    for (const auto& image : images) {
        if (image.id.empty())
            throw ValidationError("anonymize_batch: every image id must be non-empty");
        if (!ids.insert(image.id).second)
            throw ValidationError("anonymize_batch: duplicate image id '" + image.id + "'");
    }
    BatchReport report;
    for (const auto& image : images) {
        try {
            report.results.push_back(anonymize_image(image, config, detector, extractor, inpainter));
        } catch (const std::exception& e) {
            report.errors.push_back({image.id, e.what()});
        }
    }
    return report;
}

}  // namespace anonypipe
