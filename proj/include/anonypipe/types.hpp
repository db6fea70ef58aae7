#pragma once

#include <cstdint>
#include <string>

#include "anonypipe/error.hpp"

namespace anonypipe {

/**
 * Axis-aligned pixel rectangle, half-open: covers columns [x, x+w) and
 * rows [y, y+h).
 */
struct BoundingBox {
    int x = 0;  // left
    int y = 0;  // top
    int w = 0;
    int h = 0;

    int right() const { return x + w; }    // exclusive
    int bottom() const { return y + h; }   // exclusive
    std::int64_t area() const { return static_cast<std::int64_t>(w) * h; }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// One detected face: raw detector box plus confidence in [0,1].
struct FaceDetection {
    BoundingBox box;
    double confidence = 0.0;

    friend bool operator==(const FaceDetection&, const FaceDetection&) = default;
};

/// Terminal state of one face after the pipeline has looked at it.
enum class FaceStatus {
    anonymized,
    skipped_low_resolution,
    skipped_low_confidence,
    backend_failed,
};

inline const char* to_string(FaceStatus status) {
    switch (status) {
        case FaceStatus::anonymized: return "anonymized";
        case FaceStatus::skipped_low_resolution: return "skipped_low_resolution";
        case FaceStatus::skipped_low_confidence: return "skipped_low_confidence";
        case FaceStatus::backend_failed: return "backend_failed";
    }
    throw ValidationError("unknown FaceStatus value");
}

inline FaceStatus face_status_from_string(const std::string& s) {
    if (s == "anonymized") return FaceStatus::anonymized;
    if (s == "skipped_low_resolution") return FaceStatus::skipped_low_resolution;
    if (s == "skipped_low_confidence") return FaceStatus::skipped_low_confidence;
    if (s == "backend_failed") return FaceStatus::backend_failed;
    throw ValidationError("unknown face status '" + s + "'");
}

}  // namespace anonypipe
