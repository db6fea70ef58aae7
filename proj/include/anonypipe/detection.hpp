#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "anonypipe/error.hpp"
#include "anonypipe/image.hpp"
#include "anonypipe/types.hpp"

namespace anonypipe {

/**
 * Per-pixel {0,1} raster congruent with its image; 1 marks the region to be
 * regenerated, 0 the region to preserve.
 */
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> values;  // row-major, one byte per cell, 0 or 1

    static BinaryMask zeros(int height, int width) {
        if (height < 1 || width < 1)
            throw ValidationError("BinaryMask: height and width must be >= 1");
        BinaryMask m;
        m.height = height;
        m.width = width;
        m.values.assign(static_cast<std::size_t>(height) * width, 0);
        return m;
    }

    std::uint8_t& at(int row, int col) { return values[static_cast<std::size_t>(row) * width + col]; }
    std::uint8_t at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }

    std::int64_t popcount() const {
        return std::count(values.begin(), values.end(), std::uint8_t{1});
    }

    bool congruent_with(const BinaryMask& other) const {
        return height == other.height && width == other.width;
    }
    bool congruent_with(const ImageRecord& image) const {
        return height == image.height && width == image.width;
    }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Face-detector backend. Returned boxes are raw (need not be clamped);
/// confidences must lie in [0,1].
class FaceDetector {
public:
    virtual ~FaceDetector() = default;
    virtual std::vector<FaceDetection> detect(const ImageRecord& image) = 0;
};

/**
 * Intersects a box with the H x W frame. Pure intersection: the box is never
 * shifted. Throws ValidationError when the box has no side >= 1 or the
 * intersection is empty (degenerate box).
 */
inline BoundingBox clamp_box(const BoundingBox& box, int height, int width) {
    if (height < 1 || width < 1)
        throw ValidationError("clamp_box: frame dimensions must be >= 1");
    if (box.w < 1 || box.h < 1)
        throw ValidationError("clamp_box: box width and height must be >= 1");
    const int x0 = std::max(box.x, 0);
    const int y0 = std::max(box.y, 0);
    const int x1 = std::min(box.right(), width);
    const int y1 = std::min(box.bottom(), height);
    if (x1 <= x0 || y1 <= y0)
        throw ValidationError("clamp_box: degenerate box, no overlap with a " +
                              std::to_string(height) + "x" + std::to_string(width) + " frame");
    return BoundingBox{x0, y0, x1 - x0, y1 - y0};
}

/**
 * Grows a box by ratio*w horizontally and ratio*h vertically, half on each
 * side, rounding outward, then clamps it to the frame. ratio 0 reduces to
 * clamp_box.
 */
inline BoundingBox pad_box(const BoundingBox& box, double ratio, int height, int width) {
    if (!(ratio >= 0.0))
        throw ValidationError("pad_box: ratio must be >= 0");
    const double grow_x = ratio * box.w / 2.0;
    const double grow_y = ratio * box.h / 2.0;
    const int left = static_cast<int>(std::floor(box.x - grow_x));
    const int top = static_cast<int>(std::floor(box.y - grow_y));
    const int right = static_cast<int>(std::ceil(box.right() + grow_x));
    const int bottom = static_cast<int>(std::ceil(box.bottom() + grow_y));
    return clamp_box(BoundingBox{left, top, right - left, bottom - top}, height, width);
}

/// True when `box` already lies fully inside the H x W frame.
inline bool box_inside_frame(const BoundingBox& box, int height, int width) {
    return box.w >= 1 && box.h >= 1 && box.x >= 0 && box.y >= 0 && box.right() <= width &&
           box.bottom() <= height;
}

/**
 * Rasterizes a clamped box into a binary mask: cell (r,c) is 1 iff
 * y <= r < y+h and x <= c < x+w. Passing an unclamped box is a contract
 * violation and throws.
 */
inline BinaryMask rasterize_mask(const BoundingBox& box, int height, int width) {
    if (!box_inside_frame(box, height, width))
        throw ValidationError("rasterize_mask: box must be clamped to the frame first");
    BinaryMask mask = BinaryMask::zeros(height, width);
    for (int r = box.y; r < box.bottom(); ++r) {
        auto* row = mask.values.data() + static_cast<std::size_t>(r) * width;
        std::fill(row + box.x, row + box.right(), std::uint8_t{1});
    }
    return mask;
}

/// Cellwise logical OR over zero or more congruent masks.
inline BinaryMask mask_union(int height, int width, const std::vector<BinaryMask>& masks) {
    BinaryMask out = BinaryMask::zeros(height, width);
    for (const auto& m : masks) {
        if (!m.congruent_with(out))
            throw ValidationError("mask_union: dimension mismatch, expected " +
                                  std::to_string(height) + "x" + std::to_string(width) + ", got " +
                                  std::to_string(m.height) + "x" + std::to_string(m.width));
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] |= m.values[i];
    }
    return out;
}

/**
 * Deterministic detector for tests and fixture runs: reads detections from a
 * sidecar text file located at `<image.source_path><suffix>`.
 *
 * Sidecar format: one face per line, `x y w h confidence`,
 * whitespace-separated, decimal confidence. Blank lines and lines starting
 * with '#' are ignored. A missing sidecar means "no faces".
 */
class StubFileDetector : public FaceDetector {
public:
    explicit StubFileDetector(std::string suffix = ".faces") : suffix_(std::move(suffix)) {}

    std::vector<FaceDetection> detect(const ImageRecord& image) override {
        const std::filesystem::path path = image.source_path + suffix_;
        std::vector<FaceDetection> out;
        if (image.source_path.empty() || !std::filesystem::exists(path)) return out;
        std::ifstream in(path);
        if (!in)
            throw BackendError("stub detector: cannot open sidecar " + path.string());
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos || line[first] == '#') continue;
            std::istringstream ls(line);
            FaceDetection det;
            if (!(ls >> det.box.x >> det.box.y >> det.box.w >> det.box.h >> det.confidence))
                throw BackendError("stub detector: malformed line " + std::to_string(line_no) +
                                   " in " + path.string());
            std::string trailing;
            if (ls >> trailing)
                throw BackendError("stub detector: trailing tokens on line " +
                                   std::to_string(line_no) + " in " + path.string());
            if (det.box.w < 1 || det.box.h < 1)
                throw BackendError("stub detector: box sides must be >= 1, line " +
                                   std::to_string(line_no) + " in " + path.string());
            if (!(det.confidence >= 0.0 && det.confidence <= 1.0))
                throw BackendError("stub detector: confidence must be in [0,1], line " +
                                   std::to_string(line_no) + " in " + path.string());
            out.push_back(det);
        }
        return out;
    }

private:
    std::string suffix_;
};

}  // namespace anonypipe
