#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "anonypipe/error.hpp"

namespace anonypipe {

/**
 * An identified 8-bit RGB raster.
 *
 * Pixels are interleaved R,G,B and stored row-major, top row first.
 * Images are plain values: copying one copies its pixels.
 */
struct ImageRecord {
    static constexpr int kChannels = 3;

    std::string id;
    std::string source_path;
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;  // height * width * kChannels bytes

    static ImageRecord blank(std::string id, int height, int width, std::uint8_t fill = 0) {
        ImageRecord img;
        img.id = std::move(id);
        img.height = height;
        img.width = width;
        if (height >= 1 && width >= 1)
            img.pixels.assign(static_cast<std::size_t>(height) * width * kChannels, fill);
        img.validate();
        return img;
    }

    std::size_t offset(int row, int col, int channel) const {
        return (static_cast<std::size_t>(row) * width + col) * kChannels + channel;
    }

    std::uint8_t& at(int row, int col, int channel) { return pixels[offset(row, col, channel)]; }
    std::uint8_t at(int row, int col, int channel) const { return pixels[offset(row, col, channel)]; }

    std::uint8_t* row_ptr(int row) { return pixels.data() + static_cast<std::size_t>(row) * width * kChannels; }
    const std::uint8_t* row_ptr(int row) const {
        return pixels.data() + static_cast<std::size_t>(row) * width * kChannels;
    }

    /// Throws ValidationError unless dimensions are >= 1, the pixel buffer
    /// matches height*width*3, and the id is non-empty.
    void validate() const {
        if (id.empty())
            throw ValidationError("ImageRecord: id must be non-empty");
        if (height < 1 || width < 1)
            throw ValidationError("ImageRecord '" + id + "': height and width must be >= 1");
        const std::size_t expected = static_cast<std::size_t>(height) * width * kChannels;
        if (pixels.size() != expected)
            throw ValidationError("ImageRecord '" + id + "': pixel buffer size " +
                                  std::to_string(pixels.size()) + " does not match " +
                                  std::to_string(expected) + " (3-channel " + std::to_string(height) +
                                  "x" + std::to_string(width) + ")");
    }
};

/// True when both rasters have equal dimensions and bit-identical pixels.
/// Ids and source paths are not compared.
inline bool same_pixels(const ImageRecord& a, const ImageRecord& b) {
    return a.height == b.height && a.width == b.width && a.pixels == b.pixels;
}

}  // namespace anonypipe
