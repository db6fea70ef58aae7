#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "anonypipe/detection.hpp"
#include "anonypipe/error.hpp"
#include "anonypipe/image.hpp"
#include "anonypipe/types.hpp"

namespace anonypipe {

namespace detail {

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Fixed-algorithm 64-bit generator so mock outputs are identical across
// platforms and standard library versions.
struct SplitMix64 {
    std::uint64_t state = 0;
    std::uint64_t next() {
        state += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
};

}  // namespace detail

/// Knobs forwarded to the diffusion backend. `extra` is passed through
/// untouched for backend-specific settings.
struct InpaintParams {
    int steps = 50;
    double guidance_scale = 7.5;
    std::map<std::string, std::string> extra;

    void validate() const {
        if (steps < 1)
            throw ValidationError("InpaintParams: steps must be >= 1");
        if (!(guidance_scale > 0.0) || !std::isfinite(guidance_scale))
            throw ValidationError("InpaintParams: guidance_scale must be finite and > 0");
    }
};

/// Text-guided inpainting backend. Output must be a 3-channel 8-bit image
/// with the same dimensions as the input; the pipeline still composites the
/// result, so backends that perturb unmasked pixels are handled.
class InpaintBackend {
public:
    virtual ~InpaintBackend() = default;
    virtual ImageRecord inpaint(const ImageRecord& image, const BinaryMask& mask,
                                const std::string& prompt, std::uint32_t seed,
                                const InpaintParams& params) = 0;
};

/// True iff the box is large enough to inpaint: min(w, h) >= min_side.
inline bool resolution_gate(const BoundingBox& box, int min_side) {
    return std::min(box.w, box.h) >= min_side;
}

enum class BlendKind { hard, feathered };

/// How generated pixels are merged into the working image inside the mask.
struct BlendMode {
    BlendKind kind = BlendKind::hard;
    int feather_radius = 0;  // px, used by feathered only

    static BlendMode hard() { return BlendMode{BlendKind::hard, 0}; }
    static BlendMode feathered(int radius) { return BlendMode{BlendKind::feathered, radius}; }

    friend bool operator==(const BlendMode&, const BlendMode&) = default;
};

namespace detail {

// City-block distance from every mask=1 cell to the nearest mask=0 cell,
// via multi-source BFS. Cells with no reachable 0 cell get INT_MAX.
inline std::vector<int> distance_to_mask_edge(const BinaryMask& mask) {
    const std::size_t n = mask.values.size();
    std::vector<int> dist(n, std::numeric_limits<int>::max());
    std::deque<std::size_t> queue;
    for (std::size_t i = 0; i < n; ++i) {
        if (mask.values[i] == 0) {
            dist[i] = 0;
            queue.push_back(i);
        }
    }
    while (!queue.empty()) {
        const std::size_t i = queue.front();
        queue.pop_front();
        const int r = static_cast<int>(i) / mask.width;
        const int c = static_cast<int>(i) % mask.width;
        const int d = dist[i] + 1;
        const int nr[4] = {r - 1, r + 1, r, r};
        const int nc[4] = {c, c, c - 1, c + 1};
        for (int k = 0; k < 4; ++k) {
            if (nr[k] < 0 || nr[k] >= mask.height || nc[k] < 0 || nc[k] >= mask.width) continue;
            const std::size_t j = static_cast<std::size_t>(nr[k]) * mask.width + nc[k];
            if (dist[j] > d) {
                dist[j] = d;
                queue.push_back(j);
            }
        }
    }
    return dist;
}

}  // namespace detail

/**
 * Merges generated pixels into the working image.
 *
 * hard: output = generated where mask=1, working elsewhere, exact.
 * feathered(r): mask cells within r px of the mask boundary cross-fade
 * linearly from working to generated with depth; cells deeper than r take
 * the generated pixel, and everything strictly outside the mask is the
 * working pixel bit-exactly. Radius 0 is identical to hard.
 */
inline ImageRecord composite(const ImageRecord& working, const ImageRecord& generated,
                             const BinaryMask& mask, const BlendMode& mode) {
    working.validate();
    generated.validate();
    if (working.height != generated.height || working.width != generated.width ||
        !mask.congruent_with(working))
        throw ValidationError("composite: dimension mismatch between working image, generated image, and mask");
    if (mode.kind == BlendKind::feathered && mode.feather_radius < 0)
        throw ValidationError("composite: feather radius must be >= 0");

    ImageRecord out = working;
    const bool hard = mode.kind == BlendKind::hard || mode.feather_radius == 0;
    if (hard) {
        for (std::size_t i = 0; i < mask.values.size(); ++i) {
            if (mask.values[i]) {
                const std::size_t p = i * ImageRecord::kChannels;
                out.pixels[p] = generated.pixels[p];
                out.pixels[p + 1] = generated.pixels[p + 1];
                out.pixels[p + 2] = generated.pixels[p + 2];
            }
        }
        return out;
    }

    const std::vector<int> dist = detail::distance_to_mask_edge(mask);
    const double denom = mode.feather_radius + 1.0;
    for (std::size_t i = 0; i < mask.values.size(); ++i) {
        if (!mask.values[i]) continue;
        const double alpha =
            dist[i] == std::numeric_limits<int>::max() ? 1.0 : std::min(1.0, dist[i] / denom);
        const std::size_t p = i * ImageRecord::kChannels;
        for (int ch = 0; ch < ImageRecord::kChannels; ++ch) {
            const double w = working.pixels[p + ch];
            const double g = generated.pixels[p + ch];
            out.pixels[p + ch] = static_cast<std::uint8_t>(std::lround(w + alpha * (g - w)));
        }
    }
    return out;
}

/// One recorded backend invocation, including a copy of the working image
/// the backend saw. Used by tests to check sequential compositing.
struct InpaintCall {
    ImageRecord input;
    BinaryMask mask;
    std::string prompt;
    std::uint32_t seed = 0;
    InpaintParams params;
};

/// Mock backend that returns its input unchanged and logs every call.
/// Not thread-safe; use one instance per worker.
class IdentityInpainter : public InpaintBackend {
public:
    std::vector<InpaintCall> calls;

    ImageRecord inpaint(const ImageRecord& image, const BinaryMask& mask, const std::string& prompt,
                        std::uint32_t seed, const InpaintParams& params) override {
        image.validate();
        if (!mask.congruent_with(image))
            throw ValidationError("identity inpainter: mask dimensions do not match the image");
        calls.push_back(InpaintCall{image, mask, prompt, seed, params});
        return image;
    }
};

/**
 * Mock backend that fills the mask with a pseudo-random pattern fully
 * determined by (seed, prompt); unmasked pixels pass through unchanged.
 * Repeatable across runs and platforms. Not thread-safe; one instance per
 * worker.
 */
class SeededNoiseInpainter : public InpaintBackend {
public:
    std::vector<InpaintCall> calls;

    ImageRecord inpaint(const ImageRecord& image, const BinaryMask& mask, const std::string& prompt,
                        std::uint32_t seed, const InpaintParams& params) override {
        image.validate();
        if (!mask.congruent_with(image))
            throw ValidationError("noise inpainter: mask dimensions do not match the image");
        calls.push_back(InpaintCall{image, mask, prompt, seed, params});
        ImageRecord out = image;
        detail::SplitMix64 rng{detail::fnv1a64(prompt) ^
                               (std::uint64_t{seed} * 0x9E3779B97F4A7C15ull)};
        for (std::size_t i = 0; i < mask.values.size(); ++i) {
            if (!mask.values[i]) continue;
            const std::uint64_t bits = rng.next();
            const std::size_t p = i * ImageRecord::kChannels;
            out.pixels[p] = static_cast<std::uint8_t>(bits);
            out.pixels[p + 1] = static_cast<std::uint8_t>(bits >> 8);
            out.pixels[p + 2] = static_cast<std::uint8_t>(bits >> 16);
        }
        return out;
    }
};

}  // namespace anonypipe
