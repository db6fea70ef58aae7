#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "anonypipe/attributes.hpp"
#include "anonypipe/detection.hpp"
#include "anonypipe/error.hpp"
#include "anonypipe/evaluation.hpp"
#include "anonypipe/image.hpp"
#include "anonypipe/inpainting.hpp"
#include "anonypipe/io.hpp"

namespace anonypipe {

namespace detail {

inline constexpr const char* kBase64Chars =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out.push_back(kBase64Chars[(v >> 18) & 63]);
        out.push_back(kBase64Chars[(v >> 12) & 63]);
        out.push_back(kBase64Chars[(v >> 6) & 63]);
        out.push_back(kBase64Chars[v & 63]);
    }
    if (i + 1 == bytes.size()) {
        const std::uint32_t v = bytes[i] << 16;
        out.push_back(kBase64Chars[(v >> 18) & 63]);
        out.push_back(kBase64Chars[(v >> 12) & 63]);
        out += "==";
    } else if (i + 2 == bytes.size()) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out.push_back(kBase64Chars[(v >> 18) & 63]);
        out.push_back(kBase64Chars[(v >> 12) & 63]);
        out.push_back(kBase64Chars[(v >> 6) & 63]);
        out += "=";
    }
    return out;
}

inline std::vector<std::uint8_t> base64_decode(const std::string& text) {
    int lookup[256];
    std::fill(std::begin(lookup), std::end(lookup), -1);
    for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(kBase64Chars[i])] = i;
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    std::uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        const int v = lookup[static_cast<unsigned char>(c)];
        if (v < 0)
            throw ValidationError("base64: invalid character in payload");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
        }
    }
    return out;
}

}  // namespace detail

/**
 * Connection to an external model server. The server is any process that
 * implements the JSON-over-HTTP endpoints below (typically a Python wrapper
 * around real detection / attribute / inpainting models):
 *
 *   POST /detect      {image_id, image_png_b64}
 *                     -> {detections: [{box: {x,y,w,h}, confidence}, ...]}
 *   POST /attributes  {image_id, image_png_b64}
 *                     -> {age, gender_scores, ethnicity_scores, emotion_scores}
 *   POST /inpaint     {image_png_b64, mask_png_b64, prompt, seed, steps,
 *                      guidance_scale, extra}
 *                     -> {image_png_b64}   (same dimensions as the input)
 *   POST /embed       {image_id, image_png_b64} -> {embedding: [..]}
 *
 * Images travel as base64 PNG. Non-2xx responses and transport failures
 * surface as BackendError.
 */
class ModelServerClient {
public:
    explicit ModelServerClient(std::string endpoint, int connect_timeout_s = 10,
                               int read_timeout_s = 300)
        : endpoint_(std::move(endpoint)), client_(endpoint_) {
        client_.set_connection_timeout(connect_timeout_s, 0);
        client_.set_read_timeout(read_timeout_s, 0);
    }

    nlohmann::json post(const std::string& route, const nlohmann::json& body) {
        auto res = client_.Post(route, body.dump(), "application/json");
        if (!res)
            throw BackendError("model server " + endpoint_ + route + ": " +
                               httplib::to_string(res.error()));
        if (res->status < 200 || res->status >= 300)
            throw BackendError("model server " + endpoint_ + route + ": HTTP " +
                               std::to_string(res->status) + " " + res->body);
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw BackendError("model server " + endpoint_ + route + ": bad JSON response: " +
                               e.what());
        }
    }

    const std::string& endpoint() const { return endpoint_; }

private:
    std::string endpoint_;
    httplib::Client client_;
};

/// Detector adapter for a RetinaFace-class model behind /detect.
class HttpDetector : public FaceDetector {
public:
    explicit HttpDetector(std::string endpoint) : client_(std::move(endpoint)) {}

    std::vector<FaceDetection> detect(const ImageRecord& image) override {
        nlohmann::json req;
        req["image_id"] = image.id;
        req["image_png_b64"] = detail::base64_encode(encode_png(image));
        const nlohmann::json res = client_.post("/detect", req);
        std::vector<FaceDetection> out;
        try {
            for (const auto& d : res.at("detections")) {
                FaceDetection det;
                det.box = BoundingBox{d.at("box").at("x").get<int>(), d.at("box").at("y").get<int>(),
                                      d.at("box").at("w").get<int>(), d.at("box").at("h").get<int>()};
                det.confidence = d.at("confidence").get<double>();
                out.push_back(det);
            }
        } catch (const nlohmann::json::exception& e) {
            throw BackendError(std::string("model server /detect: malformed payload: ") + e.what());
        }
        return out;
    }

private:
    ModelServerClient client_;
};

/// Attribute extractor adapter for a VGG-Face-class model behind /attributes.
class HttpAttributeExtractor : public AttributeExtractor {
public:
    explicit HttpAttributeExtractor(std::string endpoint) : client_(std::move(endpoint)) {}

    RawAttributeScores extract(const ImageRecord& face_crop) override {
        nlohmann::json req;
        req["image_id"] = face_crop.id;
        req["image_png_b64"] = detail::base64_encode(encode_png(face_crop));
        const nlohmann::json res = client_.post("/attributes", req);
        RawAttributeScores raw;
        try {
            raw.age = res.at("age").get<double>();
            for (const auto& [label, score] : res.at("gender_scores").items())
                raw.gender_scores[label] = score.get<double>();
            for (const auto& [label, score] : res.at("ethnicity_scores").items())
                raw.ethnicity_scores[label] = score.get<double>();
            for (const auto& [label, score] : res.at("emotion_scores").items())
                raw.emotion_scores[label] = score.get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw BackendError(std::string("model server /attributes: malformed payload: ") +
                               e.what());
        }
        return raw;
    }

private:
    ModelServerClient client_;
};

/// Inpainting adapter for a BrushNet-class diffusion model behind /inpaint.
/// The server owns any internal resizing; the response must restore the
/// request's exact dimensions.
class HttpInpainter : public InpaintBackend {
public:
    explicit HttpInpainter(std::string endpoint) : client_(std::move(endpoint)) {}

    ImageRecord inpaint(const ImageRecord& image, const BinaryMask& mask, const std::string& prompt,
                        std::uint32_t seed, const InpaintParams& params) override {
        if (!mask.congruent_with(image))
            throw ValidationError("http inpainter: mask dimensions do not match the image");
        nlohmann::json req;
        req["image_png_b64"] = detail::base64_encode(encode_png(image));
        req["mask_png_b64"] = detail::base64_encode(encode_mask_png(mask));
        req["prompt"] = prompt;
        req["seed"] = seed;
        req["steps"] = params.steps;
        req["guidance_scale"] = params.guidance_scale;
        req["extra"] = nlohmann::json::object();
        for (const auto& [key, value] : params.extra) req["extra"][key] = value;
        const nlohmann::json res = client_.post("/inpaint", req);
        std::string payload;
        try {
            payload = res.at("image_png_b64").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw BackendError(std::string("model server /inpaint: malformed payload: ") + e.what());
        }
        ImageRecord out = decode_png(detail::base64_decode(payload), image.id);
        if (out.height != image.height || out.width != image.width)
            throw BackendError("model server /inpaint returned " + std::to_string(out.height) + "x" +
                               std::to_string(out.width) + " for a " + std::to_string(image.height) +
                               "x" + std::to_string(image.width) + " request");
        return out;
    }

private:
    ModelServerClient client_;
};

/// Embedding adapter for a face-recognition model behind /embed.
class HttpEmbedder : public FaceEmbedder {
public:
    explicit HttpEmbedder(std::string endpoint) : client_(std::move(endpoint)) {}

    std::vector<double> embed(const ImageRecord& face_crop) override {
        nlohmann::json req;
        req["image_id"] = face_crop.id;
        req["image_png_b64"] = detail::base64_encode(encode_png(face_crop));
        const nlohmann::json res = client_.post("/embed", req);
        try {
            return res.at("embedding").get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            throw BackendError(std::string("model server /embed: malformed payload: ") + e.what());
        }
    }

private:
    ModelServerClient client_;
};

}  // namespace anonypipe
