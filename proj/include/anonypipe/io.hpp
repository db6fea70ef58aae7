#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "anonypipe/detection.hpp"
#include "anonypipe/error.hpp"
#include "anonypipe/image.hpp"

namespace anonypipe {

inline constexpr int kJpegQuality = 95;

namespace detail {

inline std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

inline ImageRecord from_bgr_mat(const cv::Mat& bgr, std::string id, std::string source_path) {
    ImageRecord img;
    img.id = std::move(id);
    img.source_path = std::move(source_path);
    img.height = bgr.rows;
    img.width = bgr.cols;
    img.pixels.resize(static_cast<std::size_t>(bgr.rows) * bgr.cols * ImageRecord::kChannels);
    for (int r = 0; r < bgr.rows; ++r) {
        const cv::Vec3b* src = bgr.ptr<cv::Vec3b>(r);
        std::uint8_t* dst = img.row_ptr(r);
        for (int c = 0; c < bgr.cols; ++c) {
            dst[3 * c + 0] = src[c][2];
            dst[3 * c + 1] = src[c][1];
            dst[3 * c + 2] = src[c][0];
        }
    }
    img.validate();
    return img;
}

inline cv::Mat to_bgr_mat(const ImageRecord& img) {
    img.validate();
    cv::Mat bgr(img.height, img.width, CV_8UC3);
    for (int r = 0; r < img.height; ++r) {
        const std::uint8_t* src = img.row_ptr(r);
        cv::Vec3b* dst = bgr.ptr<cv::Vec3b>(r);
        for (int c = 0; c < img.width; ++c) {
            dst[c][0] = src[3 * c + 2];
            dst[c][1] = src[3 * c + 1];
            dst[c][2] = src[3 * c + 0];
        }
    }
    return bgr;
}

inline std::vector<int> write_params_for(const std::string& ext) {
    if (ext == ".jpg" || ext == ".jpeg") return {cv::IMWRITE_JPEG_QUALITY, kJpegQuality};
    return {};
}

}  // namespace detail

/// True for the container formats a run ingests.
inline bool is_supported_image_path(const std::filesystem::path& path) {
    const std::string ext = detail::lower_extension(path);
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

/// Loads a PNG/JPEG file as a 3-channel record (grayscale and alpha inputs
/// are converted on load).
inline ImageRecord load_image(const std::filesystem::path& path, std::string id) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty())
        throw IoError("cannot decode image " + path.string());
    return detail::from_bgr_mat(bgr, std::move(id), path.string());
}

/// Writes an image in the container chosen by the path's extension; JPEG is
/// written at quality 95 so outputs drop into JPEG datasets.
inline void save_image(const ImageRecord& img, const std::filesystem::path& path) {
    const std::string ext = detail::lower_extension(path);
    if (ext != ".png" && ext != ".jpg" && ext != ".jpeg")
        throw IoError("unsupported output extension '" + ext + "' for " + path.string());
    if (!cv::imwrite(path.string(), detail::to_bgr_mat(img), detail::write_params_for(ext)))
        throw IoError("cannot write image " + path.string());
}

/// Debug mask export: single-channel 8-bit PNG, 0 where the mask is 0 and
/// 255 where it is 1.
inline void save_mask_png(const BinaryMask& mask, const std::filesystem::path& path) {
    cv::Mat gray(mask.height, mask.width, CV_8UC1);
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c)
            gray.at<std::uint8_t>(r, c) = mask.at(r, c) ? 255 : 0;
    if (!cv::imwrite(path.string(), gray))
        throw IoError("cannot write mask " + path.string());
}

/// In-memory PNG encode/decode, used by the HTTP backend adapters.
inline std::vector<std::uint8_t> encode_png(const ImageRecord& img) {
    std::vector<std::uint8_t> bytes;
    if (!cv::imencode(".png", detail::to_bgr_mat(img), bytes))
        throw IoError("PNG encoding failed for image '" + img.id + "'");
    return bytes;
}

inline ImageRecord decode_png(const std::vector<std::uint8_t>& bytes, std::string id) {
    cv::Mat bgr = cv::imdecode(bytes, cv::IMREAD_COLOR);
    if (bgr.empty())
        throw IoError("PNG decoding failed for image '" + id + "'");
    return detail::from_bgr_mat(bgr, std::move(id), "");
}

inline std::vector<std::uint8_t> encode_mask_png(const BinaryMask& mask) {
    cv::Mat gray(mask.height, mask.width, CV_8UC1);
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c)
            gray.at<std::uint8_t>(r, c) = mask.at(r, c) ? 255 : 0;
    std::vector<std::uint8_t> bytes;
    if (!cv::imencode(".png", gray, bytes))
        throw IoError("PNG encoding failed for mask");
    return bytes;
}

inline BinaryMask decode_mask_png(const std::vector<std::uint8_t>& bytes) {
    cv::Mat gray = cv::imdecode(bytes, cv::IMREAD_GRAYSCALE);
    if (gray.empty())
        throw IoError("PNG decoding failed for mask");
    BinaryMask mask = BinaryMask::zeros(gray.rows, gray.cols);
    for (int r = 0; r < gray.rows; ++r)
        for (int c = 0; c < gray.cols; ++c)
            mask.at(r, c) = gray.at<std::uint8_t>(r, c) >= 128 ? 1 : 0;
    return mask;
}

}  // namespace anonypipe
