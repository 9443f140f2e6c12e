#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "oodkit/error.hpp"
#include "oodkit/io.hpp"
#include "oodkit/matrix.hpp"

namespace oodkit {

/// Single-channel image with intensities in [0, 1], row-major.
class ImageBuffer {
public:
    ImageBuffer(std::size_t height, std::size_t width, double fill = 0.0)
        : ImageBuffer(height, width, std::vector<double>(height * width, fill)) {}

    /// Out-of-range values are clamped into [0, 1]; non-finite ones are rejected.
    ImageBuffer(std::size_t height, std::size_t width, std::vector<double> pixels)
        : height_(height), width_(width), pixels_(std::move(pixels)) {
        if (height_ == 0 || width_ == 0) {
            throw ShapeError("image dimensions must be positive");
        }
        if (pixels_.size() != height_ * width_) {
            throw ShapeError("pixel count " + std::to_string(pixels_.size()) + " != " + std::to_string(height_) + "x" +
                             std::to_string(width_));
        }
        detail::require_finite(pixels_, "image");
        for (double& p : pixels_) {
            p = std::clamp(p, 0.0, 1.0);
        }
    }

    static ImageBuffer from_rows(const std::vector<std::vector<double>>& rows) {
        const auto m = FeatureMatrix::from_rows(rows);
        return ImageBuffer(m.rows(), m.cols(), std::vector<double>(m.data().begin(), m.data().end()));
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    double at(std::size_t r, std::size_t c) const { return pixels_[r * width_ + c]; }
    std::span<const double> pixels() const noexcept { return pixels_; }

    double mean() const {
        double s = 0.0;
        for (double p : pixels_) {
            s += p;
        }
        return s / static_cast<double>(pixels_.size());
    }

    friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

private:
    std::size_t height_;
    std::size_t width_;
    std::vector<double> pixels_;
};

// ---------------------------------------------------------------- PGM (P5, 8-bit)

inline ImageBuffer decode_pgm(std::string_view bytes, const std::string& origin = "<memory>") {
    std::size_t pos = 0;
    auto skip_space_and_comments = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') {
                    ++pos;
                }
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_token = [&] {
        skip_space_and_comments();
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            ++pos;
        }
        return bytes.substr(start, pos - start);
    };

    if (read_token() != "P5") {
        throw FormatError("'" + origin + "' is not a binary PGM (P5)");
    }
    long long w = 0, h = 0, maxval = 0;
    try {
        w = parse_integer(read_token());
        h = parse_integer(read_token());
        maxval = parse_integer(read_token());
    } catch (const ParseError&) {
        throw FormatError("'" + origin + "' has a malformed PGM header");
    }
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
        throw FormatError("'" + origin + "' must be an 8-bit PGM with positive size");
    }
    ++pos;  // single whitespace byte after maxval
    const auto count = static_cast<std::size_t>(w * h);
    if (pos > bytes.size() || bytes.size() - pos < count) {
        throw TruncationError("'" + origin + "' pixel data is shorter than " + std::to_string(count) + " bytes");
    }
    std::vector<double> px(count);
    for (std::size_t i = 0; i < count; ++i) {
        px[i] = static_cast<double>(static_cast<unsigned char>(bytes[pos + i])) / static_cast<double>(maxval);
    }
    return ImageBuffer(static_cast<std::size_t>(h), static_cast<std::size_t>(w), std::move(px));
}

inline std::string encode_pgm(const ImageBuffer& img) {
    std::string out = "P5\n" + std::to_string(img.width()) + ' ' + std::to_string(img.height()) + "\n255\n";
    for (double p : img.pixels()) {
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(p * 255.0))));
    }
    return out;
}

inline ImageBuffer read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file_bytes(path), path.string()); }

inline void write_pgm(const ImageBuffer& img, const std::filesystem::path& path) {
    write_file_atomic(path, encode_pgm(img));
}

/// Image stored as an FVEC matrix (rows = height, cols = width).
inline ImageBuffer read_image_fvec(const std::filesystem::path& path) {
    const auto m = read_fvec<FeatureTag>(path);
    return ImageBuffer(m.rows(), m.cols(), std::vector<double>(m.data().begin(), m.data().end()));
}

inline void write_image_fvec(const ImageBuffer& img, const std::filesystem::path& path) {
    write_fvec(FeatureMatrix(img.height(), img.width(), std::vector<double>(img.pixels().begin(), img.pixels().end())),
               path);
}

/// Loads by extension: `.pgm` as PGM, anything else as FVEC.
inline ImageBuffer read_image(const std::filesystem::path& path) {
    return path.extension() == ".pgm" ? read_pgm(path) : read_image_fvec(path);
}

} // namespace oodkit
