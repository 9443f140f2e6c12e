#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "oodkit/error.hpp"
#include "oodkit/image.hpp"
#include "oodkit/io.hpp"

namespace oodkit {

using AugmentRng = std::mt19937_64;

enum class FlipAxis { Horizontal, Vertical };

/// Mirror left-right (Horizontal) or top-bottom (Vertical).
inline ImageBuffer flip(const ImageBuffer& img, FlipAxis axis) {
    const std::size_t h = img.height();
    const std::size_t w = img.width();
    std::vector<double> out(h * w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            out[r * w + c] = axis == FlipAxis::Horizontal ? img.at(r, w - 1 - c) : img.at(h - 1 - r, c);
        }
    }
    return ImageBuffer(h, w, std::move(out));
}

/// Clockwise rotation about the image center, output the same size as the
/// input. Multiples of 90 degrees that keep the shape (any multiple of 180,
/// or 90/270 on square images) are exact index permutations; everything else
/// is nearest-neighbour with zero fill outside the source.
inline ImageBuffer rotate(const ImageBuffer& img, double angle_deg) {
    if (!std::isfinite(angle_deg)) {
        throw DomainError("rotation angle must be finite");
    }
    double a = std::fmod(angle_deg, 360.0);
    if (a < 0.0) {
        a += 360.0;
    }
    const std::size_t h = img.height();
    const std::size_t w = img.width();
    std::vector<double> out(h * w, 0.0);
    auto set = [&](std::size_t r, std::size_t c, double v) { out[r * w + c] = v; };

    if (a == 0.0) {
        return img;
    }
    if (a == 180.0) {
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
                set(r, c, img.at(h - 1 - r, w - 1 - c));
            }
        }
        return ImageBuffer(h, w, std::move(out));
    }
    if (h == w && (a == 90.0 || a == 270.0)) {
        const std::size_t n = h;
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < n; ++c) {
                set(r, c, a == 90.0 ? img.at(n - 1 - c, r) : img.at(c, n - 1 - r));
            }
        }
        return ImageBuffer(h, w, std::move(out));
    }

    const double theta = a * std::numbers::pi / 180.0;
    const double cs = std::cos(theta);
    const double sn = std::sin(theta);
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;
    const double cx = (static_cast<double>(w) - 1.0) / 2.0;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const double dy = static_cast<double>(r) - cy;
            const double dx = static_cast<double>(c) - cx;
            // inverse map: rotate the destination offset counter-clockwise
            const double sx = std::floor(cx + dx * cs + dy * sn + 0.5);
            const double sy = std::floor(cy - dx * sn + dy * cs + 0.5);
            if (sx >= 0.0 && sy >= 0.0 && sx < static_cast<double>(w) && sy < static_cast<double>(h)) {
                set(r, c, img.at(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)));
            }
        }
    }
    return ImageBuffer(h, w, std::move(out));
}

/// Contrast about the image mean, then brightness scaling, clamping to [0, 1]
/// after each stage.
inline ImageBuffer jitter(const ImageBuffer& img, double brightness_factor, double contrast_factor) {
    if (!(brightness_factor > 0.0) || !(contrast_factor > 0.0) || !std::isfinite(brightness_factor) ||
        !std::isfinite(contrast_factor)) {
        throw DomainError("jitter factors must be positive and finite");
    }
    const double mu = img.mean();
    std::vector<double> out(img.pixels().begin(), img.pixels().end());
    for (double& p : out) {
        // p + (k - 1)(p - mu) == mu + k(p - mu), and is exact for k = 1
        p = std::clamp(p + (contrast_factor - 1.0) * (p - mu), 0.0, 1.0);
        p = std::clamp(p * brightness_factor, 0.0, 1.0);
    }
    return ImageBuffer(img.height(), img.width(), std::move(out));
}

/// Bilinear resize of the window (top, left, win_h, win_w) back to the full
/// image size, half-pixel-centre sampling with edge clamping.
inline ImageBuffer crop_resize(const ImageBuffer& img, std::size_t top, std::size_t left, std::size_t win_h,
                               std::size_t win_w) {
    if (win_h == 0 || win_w == 0) {
        throw DomainError("crop window is smaller than one pixel");
    }
    if (top + win_h > img.height() || left + win_w > img.width()) {
        throw DomainError("crop window extends past the image");
    }
    const std::size_t h = img.height();
    const std::size_t w = img.width();
    const double sy_scale = static_cast<double>(win_h) / static_cast<double>(h);
    const double sx_scale = static_cast<double>(win_w) / static_cast<double>(w);
    auto source = [](std::size_t dst, double scale, std::size_t extent) {
        const double s = std::clamp((static_cast<double>(dst) + 0.5) * scale - 0.5, 0.0, static_cast<double>(extent - 1));
        const auto i0 = static_cast<std::size_t>(std::floor(s));
        const std::size_t i1 = std::min(i0 + 1, extent - 1);
        return std::tuple{i0, i1, s - static_cast<double>(i0)};
    };
    std::vector<double> out(h * w);
    for (std::size_t r = 0; r < h; ++r) {
        const auto [y0, y1, ty] = source(r, sy_scale, win_h);
        for (std::size_t c = 0; c < w; ++c) {
            const auto [x0, x1, tx] = source(c, sx_scale, win_w);
            const double upper = std::lerp(img.at(top + y0, left + x0), img.at(top + y0, left + x1), tx);
            const double lower = std::lerp(img.at(top + y1, left + x0), img.at(top + y1, left + x1), tx);
            out[r * w + c] = std::lerp(upper, lower, ty);
        }
    }
    return ImageBuffer(h, w, std::move(out));
}

/// Crops a floor(fraction*H) x floor(fraction*W) window at a uniform random
/// offset and resizes it back to H x W.
inline ImageBuffer random_crop_resize(const ImageBuffer& img, double side_fraction, AugmentRng& rng) {
    if (!(side_fraction > 0.0 && side_fraction <= 1.0)) {
        throw DomainError("crop fraction must lie in (0, 1]");
    }
    const auto win_h = static_cast<std::size_t>(std::floor(side_fraction * static_cast<double>(img.height())));
    const auto win_w = static_cast<std::size_t>(std::floor(side_fraction * static_cast<double>(img.width())));
    if (win_h == 0 || win_w == 0) {
        throw DomainError("crop window is smaller than one pixel");
    }
    std::uniform_int_distribution<std::size_t> top(0, img.height() - win_h);
    std::uniform_int_distribution<std::size_t> left(0, img.width() - win_w);
    const std::size_t t = top(rng);
    const std::size_t l = left(rng);
    return crop_resize(img, t, l, win_h, win_w);
}

/// Zeroes the side x side square whose top-left corner is (top, left).
inline ImageBuffer cutout_at(const ImageBuffer& img, std::size_t side, std::size_t top, std::size_t left) {
    if (side == 0) {
        throw DomainError("cutout hole is smaller than one pixel");
    }
    if (top + side > img.height() || left + side > img.width()) {
        throw DomainError("cutout hole extends past the image");
    }
    std::vector<double> out(img.pixels().begin(), img.pixels().end());
    for (std::size_t r = top; r < top + side; ++r) {
        std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(r * img.width() + left), side, 0.0);
    }
    return ImageBuffer(img.height(), img.width(), std::move(out));
}

/// One square hole of side floor(fraction * min(H, W)), placed uniformly at
/// random fully inside the image.
inline ImageBuffer cutout(const ImageBuffer& img, double hole_fraction, AugmentRng& rng) {
    if (!(hole_fraction > 0.0 && hole_fraction <= 1.0)) {
        throw DomainError("cutout fraction must lie in (0, 1]");
    }
    const auto side = static_cast<std::size_t>(
        std::floor(hole_fraction * static_cast<double>(std::min(img.height(), img.width()))));
    if (side == 0) {
        throw DomainError("cutout hole is smaller than one pixel");
    }
    std::uniform_int_distribution<std::size_t> top(0, img.height() - side);
    std::uniform_int_distribution<std::size_t> left(0, img.width() - side);
    const std::size_t t = top(rng);
    const std::size_t l = left(rng);
    return cutout_at(img, side, t, l);
}

struct AugmentSpec {
    bool rotation = true;
    double max_rotation_deg = 180.0;

    bool flip_horizontal = true;
    bool flip_vertical = true;

    bool jitter = true;
    double brightness_min = 0.8;
    double brightness_max = 1.2;
    double contrast_min = 0.8;
    double contrast_max = 1.2;

    bool crop = true;
    double crop_fraction = 0.875;

    bool cutout = true;
    double cutout_fraction = 0.25;

    std::uint64_t seed = 0;

    static AugmentSpec disabled() {
        AugmentSpec s;
        s.rotation = s.flip_horizontal = s.flip_vertical = s.jitter = s.crop = s.cutout = false;
        return s;
    }

    void validate() const {
        if (!std::isfinite(max_rotation_deg) || max_rotation_deg < 0.0) {
            throw DomainError("max rotation must be finite and non-negative");
        }
        auto positive_range = [](double lo, double hi, const char* what) {
            if (!(lo > 0.0) || !(hi >= lo) || !std::isfinite(hi)) {
                throw DomainError(std::string(what) + " range must be positive with min <= max");
            }
        };
        positive_range(brightness_min, brightness_max, "brightness");
        positive_range(contrast_min, contrast_max, "contrast");
        auto fraction = [](double f, const char* what) {
            if (!(f > 0.0 && f <= 1.0)) {
                throw DomainError(std::string(what) + " fraction must lie in (0, 1]");
            }
        };
        fraction(crop_fraction, "crop");
        fraction(cutout_fraction, "cutout");
    }
};

/// Applies the enabled ops in the order rotate, flip, jitter, crop, cutout.
/// Random draws are taken only for enabled ops, in that same order.
inline ImageBuffer augment(const ImageBuffer& img, const AugmentSpec& spec, AugmentRng& rng) {
    spec.validate();
    ImageBuffer out = img;
    if (spec.rotation) {
        std::uniform_real_distribution<double> angle(-spec.max_rotation_deg, spec.max_rotation_deg);
        out = rotate(out, angle(rng));
    }
    std::bernoulli_distribution coin(0.5);
    if (spec.flip_horizontal && coin(rng)) {
        out = flip(out, FlipAxis::Horizontal);
    }
    if (spec.flip_vertical && coin(rng)) {
        out = flip(out, FlipAxis::Vertical);
    }
    if (spec.jitter) {
        std::uniform_real_distribution<double> brightness(spec.brightness_min, spec.brightness_max);
        std::uniform_real_distribution<double> contrast(spec.contrast_min, spec.contrast_max);
        const double b = brightness(rng);
        const double c = contrast(rng);
        out = jitter(out, b, c);
    }
    if (spec.crop) {
        out = random_crop_resize(out, spec.crop_fraction, rng);
    }
    if (spec.cutout) {
        out = cutout(out, spec.cutout_fraction, rng);
    }
    return out;
}

} // namespace oodkit
