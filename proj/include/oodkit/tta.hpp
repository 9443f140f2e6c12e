#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "oodkit/augment.hpp"
#include "oodkit/error.hpp"
#include "oodkit/image.hpp"
#include "oodkit/matrix.hpp"
#include "oodkit/ood.hpp"

namespace oodkit {

inline constexpr std::size_t kDefaultTtaIterations = 32;

/// Stand-in for a backbone: maps an image to a fixed-length feature vector.
/// Implementations must be deterministic.
class Featurizer {
public:
    virtual ~Featurizer() = default;
    virtual std::size_t dim() const = 0;
    virtual std::vector<double> operator()(const ImageBuffer& img) const = 0;
};

/// Mean intensity of each cell of a grid x grid partition, row-major.
class GridPoolFeaturizer final : public Featurizer {
public:
    explicit GridPoolFeaturizer(std::size_t grid) : grid_(grid) {
        if (grid == 0) {
            throw DomainError("pooling grid must be at least 1x1");
        }
    }

    std::size_t dim() const override { return grid_ * grid_; }

    std::vector<double> operator()(const ImageBuffer& img) const override {
        if (img.height() < grid_ || img.width() < grid_) {
            throw ShapeError("image " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                             " is smaller than the pooling grid");
        }
        std::vector<double> out(dim(), 0.0);
        for (std::size_t gy = 0; gy < grid_; ++gy) {
            const std::size_t r0 = gy * img.height() / grid_;
            const std::size_t r1 = (gy + 1) * img.height() / grid_;
            for (std::size_t gx = 0; gx < grid_; ++gx) {
                const std::size_t c0 = gx * img.width() / grid_;
                const std::size_t c1 = (gx + 1) * img.width() / grid_;
                double s = 0.0;
                for (std::size_t r = r0; r < r1; ++r) {
                    for (std::size_t c = c0; c < c1; ++c) {
                        s += img.at(r, c);
                    }
                }
                out[gy * grid_ + gx] = s / static_cast<double>((r1 - r0) * (c1 - c0));
            }
        }
        return out;
    }

private:
    std::size_t grid_;
};

/// Ignores its input entirely.
class ConstantFeaturizer final : public Featurizer {
public:
    explicit ConstantFeaturizer(std::vector<double> value) : value_(std::move(value)) {
        if (value_.empty()) {
            throw DomainError("constant featurizer needs at least one dimension");
        }
        detail::require_finite(value_, "constant feature");
    }
    std::size_t dim() const override { return value_.size(); }
    std::vector<double> operator()(const ImageBuffer&) const override { return value_; }

private:
    std::vector<double> value_;
};

struct TtaConfig {
    std::size_t iterations = kDefaultTtaIterations;
    bool include_identity = true;  // view 0 is the unaugmented image
    std::uint64_t seed = 0;
};

/// Features of every image, one row each.
inline FeatureMatrix featurize(std::span<const ImageBuffer> images, const Featurizer& featurizer) {
    const std::size_t m = featurizer.dim();
    std::vector<double> data;
    data.reserve(images.size() * m);
    for (const auto& img : images) {
        const auto f = featurizer(img);
        if (f.size() != m) {
            throw ShapeError("featurizer returned " + std::to_string(f.size()) + " values, declared " +
                             std::to_string(m));
        }
        data.insert(data.end(), f.begin(), f.end());
    }
    return FeatureMatrix(images.size(), m, std::move(data));
}

inline std::vector<ImageBuffer> tta_views(const ImageBuffer& img, const TtaConfig& cfg, const AugmentSpec& spec) {
    if (cfg.iterations == 0) {
        throw DomainError("TTA needs at least one view");
    }
    AugmentRng rng(cfg.seed);
    std::vector<ImageBuffer> views;
    views.reserve(cfg.iterations);
    for (std::size_t v = 0; v < cfg.iterations; ++v) {
        if (v == 0 && cfg.include_identity) {
            views.push_back(img);
        } else {
            views.push_back(augment(img, spec, rng));
        }
    }
    return views;
}

/// Mean of the rectified logits over the TTA views (1 x K). Views are reduced
/// in view order.
inline LogitMatrix tta_predict(const ImageBuffer& img, const Featurizer& featurizer, const LinearHead& head,
                               double react_cutoff, const TtaConfig& cfg, const AugmentSpec& spec) {
    if (featurizer.dim() != head.feature_dim()) {
        throw ShapeError("featurizer dim " + std::to_string(featurizer.dim()) + " != head feature dim " +
                         std::to_string(head.feature_dim()));
    }
    const auto views = tta_views(img, cfg, spec);
    const auto logits = rectified_forward(featurize(views, featurizer), head, react_cutoff);
    std::vector<double> mean(logits.cols(), 0.0);
    for (std::size_t v = 0; v < logits.rows(); ++v) {
        for (std::size_t c = 0; c < logits.cols(); ++c) {
            mean[c] += logits(v, c);
        }
    }
    for (double& x : mean) {
        x /= static_cast<double>(logits.rows());
    }
    return LogitMatrix(1, logits.cols(), std::move(mean));
}

/// tta_predict for a batch, one fused row per image. Every image uses the
/// same view seed.
inline LogitMatrix tta_predict_batch(std::span<const ImageBuffer> images, const Featurizer& featurizer,
                                     const LinearHead& head, double react_cutoff, const TtaConfig& cfg,
                                     const AugmentSpec& spec) {
    std::vector<double> data;
    data.reserve(images.size() * head.num_classes());
    for (const auto& img : images) {
        const auto row = tta_predict(img, featurizer, head, react_cutoff, cfg, spec);
        data.insert(data.end(), row.data().begin(), row.data().end());
    }
    return LogitMatrix(images.size(), head.num_classes(), std::move(data));
}

} // namespace oodkit
