#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "oodkit/ema.hpp"
#include "oodkit/error.hpp"
#include "oodkit/io.hpp"
#include "oodkit/matrix.hpp"
#include "oodkit/ood.hpp"

namespace oodkit {

struct TrainConfig {
    double learning_rate = 0.1;
    std::size_t epochs = 50;
    std::size_t lr_halving_patience = 3;
    double ema_decay = kDefaultEmaDecay;
    std::uint64_t seed = 0;
    double init_std = 0.01;
};

struct XentResult {
    LogitMatrix grad;  // per-row d(-log softmax[label]) / d logits
    double loss = 0.0; // mean over rows
};

/// Softmax cross-entropy. Row i of `grad` is softmax(logits_i) - onehot(label_i),
/// i.e. the gradient of that row's own loss; `loss` is the row mean.
inline XentResult softmax_xent_grad(const LogitMatrix& logits, const LabelVector& labels) {
    if (labels.size() != logits.rows()) {
        throw ShapeError("label count " + std::to_string(labels.size()) + " != logit rows " +
                         std::to_string(logits.rows()));
    }
    labels.check_range(logits.cols());
    const std::size_t n = logits.rows();
    const std::size_t k = logits.cols();
    std::vector<double> grad(n * k);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = logits.row(i);
        const double lse = detail::logsumexp(row);
        for (std::size_t c = 0; c < k; ++c) {
            grad[i * k + c] = std::exp(row[c] - lse);
        }
        grad[i * k + labels[i]] -= 1.0;
        total += lse - row[labels[i]];
    }
    const double mean = n == 0 ? 0.0 : total / static_cast<double>(n);
    return {LogitMatrix(n, k, std::move(grad)), mean};
}

/// Halves the learning rate once the best loss seen so far has gone
/// `patience` consecutive observations without dropping by at least
/// kMinImprovement. The counter restarts after every halving.
class PlateauHalving {
public:
    static constexpr double kMinImprovement = 1e-12;

    PlateauHalving(double initial_lr, std::size_t patience, double baseline_loss)
        : lr_(initial_lr), patience_(patience), best_(baseline_loss) {
        if (!(initial_lr > 0.0)) {
            throw DomainError("learning rate must be positive");
        }
        if (patience == 0) {
            throw DomainError("lr halving patience must be positive");
        }
    }

    double observe(double loss) {
        if (best_ - loss >= kMinImprovement) {
            best_ = loss;
            stale_ = 0;
        } else if (++stale_ >= patience_) {
            lr_ *= 0.5;
            stale_ = 0;
        }
        return lr_;
    }

    double learning_rate() const noexcept { return lr_; }

private:
    double lr_;
    std::size_t patience_;
    double best_;
    std::size_t stale_ = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double loss = 0.0;      // training loss after this epoch's update
    double lr = 0.0;        // learning rate used for this epoch's update
};

struct TrainResult {
    ParamVector initial;
    ParamVector final;
    ParamVector ema;
    LinearHead final_head;
    LinearHead ema_head;
    std::vector<EpochRecord> history;
};

/// Full-batch gradient descent on a linear softmax head with per-epoch EMA and
/// plateau learning-rate halving. The class count is max(label) + 1 and every
/// class needs at least one sample.
inline TrainResult train_head(const FeatureMatrix& features, const LabelVector& labels, const TrainConfig& cfg) {
    if (labels.size() != features.rows()) {
        throw ShapeError("label count " + std::to_string(labels.size()) + " != feature rows " +
                         std::to_string(features.rows()));
    }
    if (features.rows() == 0) {
        throw DomainError("cannot train on zero samples");
    }
    if (!(cfg.learning_rate > 0.0) || cfg.lr_halving_patience == 0) {
        throw DomainError("learning rate and patience must be positive");
    }
    const std::size_t k = *std::max_element(labels.begin(), labels.end()) + 1;
    if (k < 2) {
        throw DomainError("training data holds a single class; need at least two");
    }
    std::vector<std::size_t> counts(k, 0);
    for (auto y : labels) {
        ++counts[y];
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) {
            throw DomainError("class " + std::to_string(c) + " has no training samples");
        }
    }

    const std::size_t n = features.rows();
    const std::size_t m = features.cols();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> init(0.0, cfg.init_std);
    ParamVector params;
    params.values.resize(m * k + k, 0.0);
    for (std::size_t i = 0; i < m * k; ++i) {
        params.values[i] = init(rng);
    }

    TrainResult result{params, params, params, unflatten_head(params, m, k), unflatten_head(params, m, k), {}};
    EmaState ema(cfg.ema_decay, params);

    auto evaluate = [&](const ParamVector& p) { return softmax_xent_grad(forward(features, unflatten_head(p, m, k)), labels); };

    auto current = evaluate(params);
    PlateauHalving schedule(cfg.learning_rate, cfg.lr_halving_patience, current.loss);
    const double inv_n = 1.0 / static_cast<double>(n);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = schedule.learning_rate();
        const auto& g = current.grad;
        // dW[f][c] = sum_i h[i][f] * g[i][c] / N ; db[c] = sum_i g[i][c] / N
        for (std::size_t f = 0; f < m; ++f) {
            for (std::size_t c = 0; c < k; ++c) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += features(i, f) * g(i, c);
                }
                params.values[f * k + c] -= lr * acc * inv_n;
            }
        }
        for (std::size_t c = 0; c < k; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += g(i, c);
            }
            params.values[m * k + c] -= lr * acc * inv_n;
        }
        detail::require_finite(params.values, "trained parameters");
        ema.update(params);

        current = evaluate(params);
        result.history.push_back({epoch, current.loss, lr});
        schedule.observe(current.loss);
    }

    result.final = params;
    result.ema = ema.shadow();
    result.final_head = unflatten_head(result.final, m, k);
    result.ema_head = unflatten_head(result.ema, m, k);
    return result;
}

inline std::string encode_history_csv(const std::vector<EpochRecord>& history) {
    std::string out = "epoch,loss,lr\n";
    for (const auto& r : history) {
        out += std::to_string(r.epoch) + ',' + format_double(r.loss) + ',' + format_double(r.lr) + '\n';
    }
    return out;
}

// ---------------------------------------------------------------- synthetic data

struct SyntheticSpec {
    std::vector<std::vector<double>> means;  // one mean per class, all the same length
    double stddev = 1.0;
    std::size_t per_class = 100;
    std::uint64_t seed = 0;

    std::size_t num_classes() const noexcept { return means.size(); }
    std::size_t feature_dim() const noexcept { return means.empty() ? 0 : means.front().size(); }
};

struct LabeledFeatures {
    FeatureMatrix features;
    LabelVector labels;
};

/// Class means at +separation * e_k for the first `dim` classes, then at
/// -separation * e_k. Any two means are at least separation * sqrt(2) apart
/// and every mean is `separation` away from the origin.
inline std::vector<std::vector<double>> axis_means(std::size_t num_classes, std::size_t dim, double separation) {
    if (dim == 0 || num_classes == 0) {
        throw DomainError("need at least one class and one dimension");
    }
    if (num_classes > 2 * dim) {
        throw DomainError("axis layout supports at most 2*dim = " + std::to_string(2 * dim) + " classes");
    }
    if (!(separation > 0.0)) {
        throw DomainError("separation must be positive");
    }
    std::vector<std::vector<double>> means(num_classes, std::vector<double>(dim, 0.0));
    for (std::size_t c = 0; c < num_classes; ++c) {
        means[c][c % dim] = c < dim ? separation : -separation;
    }
    return means;
}

inline void validate(const SyntheticSpec& spec) {
    if (spec.means.empty()) {
        throw DomainError("synthetic spec needs at least one class mean");
    }
    const std::size_t dim = spec.feature_dim();
    if (dim == 0) {
        throw DomainError("synthetic means must have at least one dimension");
    }
    for (std::size_t a = 0; a < spec.means.size(); ++a) {
        if (spec.means[a].size() != dim) {
            throw ShapeError("class mean " + std::to_string(a) + " has the wrong dimension");
        }
        detail::require_finite(spec.means[a], "class mean");
        for (std::size_t b = 0; b < a; ++b) {
            if (spec.means[a] == spec.means[b]) {
                throw DomainError("class means " + std::to_string(b) + " and " + std::to_string(a) + " coincide");
            }
        }
    }
    if (!(spec.stddev >= 0.0) || !std::isfinite(spec.stddev)) {
        throw DomainError("standard deviation must be finite and non-negative");
    }
    if (spec.per_class == 0) {
        throw DomainError("samples per class must be positive");
    }
}

namespace detail {

inline void append_gaussian(std::vector<double>& out, std::span<const double> mean, double stddev, std::size_t count,
                            std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < count; ++i) {
        for (double mu : mean) {
            const double z = noise(rng);
            out.push_back(stddev == 0.0 ? mu : mu + stddev * z);
        }
    }
}

} // namespace detail

/// Isotropic Gaussian clusters, class-major order, reproducible from the seed.
inline LabeledFeatures generate_synthetic(const SyntheticSpec& spec) {
    validate(spec);
    std::mt19937_64 rng(spec.seed);
    std::vector<double> data;
    data.reserve(spec.num_classes() * spec.per_class * spec.feature_dim());
    std::vector<std::size_t> labels;
    for (std::size_t c = 0; c < spec.num_classes(); ++c) {
        detail::append_gaussian(data, spec.means[c], spec.stddev, spec.per_class, rng);
        labels.insert(labels.end(), spec.per_class, c);
    }
    return {FeatureMatrix(labels.size(), spec.feature_dim(), std::move(data)), LabelVector(std::move(labels))};
}

/// Samples from a single held-out mean, standing in for unseen categories.
inline FeatureMatrix generate_ood(std::span<const double> mean, double stddev, std::size_t count, std::uint64_t seed) {
    if (mean.empty()) {
        throw DomainError("OOD mean must have at least one dimension");
    }
    if (!(stddev >= 0.0) || !std::isfinite(stddev)) {
        throw DomainError("standard deviation must be finite and non-negative");
    }
    std::mt19937_64 rng(seed);
    std::vector<double> data;
    data.reserve(count * mean.size());
    detail::append_gaussian(data, mean, stddev, count, rng);
    return FeatureMatrix(count, mean.size(), std::move(data));
}

} // namespace oodkit
