#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oodkit/error.hpp"
#include "oodkit/io.hpp"
#include "oodkit/matrix.hpp"

namespace oodkit {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

inline constexpr double kDefaultPercentile = 90.0;
inline constexpr double kDefaultRetention = 0.99;
// Achieved retention this far below the target raises the calibration warning.
inline constexpr double kRetentionWarningSlack = 0.005;

struct ReactConfig {
    double percentile_p = kDefaultPercentile;
    std::optional<double> cutoff_c;  // unset until fitted; +inf disables clipping
};

struct Calibration {
    double tau = -kInfinity;
    double target_retention = kDefaultRetention;
    double achieved_retention = 1.0;
    std::size_t n_calibration = 0;
    bool warning = false;
};

enum class Verdict { InDistribution, OutOfDistribution };

struct Decision {
    Verdict verdict = Verdict::OutOfDistribution;
    double score = 0.0;
    std::size_t predicted_class = 0;  // meaningful only for InDistribution
};

namespace detail {

// Rank counts: the tolerance absorbs representation error in products such as
// 100 * (1 - 0.99) so that values meant to be integers are not pushed below
// (floor) or above (ceil) the integer they stand for.
inline constexpr double kRankSlack = 1e-9;

inline std::size_t nearest_rank_index(double percentile, std::size_t n) {
    const double rank = std::ceil(percentile * static_cast<double>(n) / 100.0 - kRankSlack);
    const auto r = static_cast<std::size_t>(std::max(rank, 1.0));
    return std::min(r, n) - 1;
}

inline std::size_t excluded_count(std::size_t n, double retention) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * (1.0 - retention) + kRankSlack));
}

inline std::size_t argmax_lowest(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
        if (row[j] > row[best]) {
            best = j;
        }
    }
    return best;
}

inline double logsumexp(std::span<const double> row) {
    const double a = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double x : row) {
        sum += std::exp(x - a);
    }
    return a + std::log(sum);
}

} // namespace detail

/// Element-wise min(x, c). c may be +inf (no-op) but not NaN.
inline FeatureMatrix react_clip(const FeatureMatrix& features, double cutoff) {
    if (std::isnan(cutoff)) {
        throw DomainError("ReAct cutoff is NaN");
    }
    std::vector<double> out(features.data().begin(), features.data().end());
    for (double& v : out) {
        v = std::min(v, cutoff);
    }
    return FeatureMatrix(features.rows(), features.cols(), std::move(out));
}

/// Nearest-rank p-th percentile over every activation of every sample
/// (one global cutoff, no interpolation).
inline double fit_react_threshold(const FeatureMatrix& id_features, double percentile) {
    if (!(percentile > 0.0 && percentile <= 100.0)) {
        throw DomainError("percentile must lie in (0, 100], got " + format_double(percentile));
    }
    if (id_features.data().empty()) {
        throw CalibrationError("cannot fit ReAct cutoff on an empty feature matrix");
    }
    std::vector<double> values(id_features.data().begin(), id_features.data().end());
    const auto k = detail::nearest_rank_index(percentile, values.size());
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
    return values[k];
}

/// Plain forward pass W^T h + b for every row.
inline LogitMatrix forward(const FeatureMatrix& features, const LinearHead& head) {
    if (features.cols() != head.feature_dim()) {
        throw ShapeError("features have " + std::to_string(features.cols()) + " columns, head expects " +
                         std::to_string(head.feature_dim()));
    }
    const std::size_t n = features.rows();
    const std::size_t m = head.feature_dim();
    const std::size_t k = head.num_classes();
    const auto& w = head.weights();
    std::vector<double> out(n * k);
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out.data() + i * k;
        std::copy(head.bias().begin(), head.bias().end(), row);
        for (std::size_t f = 0; f < m; ++f) {
            const double h = features(i, f);
            for (std::size_t c = 0; c < k; ++c) {
                row[c] += h * w(f, c);
            }
        }
    }
    return LogitMatrix(n, k, std::move(out));
}

/// Forward pass on ReAct-clipped features. cutoff = +inf is the plain forward.
inline LogitMatrix rectified_forward(const FeatureMatrix& features, const LinearHead& head, double cutoff) {
    if (features.cols() != head.feature_dim()) {
        throw ShapeError("features have " + std::to_string(features.cols()) + " columns, head expects " +
                         std::to_string(head.feature_dim()));
    }
    return forward(react_clip(features, cutoff), head);
}

/// log-sum-exp of each logit row (max-shifted). Larger is more in-distribution.
inline ScoreVector energy_score(const LogitMatrix& logits) {
    std::vector<double> scores(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        scores[i] = detail::logsumexp(logits.row(i));
    }
    return ScoreVector(std::move(scores));
}

/// Maximum softmax probability; a baseline score for comparison only.
inline ScoreVector max_softmax_score(const LogitMatrix& logits) {
    std::vector<double> scores(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto row = logits.row(i);
        const double top = *std::max_element(row.begin(), row.end());
        scores[i] = std::exp(top - detail::logsumexp(row));
    }
    return ScoreVector(std::move(scores));
}

/// Picks the largest tau whose strict-exceedance rate on the calibration
/// scores is at least `retention`: with k = floor(N(1-q)), tau is the k-th
/// smallest score, or -inf when k = 0.
inline Calibration calibrate_tau(const ScoreVector& train_scores, double retention = kDefaultRetention) {
    if (!(retention > 0.0 && retention <= 1.0)) {
        throw DomainError("retention must lie in (0, 1], got " + format_double(retention));
    }
    if (train_scores.empty()) {
        throw CalibrationError("cannot calibrate tau on an empty score set");
    }
    const std::size_t n = train_scores.size();
    const std::size_t k = detail::excluded_count(n, retention);

    Calibration cal;
    cal.target_retention = retention;
    cal.n_calibration = n;
    if (k == 0) {
        cal.tau = -kInfinity;
    } else {
        std::vector<double> sorted(train_scores.begin(), train_scores.end());
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
        cal.tau = sorted[k - 1];
    }
    const auto kept = std::count_if(train_scores.begin(), train_scores.end(), [&](double s) { return s > cal.tau; });
    cal.achieved_retention = static_cast<double>(kept) / static_cast<double>(n);
    cal.warning = cal.achieved_retention < retention - kRetentionWarningSlack;
    return cal;
}

inline Verdict classify_score(double score, double tau) {
    return score > tau ? Verdict::InDistribution : Verdict::OutOfDistribution;
}

inline std::vector<Decision> decide(const ScoreVector& scores, const LogitMatrix& logits, double tau) {
    if (scores.size() != logits.rows()) {
        throw ShapeError("score count " + std::to_string(scores.size()) + " != logit rows " +
                         std::to_string(logits.rows()));
    }
    std::vector<Decision> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i].score = scores[i];
        out[i].verdict = classify_score(scores[i], tau);
        out[i].predicted_class = detail::argmax_lowest(logits.row(i));
    }
    return out;
}

/// Row-wise argmax of the logits, ties going to the lowest class index.
inline LabelVector predict_classes(const LogitMatrix& logits) {
    std::vector<std::size_t> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        out[i] = detail::argmax_lowest(logits.row(i));
    }
    return LabelVector(std::move(out));
}

/// Element-wise mean of member logits, summed in member order.
inline LogitMatrix ensemble_logits(std::span<const LogitMatrix> members) {
    if (members.empty()) {
        throw DomainError("ensemble needs at least one member");
    }
    const auto& first = members.front();
    std::vector<double> sum(first.data().size(), 0.0);
    for (const auto& m : members) {
        if (m.rows() != first.rows() || m.cols() != first.cols()) {
            throw ShapeError("ensemble member shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                             " != " + std::to_string(first.rows()) + "x" + std::to_string(first.cols()));
        }
        for (std::size_t i = 0; i < sum.size(); ++i) {
            sum[i] += m.data()[i];
        }
    }
    const double count = static_cast<double>(members.size());
    for (double& v : sum) {
        v /= count;
    }
    return LogitMatrix(first.rows(), first.cols(), std::move(sum));
}

// ---------------------------------------------------------------- persistence

struct CalibrationFile {
    ReactConfig react;
    Calibration calibration;
};

inline std::string encode_calibration(const CalibrationFile& file) {
    const double c = file.react.cutoff_c.value_or(kInfinity);
    return encode_key_values({
        {"tau", format_double(file.calibration.tau)},
        {"cutoff_c", format_double(c)},
        {"percentile_p", format_double(file.react.percentile_p)},
        {"target_retention", format_double(file.calibration.target_retention)},
        {"achieved_retention", format_double(file.calibration.achieved_retention)},
        {"n_calibration", std::to_string(file.calibration.n_calibration)},
    });
}

inline void write_calibration(const CalibrationFile& file, const std::filesystem::path& path) {
    write_file_atomic(path, encode_calibration(file));
}

inline CalibrationFile read_calibration(const std::filesystem::path& path) {
    const auto kv = read_key_values(path);
    auto need = [&](const std::string& key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) {
            throw FormatError("calibration file '" + path.string() + "' lacks '" + key + "'");
        }
        return it->second;
    };
    CalibrationFile file;
    file.calibration.tau = parse_double(need("tau"));
    file.react.cutoff_c = parse_double(need("cutoff_c"));
    file.react.percentile_p = parse_double(need("percentile_p"));
    file.calibration.target_retention = parse_double(need("target_retention"));
    file.calibration.achieved_retention = parse_double(need("achieved_retention"));
    const auto n = parse_integer(need("n_calibration"));
    if (n < 0) {
        throw DomainError("n_calibration is negative");
    }
    file.calibration.n_calibration = static_cast<std::size_t>(n);
    file.calibration.warning =
        file.calibration.achieved_retention < file.calibration.target_retention - kRetentionWarningSlack;
    if (std::isnan(file.calibration.tau) || std::isnan(*file.react.cutoff_c)) {
        throw DataError("calibration file '" + path.string() + "' contains NaN");
    }
    return file;
}

} // namespace oodkit
