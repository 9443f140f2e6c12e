#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oodkit/error.hpp"

namespace oodkit {

namespace detail {

inline void require_finite(std::span<const double> values, const char* what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw DataError(std::string(what) + " has non-finite entry at index " + std::to_string(i));
        }
    }
}

} // namespace detail

struct FeatureTag {
    static constexpr const char* name = "feature matrix";
};
struct LogitTag {
    static constexpr const char* name = "logit matrix";
};
struct WeightTag {
    static constexpr const char* name = "weight matrix";
};

/// Dense row-major matrix of finite doubles.
///
/// The tag keeps penultimate features, logits and head weights from being
/// mixed up at call sites; `retag` converts explicitly when a caller really
/// means to reinterpret one as another (e.g. a file on disk).
/// Zero rows are allowed, zero columns are not.
template <class Tag>
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols) : Matrix(rows, cols, std::vector<double>(rows * cols, 0.0)) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (cols_ == 0) {
            throw ShapeError(std::string(Tag::name) + " needs at least one column");
        }
        if (data_.size() != rows_ * cols_) {
            throw ShapeError(std::string(Tag::name) + " data length " + std::to_string(data_.size()) +
                             " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
        detail::require_finite(data_, Tag::name);
    }

    /// Builds from nested rows; every row must have the same length.
    static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) {
            throw ShapeError(std::string(Tag::name) + ": from_rows needs at least one row to infer width");
        }
        const std::size_t cols = rows.front().size();
        std::vector<double> data;
        data.reserve(rows.size() * cols);
        for (const auto& r : rows) {
            if (r.size() != cols) {
                throw ShapeError(std::string(Tag::name) + ": ragged rows");
            }
            data.insert(data.end(), r.begin(), r.end());
        }
        return Matrix(rows.size(), cols, std::move(data));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }

    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> data() const noexcept { return data_; }

    template <class Other>
    Matrix<Other> retag() const& {
        return Matrix<Other>(rows_, cols_, data_);
    }
    template <class Other>
    Matrix<Other> retag() && {
        return Matrix<Other>(rows_, cols_, std::move(data_));
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 1;
    std::vector<double> data_;
};

using FeatureMatrix = Matrix<FeatureTag>;
using LogitMatrix = Matrix<LogitTag>;
using WeightMatrix = Matrix<WeightTag>;

/// Linear classifier f(h) = W^T h + b with W of shape m x K.
class LinearHead {
public:
    LinearHead(WeightMatrix weights, std::vector<double> bias)
        : weights_(std::move(weights)), bias_(std::move(bias)) {
        if (bias_.size() != weights_.cols()) {
            throw ShapeError("bias length " + std::to_string(bias_.size()) + " != class count " +
                             std::to_string(weights_.cols()));
        }
        if (weights_.rows() == 0) {
            throw ShapeError("head weights need at least one feature row");
        }
        detail::require_finite(bias_, "bias");
    }

    std::size_t feature_dim() const noexcept { return weights_.rows(); }
    std::size_t num_classes() const noexcept { return weights_.cols(); }
    const WeightMatrix& weights() const noexcept { return weights_; }
    std::span<const double> bias() const noexcept { return bias_; }

    friend bool operator==(const LinearHead&, const LinearHead&) = default;

private:
    WeightMatrix weights_;
    std::vector<double> bias_;
};

/// Class indices, 0-based.
class LabelVector {
public:
    LabelVector() = default;
    explicit LabelVector(std::vector<std::size_t> labels) : labels_(std::move(labels)) {}

    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }
    std::size_t operator[](std::size_t i) const { return labels_[i]; }
    std::span<const std::size_t> values() const noexcept { return labels_; }
    auto begin() const noexcept { return labels_.begin(); }
    auto end() const noexcept { return labels_.end(); }

    void check_range(std::size_t num_classes) const {
        for (std::size_t i = 0; i < labels_.size(); ++i) {
            if (labels_[i] >= num_classes) {
                throw DomainError("label " + std::to_string(labels_[i]) + " at row " + std::to_string(i) +
                                  " outside [0, " + std::to_string(num_classes) + ")");
            }
        }
    }

    friend bool operator==(const LabelVector&, const LabelVector&) = default;

private:
    std::vector<std::size_t> labels_;
};

/// Per-sample OOD scores; larger means more in-distribution.
class ScoreVector {
public:
    ScoreVector() = default;
    explicit ScoreVector(std::vector<double> scores) : scores_(std::move(scores)) {
        detail::require_finite(scores_, "score vector");
    }

    std::size_t size() const noexcept { return scores_.size(); }
    bool empty() const noexcept { return scores_.empty(); }
    double operator[](std::size_t i) const { return scores_[i]; }
    std::span<const double> values() const noexcept { return scores_; }
    auto begin() const noexcept { return scores_.begin(); }
    auto end() const noexcept { return scores_.end(); }

    friend bool operator==(const ScoreVector&, const ScoreVector&) = default;

private:
    std::vector<double> scores_;
};

} // namespace oodkit
