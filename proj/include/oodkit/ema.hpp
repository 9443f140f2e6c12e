#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "oodkit/error.hpp"
#include "oodkit/io.hpp"
#include "oodkit/matrix.hpp"

namespace oodkit {

inline constexpr double kDefaultEmaDecay = 0.99;

/// Flat trainable parameters: head weights row-major, then bias.
struct ParamVector {
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
    friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

/// Shadow copy of the parameters, smoothed once per update with decay beta.
class EmaState {
public:
    EmaState(double decay, ParamVector initial) : decay_(decay), shadow_(std::move(initial)) {
        if (!(decay >= 0.0 && decay <= 1.0)) {
            throw DomainError("EMA decay must lie in [0, 1], got " + format_double(decay));
        }
        detail::require_finite(shadow_.values, "EMA shadow");
    }

    double decay() const noexcept { return decay_; }
    const ParamVector& shadow() const noexcept { return shadow_; }
    std::size_t step_count() const noexcept { return steps_; }

    /// shadow <- beta * shadow + (1 - beta) * current.
    void update(const ParamVector& current) {
        if (current.size() != shadow_.size()) {
            throw ShapeError("EMA update with " + std::to_string(current.size()) + " parameters, shadow has " +
                             std::to_string(shadow_.size()));
        }
        const double keep = decay_;
        const double take = 1.0 - decay_;
        for (std::size_t i = 0; i < shadow_.values.size(); ++i) {
            shadow_.values[i] = keep * shadow_.values[i] + take * current.values[i];
        }
        ++steps_;
    }

private:
    double decay_;
    ParamVector shadow_;
    std::size_t steps_ = 0;
};

/// Functional form of EmaState::update.
inline EmaState ema_update(EmaState state, const ParamVector& current) {
    state.update(current);
    return state;
}

inline ParamVector flatten_head(const LinearHead& head) {
    ParamVector p;
    p.values.assign(head.weights().data().begin(), head.weights().data().end());
    p.values.insert(p.values.end(), head.bias().begin(), head.bias().end());
    return p;
}

inline LinearHead unflatten_head(const ParamVector& params, std::size_t feature_dim, std::size_t num_classes) {
    if (params.size() != feature_dim * num_classes + num_classes) {
        throw ShapeError("parameter vector of length " + std::to_string(params.size()) + " does not describe a " +
                         std::to_string(feature_dim) + "x" + std::to_string(num_classes) + " head");
    }
    const auto split = params.values.begin() + static_cast<std::ptrdiff_t>(feature_dim * num_classes);
    return LinearHead(WeightMatrix(feature_dim, num_classes, std::vector<double>(params.values.begin(), split)),
                      std::vector<double>(split, params.values.end()));
}

} // namespace oodkit
