#pragma once

// Brute-force reference implementations used only by the test suites. They
// share no code with the library routines they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace oodkit::oracle {

/// Nearest-rank percentile for an integer percent: the smallest sorted value
/// whose 1-based rank r satisfies 100 * r >= p * n.
inline double percentile(std::vector<double> values, std::uint64_t percent) {
    std::sort(values.begin(), values.end());
    const std::uint64_t n = values.size();
    for (std::uint64_t r = 1; r <= n; ++r) {
        if (100 * r >= percent * n) {
            return values[r - 1];
        }
    }
    return values.back();
}

/// Largest threshold among {-inf} and the scores whose strict-exceedance
/// count is at least (num/den) * n, checked in integer arithmetic.
inline double max_threshold(const std::vector<double>& scores, std::uint64_t num, std::uint64_t den) {
    double best = -std::numeric_limits<double>::infinity();
    const std::uint64_t n = scores.size();
    for (double t : scores) {
        std::uint64_t above = 0;
        for (double s : scores) {
            above += s > t ? 1 : 0;
        }
        if (above * den >= num * n && t > best) {
            best = t;
        }
    }
    return best;
}

/// Pairwise Mann-Whitney statistic: wins count 1, ties 1/2.
inline double auroc(const std::vector<double>& id, const std::vector<double>& ood) {
    double wins = 0.0;
    for (double a : id) {
        for (double b : ood) {
            wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
        }
    }
    return wins / (static_cast<double>(id.size()) * static_cast<double>(ood.size()));
}

/// Per-sample softmax cross-entropy evaluated in extended precision.
inline long double xent(const std::vector<long double>& logits, std::size_t label) {
    long double top = logits[0];
    for (auto x : logits) {
        top = std::max(top, x);
    }
    long double z = 0.0L;
    for (auto x : logits) {
        z += std::exp(x - top);
    }
    return top + std::log(z) - logits[label];
}

/// Central finite difference of xent with respect to each logit.
inline std::vector<double> xent_fd_grad(const std::vector<double>& logits, std::size_t label, long double step) {
    std::vector<double> g(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j) {
        std::vector<long double> up(logits.begin(), logits.end());
        std::vector<long double> dn(logits.begin(), logits.end());
        up[j] += step;
        dn[j] -= step;
        g[j] = static_cast<double>((xent(up, label) - xent(dn, label)) / (2.0L * step));
    }
    return g;
}

/// Bilinear sample of a row-major grid at fractional (y, x), written out
/// as the explicit four-corner weighted sum.
inline double bilinear_at(const std::vector<std::vector<double>>& grid, double y, double x) {
    const double ymax = static_cast<double>(grid.size() - 1);
    const double xmax = static_cast<double>(grid[0].size() - 1);
    y = std::min(std::max(y, 0.0), ymax);
    x = std::min(std::max(x, 0.0), xmax);
    const auto y0 = static_cast<std::size_t>(y);
    const auto x0 = static_cast<std::size_t>(x);
    const std::size_t y1 = std::min<std::size_t>(y0 + 1, grid.size() - 1);
    const std::size_t x1 = std::min<std::size_t>(x0 + 1, grid[0].size() - 1);
    const double fy = y - static_cast<double>(y0);
    const double fx = x - static_cast<double>(x0);
    return grid[y0][x0] * (1 - fy) * (1 - fx) + grid[y0][x1] * (1 - fy) * fx + grid[y1][x0] * fy * (1 - fx) +
           grid[y1][x1] * fy * fx;
}

/// Upsample `block` to out_h x out_w with half-pixel-centre alignment.
inline std::vector<std::vector<double>> bilinear_upsample(const std::vector<std::vector<double>>& block,
                                                          std::size_t out_h, std::size_t out_w) {
    std::vector<std::vector<double>> out(out_h, std::vector<double>(out_w));
    const double sy = static_cast<double>(block.size()) / static_cast<double>(out_h);
    const double sx = static_cast<double>(block[0].size()) / static_cast<double>(out_w);
    for (std::size_t r = 0; r < out_h; ++r) {
        for (std::size_t c = 0; c < out_w; ++c) {
            out[r][c] = bilinear_at(block, (static_cast<double>(r) + 0.5) * sy - 0.5, (static_cast<double>(c) + 0.5) * sx - 0.5);
        }
    }
    return out;
}

/// One-sided binomial tail P(X >= k) for X ~ Bin(n, 1/2).
inline double sign_test_p_value(std::size_t successes, std::size_t trials) {
    double p = 0.0;
    for (std::size_t k = successes; k <= trials; ++k) {
        double log_term = std::lgamma(static_cast<double>(trials) + 1) - std::lgamma(static_cast<double>(k) + 1) -
                          std::lgamma(static_cast<double>(trials - k) + 1) - static_cast<double>(trials) * std::log(2.0);
        p += std::exp(log_term);
    }
    return p;
}

} // namespace oodkit::oracle
