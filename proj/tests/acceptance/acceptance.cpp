// Acceptance run: one PASS/FAIL line per headline criterion, nonzero exit on
// any failure.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oodkit/oodkit.hpp"
#include "../support/oracles.hpp"
#include "../unit/test_util.hpp"

using namespace oodkit;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = true;
    std::string detail;

    void fail(const std::string& why) {
        if (pass) {
            detail = why;
        }
        pass = false;
    }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x) { return format_double(x); }

// ---------------------------------------------------------------- oracles

Outcome oracle_suites() {
    Outcome out;
    const auto t0 = Clock::now();

    std::mt19937_64 rng(101);
    std::uniform_int_distribution<std::size_t> dim(1, 12);
    std::uniform_int_distribution<std::uint64_t> pct(1, 100);
    std::uniform_int_distribution<int> coarse(-5, 5);
    std::normal_distribution<double> nd(0.0, 3.0);
    for (int trial = 0; trial < 1000 && out.pass; ++trial) {
        const std::size_t rows = dim(rng);
        const std::size_t cols = dim(rng);
        std::vector<double> data(rows * cols);
        for (auto& v : data) {
            v = trial % 2 ? nd(rng) : coarse(rng);
        }
        const auto p = pct(rng);
        if (fit_react_threshold(FeatureMatrix(rows, cols, data), static_cast<double>(p)) !=
            oracle::percentile(data, p)) {
            out.fail("percentile mismatch at trial " + std::to_string(trial));
        }
    }

    std::uniform_int_distribution<std::size_t> size(1, 200);
    double worst_auroc = 0.0;
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> id(size(rng));
        std::vector<double> ood(size(rng));
        for (auto& v : id) {
            v = trial % 3 ? nd(rng) + 1.0 : coarse(rng);
        }
        for (auto& v : ood) {
            v = trial % 3 ? nd(rng) : coarse(rng);
        }
        worst_auroc = std::max(worst_auroc, std::abs(auroc(ScoreVector(id), ScoreVector(ood)) - oracle::auroc(id, ood)));
    }
    if (worst_auroc > 1e-12) {
        out.fail("AUROC deviation " + fmt(worst_auroc));
    }

    const std::pair<std::uint64_t, std::uint64_t> targets[] = {{1, 2}, {9, 10}, {19, 20}, {99, 100}, {1, 1}, {3, 10}};
    std::size_t tau_cases = 0;
    for (int trial = 0; trial < 600; ++trial) {
        const auto [num, den] = targets[trial % std::size(targets)];
        std::vector<double> scores(size(rng) + 200);
        for (auto& s : scores) {
            s = nd(rng);
        }
        auto sorted = scores;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            continue;
        }
        ++tau_cases;
        const double q = static_cast<double>(num) / static_cast<double>(den);
        if (calibrate_tau(ScoreVector(scores), q).tau != oracle::max_threshold(scores, num, den)) {
            out.fail("tau mismatch at trial " + std::to_string(trial));
        }
    }

    const double elapsed = seconds_since(t0);
    if (elapsed >= 10.0) {
        out.fail("runtime " + fmt(elapsed) + " s");
    }
    if (out.pass) {
        out.detail = "1000 percentile, 300 AUROC (max dev " + fmt(worst_auroc) + "), " + std::to_string(tau_cases) +
                     " tau cases in " + fmt(std::round(elapsed * 100) / 100) + " s";
    }
    return out;
}

// ---------------------------------------------------------------- identities

Outcome analytic_identities() {
    Outcome out;
    std::mt19937_64 rng(202);
    std::normal_distribution<double> nd(0.0, 4.0);

    double worst_shift = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> z(2 + trial % 6);
        for (auto& v : z) {
            v = nd(rng);
        }
        const double base = energy_score(LogitMatrix(1, z.size(), z))[0];
        for (double a : {-1e6, -1234.5, -1.0, 0.5, 77.0, 1e6}) {
            auto shifted = z;
            for (auto& v : shifted) {
                v += a;
            }
            const double s = energy_score(LogitMatrix(1, z.size(), shifted))[0];
            worst_shift = std::max(worst_shift, std::abs(s - (base + a)));
        }
    }
    if (worst_shift > 1e-9) {
        out.fail("energy shift deviation " + fmt(worst_shift));
    }

    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> f(6 * 5), w(5 * 3), b(3);
        for (auto* v : {&f, &w, &b}) {
            for (auto& x : *v) {
                x = nd(rng);
            }
        }
        const FeatureMatrix h(6, 5, f);
        const LinearHead head(WeightMatrix(5, 3, w), b);
        if (!(rectified_forward(h, head, kInfinity) == forward(h, head))) {
            out.fail("c = inf forward differs from plain forward");
        }
    }

    // dyadic decay and targets keep every intermediate exactly representable
    for (double beta : {0.5, 0.75, 0.25}) {
        const std::vector<double> target{1.0, -2.0, 0.5, 3.0};
        const std::vector<double> start{5.0, 6.0, -7.5, 3.0};
        EmaState ema(beta, ParamVector{start});
        for (int t = 1; t <= 20; ++t) {
            ema.update(ParamVector{target});
            for (std::size_t i = 0; i < target.size(); ++i) {
                const double lhs = std::abs(ema.shadow().values[i] - target[i]);
                const double rhs = std::pow(beta, t) * std::abs(start[i] - target[i]);
                if (lhs != rhs) {
                    out.fail("EMA law broken at beta " + fmt(beta) + " t=" + std::to_string(t));
                }
            }
        }
    }

    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t hgt = 1 + trial % 9;
        const std::size_t wid = 1 + (trial * 7) % 11;
        std::vector<double> px(hgt * wid);
        for (auto& v : px) {
            v = u(rng);
        }
        const ImageBuffer img(hgt, wid, px);
        for (auto axis : {FlipAxis::Horizontal, FlipAxis::Vertical}) {
            if (!(flip(flip(img, axis), axis) == img)) {
                out.fail("double flip is not the identity");
            }
        }
        const ImageBuffer sq(hgt, hgt, std::vector<double>(px.begin(), px.begin() + static_cast<long>(hgt * hgt)));
        ImageBuffer r = sq;
        for (int k = 0; k < 4; ++k) {
            r = rotate(r, 90.0);
        }
        if (!(r == sq)) {
            out.fail("four 90 degree rotations are not the identity");
        }
    }
    if (out.pass) {
        out.detail = "max energy shift deviation " + fmt(worst_shift);
    }
    return out;
}

// ---------------------------------------------------------------- gradient

Outcome gradient_check() {
    Outcome out;
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> logit(-6.0, 6.0);
    std::uniform_int_distribution<std::size_t> classes(2, 8);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = classes(rng);
        std::vector<double> z(k);
        for (auto& v : z) {
            v = logit(rng);
        }
        const std::size_t y = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
        const auto res = softmax_xent_grad(LogitMatrix(1, k, z), LabelVector({y}));
        const auto fd = oracle::xent_fd_grad(z, y, 1e-5L);
        for (std::size_t j = 0; j < k; ++j) {
            const double a = res.grad(0, j);
            const double rel = std::abs(a - fd[j]) / std::max({std::abs(a), std::abs(fd[j]), 1e-300});
            worst = std::max(worst, rel);
        }
    }
    if (worst > 1e-6) {
        out.fail("relative error " + fmt(worst));
    } else {
        out.detail = "100 instances, max relative error " + fmt(worst);
    }
    return out;
}

// ---------------------------------------------------------------- calibration contract

Outcome calibration_contract() {
    Outcome out;
    const auto t0 = Clock::now();
    constexpr double kSigma = 1.0;
    constexpr double kSeparation = 6.0;

    SyntheticSpec spec;
    spec.means = axis_means(3, 8, kSeparation);
    spec.stddev = kSigma;
    spec.per_class = 100;
    spec.seed = 2024;
    const auto train = generate_synthetic(spec);
    spec.seed = 2025;
    const auto held = generate_synthetic(spec);
    // origin is kSeparation / kSigma = 6 sigma away from every class mean
    const auto ood = generate_ood(std::vector<double>(8, 0.0), kSigma, 300, 2026);

    const auto model = train_head(train.features, train.labels, TrainConfig{});
    const auto& head = model.ema_head;
    const double c = fit_react_threshold(train.features, kDefaultPercentile);
    const auto cal = calibrate_tau(energy_score(rectified_forward(train.features, head, c)), 0.99);

    const auto held_scores = energy_score(rectified_forward(held.features, head, c));
    const auto kept = std::count_if(held_scores.begin(), held_scores.end(), [&](double s) { return s > cal.tau; });
    const double retention = static_cast<double>(kept) / static_cast<double>(held_scores.size());

    const double auroc_react = auroc(held_scores, energy_score(rectified_forward(ood, head, c)));
    const double auroc_plain = auroc(energy_score(forward(held.features, head)), energy_score(forward(ood, head)));

    if (retention < 0.97) {
        out.fail("held-out retention " + fmt(retention));
    }
    if (auroc_plain < 0.95) {
        out.fail("AUROC without clipping " + fmt(auroc_plain));
    }
    if (auroc_react < 0.95) {
        out.fail("AUROC with ReAct " + fmt(auroc_react));
    }
    if (auroc_plain - auroc_react > 0.02) {
        out.fail("ReAct drops AUROC by " + fmt(auroc_plain - auroc_react));
    }
    const double elapsed = seconds_since(t0);
    if (elapsed >= 30.0) {
        out.fail("runtime " + fmt(elapsed) + " s");
    }
    if (out.pass) {
        std::ostringstream s;
        s << "retention " << fmt(retention) << ", AUROC " << fmt(auroc_plain) << " plain / " << fmt(auroc_react)
          << " ReAct(c=" << fmt(c) << ")";
        out.detail = s.str();
    }
    return out;
}

// ---------------------------------------------------------------- pipeline determinism

int run_cli(const std::string& args) {
    const std::string cmd = std::string(OODKIT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome pipeline_determinism() {
    Outcome out;
    const std::vector<std::string> artifacts{
        "data/id_features.fvec", "data/id_labels.csv", "data/ood_features.fvec", "model/head_W.fvec",
        "model/head_b.fvec",     "model/ema_W.fvec",   "model/ema_b.fvec",       "model/history.csv",
        "cal.txt",               "decisions.csv",      "report.txt",             "confusion.csv"};
    testing::TempDir a;
    testing::TempDir b;
    for (const auto* dir : {&a, &b}) {
        auto q = [&](const std::string& rel) { return "'" + (dir->path() / rel).string() + "'"; };
        const std::vector<std::string> steps{
            "synth --seed 42 --out-dir " + q("data"),
            "train --features " + q("data/id_features.fvec") + " --labels " + q("data/id_labels.csv") + " --seed 42" +
                " --out-dir " + q("model"),
            "calibrate --features " + q("data/id_features.fvec") + " --head " + q("model/ema") + " --out " + q("cal.txt"),
            "detect --features " + q("data/ood_features.fvec") + " --head " + q("model/ema") + " --calibration " +
                q("cal.txt") + " --out " + q("decisions.csv"),
            "eval --id-features " + q("data/id_features.fvec") + " --id-labels " + q("data/id_labels.csv") +
                " --ood-features " + q("data/ood_features.fvec") + " --head " + q("model/ema") + " --calibration " +
                q("cal.txt") + " --report " + q("report.txt") + " --confusion " + q("confusion.csv")};
        for (const auto& step : steps) {
            if (const int code = run_cli(step); code != 0) {
                out.fail("'" + step.substr(0, step.find(' ')) + "' exited with " + std::to_string(code));
                return out;
            }
        }
    }
    for (const auto& rel : artifacts) {
        if (read_file_bytes(a.path() / rel) != read_file_bytes(b.path() / rel)) {
            out.fail(rel + " differs between runs");
        }
    }
    if (out.pass) {
        out.detail = std::to_string(artifacts.size()) + " artifacts byte-identical";
    }
    return out;
}

// ---------------------------------------------------------------- TTA stability

Outcome tta_stability() {
    Outcome out;
    constexpr std::size_t kImages = 20;
    constexpr std::size_t kSeeds = 120;
    const GridPoolFeaturizer featurizer(2);
    const LinearHead head(WeightMatrix::from_rows({{1.0, -1.0, 0.5}, {0.5, 2.0, -1.0}, {-1.0, 0.5, 1.0}, {2.0, 0.0, 0.25}}),
                          {0.1, -0.2, 0.0});
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    auto variance = [&](const ImageBuffer& img, std::size_t k, std::size_t cls) {
        double sum = 0.0;
        double sum_sq = 0.0;
        for (std::size_t s = 0; s < kSeeds; ++s) {
            const TtaConfig cfg{k, false, 5000 + s};
            const double v = tta_predict(img, featurizer, head, kInfinity, cfg, AugmentSpec{})(0, cls);
            sum += v;
            sum_sq += v * v;
        }
        const double mean = sum / kSeeds;
        return sum_sq / kSeeds - mean * mean;
    };

    std::size_t successes = 0;
    std::size_t trials = 0;
    for (std::size_t i = 0; i < kImages; ++i) {
        std::vector<double> px(16 * 16);
        for (auto& v : px) {
            v = u(rng);
        }
        const ImageBuffer img(16, 16, px);
        const std::size_t cls = i % head.num_classes();
        ++trials;
        successes += variance(img, 32, cls) < variance(img, 1, cls) ? 1 : 0;
    }
    const double p = oracle::sign_test_p_value(successes, trials);
    if (!(p < 0.01)) {
        out.fail(std::to_string(successes) + "/" + std::to_string(trials) + " decreases, p = " + fmt(p));
    } else {
        out.detail = std::to_string(successes) + "/" + std::to_string(trials) + " images, " + std::to_string(kSeeds) +
                     " seeds each, sign test p = " + fmt(p);
    }
    return out;
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
        {"oracle-suites", oracle_suites},
        {"analytic-identities", analytic_identities},
        {"gradient-check", gradient_check},
        {"calibration-contract", calibration_contract},
        {"pipeline-determinism", pipeline_determinism},
        {"tta-stability", tta_stability},
    };
    int failures = 0;
    for (const auto& [name, check] : checks) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o.fail(std::string("exception: ") + e.what());
        }
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << '\n';
        failures += o.pass ? 0 : 1;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
    return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
