#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "oodkit/error.hpp"
#include "oodkit/io.hpp"
#include "oodkit/matrix.hpp"
#include "oodkit/ood.hpp"

namespace oodkit {

inline constexpr double kDefaultTprTarget = 0.95;

inline double accuracy(const LabelVector& pred, const LabelVector& truth) {
    if (pred.size() != truth.size()) {
        throw ShapeError("prediction count " + std::to_string(pred.size()) + " != truth count " +
                         std::to_string(truth.size()));
    }
    if (pred.empty()) {
        throw DomainError("accuracy of an empty set is undefined");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        hits += pred[i] == truth[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

/// counts[truth][pred]
inline std::vector<std::vector<std::size_t>> confusion_matrix(const LabelVector& pred, const LabelVector& truth,
                                                              std::size_t num_classes) {
    if (pred.size() != truth.size()) {
        throw ShapeError("prediction count != truth count");
    }
    pred.check_range(num_classes);
    truth.check_range(num_classes);
    std::vector<std::vector<std::size_t>> counts(num_classes, std::vector<std::size_t>(num_classes, 0));
    for (std::size_t i = 0; i < pred.size(); ++i) {
        ++counts[truth[i]][pred[i]];
    }
    return counts;
}

/// P(random ID score > random OOD score), ties counted as one half.
/// Computed from mid-ranks of the pooled sample (Mann-Whitney U).
inline double auroc(const ScoreVector& id_scores, const ScoreVector& ood_scores) {
    if (id_scores.empty() || ood_scores.empty()) {
        throw DomainError("AUROC needs at least one ID and one OOD score");
    }
    struct Entry {
        double score;
        bool is_id;
    };
    std::vector<Entry> pooled;
    pooled.reserve(id_scores.size() + ood_scores.size());
    for (double s : id_scores) {
        pooled.push_back({s, true});
    }
    for (double s : ood_scores) {
        pooled.push_back({s, false});
    }
    std::sort(pooled.begin(), pooled.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });

    // Ranks are 1-based; a tie group spanning positions [i, j) shares rank (i + j + 1) / 2.
    double id_rank_sum = 0.0;
    for (std::size_t i = 0; i < pooled.size();) {
        std::size_t j = i;
        std::size_t ids = 0;
        while (j < pooled.size() && pooled[j].score == pooled[i].score) {
            ids += pooled[j].is_id ? 1 : 0;
            ++j;
        }
        const double mid_rank = static_cast<double>(i + j + 1) / 2.0;
        id_rank_sum += mid_rank * static_cast<double>(ids);
        i = j;
    }
    const double n_id = static_cast<double>(id_scores.size());
    const double n_ood = static_cast<double>(ood_scores.size());
    const double u = id_rank_sum - n_id * (n_id + 1.0) / 2.0;
    return u / (n_id * n_ood);
}

/// Threshold chosen with the same nearest-rank rule as calibrate_tau (largest
/// t keeping at least `tpr_target` of ID scores strictly above it); returns the
/// fraction of OOD scores strictly above t.
inline double fpr_at_tpr(const ScoreVector& id_scores, const ScoreVector& ood_scores, double tpr_target) {
    if (id_scores.empty() || ood_scores.empty()) {
        throw DomainError("FPR@TPR needs at least one ID and one OOD score");
    }
    const double t = calibrate_tau(id_scores, tpr_target).tau;
    const auto above = std::count_if(ood_scores.begin(), ood_scores.end(), [&](double s) { return s > t; });
    return static_cast<double>(above) / static_cast<double>(ood_scores.size());
}

struct EvalReport {
    double accuracy = 0.0;
    std::vector<std::vector<std::size_t>> confusion;
    std::optional<double> auroc;  // absent without OOD samples
    std::optional<double> fpr_at_tpr;
    double tpr_target = kDefaultTprTarget;
    std::size_t n_id = 0;
    std::size_t n_ood = 0;
    double tau = -kInfinity;
    double id_retention = 1.0;   // ID samples with score > tau
    double ood_rejection = 0.0;  // OOD samples with score <= tau
};

struct EvalInputs {
    const LogitMatrix& id_logits;
    const LabelVector& id_labels;
    const LogitMatrix* ood_logits = nullptr;
    double tau = -kInfinity;
    double tpr_target = kDefaultTprTarget;
};

inline EvalReport evaluate(const EvalInputs& in) {
    if (in.id_labels.size() != in.id_logits.rows()) {
        throw ShapeError("ID label count != ID logit rows");
    }
    EvalReport report;
    report.tau = in.tau;
    report.tpr_target = in.tpr_target;
    report.n_id = in.id_logits.rows();
    const auto pred = predict_classes(in.id_logits);
    report.accuracy = accuracy(pred, in.id_labels);
    report.confusion = confusion_matrix(pred, in.id_labels, in.id_logits.cols());

    const auto id_scores = energy_score(in.id_logits);
    const auto kept = std::count_if(id_scores.begin(), id_scores.end(), [&](double s) { return s > in.tau; });
    report.id_retention = static_cast<double>(kept) / static_cast<double>(report.n_id);
    if (in.ood_logits != nullptr && !in.ood_logits->empty()) {
        const auto ood_scores = energy_score(*in.ood_logits);
        report.n_ood = ood_scores.size();
        report.auroc = auroc(id_scores, ood_scores);
        report.fpr_at_tpr = fpr_at_tpr(id_scores, ood_scores, in.tpr_target);
        const auto rejected =
            std::count_if(ood_scores.begin(), ood_scores.end(), [&](double s) { return s <= in.tau; });
        report.ood_rejection = static_cast<double>(rejected) / static_cast<double>(report.n_ood);
    }
    return report;
}

inline std::string encode_report(const EvalReport& r) {
    std::vector<std::pair<std::string, std::string>> kv{
        {"accuracy", format_double(r.accuracy)},
        {"n_id", std::to_string(r.n_id)},
        {"n_ood", std::to_string(r.n_ood)},
        {"tau", format_double(r.tau)},
        {"id_retention", format_double(r.id_retention)},
    };
    if (r.auroc) {
        kv.emplace_back("auroc", format_double(*r.auroc));
        kv.emplace_back("fpr_at_tpr", format_double(*r.fpr_at_tpr));
        kv.emplace_back("tpr_target", format_double(r.tpr_target));
        kv.emplace_back("ood_rejection", format_double(r.ood_rejection));
    }
    return encode_key_values(kv);
}

/// Header `truth,p0,p1,...`; row k holds the counts for true class k.
inline std::string encode_confusion_csv(const std::vector<std::vector<std::size_t>>& confusion) {
    std::string out = "truth";
    for (std::size_t c = 0; c < confusion.size(); ++c) {
        out += ",p" + std::to_string(c);
    }
    out += '\n';
    for (std::size_t k = 0; k < confusion.size(); ++k) {
        out += std::to_string(k);
        for (auto n : confusion[k]) {
            out += ',' + std::to_string(n);
        }
        out += '\n';
    }
    return out;
}

} // namespace oodkit
