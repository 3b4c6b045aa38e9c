#pragma once

// Binary classification metrics over next-step predictions.

#include "kt/errors.hpp"

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace kt {

struct ScoredPrediction {
    double probability = 0.0;
    int label = 0;
    std::string universal_id;
    std::size_t step = 0; ///< index of the predicted interaction within the student's test sequence
    int skill_id = 0;
};

struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const noexcept { return tp + fp + tn + fn; }
    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        tp += o.tp;
        fp += o.fp;
        tn += o.tn;
        fn += o.fn;
        return *this;
    }
    bool operator==(const ConfusionMatrix&) const = default;
};

/// Predicted pass iff probability >= threshold.
inline ConfusionMatrix confusion(const std::vector<ScoredPrediction>& preds, double threshold = 0.5) {
    if (preds.empty()) throw ContractError("confusion: no scored predictions");
    ConfusionMatrix cm;
    for (const auto& p : preds) {
        const bool predicted = p.probability >= threshold;
        if (predicted) {
            (p.label == 1 ? cm.tp : cm.fp) += 1;
        } else {
            (p.label == 1 ? cm.fn : cm.tn) += 1;
        }
    }
    return cm;
}

/// A ratio whose zero denominator is reported instead of raised.
struct Ratio {
    double value = 0.0;
    bool degenerate = false;
};

inline Ratio safe_ratio(double num, double den) {
    if (den == 0.0) return {0.0, true};
    return {num / den, false};
}

inline Ratio accuracy(const ConfusionMatrix& cm) {
    return safe_ratio(static_cast<double>(cm.tp + cm.tn), static_cast<double>(cm.total()));
}

inline Ratio precision(const ConfusionMatrix& cm) {
    return safe_ratio(static_cast<double>(cm.tp), static_cast<double>(cm.tp + cm.fp));
}

inline Ratio recall(const ConfusionMatrix& cm) {
    return safe_ratio(static_cast<double>(cm.tp), static_cast<double>(cm.tp + cm.fn));
}

inline Ratio f1(const ConfusionMatrix& cm) {
    const double p = precision(cm).value;
    const double r = recall(cm).value;
    return safe_ratio(2.0 * p * r, p + r);
}

struct AucResult {
    std::optional<double> value; ///< missing when only one class is present
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

/// Mann-Whitney AUC with tied scores counted one half, via average ranks.
inline AucResult auc(const std::vector<ScoredPrediction>& preds) {
    AucResult out;
    std::vector<std::pair<double, int>> s;
    s.reserve(preds.size());
    for (const auto& p : preds) {
        s.emplace_back(p.probability, p.label);
        (p.label == 1 ? out.positives : out.negatives) += 1;
    }
    if (out.positives == 0 || out.negatives == 0) return out;
    std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    // Sum over positives of (negatives strictly below + half the negatives tied).
    double wins = 0.0;
    std::size_t neg_below = 0;
    for (std::size_t i = 0; i < s.size();) {
        std::size_t j = i;
        std::size_t pos = 0;
        std::size_t neg = 0;
        while (j < s.size() && s[j].first == s[i].first) {
            (s[j].second == 1 ? pos : neg) += 1;
            ++j;
        }
        wins += static_cast<double>(pos) * (static_cast<double>(neg_below) + 0.5 * static_cast<double>(neg));
        neg_below += neg;
        i = j;
    }
    out.value = wins / (static_cast<double>(out.positives) * static_cast<double>(out.negatives));
    return out;
}

struct MetricsReport {
    std::string model;
    std::string subset;
    std::size_t n = 0;
    ConfusionMatrix cm;
    Ratio accuracy;
    Ratio precision;
    Ratio recall;
    Ratio f1;
    AucResult auc;
    bool empty = false;
};

/// All metrics for one (model, subset) pair. An empty prediction list gives a row marked empty.
inline MetricsReport make_report(const std::vector<ScoredPrediction>& preds, std::string model, std::string subset,
                                 double threshold = 0.5) {
    MetricsReport r;
    r.model = std::move(model);
    r.subset = std::move(subset);
    r.n = preds.size();
    if (preds.empty()) {
        r.empty = true;
        r.accuracy = r.precision = r.recall = r.f1 = {0.0, true};
        return r;
    }
    r.cm = confusion(preds, threshold);
    r.accuracy = kt::accuracy(r.cm);
    r.precision = kt::precision(r.cm);
    r.recall = kt::recall(r.cm);
    r.f1 = kt::f1(r.cm);
    r.auc = kt::auc(preds);
    return r;
}

} // namespace kt
