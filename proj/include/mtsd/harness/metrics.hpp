#pragma once

#include "mtsd/error.hpp"

#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

namespace mtsd::harness {

struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0; // macro
    double recall = 0.0;    // macro
    double f1 = 0.0;        // macro
};

/// confusion[true][predicted]
inline std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const std::size_t> predictions,
                                                              std::span<const std::size_t> labels, std::size_t C) {
    if (predictions.size() != labels.size()) throw UsageError("metrics: predictions and labels differ in length");
    std::vector<std::vector<std::size_t>> m(C, std::vector<std::size_t>(C, 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= C || predictions[i] >= C) throw UsageError("metrics: class index out of range");
        ++m[labels[i]][predictions[i]];
    }
    return m;
}

/// Accuracy and unweighted class means of precision, recall and F1; any 0/0 counts as 0.
inline Metrics compute_metrics(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                               std::size_t C) {
    const auto m = confusion_matrix(predictions, labels, C);
    auto ratio = [](double a, double b) { return b == 0.0 ? 0.0 : a / b; };
    Metrics out;
    std::size_t correct = 0;
    for (std::size_t c = 0; c < C; ++c) {
        std::size_t tp = m[c][c], predicted = 0, actual = 0;
        for (std::size_t o = 0; o < C; ++o) {
            predicted += m[o][c];
            actual += m[c][o];
        }
        correct += tp;
        const double p = ratio(static_cast<double>(tp), static_cast<double>(predicted));
        const double r = ratio(static_cast<double>(tp), static_cast<double>(actual));
        out.precision += p;
        out.recall += r;
        out.f1 += ratio(2.0 * p * r, p + r);
    }
    const double n = static_cast<double>(C);
    out.precision /= n;
    out.recall /= n;
    out.f1 /= n;
    out.accuracy = ratio(static_cast<double>(correct), static_cast<double>(labels.size()));
    return out;
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0; // sample standard deviation, 0 for a single value
};

inline MeanStd mean_std(std::span<const double> values) {
    MeanStd out;
    if (values.empty()) return out;
    for (double v : values) out.mean += v;
    out.mean /= static_cast<double>(values.size());
    if (values.size() < 2) return out;
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    return out;
}

/// "93.37(1.05)": mean and std as percentages with two decimals.
inline std::string format_cell(const MeanStd& s) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f(%.2f)", 100.0 * s.mean, 100.0 * s.std);
    return buf;
}

} // namespace mtsd::harness
