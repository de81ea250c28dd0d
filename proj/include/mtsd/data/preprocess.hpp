#pragma once

#include "mtsd/data/dataset.hpp"
#include "mtsd/error.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <set>
#include <span>
#include <utility>
#include <vector>

namespace mtsd::data {

/// Floor applied to test-subject values after the [1, 2] map so multiplicative models stay defined.
inline constexpr double positive_floor = 1e-3;

struct ChannelTransform {
    std::vector<double> offset;
    std::vector<double> scale; // x' = (x - offset) / scale + shift
    double shift = 0.0;
    double floor = -std::numeric_limits<double>::infinity();
};

/// Fit per-channel statistics on the training subjects only.
inline ChannelTransform fit_transform(std::span<const Recording> recordings, const DatasetManifest& manifest,
                                      const std::set<SubjectId>& train_subjects, Preprocess kind) {
    if (train_subjects.empty()) throw UsageError("standardize: no training subjects");
    const std::size_t K = manifest.channels;
    ChannelTransform tf;
    tf.offset.assign(K, 0.0);
    tf.scale.assign(K, 1.0);
    for (std::size_t k = 0; k < K; ++k) {
        double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
        std::size_t n = 0;
        for (const auto& r : recordings) {
            if (!train_subjects.count(r.subject_id)) continue;
            for (std::size_t t = 0; t < r.length(); ++t) {
                const double v = r.at(k, t);
                sum += v;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            n += r.length();
        }
        if (n == 0) throw UsageError("standardize: training subjects have no samples");
        const double mean = sum / static_cast<double>(n);
        double spread;
        if (kind == Preprocess::standard) {
            double ss = 0.0;
            for (const auto& r : recordings) {
                if (!train_subjects.count(r.subject_id)) continue;
                for (std::size_t t = 0; t < r.length(); ++t) {
                    const double d = r.at(k, t) - mean;
                    ss += d * d;
                }
            }
            spread = std::sqrt(ss / static_cast<double>(n));
            tf.offset[k] = mean;
        } else {
            spread = hi - lo;
            tf.offset[k] = lo;
        }
        if (!(spread > 0.0)) {
            std::cerr << "warning: channel " << k << " is constant on the training subjects; centering only\n";
            tf.offset[k] = mean;
            spread = 1.0;
        }
        tf.scale[k] = spread;
    }
    if (kind == Preprocess::minmax_positive) {
        tf.shift = 1.0;
        tf.floor = positive_floor;
    }
    return tf;
}

inline Recording apply_transform(const Recording& r, const ChannelTransform& tf) {
    Recording out = r;
    std::size_t floored = 0;
    for (std::size_t k = 0; k < r.channels; ++k) {
        for (std::size_t t = 0; t < r.length(); ++t) {
            double v = (r.at(k, t) - tf.offset[k]) / tf.scale[k] + tf.shift;
            if (v < tf.floor) {
                v = tf.floor;
                ++floored;
            }
            out.at(k, t) = v;
        }
    }
    if (floored > 0) {
        std::cerr << "warning: subject " << r.subject_id << ": " << floored << " values fell below the positive floor\n";
    }
    return out;
}

/// Per-channel preprocessing with statistics taken from `train_subjects` only.
inline std::vector<Recording> standardize(std::span<const Recording> recordings, const DatasetManifest& manifest,
                                          const std::set<SubjectId>& train_subjects, Preprocess kind) {
    const auto tf = fit_transform(recordings, manifest, train_subjects, kind);
    std::vector<Recording> out;
    out.reserve(recordings.size());
    for (const auto& r : recordings) out.push_back(apply_transform(r, tf));
    return out;
}

inline std::vector<Recording> standardize(std::span<const Recording> recordings, const DatasetManifest& manifest,
                                          const std::set<SubjectId>& train_subjects) {
    return standardize(recordings, manifest, train_subjects, manifest.preprocess);
}

/// Sliding windows; label is taken at the last time step. Partial trailing windows are dropped.
inline WindowSet window(const Recording& r, std::size_t H, std::size_t stride) {
    if (H == 0 || stride == 0) throw UsageError("window: length and stride must be positive");
    WindowSet ws;
    ws.channels = r.channels;
    ws.window = H;
    const std::size_t T = r.length();
    if (T < H) return ws;
    const std::size_t count = (T - H) / stride + 1;
    ws.x.reserve(count * r.channels * H);
    for (std::size_t start = 0; start + H <= T; start += stride) {
        for (std::size_t k = 0; k < r.channels; ++k) {
            const auto* row = r.samples.data() + k * T + start;
            ws.x.insert(ws.x.end(), row, row + H);
        }
        ws.labels.push_back(r.labels[start + H - 1]);
        ws.subjects.push_back(r.subject_id);
        ws.starts.push_back(start);
    }
    return ws;
}

inline std::set<SubjectId> test_subjects(const DatasetManifest& m, std::size_t part_index) {
    if (part_index >= m.parts.size()) {
        throw UsageError("part index " + std::to_string(part_index) + " out of range; manifest has " +
                         std::to_string(m.parts.size()) + " parts");
    }
    return {m.parts[part_index].begin(), m.parts[part_index].end()};
}

/// Subjects of every other part plus the train-only subjects.
inline std::set<SubjectId> train_subjects(const DatasetManifest& m, std::size_t part_index) {
    const auto test = test_subjects(m, part_index);
    std::set<SubjectId> train(m.train_only_subjects.begin(), m.train_only_subjects.end());
    for (std::size_t p = 0; p < m.parts.size(); ++p) {
        if (p != part_index) train.insert(m.parts[p].begin(), m.parts[p].end());
    }
    for (auto s : test) train.erase(s);
    return train;
}

struct Split {
    WindowSet train;
    WindowSet test;
};

/// Windows of the selected part's subjects form the test set; other parts plus train-only subjects train.
/// Recordings should already be preprocessed with statistics from the training subjects.
inline Split split_parts(std::span<const Recording> recordings, const DatasetManifest& m, std::size_t part_index) {
    const auto test = test_subjects(m, part_index);
    const auto train = train_subjects(m, part_index);
    Split split;
    split.train.channels = split.test.channels = m.channels;
    split.train.window = split.test.window = m.window;
    std::vector<const Recording*> ordered;
    for (const auto& r : recordings) ordered.push_back(&r);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const Recording* a, const Recording* b) { return a->subject_id < b->subject_id; });
    for (const auto* r : ordered) {
        if (test.count(r->subject_id)) split.test.append(window(*r, m.window, m.stride));
        else if (train.count(r->subject_id)) split.train.append(window(*r, m.window, m.stride));
    }
    return split;
}

/// w_c = N / (C * n_c); absent classes get weight 0.
inline std::vector<double> class_weights(std::span<const std::size_t> labels, std::size_t C) {
    std::vector<std::size_t> counts(C, 0);
    for (auto y : labels) {
        if (y >= C) throw UsageError("class_weights: label " + std::to_string(y) + " >= " + std::to_string(C));
        ++counts[y];
    }
    std::vector<double> w(C, 0.0);
    const double N = static_cast<double>(labels.size());
    for (std::size_t c = 0; c < C; ++c) {
        if (counts[c] == 0) {
            std::cerr << "warning: class " << c << " absent from training labels; weight set to 0\n";
            continue;
        }
        w[c] = N / (static_cast<double>(C) * static_cast<double>(counts[c]));
    }
    return w;
}

} // namespace mtsd::data
