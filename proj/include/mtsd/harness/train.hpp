#pragma once

#include "mtsd/data/dataset.hpp"
#include "mtsd/data/preprocess.hpp"
#include "mtsd/error.hpp"
#include "mtsd/harness/adam.hpp"
#include "mtsd/harness/config.hpp"
#include "mtsd/harness/metrics.hpp"
#include "mtsd/harness/mlp.hpp"
#include "mtsd/model.hpp"
#include "mtsd/network.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <vector>

namespace mtsd::harness {

inline bool is_mlp_spec(const std::string& spec) { return spec == "MLP" || spec == "mlp"; }

/// Build an untrained model for the dataset geometry, seeded for initialization.
inline std::unique_ptr<Model> build_model(const TrainConfig& config, const data::DatasetManifest& m, std::uint64_t seed) {
    if (is_mlp_spec(config.spec)) {
        return std::make_unique<MlpBaseline>(MlpConfig{m.channels, m.window, m.classes, config.mlp_hidden}, seed);
    }
    ModelConfig mc;
    mc.spec = parse_stack_spec(config.spec);
    mc.channels = m.channels;
    mc.window = m.window;
    mc.classes = m.classes;
    mc.extractor_width = config.extractor_width;
    mc.classifier_width = config.classifier_width;
    mc.poly_degree = config.poly_degree;
    return std::make_unique<Mtsdnet>(mc, seed);
}

/// Multiplicative stacks need strictly positive input, so they get the [1, 2] map instead of the manifest's choice.
inline data::Preprocess preprocess_for(const TrainConfig& config, const data::DatasetManifest& m) {
    if (!is_mlp_spec(config.spec) && parse_stack_spec(config.spec).mode == Mode::multiplicative) {
        return data::Preprocess::minmax_positive;
    }
    return m.preprocess;
}

/// Preprocess with training-subject statistics and cut the part's windows.
inline data::Split prepare_split(std::span<const data::Recording> recordings, const data::DatasetManifest& m,
                                 std::size_t part, data::Preprocess preprocess) {
    const auto train = data::train_subjects(m, part);
    const auto processed = data::standardize(recordings, m, train, preprocess);
    return data::split_parts(processed, m, part);
}

inline std::size_t argmax_row(std::span<const double> row) {
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

/// Eval-mode predictions, batched; results do not depend on the batch size.
inline std::vector<std::size_t> predict(Model& model, const data::WindowSet& windows, std::size_t batch_size) {
    std::vector<std::size_t> out;
    out.reserve(windows.size());
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < windows.size(); start += batch_size) {
        rows.resize(std::min(batch_size, windows.size() - start));
        std::iota(rows.begin(), rows.end(), start);
        diff::Array logits = model.logits(windows.batch(rows), false);
        const std::size_t C = logits.dim(1);
        for (std::size_t i = 0; i < rows.size(); ++i) out.push_back(argmax_row(logits.values().subspan(i * C, C)));
    }
    return out;
}

/// Mean eval-mode loss over a window set.
inline double dataset_loss(Model& model, const data::WindowSet& windows, std::size_t batch_size,
                           std::optional<std::span<const double>> weights) {
    double total = 0.0;
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < windows.size(); start += batch_size) {
        rows.resize(std::min(batch_size, windows.size() - start));
        std::iota(rows.begin(), rows.end(), start);
        const auto labels = windows.batch_labels(rows);
        diff::Array l = loss(model.logits(windows.batch(rows), false), labels, weights);
        total += l.item() * static_cast<double>(rows.size());
    }
    return total / static_cast<double>(windows.size());
}

struct SeedResult {
    std::size_t part = 0;
    std::uint64_t seed = 0;
    Metrics metrics;
    std::vector<double> attention;
    std::vector<double> epoch_losses;  // mean mini-batch loss per epoch
    std::vector<double> tracked_losses; // eval-mode train loss at init and after each epoch, when tracked
    std::size_t train_windows = 0;
    std::size_t test_windows = 0;
    double wall_seconds = 0.0;
};

struct TrainOutcome {
    std::unique_ptr<Model> model;
    SeedResult result;
};

namespace detail {

inline std::string gradient_report(Model& model) {
    std::map<std::string, double> groups;
    for (const auto& p : model.parameters()) {
        const auto group = p.name.substr(0, p.name.find('.'));
        double ss = 0.0;
        if (p.array.has_grad())
            for (double g : p.array.grad()) ss += g * g;
        groups[group] += ss;
    }
    std::ostringstream out;
    for (const auto& [name, ss] : groups) out << " " << name << "=" << std::sqrt(ss);
    return out.str();
}

} // namespace detail

/// Train on the split's training windows and score its test windows.
inline TrainOutcome train_on_split(const data::Split& split, const data::DatasetManifest& m, std::size_t part,
                                   const TrainConfig& config, std::uint64_t seed) {
    config.validate();
    const auto start_time = std::chrono::steady_clock::now();
    if (split.train.size() == 0) throw UsageError("part " + std::to_string(part) + " has no training windows");
    if (split.test.size() == 0) throw UsageError("part " + std::to_string(part) + " has no test windows");
    const auto test_subjects = data::test_subjects(m, part);

    TrainOutcome outcome;
    outcome.model = build_model(config, m, seed);
    Model& model = *outcome.model;
    SeedResult& r = outcome.result;
    r.part = part;
    r.seed = seed;
    r.train_windows = split.train.size();
    r.test_windows = split.test.size();

    std::optional<std::vector<double>> weights;
    if (m.weighted_loss) weights = data::class_weights(split.train.labels, m.classes);
    auto weight_span = [&]() -> std::optional<std::span<const double>> {
        if (weights) return std::span<const double>(*weights);
        return std::nullopt;
    };
    if (config.track_train_loss) r.tracked_losses.push_back(dataset_loss(model, split.train, config.batch_size, weight_span()));

    Adam adam(model.parameters(), config.learning_rate, config.beta1, config.beta2, config.adam_eps);
    std::mt19937_64 order_rng(seed ^ 0x5DEECE66DULL);
    std::vector<std::size_t> order(split.train.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> rows;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), order_rng);
        double epoch_loss = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
            rows.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                        order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + config.batch_size)));
            for (auto row : rows) {
                if (test_subjects.count(split.train.subjects[row])) {
                    throw std::logic_error("training batch contains a window of test subject " +
                                           std::to_string(split.train.subjects[row]));
                }
            }
            const auto labels = split.train.batch_labels(rows);
            adam.zero_grad();
            double value = 0.0;
            try {
                diff::Tape tape;
                diff::Tape::Recording rec(tape);
                diff::Array l = loss(model.logits(split.train.batch(rows), true), labels, weight_span());
                value = l.item();
                tape.backward(l);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index) + "; gradient norms:" + detail::gradient_report(model) + ")");
            }
            if (!std::isfinite(value)) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index) + "; gradient norms:" + detail::gradient_report(model));
            }
            adam.step();
            epoch_loss += value * static_cast<double>(rows.size());
        }
        r.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
        if (config.track_train_loss) r.tracked_losses.push_back(dataset_loss(model, split.train, config.batch_size, weight_span()));
    }

    const auto predictions = predict(model, split.test, config.batch_size);
    r.metrics = compute_metrics(predictions, split.test.labels, m.classes);
    r.attention = model.attention();
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
    return outcome;
}

inline TrainOutcome train_one(std::span<const data::Recording> recordings, const data::DatasetManifest& m,
                              std::size_t part, const TrainConfig& config, std::uint64_t seed) {
    const auto split = prepare_split(recordings, m, part, preprocess_for(config, m));
    return train_on_split(split, m, part, config, seed);
}

} // namespace mtsd::harness
