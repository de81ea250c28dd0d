#pragma once

#include "mtsd/decomposer.hpp"
#include "mtsd/diff/ops.hpp"

#include <random>
#include <string>
#include <vector>

namespace mtsd {

/// Three affine stages [in -> hidden -> hidden -> classes], ReLU after the first two.
struct ClassifierParams {
    diff::Array w1, b1, w2, b2, w3, b3;

    static ClassifierParams create(std::size_t in, std::size_t hidden, std::size_t classes, std::mt19937_64& rng) {
        return {uniform_fan_in({hidden, in}, in, rng),         diff::Array::zeros({hidden}, true),
                uniform_fan_in({hidden, hidden}, hidden, rng), diff::Array::zeros({hidden}, true),
                uniform_fan_in({classes, hidden}, hidden, rng), diff::Array::zeros({classes}, true)};
    }

    std::size_t input_width() const { return w1.dim(1); }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + "fc1.weight", w1);
        f(prefix + "fc1.bias", b1);
        f(prefix + "fc2.weight", w2);
        f(prefix + "fc2.bias", b2);
        f(prefix + "fc3.weight", w3);
        f(prefix + "fc3.bias", b3);
    }
};

inline diff::Array mlp_forward(const diff::Array& features, const ClassifierParams& p) {
    using namespace diff;
    Array h = relu(linear(features, p.w1, p.b1));
    h = relu(linear(h, p.w2, p.b2));
    return linear(h, p.w3, p.b3);
}

/// Feature width seen by a layer classifier: flattened theta plus 4 statistics per channel.
inline std::size_t classifier_input_width(std::size_t channels, std::size_t rows, bool use_stats) {
    return channels * rows + (use_stats ? 4 * channels : 0);
}

/// [B, 4K] with per-channel groups (min, mean, max, var).
inline diff::Array stats_features(const WindowStats& stats) {
    using namespace diff;
    const std::size_t B = stats.mean.dim(0), K = stats.mean.dim(1);
    auto col = [&](const Array& a) { return reshape(a, {B, K, 1}); };
    Array grouped = concat_last({col(stats.min), col(stats.mean), col(stats.max), col(stats.var)});
    return reshape(grouped, {B, 4 * K});
}

/// Per-layer logits from coefficient features and, unless ablated, window statistics.
inline diff::Array classify_layer(const diff::Array& theta, const WindowStats& stats, const ClassifierParams& params,
                                  bool use_stats) {
    using namespace diff;
    if (theta.rank() != 3) throw ShapeError("classify_layer: theta must be [B,K,R]");
    const std::size_t B = theta.dim(0), K = theta.dim(1), R = theta.dim(2);
    Array features = reshape(theta, {B, K * R});
    if (use_stats) {
        if (stats.mean.shape() != Shape{B, K}) throw ShapeError("classify_layer: statistics do not match theta");
        features = concat_last({features, stats_features(stats)});
    }
    if (features.dim(1) != params.input_width()) {
        throw ShapeError("classify_layer: feature width " + std::to_string(features.dim(1)) + " but classifier expects " +
                         std::to_string(params.input_width()));
    }
    return mlp_forward(features, params);
}

/// One learnable logit per layer; layer weights are softmax(logits), shared by all samples.
struct AttentionParams {
    diff::Array logits; // [L]

    static AttentionParams create(std::size_t layers) { return {diff::Array::zeros({layers}, true)}; }
};

inline std::vector<double> attention_weights(const AttentionParams& attn) {
    diff::Array w = diff::softmax(attn.logits.detach());
    return {w.values().begin(), w.values().end()};
}

inline diff::Array attention_aggregate(const std::vector<diff::Array>& per_layer_logits, const AttentionParams& attn) {
    using namespace diff;
    if (per_layer_logits.empty()) throw UsageError("attention_aggregate: no layers");
    if (per_layer_logits.size() != attn.logits.size()) {
        throw ShapeError("attention_aggregate: " + std::to_string(per_layer_logits.size()) + " layers but " +
                         std::to_string(attn.logits.size()) + " attention logits");
    }
    Array w = softmax(attn.logits);
    Array total = select(w, 0) * per_layer_logits[0];
    for (std::size_t l = 1; l < per_layer_logits.size(); ++l) total = total + select(w, l) * per_layer_logits[l];
    return total;
}

} // namespace mtsd
