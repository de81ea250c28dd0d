#pragma once

#include "mtsd/basis.hpp"
#include "mtsd/diff/ops.hpp"
#include "mtsd/error.hpp"

#include <cmath>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace mtsd {

enum class Mode { additive, multiplicative };
enum class BlockKind { trend, seasonal, general };

inline std::string_view to_string(BlockKind kind) {
    switch (kind) {
    case BlockKind::trend: return "trend";
    case BlockKind::seasonal: return "seasonal";
    default: return "general";
    }
}

inline std::string_view to_string(Mode mode) { return mode == Mode::additive ? "additive" : "multiplicative"; }

/// Variance floor inside the square root when normalizing a window.
inline constexpr double window_eps = 1e-5;
/// Range margin for additive clamping.
inline constexpr double additive_clamp_margin = 0.1;
inline constexpr double multiplicative_clamp_lo = 0.5;
inline constexpr double multiplicative_clamp_hi = 2.0;

/// Per (sample, channel) statistics of a window, each shaped [B, K], in input units.
struct WindowStats {
    diff::Array min;
    diff::Array mean;
    diff::Array max;
    diff::Array var;
};

struct LayerConfig {
    BlockKind kind = BlockKind::trend;
    std::size_t hidden_width = 32;
    std::size_t poly_degree = 3;
    Mode mode = Mode::additive;

    /// Number of conv + BN + ReLU stages before the coefficient projection.
    std::size_t depth() const { return kind == BlockKind::general ? 2 : 4; }
};

struct LayerOutput {
    diff::Array component; // [B, K, H]
    diff::Array theta;     // [B, K, R]
    WindowStats stats;
    diff::Array logits; // [B, C], filled by the classifier head
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

inline diff::Array uniform_fan_in(diff::Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(diff::numel(shape));
    for (auto& x : v) x = dist(rng);
    return diff::Array(std::move(shape), std::move(v), true);
}

struct ConvStage {
    diff::Array weight; // [out, in]
    diff::Array bias;   // [out]
    diff::Array gamma;  // [out]
    diff::Array beta;   // [out]
    diff::BatchNormStats running;

    static ConvStage create(std::size_t in, std::size_t out, std::mt19937_64& rng) {
        return {uniform_fan_in({out, in}, in, rng), diff::Array::zeros({out}, true), diff::Array::full({out}, 1.0, true),
                diff::Array::zeros({out}, true), diff::BatchNormStats::identity(out)};
    }
};

/// Shared-weight coefficient extractor: conv/BN/ReLU stages then conv + Tanh.
struct ExtractorParams {
    std::vector<ConvStage> stages;
    diff::Array out_weight; // [R, hidden]
    diff::Array out_bias;   // [R]

    static ExtractorParams create(std::size_t window, std::size_t hidden, std::size_t depth, std::size_t rows,
                                  std::mt19937_64& rng) {
        ExtractorParams p;
        std::size_t in = window;
        for (std::size_t s = 0; s < depth; ++s) {
            p.stages.push_back(ConvStage::create(in, hidden, rng));
            in = hidden;
        }
        p.out_weight = uniform_fan_in({rows, hidden}, hidden, rng);
        p.out_bias = diff::Array::zeros({rows}, true);
        return p;
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        for (std::size_t s = 0; s < stages.size(); ++s) {
            const auto base = prefix + "stage" + std::to_string(s) + ".";
            f(base + "weight", stages[s].weight);
            f(base + "bias", stages[s].bias);
            f(base + "gamma", stages[s].gamma);
            f(base + "beta", stages[s].beta);
        }
        f(prefix + "out.weight", out_weight);
        f(prefix + "out.bias", out_bias);
    }

    template <class F>
    void visit_buffers(const std::string& prefix, F&& f) {
        for (std::size_t s = 0; s < stages.size(); ++s) {
            const auto base = prefix + "stage" + std::to_string(s) + ".";
            f(base + "running_mean", stages[s].running.mean);
            f(base + "running_var", stages[s].running.var);
        }
    }
};

inline BasisMatrix basis_for(const LayerConfig& cfg, std::size_t window) {
    switch (cfg.kind) {
    case BlockKind::trend: return trend_basis(window, cfg.poly_degree);
    case BlockKind::seasonal: return seasonal_basis(window);
    default: return identity_basis(window);
    }
}

// ---------------------------------------------------------------------------
// Layer steps
// ---------------------------------------------------------------------------

/// Normalize every (sample, channel) window to zero mean and unit scale; the
/// statistics are taken before normalization.
inline std::pair<diff::Array, WindowStats> window_normalize(const diff::Array& x) {
    using namespace diff;
    if (x.rank() != 3) throw ShapeError("window_normalize: expected [B,K,H], got " + to_string(x.shape()));
    const std::size_t H = x.dim(2);
    WindowStats stats{reduce(ReduceKind::min, x, {2}), reduce(ReduceKind::mean, x, {2}), reduce(ReduceKind::max, x, {2}),
                      reduce(ReduceKind::var, x, {2})};
    Array scale = diff::sqrt(shift(stats.var, window_eps));
    Array normalized = (x - tile_last(stats.mean, H)) / tile_last(scale, H);
    return {normalized, stats};
}

inline diff::Array denormalize(const diff::Array& x_norm, const WindowStats& stats) {
    using namespace diff;
    const std::size_t H = x_norm.dim(2);
    Array scale = diff::sqrt(shift(stats.var, window_eps));
    return x_norm * tile_last(scale, H) + tile_last(stats.mean, H);
}

/// [B,K,H] -> [B,K,R]. Time is the feature axis and channels are the positions the
/// weights are shared over.
inline diff::Array extract_theta(const diff::Array& x_norm, ExtractorParams& params, bool training) {
    using namespace diff;
    Array h = transpose_last(x_norm); // [B, H, K]
    for (auto& stage : params.stages) {
        h = conv1x1(h, stage.weight, stage.bias);
        h = batchnorm(h, stage.gamma, stage.beta, stage.running, training);
        h = relu(h);
    }
    h = diff::tanh(conv1x1(h, params.out_weight, params.out_bias)); // [B, R, K]
    return transpose_last(h);
}

inline diff::Array project_and_denormalize(const diff::Array& theta, const BasisMatrix& basis, const WindowStats& stats) {
    if (theta.rank() != 3 || theta.dim(2) != basis.rows()) {
        throw ShapeError("project_and_denormalize: theta " + diff::to_string(theta.shape()) + " does not match " +
                         std::to_string(basis.rows()) + " basis rows");
    }
    return denormalize(diff::matmul(theta, basis.as_array()), stats);
}

/// relu(d) + 1 / (relu(-d) + 1): maps 0 to 1, stays positive, nondecreasing.
inline diff::Array to_multiplicative(const diff::Array& d_plus) {
    using namespace diff;
    return relu(d_plus) + recip_plus_one(relu(neg(d_plus)));
}

inline diff::Array clamp_component(const diff::Array& comp, const WindowStats& stats, Mode mode) {
    using namespace diff;
    if (mode == Mode::multiplicative) return clamp(comp, multiplicative_clamp_lo, multiplicative_clamp_hi);
    const std::size_t H = comp.dim(2);
    Array lo = stats.min - scale(diff::abs(stats.min), additive_clamp_margin);
    Array hi = stats.max + scale(diff::abs(stats.max), additive_clamp_margin);
    return clamp(comp, tile_last(lo, H), tile_last(hi, H));
}

/// One decomposition layer without its classifier.
inline LayerOutput decompose_layer(const diff::Array& residual_in, const LayerConfig& cfg, ExtractorParams& params,
                                   const BasisMatrix& basis, bool training) {
    if (cfg.mode == Mode::multiplicative) {
        auto v = residual_in.values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!(v[i] > 0.0)) {
                throw NumericError("decompose_layer: multiplicative mode needs a positive residual, found " +
                                   std::to_string(v[i]) + " at flat index " + std::to_string(i));
            }
        }
    }
    auto [x_norm, stats] = window_normalize(residual_in);
    diff::Array theta = extract_theta(x_norm, params, training);
    diff::Array comp = project_and_denormalize(theta, basis, stats);
    if (cfg.mode == Mode::multiplicative) comp = to_multiplicative(comp);
    comp = clamp_component(comp, stats, cfg.mode);
    return LayerOutput{comp, theta, stats, {}};
}

} // namespace mtsd
