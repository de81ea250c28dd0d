#pragma once

#include "mtsd/decomposer.hpp"
#include "mtsd/diff/gradcheck.hpp"
#include "mtsd/diff/ops.hpp"
#include "mtsd/network.hpp"

#include "json.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace mtsd::harness {

inline constexpr double primitive_tolerance = 1e-4;
inline constexpr double end_to_end_tolerance = 1e-3;
// A small step keeps ReLU kinks inside the extractors from landing between the two probes; the
// floor keeps gradients that are zero up to roundoff from counting as relative failures.
inline constexpr double end_to_end_step = 1e-6;
inline constexpr double end_to_end_floor = 1e-6;

struct CheckOutcome {
    std::string name;
    diff::GradientCheck check;
    double tolerance = 0.0;
    bool passed() const { return check.max_relative_error < tolerance; }
};

struct GradcheckReport {
    std::vector<CheckOutcome> checks;
    bool passed() const {
        for (const auto& c : checks)
            if (!c.passed()) return false;
        return !checks.empty();
    }
};

inline nlohmann::json to_json(const GradcheckReport& report) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : report.checks) {
        checks.push_back({{"name", c.name},
                          {"max_relative_error", c.check.max_relative_error},
                          {"tolerance", c.tolerance},
                          {"elements", c.check.checked},
                          {"passed", c.passed()}});
    }
    return {{"passed", report.passed()}, {"checks", checks}};
}

namespace detail {

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    /// Values in +-[lo, hi], so nothing lands on a kink at zero.
    diff::Array away_from_zero(diff::Shape shape, double lo = 0.2, double hi = 1.5, bool grad = true) {
        std::uniform_real_distribution<double> mag(lo, hi);
        std::bernoulli_distribution sign(0.5);
        std::vector<double> v(diff::numel(shape));
        for (auto& x : v) x = sign(rng_) ? mag(rng_) : -mag(rng_);
        return diff::Array(std::move(shape), std::move(v), grad);
    }

    diff::Array uniform(diff::Shape shape, double lo, double hi, bool grad = true) {
        std::uniform_real_distribution<double> d(lo, hi);
        std::vector<double> v(diff::numel(shape));
        for (auto& x : v) x = d(rng_);
        return diff::Array(std::move(shape), std::move(v), grad);
    }

    /// Distinct values on a shuffled grid so min/max are unique and well separated.
    diff::Array distinct(diff::Shape shape) {
        std::vector<double> v(diff::numel(shape));
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = -1.0 + 0.1 * static_cast<double>(i);
        std::shuffle(v.begin(), v.end(), rng_);
        return diff::Array(std::move(shape), std::move(v), true);
    }

    std::mt19937_64& rng() { return rng_; }

private:
    std::mt19937_64 rng_;
};

/// sum(f(inputs) * R) with a fixed random R, so every output element's gradient path is exercised.
inline std::function<diff::Array()> projected(std::function<diff::Array()> f, Gen& gen) {
    const diff::Array probe = f();
    diff::Array weights = gen.uniform(probe.shape(), -1.0, 1.0, false);
    return [f = std::move(f), weights] { return diff::sum(f() * weights); };
}

} // namespace detail

/// Finite-difference checks for every primitive and one tiny end-to-end network.
inline GradcheckReport gradcheck_all(std::uint64_t seed) {
    using namespace diff;
    detail::Gen gen(seed);
    GradcheckReport report;
    auto run = [&](const std::string& name, std::function<Array()> f, std::vector<Array> inputs,
                   double tolerance = primitive_tolerance) {
        report.checks.push_back({name, check_gradients(detail::projected(std::move(f), gen), std::move(inputs)), tolerance});
    };

    {
        Array a = gen.away_from_zero({3, 4}), b = gen.away_from_zero({3, 4}), s = gen.away_from_zero({1});
        run("add", [=] { return a + b; }, {a, b});
        run("add_scalar", [=] { return a + s; }, {a, s});
        run("sub", [=] { return a - b; }, {a, b});
        run("sub_scalar", [=] { return s - a; }, {a, s});
        run("mul", [=] { return a * b; }, {a, b});
        run("mul_scalar", [=] { return s * a; }, {a, s});
        run("div", [=] { return a / b; }, {a, b});
        run("div_scalar", [=] { return a / s; }, {a, s});
        run("relu", [=] { return relu(a); }, {a});
        run("tanh", [=] { return diff::tanh(a); }, {a});
        run("neg", [=] { return neg(a); }, {a});
        run("abs", [=] { return diff::abs(a); }, {a});
        run("scale", [=] { return scale(a, -2.5); }, {a});
        run("shift", [=] { return shift(a, 0.75); }, {a});
    }
    {
        Array p = gen.uniform({3, 4}, 0.2, 2.0);
        run("recip_plus_one", [=] { return recip_plus_one(p); }, {p});
        run("sqrt", [=] { return diff::sqrt(p); }, {p});
    }
    {
        Array x = gen.away_from_zero({2, 3, 4});
        run("reshape", [=] { return reshape(x, {6, 4}); }, {x});
        run("permute", [=] { return permute(x, {2, 0, 1}); }, {x});
        run("transpose_last", [=] { return transpose_last(x); }, {x});
        run("tile_last", [=] { return tile_last(x, 3); }, {x});
        Array y = gen.away_from_zero({2, 3, 2});
        run("concat_last", [=] { return concat_last({x, y}); }, {x, y});
        run("select", [=] { return select(reshape(x, {24}), 5); }, {x});
    }
    {
        Array x = gen.distinct({2, 3, 4});
        run("reduce_sum", [=] { return reduce(ReduceKind::sum, x, {1}); }, {x});
        run("reduce_mean", [=] { return reduce(ReduceKind::mean, x, {0, 2}); }, {x});
        run("reduce_min", [=] { return reduce(ReduceKind::min, x, {2}); }, {x});
        run("reduce_max", [=] { return reduce(ReduceKind::max, x, {1}); }, {x});
        run("reduce_var", [=] { return reduce(ReduceKind::var, x, {2}); }, {x});
        run("sum", [=] { return sum(x); }, {x});
        run("mean", [=] { return mean(x); }, {x});
    }
    {
        Array a = gen.away_from_zero({2, 3, 4}), b = gen.away_from_zero({4, 5});
        run("matmul", [=] { return matmul(a, b); }, {a, b});
        Array x = gen.away_from_zero({3, 5}), w = gen.away_from_zero({4, 5}), bias = gen.away_from_zero({4});
        run("linear", [=] { return linear(x, w, bias); }, {x, w, bias});
        Array cx = gen.away_from_zero({2, 5, 3}), cw = gen.away_from_zero({4, 5}), cb = gen.away_from_zero({4});
        run("conv1x1", [=] { return conv1x1(cx, cw, cb); }, {cx, cw, cb});
    }
    {
        Array x = gen.away_from_zero({3, 4, 5}), gamma = gen.uniform({4}, 0.5, 1.5), beta = gen.away_from_zero({4});
        run("batchnorm_train", [=] {
            auto running = BatchNormStats::identity(4);
            return batchnorm(x, gamma, beta, running, true);
        }, {x, gamma, beta});
        BatchNormStats fixed{{0.1, -0.2, 0.3, 0.0}, {0.5, 1.5, 2.0, 0.8}};
        run("batchnorm_eval", [=] {
            auto running = fixed;
            return batchnorm(x, gamma, beta, running, false);
        }, {x, gamma, beta});
    }
    {
        // keep every element at least 0.1 away from both bounds
        Array x({6}, {-2.0, -0.6, -0.3, 0.2, 0.7, 1.9}, true);
        Array lo({6}, {-1.0, -1.0, -0.5, -0.5, 0.0, 0.0}, true);
        Array hi({6}, {1.0, 0.5, 0.5, 1.0, 0.5, 1.5}, true);
        run("clamp_bounds", [=] { return clamp(x, lo, hi); }, {x, lo, hi});
        run("clamp_constant", [=] { return clamp(x, -0.5, 0.5); }, {x});
    }
    {
        Array z = gen.away_from_zero({3, 4});
        run("softmax", [=] { return softmax(z); }, {z});
        const std::vector<std::size_t> labels{0, 3, 1};
        const std::vector<double> weights{0.5, 2.0, 1.0, 1.5};
        report.checks.push_back({"cross_entropy",
                                 check_gradients([=] { return softmax_cross_entropy(z, labels); }, {z}),
                                 primitive_tolerance});
        report.checks.push_back({"cross_entropy_weighted",
                                 check_gradients([=] { return softmax_cross_entropy(z, labels, std::span<const double>(weights)); }, {z}),
                                 primitive_tolerance});
    }
    {
        Array d = gen.away_from_zero({3, 4});
        run("to_multiplicative", [=] { return to_multiplicative(d); }, {d});
    }

    // Tiny end-to-end network: B=2, K=3, H=8, C=2, "A-tsg", p=1, widths 8/16.
    {
        ModelConfig mc;
        mc.spec = parse_stack_spec("A-tsg");
        mc.channels = 3;
        mc.window = 8;
        mc.classes = 2;
        mc.extractor_width = 8;
        mc.classifier_width = 16;
        mc.poly_degree = 1;
        auto net = std::make_shared<Mtsdnet>(mc, seed);
        Array x = gen.uniform({2, 3, 8}, -1.5, 1.5);
        std::vector<Array> inputs{x};
        for (auto& p : net->parameters()) inputs.push_back(p.array);
        const std::vector<std::size_t> labels{0, 1};
        report.checks.push_back({"mtsdnet_A-tsg_end_to_end",
                                 check_gradients([net, x, labels] { return loss(net->logits(x, true), labels); }, inputs,
                                                 end_to_end_step, end_to_end_floor),
                                 end_to_end_tolerance});
    }
    return report;
}

} // namespace mtsd::harness
