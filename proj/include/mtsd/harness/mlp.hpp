#pragma once

#include "mtsd/heads.hpp"
#include "mtsd/model.hpp"

#include <random>

namespace mtsd::harness {

struct MlpConfig {
    std::size_t channels = 1;
    std::size_t window = 1;
    std::size_t classes = 2;
    std::size_t hidden = 128;
};

/// Plain three-layer perceptron on the flattened window [K*H -> h -> h -> C].
class MlpBaseline final : public Model {
public:
    MlpBaseline(MlpConfig config, std::uint64_t seed) : config_(config) {
        std::mt19937_64 rng(seed);
        params_ = ClassifierParams::create(config_.channels * config_.window, config_.hidden, config_.classes, rng);
    }

    const MlpConfig& config() const noexcept { return config_; }

    diff::Array logits(const diff::Array& x, bool /*training*/) override {
        if (x.rank() != 3 || x.dim(1) != config_.channels || x.dim(2) != config_.window) {
            throw ShapeError("MlpBaseline: input " + diff::to_string(x.shape()) + " does not match geometry");
        }
        return mlp_forward(diff::reshape(x, {x.dim(0), config_.channels * config_.window}), params_);
    }

    std::vector<NamedParam> parameters() override {
        std::vector<NamedParam> out;
        params_.visit("mlp.", [&](const std::string& name, diff::Array& a) { out.push_back({name, a}); });
        return out;
    }

    nlohmann::json describe() const override {
        return {{"model", "mlp"},
                {"channels", config_.channels},
                {"window", config_.window},
                {"classes", config_.classes},
                {"hidden", config_.hidden}};
    }

    /// (K*H)*h + h + h*h + h + h*C + C
    static std::size_t expected_parameter_count(const MlpConfig& c) {
        const std::size_t in = c.channels * c.window, h = c.hidden;
        return in * h + h + h * h + h + h * c.classes + c.classes;
    }

private:
    MlpConfig config_;
    ClassifierParams params_;
};

} // namespace mtsd::harness
