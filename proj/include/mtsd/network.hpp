#pragma once

#include "mtsd/basis.hpp"
#include "mtsd/decomposer.hpp"
#include "mtsd/diff/ops.hpp"
#include "mtsd/error.hpp"
#include "mtsd/heads.hpp"
#include "mtsd/model.hpp"

#include <cctype>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mtsd {

// ---------------------------------------------------------------------------
// Architecture descriptor
// ---------------------------------------------------------------------------

/// Mode letter plus ordered block kinds, e.g. "A-tsg" or "M-t3s3g3".
/// A trailing "-nostat" drops window statistics from every classifier.
struct StackSpec {
    Mode mode = Mode::additive;
    std::vector<BlockKind> blocks;
    bool use_stats = true;

    bool operator==(const StackSpec&) const = default;
};

inline StackSpec parse_stack_spec(std::string_view text) {
    if (text.empty()) throw ParseError("empty stack spec", 0);
    std::size_t pos = 0;
    constexpr std::string_view prefix = "MTSDNet-";
    if (text.starts_with(prefix)) pos = prefix.size();

    StackSpec spec;
    if (pos >= text.size()) throw ParseError("missing mode letter", pos);
    switch (text[pos]) {
    case 'A': spec.mode = Mode::additive; break;
    case 'M': spec.mode = Mode::multiplicative; break;
    default: throw ParseError(std::string("unknown mode '") + text[pos] + "', expected 'A' or 'M'", pos);
    }
    ++pos;
    if (pos >= text.size() || text[pos] != '-') throw ParseError("expected '-' after mode letter", pos);
    ++pos;

    constexpr std::string_view ablation = "-nostat";
    std::size_t end = text.size();
    if (text.size() >= pos + ablation.size() && text.ends_with(ablation)) {
        end -= ablation.size();
        spec.use_stats = false;
    }

    while (pos < end) {
        BlockKind kind;
        switch (text[pos]) {
        case 't': kind = BlockKind::trend; break;
        case 's': kind = BlockKind::seasonal; break;
        case 'g': kind = BlockKind::general; break;
        default: throw ParseError(std::string("unknown block letter '") + text[pos] + "'", pos);
        }
        ++pos;
        std::size_t repeat = 1;
        if (pos < end && std::isdigit(static_cast<unsigned char>(text[pos]))) {
            const std::size_t digits_at = pos;
            repeat = 0;
            while (pos < end && std::isdigit(static_cast<unsigned char>(text[pos]))) {
                repeat = repeat * 10 + static_cast<std::size_t>(text[pos] - '0');
                if (repeat > 1000) throw ParseError("repeat count too large", digits_at);
                ++pos;
            }
            if (repeat == 0) throw ParseError("repeat count must be positive", digits_at);
        }
        spec.blocks.insert(spec.blocks.end(), repeat, kind);
    }
    if (spec.blocks.empty()) throw ParseError("stack spec has no blocks", pos);
    return spec;
}

inline std::string to_string(const StackSpec& spec) {
    std::string out = spec.mode == Mode::additive ? "A-" : "M-";
    for (std::size_t i = 0; i < spec.blocks.size();) {
        std::size_t j = i;
        while (j < spec.blocks.size() && spec.blocks[j] == spec.blocks[i]) ++j;
        out += to_string(spec.blocks[i])[0];
        if (j - i > 1) out += std::to_string(j - i);
        i = j;
    }
    if (!spec.use_stats) out += "-nostat";
    return out;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct ModelConfig {
    StackSpec spec;
    std::size_t channels = 1; // K
    std::size_t window = 2;   // H
    std::size_t classes = 2;  // C
    std::size_t extractor_width = 32;
    std::size_t classifier_width = 12;
    std::size_t poly_degree = 3;
};

struct ForwardResult {
    diff::Array final_logits;       // [B, C]
    std::vector<LayerOutput> layers; // one per block, in spec order
    diff::Array residual;           // noise term left after the last layer
};

class Mtsdnet final : public Model {
public:
    struct Layer {
        LayerConfig config;
        BasisMatrix basis;
        ExtractorParams extractor;
        ClassifierParams classifier;
    };

    Mtsdnet(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
        if (config_.channels == 0 || config_.window == 0 || config_.classes == 0) {
            throw UsageError("Mtsdnet: channels, window and classes must be positive");
        }
        if (config_.spec.blocks.empty()) throw UsageError("Mtsdnet: stack spec has no blocks");
        std::mt19937_64 rng(seed);
        for (auto kind : config_.spec.blocks) {
            LayerConfig lc{kind, config_.extractor_width, config_.poly_degree, config_.spec.mode};
            BasisMatrix basis = basis_for(lc, config_.window);
            const std::size_t rows = basis.rows();
            auto extractor = ExtractorParams::create(config_.window, lc.hidden_width, lc.depth(), rows, rng);
            auto classifier = ClassifierParams::create(
                classifier_input_width(config_.channels, rows, config_.spec.use_stats), config_.classifier_width,
                config_.classes, rng);
            layers_.push_back(Layer{lc, std::move(basis), std::move(extractor), std::move(classifier)});
        }
        attention_ = AttentionParams::create(layers_.size());
    }

    const ModelConfig& config() const noexcept { return config_; }
    std::size_t layer_count() const noexcept { return layers_.size(); }
    Layer& layer(std::size_t i) { return layers_.at(i); }
    const Layer& layer(std::size_t i) const { return layers_.at(i); }
    AttentionParams& attention_params() noexcept { return attention_; }

    ForwardResult forward(const diff::Array& x, bool training) {
        check_input(x);
        ForwardResult out;
        diff::Array residual = x;
        std::vector<diff::Array> logits;
        for (auto& layer : layers_) {
            LayerOutput lo = decompose_layer(residual, layer.config, layer.extractor, layer.basis, training);
            lo.logits = classify_layer(lo.theta, lo.stats, layer.classifier, config_.spec.use_stats);
            residual = config_.spec.mode == Mode::additive ? residual - lo.component : residual / lo.component;
            logits.push_back(lo.logits);
            out.layers.push_back(std::move(lo));
        }
        out.final_logits = attention_aggregate(logits, attention_);
        out.residual = residual;
        return out;
    }

    diff::Array logits(const diff::Array& x, bool training) override { return forward(x, training).final_logits; }

    std::vector<NamedParam> parameters() override {
        std::vector<NamedParam> out;
        auto add = [&](const std::string& name, diff::Array& a) { out.push_back({name, a}); };
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto prefix = "layer" + std::to_string(l) + ".";
            layers_[l].extractor.visit(prefix + "extractor.", add);
            layers_[l].classifier.visit(prefix + "classifier.", add);
        }
        out.push_back({"attention.logits", attention_.logits});
        return out;
    }

    std::vector<NamedBuffer> buffers() override {
        std::vector<NamedBuffer> out;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            layers_[l].extractor.visit_buffers("layer" + std::to_string(l) + ".extractor.",
                                               [&](const std::string& name, std::vector<double>& v) {
                                                   out.push_back({name, &v});
                                               });
        }
        return out;
    }

    std::vector<double> attention() const override { return attention_weights(attention_); }

    nlohmann::json describe() const override {
        return {{"model", "mtsdnet"},
                {"spec", to_string(config_.spec)},
                {"channels", config_.channels},
                {"window", config_.window},
                {"classes", config_.classes},
                {"extractor_width", config_.extractor_width},
                {"classifier_width", config_.classifier_width},
                {"poly_degree", config_.poly_degree}};
    }

private:
    void check_input(const diff::Array& x) const {
        if (x.rank() != 3 || x.dim(1) != config_.channels || x.dim(2) != config_.window) {
            throw ShapeError("Mtsdnet: expected input [B," + std::to_string(config_.channels) + "," +
                             std::to_string(config_.window) + "], got " + diff::to_string(x.shape()));
        }
        if (config_.spec.mode != Mode::multiplicative) return;
        const std::size_t K = x.dim(1), H = x.dim(2);
        auto v = x.values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!(v[i] > 0.0)) {
                throw UsageError("multiplicative model needs strictly positive input; sample " + std::to_string(i / (K * H)) +
                                 " channel " + std::to_string((i / H) % K) + " has value " + std::to_string(v[i]));
            }
        }
    }

    ModelConfig config_;
    std::vector<Layer> layers_;
    AttentionParams attention_;
};

/// Cross-entropy on the aggregated logits only.
inline diff::Array loss(const diff::Array& final_logits, std::span<const std::size_t> labels,
                        std::optional<std::span<const double>> class_weights = std::nullopt) {
    return diff::softmax_cross_entropy(final_logits, labels, class_weights);
}

inline std::size_t count_parameters(Model& model) { return model.parameter_count(); }

} // namespace mtsd
