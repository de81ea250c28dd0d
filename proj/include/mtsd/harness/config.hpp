#pragma once

#include "mtsd/error.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace mtsd::harness {

struct TrainConfig {
    double learning_rate = 3e-3;
    std::size_t batch_size = 512;
    std::size_t epochs = 20;
    std::size_t seeds = 10;
    std::uint64_t first_seed = 1; // seeds used: first_seed, first_seed + 1, ...
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::string spec = "A-tsg"; // stack spec, or "MLP" for the baseline
    std::size_t extractor_width = 32;
    std::size_t classifier_width = 12;
    std::size_t poly_degree = 3;
    std::size_t mlp_hidden = 128;
    std::vector<std::size_t> parts; // empty: every part in the manifest
    bool track_train_loss = false;  // eval-mode training loss at init and after each epoch

    void validate() const {
        if (!(learning_rate > 0.0)) throw UsageError("config: learning_rate must be positive");
        if (batch_size == 0 || epochs == 0 || seeds == 0) throw UsageError("config: batch_size, epochs and seeds must be positive");
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("config: Adam betas must be in [0, 1)");
        if (!(adam_eps > 0.0)) throw UsageError("config: adam_eps must be positive");
        if (extractor_width == 0 || classifier_width == 0 || mlp_hidden == 0) throw UsageError("config: widths must be positive");
    }
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"seeds", c.seeds},
            {"first_seed", c.first_seed},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_eps", c.adam_eps},
            {"spec", c.spec},
            {"extractor_width", c.extractor_width},
            {"classifier_width", c.classifier_width},
            {"poly_degree", c.poly_degree},
            {"mlp_hidden", c.mlp_hidden},
            {"parts", c.parts},
            {"track_train_loss", c.track_train_loss}};
}

/// Missing keys keep their defaults; unknown keys are rejected so typos do not pass silently.
inline TrainConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw UsageError("config: expected a JSON object");
    TrainConfig c;
    const auto known = to_json(c);
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw UsageError("config: unknown key '" + key + "'");
    }
    try {
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.epochs = j.value("epochs", c.epochs);
        c.seeds = j.value("seeds", c.seeds);
        c.first_seed = j.value("first_seed", c.first_seed);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.adam_eps = j.value("adam_eps", c.adam_eps);
        c.spec = j.value("spec", c.spec);
        c.extractor_width = j.value("extractor_width", c.extractor_width);
        c.classifier_width = j.value("classifier_width", c.classifier_width);
        c.poly_degree = j.value("poly_degree", c.poly_degree);
        c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
        c.parts = j.value("parts", c.parts);
        c.track_train_loss = j.value("track_train_loss", c.track_train_loss);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

} // namespace mtsd::harness
