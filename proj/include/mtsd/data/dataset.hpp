#pragma once

#include "mtsd/diff/array.hpp"
#include "mtsd/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace mtsd::data {

using SubjectId = int;

enum class Preprocess {
    standard,        // per-channel z-score
    minmax,          // per-channel [0, 1] on the training range
    minmax_positive, // per-channel [1, 2] on the training range; for multiplicative models
};

inline std::string to_string(Preprocess p) {
    switch (p) {
    case Preprocess::standard: return "standard";
    case Preprocess::minmax: return "minmax";
    default: return "minmax_positive";
    }
}

inline Preprocess parse_preprocess(const std::string& s) {
    std::string lower = s;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "standard") return Preprocess::standard;
    if (lower == "minmax") return Preprocess::minmax;
    if (lower == "minmax_positive") return Preprocess::minmax_positive;
    throw LoadError("unknown preprocess '" + s + "'");
}

/// One subject's continuous multichannel recording.
struct Recording {
    SubjectId subject_id = 0;
    std::size_t channels = 0;
    std::vector<double> samples; // channel-major: samples[k * T + t]
    std::vector<std::size_t> labels;

    std::size_t length() const noexcept { return labels.size(); }
    double at(std::size_t k, std::size_t t) const { return samples[k * length() + t]; }
    double& at(std::size_t k, std::size_t t) { return samples[k * length() + t]; }
};

struct DatasetManifest {
    std::string name;
    std::size_t channels = 0; // K
    std::size_t classes = 0;  // C
    std::vector<std::string> class_names;
    std::size_t window = 0; // H
    std::size_t stride = 0;
    Preprocess preprocess = Preprocess::standard;
    std::vector<std::vector<SubjectId>> parts;
    std::vector<SubjectId> train_only_subjects;
    bool weighted_loss = false;

    void validate() const {
        if (channels == 0 || classes == 0) throw LoadError("manifest: channels and classes must be positive");
        if (window == 0 || stride == 0) throw LoadError("manifest: window length and stride must be positive");
        if (!class_names.empty() && class_names.size() != classes) {
            throw LoadError("manifest: class_names has " + std::to_string(class_names.size()) + " entries, expected " +
                            std::to_string(classes));
        }
        if (parts.empty()) throw LoadError("manifest: no parts");
        std::set<SubjectId> seen;
        for (const auto& part : parts) {
            if (part.empty()) throw LoadError("manifest: empty part");
            for (auto s : part) {
                if (!seen.insert(s).second) throw LoadError("manifest: subject " + std::to_string(s) + " is in two parts");
            }
        }
        for (auto s : train_only_subjects) {
            if (seen.count(s)) throw LoadError("manifest: train-only subject " + std::to_string(s) + " also appears in a part");
        }
    }
};

inline nlohmann::json to_json(const DatasetManifest& m) {
    return {{"name", m.name},
            {"channels", m.channels},
            {"classes", m.classes},
            {"class_names", m.class_names},
            {"window", m.window},
            {"stride", m.stride},
            {"preprocess", to_string(m.preprocess)},
            {"parts", m.parts},
            {"train_only_subjects", m.train_only_subjects},
            {"weighted_loss", m.weighted_loss}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
    DatasetManifest m;
    try {
        m.name = j.value("name", std::string{});
        m.channels = j.at("channels").get<std::size_t>();
        m.classes = j.at("classes").get<std::size_t>();
        m.class_names = j.value("class_names", std::vector<std::string>{});
        m.window = j.at("window").get<std::size_t>();
        m.stride = j.at("stride").get<std::size_t>();
        m.preprocess = parse_preprocess(j.value("preprocess", std::string{"standard"}));
        m.parts = j.at("parts").get<std::vector<std::vector<SubjectId>>>();
        m.train_only_subjects = j.value("train_only_subjects", std::vector<SubjectId>{});
        m.weighted_loss = j.value("weighted_loss", false);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("manifest: ") + e.what());
    }
    m.validate();
    return m;
}

/// Flat set of windows [N, K, H] with labels and provenance.
struct WindowSet {
    std::size_t channels = 0;
    std::size_t window = 0;
    std::vector<double> x; // N * K * H
    std::vector<std::size_t> labels;
    std::vector<SubjectId> subjects;
    std::vector<std::size_t> starts;

    std::size_t size() const noexcept { return labels.size(); }

    void append(const WindowSet& other) {
        x.insert(x.end(), other.x.begin(), other.x.end());
        labels.insert(labels.end(), other.labels.begin(), other.labels.end());
        subjects.insert(subjects.end(), other.subjects.begin(), other.subjects.end());
        starts.insert(starts.end(), other.starts.begin(), other.starts.end());
    }

    /// Gather rows into a [B, K, H] array.
    diff::Array batch(std::span<const std::size_t> rows) const {
        const std::size_t n = channels * window;
        std::vector<double> v(rows.size() * n);
        for (std::size_t i = 0; i < rows.size(); ++i)
            std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(rows[i] * n), n, v.begin() + static_cast<std::ptrdiff_t>(i * n));
        return diff::Array({rows.size(), channels, window}, std::move(v));
    }

    std::vector<std::size_t> batch_labels(std::span<const std::size_t> rows) const {
        std::vector<std::size_t> out;
        out.reserve(rows.size());
        for (auto r : rows) out.push_back(labels[r]);
        return out;
    }
};

} // namespace mtsd::data
