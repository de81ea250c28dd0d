#pragma once

#include "mtsd/data/dataset.hpp"
#include "mtsd/harness/config.hpp"
#include "mtsd/harness/metrics.hpp"
#include "mtsd/harness/train.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace mtsd::harness {

struct MetricSummary {
    MeanStd accuracy, precision, recall, f1;
};

inline MetricSummary summarize(std::span<const SeedResult> runs) {
    std::vector<double> a, p, r, f;
    for (const auto& run : runs) {
        a.push_back(run.metrics.accuracy);
        p.push_back(run.metrics.precision);
        r.push_back(run.metrics.recall);
        f.push_back(run.metrics.f1);
    }
    return {mean_std(a), mean_std(p), mean_std(r), mean_std(f)};
}

struct RunResult {
    std::string spec;
    std::string dataset;
    TrainConfig config;
    std::size_t parameter_count = 0;
    std::vector<std::size_t> parts;
    std::vector<SeedResult> runs; // ordered by (part, seed)
    std::vector<MetricSummary> part_summaries;
    MetricSummary overall;

    std::vector<SeedResult> runs_for_part(std::size_t part) const {
        std::vector<SeedResult> out;
        for (const auto& r : runs)
            if (r.part == part) out.push_back(r);
        return out;
    }
};

inline nlohmann::json to_json(const MeanStd& s) { return {{"mean", s.mean}, {"std", s.std}}; }

inline nlohmann::json to_json(const MetricSummary& s) {
    return {{"accuracy", to_json(s.accuracy)},
            {"precision", to_json(s.precision)},
            {"recall", to_json(s.recall)},
            {"f1", to_json(s.f1)}};
}

/// Everything except wall time, so repeated runs serialize to identical bytes.
inline nlohmann::json to_json(const RunResult& r) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& s : r.runs) {
        runs.push_back({{"part", s.part},
                        {"seed", s.seed},
                        {"accuracy", s.metrics.accuracy},
                        {"precision", s.metrics.precision},
                        {"recall", s.metrics.recall},
                        {"f1", s.metrics.f1},
                        {"attention", s.attention},
                        {"epoch_losses", s.epoch_losses},
                        {"train_windows", s.train_windows},
                        {"test_windows", s.test_windows}});
    }
    nlohmann::json parts = nlohmann::json::array();
    for (std::size_t i = 0; i < r.parts.size(); ++i) {
        auto j = to_json(r.part_summaries[i]);
        j["part"] = r.parts[i];
        parts.push_back(j);
    }
    return {{"spec", r.spec},
            {"dataset", r.dataset},
            {"config", to_json(r.config)},
            {"parameter_count", r.parameter_count},
            {"runs", runs},
            {"parts", parts},
            {"overall", to_json(r.overall)}};
}

/// mean(std) table: one row per part plus an overall row.
inline std::string results_csv(const RunResult& r) {
    std::string out = "part,accuracy,precision,recall,f1\n";
    auto row = [&](const std::string& name, const MetricSummary& s) {
        out += name + "," + format_cell(s.accuracy) + "," + format_cell(s.precision) + "," + format_cell(s.recall) + "," +
               format_cell(s.f1) + "\n";
    };
    for (std::size_t i = 0; i < r.parts.size(); ++i) row("Part" + std::to_string(r.parts[i] + 1), r.part_summaries[i]);
    row("overall", r.overall);
    return out;
}

inline void write_results(const RunResult& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "results.json", std::ios::binary);
        if (!out) throw UsageError("cannot write " + (dir / "results.json").string());
        out << to_json(r).dump(2) << '\n';
    }
    {
        std::ofstream out(dir / "results.csv", std::ios::binary);
        out << results_csv(r);
    }
    nlohmann::json timing = nlohmann::json::array();
    for (const auto& s : r.runs) timing.push_back({{"part", s.part}, {"seed", s.seed}, {"wall_seconds", s.wall_seconds}});
    std::ofstream out(dir / "timing.json", std::ios::binary);
    out << timing.dump(2) << '\n';
}

using ProgressFn = std::function<void(const SeedResult&)>;

/// Every selected part times every seed; the split of a part is fixed across seeds.
inline RunResult run_protocol(std::span<const data::Recording> recordings, const data::DatasetManifest& m,
                              const TrainConfig& config, const ProgressFn& progress = {}) {
    config.validate();
    RunResult result;
    result.spec = config.spec;
    result.dataset = m.name;
    result.config = config;
    result.parameter_count = build_model(config, m, config.first_seed)->parameter_count();
    if (config.parts.empty()) {
        for (std::size_t p = 0; p < m.parts.size(); ++p) result.parts.push_back(p);
    } else {
        result.parts = config.parts;
    }
    for (auto part : result.parts) {
        const auto split = prepare_split(recordings, m, part, preprocess_for(config, m));
        for (std::size_t s = 0; s < config.seeds; ++s) {
            auto outcome = train_on_split(split, m, part, config, config.first_seed + s);
            if (progress) progress(outcome.result);
            result.runs.push_back(std::move(outcome.result));
        }
        const auto part_runs = result.runs_for_part(part);
        result.part_summaries.push_back(summarize(part_runs));
    }
    result.overall = summarize(result.runs);
    return result;
}

} // namespace mtsd::harness
