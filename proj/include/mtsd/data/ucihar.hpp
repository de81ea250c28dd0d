#pragma once

#include "mtsd/data/canonical.hpp"
#include "mtsd/data/dataset.hpp"
#include "mtsd/error.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace mtsd::data {

inline constexpr std::array<const char*, 9> ucihar_signals = {
    "body_acc_x", "body_acc_y", "body_acc_z", "body_gyro_x", "body_gyro_y", "body_gyro_z",
    "total_acc_x", "total_acc_y", "total_acc_z"};

inline constexpr std::size_t ucihar_window = 128;
inline constexpr std::size_t ucihar_overlap = 64;

inline DatasetManifest ucihar_manifest() {
    DatasetManifest m;
    m.name = "UCIHAR";
    m.channels = ucihar_signals.size();
    m.classes = 6;
    m.class_names = {"WALKING", "WALKING_UPSTAIRS", "WALKING_DOWNSTAIRS", "SITTING", "STANDING", "LAYING"};
    m.window = 128;
    m.stride = 32;
    m.preprocess = Preprocess::standard;
    for (int p = 0; p < 4; ++p) {
        std::vector<SubjectId> part;
        for (int s = 1; s <= 7; ++s) part.push_back(p * 7 + s);
        m.parts.push_back(part);
    }
    m.train_only_subjects = {29, 30};
    return m;
}

namespace detail {

inline std::vector<std::vector<double>> read_matrix(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ImportError("cannot open " + file.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::vector<double> row;
        std::string tok;
        while (ss >> tok) row.push_back(parse_cell(tok, file, lineno, row.size() + 1));
        if (!row.empty()) rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace detail

/// Rebuild continuous per-subject recordings from the published 128-sample, 50%-overlap windows:
/// the first window of each subject contributes all samples, later windows their trailing 64.
inline std::pair<DatasetManifest, std::vector<Recording>> import_ucihar(const std::filesystem::path& raw_dir) {
    std::vector<std::string> missing;
    auto need = [&](const std::filesystem::path& p) {
        if (!std::filesystem::exists(p)) missing.push_back(p.string());
        return p;
    };
    struct SplitFiles {
        std::filesystem::path subjects, labels;
        std::vector<std::filesystem::path> signals;
    };
    std::vector<SplitFiles> splits;
    for (const std::string split : {"train", "test"}) {
        SplitFiles f;
        f.subjects = need(raw_dir / split / ("subject_" + split + ".txt"));
        f.labels = need(raw_dir / split / ("y_" + split + ".txt"));
        for (const auto* sig : ucihar_signals) {
            f.signals.push_back(need(raw_dir / split / "Inertial Signals" / (std::string(sig) + "_" + split + ".txt")));
        }
        splits.push_back(std::move(f));
    }
    if (!missing.empty()) {
        std::string msg = "UCIHAR import: missing files:";
        for (const auto& m : missing) msg += "\n  " + m;
        throw ImportError(msg);
    }

    const auto manifest = ucihar_manifest();
    std::map<SubjectId, Recording> by_subject;
    std::map<SubjectId, std::vector<std::vector<double>>> channels;
    for (const auto& f : splits) {
        const auto subjects = detail::read_matrix(f.subjects);
        const auto labels = detail::read_matrix(f.labels);
        std::vector<std::vector<std::vector<double>>> signals;
        for (const auto& s : f.signals) signals.push_back(detail::read_matrix(s));
        const std::size_t n = subjects.size();
        if (labels.size() != n) throw ImportError(f.labels.string() + ": row count differs from subject file");
        for (std::size_t c = 0; c < signals.size(); ++c) {
            if (signals[c].size() != n) throw ImportError(f.signals[c].string() + ": row count differs from subject file");
        }
        for (std::size_t i = 0; i < n; ++i) {
            const auto id = static_cast<SubjectId>(subjects[i].at(0));
            const double y = labels[i].at(0);
            if (y < 1 || y > 6) throw ImportError(f.labels.string() + ": label out of range on row " + std::to_string(i + 1));
            auto& rec = by_subject[id];
            auto& ch = channels[id];
            if (ch.empty()) {
                ch.resize(manifest.channels);
                rec.subject_id = id;
                rec.channels = manifest.channels;
            }
            const std::size_t from = rec.labels.empty() ? 0 : ucihar_window - ucihar_overlap;
            for (std::size_t c = 0; c < manifest.channels; ++c) {
                const auto& row = signals[c][i];
                if (row.size() != ucihar_window) {
                    throw ImportError(f.signals[c].string() + ": row " + std::to_string(i + 1) + " has " +
                                      std::to_string(row.size()) + " values, expected 128");
                }
                ch[c].insert(ch[c].end(), row.begin() + static_cast<std::ptrdiff_t>(from), row.end());
            }
            rec.labels.insert(rec.labels.end(), ucihar_window - from, static_cast<std::size_t>(y) - 1);
        }
    }
    std::vector<Recording> out;
    for (auto& [id, rec] : by_subject) {
        for (auto& c : channels[id]) rec.samples.insert(rec.samples.end(), c.begin(), c.end());
        out.push_back(std::move(rec));
    }
    return {manifest, std::move(out)};
}

inline DatasetManifest import_ucihar(const std::filesystem::path& raw_dir, const std::filesystem::path& out_dir) {
    auto [manifest, recordings] = import_ucihar(raw_dir);
    write_canonical(out_dir, manifest, recordings);
    return manifest;
}

} // namespace mtsd::data
