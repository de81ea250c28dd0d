#pragma once

#include "mtsd/data/dataset.hpp"
#include "mtsd/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Canonical dataset directory:
//   manifest.json
//   subject_<id>.csv   header "t,ch_0,...,ch_{K-1},label", one row per time step
namespace mtsd::data {

namespace detail {

inline std::string location(const std::filesystem::path& file, std::size_t line) {
    return file.string() + ":" + std::to_string(line);
}

inline double parse_cell(std::string_view cell, const std::filesystem::path& file, std::size_t line, std::size_t column) {
    // from_chars rejects a leading '+', which some writers emit
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    double v = 0.0;
    auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || end != cell.data() + cell.size()) {
        throw LoadError(location(file, line) + ": column " + std::to_string(column) + " is not numeric: '" +
                        std::string(cell) + "'");
    }
    if (!std::isfinite(v)) {
        throw LoadError(location(file, line) + ": column " + std::to_string(column) + " is not finite");
    }
    return v;
}

inline void split_row(std::string_view row, std::vector<std::string_view>& out) {
    out.clear();
    std::size_t begin = 0;
    while (true) {
        const auto comma = row.find(',', begin);
        out.push_back(row.substr(begin, comma == std::string_view::npos ? std::string_view::npos : comma - begin));
        if (comma == std::string_view::npos) break;
        begin = comma + 1;
    }
}

inline std::string format_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw UsageError("cannot format value");
    return {buf, end};
}

} // namespace detail

inline DatasetManifest read_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in) throw LoadError("missing manifest: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(path.string() + ": " + e.what());
    }
    return manifest_from_json(j);
}

inline Recording read_subject_csv(const std::filesystem::path& file, SubjectId id, const DatasetManifest& m) {
    std::ifstream in(file);
    if (!in) throw LoadError("cannot open " + file.string());
    const std::size_t K = m.channels;
    const std::size_t width = K + 2;
    std::string line;
    std::vector<std::string_view> cells;
    if (!std::getline(in, line)) throw LoadError(detail::location(file, 1) + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    detail::split_row(line, cells);
    if (cells.size() != width) {
        throw LoadError(detail::location(file, 1) + ": header has " + std::to_string(cells.size()) + " columns, expected " +
                        std::to_string(width));
    }

    std::vector<std::vector<double>> channels(K);
    Recording r;
    r.subject_id = id;
    r.channels = K;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        detail::split_row(line, cells);
        if (cells.size() != width) {
            throw LoadError(detail::location(file, lineno) + ": row has " + std::to_string(cells.size()) +
                            " columns, expected " + std::to_string(width));
        }
        for (std::size_t k = 0; k < K; ++k) channels[k].push_back(detail::parse_cell(cells[k + 1], file, lineno, k + 1));
        const double label = detail::parse_cell(cells[K + 1], file, lineno, K + 1);
        if (label < 0 || label != std::floor(label) || label >= static_cast<double>(m.classes)) {
            throw LoadError(detail::location(file, lineno) + ": unknown label " + std::string(cells[K + 1]));
        }
        r.labels.push_back(static_cast<std::size_t>(label));
    }
    r.samples.reserve(K * r.labels.size());
    for (auto& c : channels) r.samples.insert(r.samples.end(), c.begin(), c.end());
    return r;
}

/// Parse and validate a canonical dataset directory; recordings are ordered by subject id.
inline std::pair<DatasetManifest, std::vector<Recording>> load_canonical(const std::filesystem::path& dir) {
    auto manifest = read_manifest(dir);
    static const std::regex pattern(R"(subject_(-?\d+)\.csv)");
    std::vector<std::pair<SubjectId, std::filesystem::path>> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        std::smatch match;
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && std::regex_match(name, match, pattern)) {
            files.emplace_back(std::stoi(match[1].str()), entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw LoadError("no subject_<id>.csv files in " + dir.string());
    std::vector<Recording> recordings;
    for (const auto& [id, path] : files) recordings.push_back(read_subject_csv(path, id, manifest));
    return {std::move(manifest), std::move(recordings)};
}

inline void write_canonical(const std::filesystem::path& dir, const DatasetManifest& manifest,
                            std::span<const Recording> recordings) {
    manifest.validate();
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "manifest.json");
        if (!out) throw UsageError("cannot write " + (dir / "manifest.json").string());
        out << to_json(manifest).dump(2) << '\n';
    }
    for (const auto& r : recordings) {
        if (r.channels != manifest.channels) throw UsageError("recording channel count differs from manifest");
        const auto path = dir / ("subject_" + std::to_string(r.subject_id) + ".csv");
        std::string text = "t";
        for (std::size_t k = 0; k < r.channels; ++k) text += ",ch_" + std::to_string(k);
        text += ",label\n";
        for (std::size_t t = 0; t < r.length(); ++t) {
            text += std::to_string(t);
            for (std::size_t k = 0; k < r.channels; ++k) {
                text += ',';
                text += detail::format_double(r.at(k, t));
            }
            text += ',';
            text += std::to_string(r.labels[t]);
            text += '\n';
        }
        std::ofstream out(path, std::ios::binary);
        if (!out) throw UsageError("cannot write " + path.string());
        out << text;
    }
}

} // namespace mtsd::data
