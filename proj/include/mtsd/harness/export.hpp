#pragma once

#include "mtsd/data/canonical.hpp"
#include "mtsd/data/dataset.hpp"
#include "mtsd/error.hpp"
#include "mtsd/network.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

namespace mtsd::harness {

/// Long-format CSV of one window's decomposition: layer, kind, channel, t, value.
/// Component rows come first in layer order, then the residual under layer index L.
inline std::string export_components(Mtsdnet& model, const diff::Array& window) {
    if (window.rank() != 3 || window.dim(0) != 1) throw ShapeError("export_components: expected a single window [1,K,H]");
    const auto result = model.forward(window, false);
    const std::size_t K = window.dim(1), H = window.dim(2);
    std::string out = "layer,kind,channel,t,value\n";
    auto emit = [&](std::size_t layer, std::string_view kind, const diff::Array& series) {
        auto v = series.values();
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t t = 0; t < H; ++t) {
                out += std::to_string(layer) + "," + std::string(kind) + "," + std::to_string(k) + "," + std::to_string(t) +
                       "," + data::detail::format_double(v[k * H + t]) + "\n";
            }
    };
    for (std::size_t l = 0; l < result.layers.size(); ++l) {
        emit(l, to_string(model.layer(l).config.kind), result.layers[l].component);
    }
    emit(result.layers.size(), "residual", result.residual);
    return out;
}

/// Window indices ordered by (subject, window start).
inline std::vector<std::size_t> feature_order(const data::WindowSet& windows) {
    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (windows.subjects[a] != windows.subjects[b]) return windows.subjects[a] < windows.subjects[b];
        return windows.starts[a] < windows.starts[b];
    });
    return order;
}

/// One CSV per layer: flattened theta (K*R columns) then label and subject.
/// Returns the per-layer CSV texts in layer order.
inline std::vector<std::string> export_features(Mtsdnet& model, const data::WindowSet& windows,
                                                std::size_t batch_size = 512) {
    const auto order = feature_order(windows);
    const std::size_t L = model.layer_count();
    std::vector<std::string> files(L);
    for (std::size_t l = 0; l < L; ++l) {
        const std::size_t R = model.layer(l).basis.rows();
        std::string header;
        for (std::size_t k = 0; k < windows.channels; ++k)
            for (std::size_t r = 0; r < R; ++r) header += "theta_" + std::to_string(k) + "_" + std::to_string(r) + ",";
        files[l] = header + "label,subject\n";
    }
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                            order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch_size)));
        const auto result = model.forward(windows.batch(rows), false);
        for (std::size_t l = 0; l < L; ++l) {
            const auto theta = result.layers[l].theta.values();
            const std::size_t width = theta.size() / rows.size();
            for (std::size_t i = 0; i < rows.size(); ++i) {
                std::string& out = files[l];
                for (std::size_t c = 0; c < width; ++c) {
                    out += data::detail::format_double(theta[i * width + c]);
                    out += ',';
                }
                out += std::to_string(windows.labels[rows[i]]) + "," + std::to_string(windows.subjects[rows[i]]) + "\n";
            }
        }
    }
    return files;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot write " + path.string());
    out << text;
}

} // namespace mtsd::harness
