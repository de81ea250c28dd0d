#pragma once

#include "mtsd/error.hpp"
#include "mtsd/harness/mlp.hpp"
#include "mtsd/model.hpp"
#include "mtsd/network.hpp"

#include "json.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <string>

// Checkpoint layout:
//   8 bytes   magic "MTSDCKP1"
//   8 bytes   header length N (little-endian uint64)
//   N bytes   UTF-8 JSON header {"model": {...}, "arrays": [{"name", "shape"}, ...], "meta": {...}}
//   then the raw little-endian float64 payload of each listed array, in order.
namespace mtsd {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

inline constexpr char checkpoint_magic[8] = {'M', 'T', 'S', 'D', 'C', 'K', 'P', '1'};

/// Rebuild an untrained model from its self-description.
inline std::unique_ptr<Model> make_model(const nlohmann::json& d) {
    const auto kind = d.at("model").get<std::string>();
    if (kind == "mtsdnet") {
        ModelConfig c;
        c.spec = parse_stack_spec(d.at("spec").get<std::string>());
        c.channels = d.at("channels").get<std::size_t>();
        c.window = d.at("window").get<std::size_t>();
        c.classes = d.at("classes").get<std::size_t>();
        c.extractor_width = d.at("extractor_width").get<std::size_t>();
        c.classifier_width = d.at("classifier_width").get<std::size_t>();
        c.poly_degree = d.at("poly_degree").get<std::size_t>();
        return std::make_unique<Mtsdnet>(c, 0);
    }
    if (kind == "mlp") {
        harness::MlpConfig c;
        c.channels = d.at("channels").get<std::size_t>();
        c.window = d.at("window").get<std::size_t>();
        c.classes = d.at("classes").get<std::size_t>();
        c.hidden = d.at("hidden").get<std::size_t>();
        return std::make_unique<harness::MlpBaseline>(c, 0);
    }
    throw LoadError("unknown model kind '" + kind + "' in checkpoint");
}

/// `meta` is free-form provenance (training part, preprocessing) carried alongside the weights.
inline void save_checkpoint(Model& model, const std::filesystem::path& path, const nlohmann::json& meta = nlohmann::json::object()) {
    nlohmann::json arrays = nlohmann::json::array();
    std::vector<std::span<const double>> payload;
    for (const auto& p : model.parameters()) {
        arrays.push_back({{"name", p.name}, {"shape", p.array.shape()}});
        payload.push_back(p.array.values());
    }
    for (const auto& b : model.buffers()) {
        arrays.push_back({{"name", b.name}, {"shape", std::vector<std::size_t>{b.data->size()}}});
        payload.push_back(*b.data);
    }
    const std::string header = nlohmann::json{{"model", model.describe()}, {"arrays", arrays}, {"meta", meta}}.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot write checkpoint " + path.string());
    out.write(checkpoint_magic, sizeof checkpoint_magic);
    const std::uint64_t n = header.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (auto values : payload) {
        out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    }
    if (!out) throw UsageError("failed writing checkpoint " + path.string());
}

struct LoadedCheckpoint {
    std::unique_ptr<Model> model;
    nlohmann::json meta;
};

namespace detail {

inline LoadedCheckpoint read_payload(std::istream& in, const nlohmann::json& h) {
    auto model = make_model(h.at("model"));

    std::map<std::string, std::span<double>> targets;
    std::map<std::string, diff::Shape> shapes;
    for (auto& p : model->parameters()) {
        targets[p.name] = p.array.mutable_values();
        shapes[p.name] = p.array.shape();
    }
    for (auto& b : model->buffers()) {
        targets[b.name] = *b.data;
        shapes[b.name] = {b.data->size()};
    }
    std::set<std::string> filled;
    for (const auto& entry : h.at("arrays")) {
        const auto name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<diff::Shape>();
        auto it = targets.find(name);
        if (it == targets.end()) throw LoadError("checkpoint array '" + name + "' has no counterpart in the model");
        if (shapes[name] != shape) throw LoadError("checkpoint array '" + name + "' has shape " + diff::to_string(shape));
        in.read(reinterpret_cast<char*>(it->second.data()), static_cast<std::streamsize>(it->second.size_bytes()));
        if (!in) throw LoadError("truncated payload for '" + name + "'");
        if (!filled.insert(name).second) throw LoadError("checkpoint array '" + name + "' appears twice");
    }
    if (filled.size() != targets.size()) throw LoadError("checkpoint is missing arrays");
    if (in.peek() != std::char_traits<char>::eof()) throw LoadError("checkpoint has trailing bytes");
    return {std::move(model), h.value("meta", nlohmann::json::object())};
}

} // namespace detail

inline LoadedCheckpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, checkpoint_magic, sizeof magic) != 0) {
        throw LoadError(path.string() + " is not a checkpoint file");
    }
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    if (!in || n > (1u << 26)) throw LoadError("corrupt checkpoint header length in " + path.string());
    std::string header(n, '\0');
    in.read(header.data(), static_cast<std::streamsize>(n));
    if (!in) throw LoadError("truncated checkpoint header in " + path.string());
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("malformed checkpoint header: ") + e.what());
    }
    try {
        return detail::read_payload(in, h);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("malformed checkpoint header: ") + e.what());
    }
}

inline std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path) { return read_checkpoint(path).model; }

} // namespace mtsd
