#pragma once

#include "mtsd/diff/array.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace mtsd {

struct NamedParam {
    std::string name;
    diff::Array array;
};

/// Non-trainable state that still has to survive a checkpoint (batch-norm running statistics).
struct NamedBuffer {
    std::string name;
    std::vector<double>* data;
};

/// Anything the harness can train and evaluate: MTSDNet and the MLP baseline.
class Model {
public:
    virtual ~Model() = default;

    /// x[B, K, H] -> logits[B, C]
    virtual diff::Array logits(const diff::Array& x, bool training) = 0;
    virtual std::vector<NamedParam> parameters() = 0;
    virtual std::vector<NamedBuffer> buffers() { return {}; }
    /// Layer attention weights, empty for models without layer attention.
    virtual std::vector<double> attention() const { return {}; }
    /// Self-description stored in checkpoint headers; enough to rebuild the architecture.
    virtual nlohmann::json describe() const = 0;

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (const auto& p : parameters()) n += p.array.size();
        return n;
    }
};

} // namespace mtsd
