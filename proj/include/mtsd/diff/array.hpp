#pragma once

#include "mtsd/error.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace mtsd::diff {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

class Tape;

namespace detail {

struct TapeState;

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad; // allocated lazily, same length as value
    bool requires_grad = false;
    bool leaf = true;
    std::weak_ptr<TapeState> tape;

    std::span<double> ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

enum class FiniteCheck { enforce, skip };

inline void check_finite(std::span<const double> values, const char* where) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw NumericError(std::string("non-finite value produced by ") + where + " at flat index " +
                               std::to_string(i));
        }
    }
}

} // namespace detail

/// Dense row-major float64 array that can take part in reverse-mode differentiation.
///
/// Copies share storage (handle semantics), which is what lets a recorded operation
/// deliver gradients back to the arrays it consumed.
class Array {
public:
    Array() = default;

    Array(Shape shape, std::vector<double> values, bool requires_grad = false,
          detail::FiniteCheck check = detail::FiniteCheck::enforce)
        : node_(std::make_shared<detail::Node>()) {
        for (auto d : shape) {
            if (d == 0) throw ShapeError("array dimensions must be positive, got " + diff::to_string(shape));
        }
        if (numel(shape) != values.size()) {
            throw ShapeError("shape " + diff::to_string(shape) + " does not match " + std::to_string(values.size()) +
                             " values");
        }
        if (check == detail::FiniteCheck::enforce) detail::check_finite(values, "array construction");
        node_->shape = std::move(shape);
        node_->value = std::move(values);
        node_->requires_grad = requires_grad;
    }

    static Array zeros(Shape shape, bool requires_grad = false) {
        auto n = numel(shape);
        return Array(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Array full(Shape shape, double v, bool requires_grad = false) {
        auto n = numel(shape);
        return Array(std::move(shape), std::vector<double>(n, v), requires_grad);
    }

    static Array scalar(double v, bool requires_grad = false) { return Array({1}, {v}, requires_grad); }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const { return node().shape; }
    std::size_t rank() const { return node().shape.size(); }
    std::size_t dim(std::size_t axis) const { return node().shape.at(axis); }
    std::size_t size() const { return node().value.size(); }

    std::span<const double> values() const { return node().value; }
    double operator[](std::size_t i) const { return node().value[i]; }
    double item() const {
        if (size() != 1) throw ShapeError("item() on array of shape " + diff::to_string(shape()));
        return node().value[0];
    }

    /// In-place access for parameter updates. Only leaves may be mutated.
    std::span<double> mutable_values() {
        if (!node().leaf) throw UsageError("cannot mutate the value of a recorded intermediate");
        return node_->value;
    }

    bool requires_grad() const { return node().requires_grad; }
    bool is_leaf() const { return node().leaf; }
    bool has_grad() const { return !node().grad.empty(); }
    std::span<const double> grad() const { return node().grad; }
    void zero_grad() {
        auto& n = node();
        std::fill(n.grad.begin(), n.grad.end(), 0.0);
    }

    /// Same values, fresh leaf with no history.
    Array detach() const { return Array(shape(), node().value, false); }

    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
    explicit Array(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

private:
    detail::Node& node() const {
        if (!node_) throw UsageError("use of an undefined array");
        return *node_;
    }

    std::shared_ptr<detail::Node> node_;
};

namespace detail {

struct TapeEntry {
    std::shared_ptr<Node> out;
    std::function<void(std::span<const double>)> backward; // receives d(loss)/d(out)
};

struct TapeState {
    std::vector<TapeEntry> entries;
    bool consumed = false;
};

inline thread_local std::shared_ptr<TapeState> active_tape;

inline void run_backward(TapeState& state, const Array& loss) {
    if (state.consumed) throw UsageError("backward called on a consumed tape");
    if (loss.size() != 1) throw ShapeError("backward requires a scalar loss, got " + to_string(loss.shape()));
    const auto& root = loss.node_ptr();
    if (!root->requires_grad) throw UsageError("loss was not produced by a recorded operation");
    root->ensure_grad()[0] += 1.0;
    for (auto it = state.entries.rbegin(); it != state.entries.rend(); ++it) {
        if (it->out->grad.empty()) continue; // does not reach the loss
        it->backward(it->out->grad);
    }
    state.consumed = true;
    state.entries.clear();
    state.entries.shrink_to_fit();
}

} // namespace detail

/// Ordered record of differentiable operations executed while the tape is active.
///
/// Operations are appended in execution order, so the record is topologically
/// sorted by construction. One backward pass walks it in reverse exactly once.
class Tape {
public:
    Tape() : state_(std::make_shared<detail::TapeState>()) {}

    /// RAII activation: operations recorded while a Recording is alive go to its tape.
    class Recording {
    public:
        explicit Recording(Tape& tape) : previous_(detail::active_tape) { detail::active_tape = tape.state_; }
        ~Recording() { detail::active_tape = previous_; }
        Recording(const Recording&) = delete;
        Recording& operator=(const Recording&) = delete;

    private:
        std::shared_ptr<detail::TapeState> previous_;
    };

    std::size_t size() const { return state_->entries.size(); }
    bool consumed() const { return state_->consumed; }

    void backward(const Array& loss) {
        if (!loss.defined() || loss.node_ptr()->tape.lock() != state_) {
            throw UsageError("loss was not recorded on this tape");
        }
        detail::run_backward(*state_, loss);
    }

private:
    std::shared_ptr<detail::TapeState> state_;
};

/// Populate gradients of every requires_grad leaf reachable from `loss`.
inline void backward(const Array& loss) {
    if (!loss.defined()) throw UsageError("backward on an undefined array");
    auto state = loss.node_ptr()->tape.lock();
    if (!state) throw UsageError("loss was not produced on an active tape");
    detail::run_backward(*state, loss);
}

namespace detail {

inline bool recording_enabled() { return static_cast<bool>(active_tape); }

inline bool tracks(const Array& a) { return a.defined() && a.requires_grad(); }

/// Gradient buffer of an input, or an empty span when the input needs none.
inline std::span<double> grad_sink(const std::shared_ptr<Node>& n) {
    if (!n->requires_grad) return {};
    return n->ensure_grad();
}

/// Wrap an operation result; record its backward closure when any input is tracked.
inline Array finish(const char* op, Shape shape, std::vector<double> value, bool any_input_tracked,
                    std::function<void(std::span<const double>)> backward) {
    check_finite(value, op);
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    if (any_input_tracked && recording_enabled()) {
        node->requires_grad = true;
        node->leaf = false;
        node->tape = active_tape;
        active_tape->entries.push_back(TapeEntry{node, std::move(backward)});
    }
    return Array(std::move(node));
}

} // namespace detail

} // namespace mtsd::diff
