#pragma once

#include "mtsd/diff/array.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace mtsd::diff {

struct GradientCheck {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Compare reverse-mode gradients of a scalar `loss` against central finite
/// differences for every element of every array in `inputs`.
///
/// The relative error of one element is |a - n| / max(|a|, |n|, floor).
/// `loss` must rebuild its graph from the current input values on each call.
inline GradientCheck check_gradients(const std::function<Array()>& loss, std::vector<Array> inputs,
                                     double step = 1e-4, double floor = 1e-8) {
    for (auto& in : inputs) {
        if (!in.requires_grad() || !in.is_leaf()) throw UsageError("check_gradients: inputs must be requires_grad leaves");
        in.zero_grad();
    }
    {
        Tape tape;
        Tape::Recording rec(tape);
        Array l = loss();
        tape.backward(l);
    }
    GradientCheck result;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
        auto& in = inputs[p];
        std::vector<double> analytic(in.size(), 0.0);
        if (in.has_grad()) std::copy(in.grad().begin(), in.grad().end(), analytic.begin());
        auto v = in.mutable_values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double original = v[i];
            v[i] = original + step;
            const double up = loss().item();
            v[i] = original - step;
            const double down = loss().item();
            v[i] = original;
            const double numeric = (up - down) / (2.0 * step);
            const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), floor});
            const double err = std::fabs(analytic[i] - numeric) / denom;
            ++result.checked;
            if (result.checked == 1 || err > result.max_relative_error) {
                result.max_relative_error = err;
                result.worst_input = p;
                result.worst_index = i;
                result.worst_analytic = analytic[i];
                result.worst_numeric = numeric;
            }
        }
    }
    return result;
}

} // namespace mtsd::diff
