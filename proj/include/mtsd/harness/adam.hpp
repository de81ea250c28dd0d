#pragma once

#include "mtsd/model.hpp"

#include <cmath>
#include <vector>

namespace mtsd::harness {

/// Adam with bias correction and no weight decay.
class Adam {
public:
    Adam(std::vector<NamedParam> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& p : params_) {
            m_.emplace_back(p.array.size(), 0.0);
            v_.emplace_back(p.array.size(), 0.0);
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.array.zero_grad();
    }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& a = params_[i].array;
            if (!a.has_grad()) continue;
            auto g = a.grad();
            auto w = a.mutable_values();
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t j = 0; j < w.size(); ++j) {
                m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
                v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
                const double mhat = m[j] / c1;
                const double vhat = v[j] / c2;
                w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    std::size_t steps() const noexcept { return t_; }

private:
    std::vector<NamedParam> params_;
    double lr_, beta1_, beta2_, eps_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

} // namespace mtsd::harness
