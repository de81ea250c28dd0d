#pragma once

#include "mtsd/diff/array.hpp"
#include "mtsd/error.hpp"

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

namespace mtsd {

enum class BasisKind { trend, seasonal, identity };

/// Fixed R x H constraint matrix. Components are produced as theta x basis, so the
/// basis decides which family of signals a layer can emit. Never trained.
class BasisMatrix {
public:
    BasisMatrix(BasisKind kind, std::size_t rows, std::size_t window, std::vector<double> values)
        : kind_(kind), rows_(rows), window_(window), values_(std::move(values)) {}

    BasisKind kind() const noexcept { return kind_; }
    std::size_t rows() const noexcept { return rows_; }
    std::size_t window() const noexcept { return window_; }
    double operator()(std::size_t r, std::size_t j) const { return values_[r * window_ + j]; }
    const std::vector<double>& values() const noexcept { return values_; }

    /// Constant (non-trainable) array view for use in the differentiable graph.
    diff::Array as_array() const { return diff::Array({rows_, window_}, values_, false); }

private:
    BasisKind kind_;
    std::size_t rows_;
    std::size_t window_;
    std::vector<double> values_;
};

/// Polynomial basis: entry (i, j) = j^i / H for i = 0..p, j = 0..H-1, with 0^0 = 1.
inline BasisMatrix trend_basis(std::size_t window, std::size_t degree) {
    if (window == 0) throw UsageError("trend_basis: window length must be positive");
    if (degree + 1 > window) {
        throw UsageError("trend_basis: degree " + std::to_string(degree) + " needs more than " + std::to_string(window) +
                         " samples");
    }
    const std::size_t rows = degree + 1;
    const double h = static_cast<double>(window);
    std::vector<double> v(rows * window);
    for (std::size_t j = 0; j < window; ++j) {
        double power = 1.0; // j^0, including 0^0
        for (std::size_t i = 0; i < rows; ++i) {
            v[i * window + j] = power / h;
            power *= static_cast<double>(j);
        }
    }
    return {BasisKind::trend, rows, window, std::move(v)};
}

/// Trigonometric basis: H/2 cosine rows then H/2 sine rows at frequencies k = 0..H/2-1.
/// The k = 0 sine row is identically zero and is kept.
inline BasisMatrix seasonal_basis(std::size_t window) {
    if (window < 2 || window % 2 != 0) {
        throw UsageError("seasonal_basis: window length must be even and at least 2, got " + std::to_string(window));
    }
    const std::size_t half = window / 2;
    const double h = static_cast<double>(window);
    std::vector<double> v(window * window);
    for (std::size_t k = 0; k < half; ++k) {
        for (std::size_t j = 0; j < window; ++j) {
            // k*j mod H keeps the argument small and makes the exact zeros of sin/cos exact
            const double angle = 2.0 * std::numbers::pi * static_cast<double>((k * j) % window) / h;
            v[k * window + j] = std::cos(angle);
            v[(half + k) * window + j] = std::sin(angle);
        }
    }
    // sin(pi) and cos(pi/2) are not exactly zero in floating point
    for (auto& x : v)
        if (std::fabs(x) < 1e-15) x = 0.0;
    return {BasisKind::seasonal, window, window, std::move(v)};
}

inline BasisMatrix identity_basis(std::size_t window) {
    if (window == 0) throw UsageError("identity_basis: window length must be positive");
    std::vector<double> v(window * window, 0.0);
    for (std::size_t i = 0; i < window; ++i) v[i * window + i] = 1.0;
    return {BasisKind::identity, window, window, std::move(v)};
}

} // namespace mtsd
