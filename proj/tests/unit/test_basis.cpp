#include "mtsd/basis.hpp"
#include "mtsd/diff/ops.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace mtsd;

namespace {

void expect_rows(const BasisMatrix& m, const std::vector<std::vector<double>>& rows) {
    ASSERT_EQ(m.rows(), rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        ASSERT_EQ(m.window(), rows[r].size());
        for (std::size_t j = 0; j < rows[r].size(); ++j) EXPECT_EQ(m(r, j), rows[r][j]) << "row " << r << " col " << j;
    }
}

} // namespace

TEST(TrendBasis, HandValues) {
    expect_rows(trend_basis(4, 1), {{0.25, 0.25, 0.25, 0.25}, {0, 0.25, 0.5, 0.75}});
    expect_rows(trend_basis(2, 0), {{0.5, 0.5}});
}

TEST(TrendBasis, ZeroToTheZeroIsOne) { EXPECT_EQ(trend_basis(5, 3)(0, 0), 1.0 / 5.0); }

TEST(TrendBasis, OverdeterminedDegreeIsRejected) {
    EXPECT_THROW(trend_basis(3, 3), UsageError);
    EXPECT_NO_THROW(trend_basis(3, 2));
}

TEST(TrendBasis, RankIsDegreePlusOne) {
    const auto b = trend_basis(32, 3);
    EXPECT_EQ(oracle::rank(b.values(), b.rows(), b.window()), 4u);
}

TEST(TrendBasis, EntriesWithinDeclaredRange) {
    for (std::size_t H : {4u, 16u, 64u}) {
        for (std::size_t p = 0; p <= 3; ++p) {
            const auto b = trend_basis(H, p);
            const double hi = std::pow(static_cast<double>(H - 1), static_cast<double>(p)) / static_cast<double>(H);
            for (double v : b.values()) {
                EXPECT_GE(v, 0.0);
                EXPECT_LE(v, std::max(hi, 1.0 / static_cast<double>(H)));
            }
        }
    }
}

TEST(SeasonalBasis, HandValues) {
    expect_rows(seasonal_basis(4), {{1, 1, 1, 1}, {1, 0, -1, 0}, {0, 0, 0, 0}, {0, 1, 0, -1}});
}

TEST(SeasonalBasis, OddOrTinyWindowIsRejected) {
    EXPECT_THROW(seasonal_basis(5), UsageError);
    EXPECT_THROW(seasonal_basis(0), UsageError);
}

TEST(SeasonalBasis, ZeroFrequencySineRowIsZero) {
    for (std::size_t H : {2u, 4u, 8u, 64u, 128u}) {
        const auto b = seasonal_basis(H);
        for (std::size_t j = 0; j < H; ++j) EXPECT_EQ(b(H / 2, j), 0.0);
    }
}

TEST(SeasonalBasis, RankDropsByOneForTheZeroRow) {
    const auto b = seasonal_basis(8);
    EXPECT_EQ(oracle::rank(b.values(), 8, 8), 7u);
}

TEST(SeasonalBasis, EntriesWithinUnitRange) {
    const auto b = seasonal_basis(64);
    for (double v : b.values()) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(SeasonalBasis, PureCosineProjectsOntoItsOwnRow) {
    const std::size_t H = 32;
    const auto b = seasonal_basis(H);
    for (std::size_t k = 1; k < H / 2; ++k) {
        std::vector<double> x(H);
        for (std::size_t j = 0; j < H; ++j) x[j] = 2.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k * j) / H);
        // rows are mutually orthogonal, so least squares reduces to per-row projections
        for (std::size_t r = 0; r < H; ++r) {
            double dot = 0.0, norm = 0.0;
            for (std::size_t j = 0; j < H; ++j) {
                dot += x[j] * b(r, j);
                norm += b(r, j) * b(r, j);
            }
            if (norm == 0.0) continue;
            const double coef = dot / norm;
            if (r == k) EXPECT_NEAR(coef, 2.5, 1e-9);
            else EXPECT_LT(std::fabs(coef), 1e-9) << "k " << k << " row " << r;
        }
    }
}

TEST(SeasonalBasis, RowsAreOrthogonal) {
    const std::size_t H = 16;
    const auto b = seasonal_basis(H);
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t s = r + 1; s < H; ++s) {
            double dot = 0.0;
            for (std::size_t j = 0; j < H; ++j) dot += b(r, j) * b(s, j);
            EXPECT_NEAR(dot, 0.0, 1e-12);
        }
}

TEST(IdentityBasis, IsIdentity) {
    expect_rows(identity_basis(3), {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    EXPECT_THROW(identity_basis(0), UsageError);
}

TEST(IdentityBasis, ProjectionReturnsTheta) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> d(-1, 1);
    std::vector<double> v(2 * 3 * 6);
    for (auto& x : v) x = d(rng);
    diff::Array theta({2, 3, 6}, v);
    diff::Array out = diff::matmul(theta, identity_basis(6).as_array());
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(out[i], v[i]);
}

TEST(IdentityBasis, ReproducesATrendSignalExactly) {
    // a trend signal written as general-block coefficients round-trips through the identity
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> d(-1, 1);
    const std::size_t H = 16;
    diff::Array theta_t({1, 1, 4}, {d(rng), d(rng), d(rng), d(rng)});
    diff::Array signal = diff::matmul(theta_t, trend_basis(H, 3).as_array());
    diff::Array again = diff::matmul(signal, identity_basis(H).as_array());
    for (std::size_t j = 0; j < H; ++j) EXPECT_EQ(again[j], signal[j]);
}

TEST(Basis, ConstantArrayDoesNotRequireGrad) {
    EXPECT_FALSE(trend_basis(8, 2).as_array().requires_grad());
    EXPECT_FALSE(seasonal_basis(8).as_array().requires_grad());
}
