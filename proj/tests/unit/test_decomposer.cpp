#include "mtsd/decomposer.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mtsd;
using diff::Array;
using diff::Shape;

namespace {

Array random_array(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(diff::numel(shape));
    for (auto& x : v) x = d(rng);
    return Array(std::move(shape), std::move(v));
}

WindowStats stats_of(std::size_t B, std::size_t K, double min, double mean, double max, double var) {
    return {Array::full({B, K}, min), Array::full({B, K}, mean), Array::full({B, K}, max), Array::full({B, K}, var)};
}

} // namespace

TEST(WindowNormalize, ConstantWindow) {
    auto [xn, s] = window_normalize(Array({1, 1, 4}, {5, 5, 5, 5}));
    for (double v : xn.values()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(s.min.item(), 5.0);
    EXPECT_EQ(s.mean.item(), 5.0);
    EXPECT_EQ(s.max.item(), 5.0);
    EXPECT_EQ(s.var.item(), 0.0);
}

TEST(WindowNormalize, TwoPointWindowUsesPopulationVariance) {
    auto [xn, s] = window_normalize(Array({1, 1, 2}, {0, 2}));
    EXPECT_EQ(s.mean.item(), 1.0);
    EXPECT_EQ(s.var.item(), 1.0);
    EXPECT_NEAR(xn[0], -1.0 / std::sqrt(1.0 + 1e-5), 1e-15);
    EXPECT_NEAR(xn[1], 1.0 / std::sqrt(1.0 + 1e-5), 1e-15);
    EXPECT_NEAR(xn[1], 0.999995, 1e-6);
}

TEST(WindowNormalize, StatisticsArePerSampleAndChannel) {
    auto [xn, s] = window_normalize(Array({2, 2, 2}, {0, 2, 10, 10, -4, 4, 1, 3}));
    EXPECT_EQ(s.mean.shape(), (Shape{2, 2}));
    EXPECT_EQ(s.mean[1], 10.0);
    EXPECT_EQ(s.var[2], 16.0);
    EXPECT_EQ(s.min[2], -4.0);
    EXPECT_EQ(s.max[3], 3.0);
}

TEST(WindowNormalize, RoundTrip) {
    std::mt19937_64 rng(11);
    Array x = random_array({4, 3, 16}, rng, -20, 20);
    auto [xn, s] = window_normalize(x);
    Array back = denormalize(xn, s);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back[i], x[i], 1e-9);
}

TEST(ExtractTheta, ShapeAndRange) {
    std::mt19937_64 rng(3);
    LayerConfig cfg{BlockKind::trend, 16, 3, Mode::additive};
    auto params = ExtractorParams::create(32, 16, cfg.depth(), 4, rng);
    auto [xn, s] = window_normalize(random_array({5, 3, 32}, rng, -3, 3));
    Array theta = extract_theta(xn, params, true);
    EXPECT_EQ(theta.shape(), (Shape{5, 3, 4}));
    for (double v : theta.values()) EXPECT_LE(std::fabs(v), 1.0);
}

TEST(ExtractTheta, DepthByBlockKind) {
    EXPECT_EQ((LayerConfig{BlockKind::trend}).depth(), 4u);
    EXPECT_EQ((LayerConfig{BlockKind::seasonal}).depth(), 4u);
    EXPECT_EQ((LayerConfig{BlockKind::general}).depth(), 2u);
}

TEST(ExtractTheta, ZeroWeightsGiveZeroTheta) {
    std::mt19937_64 rng(4);
    auto params = ExtractorParams::create(8, 6, 4, 8, rng);
    for (auto& st : params.stages) std::fill(st.weight.mutable_values().begin(), st.weight.mutable_values().end(), 0.0);
    std::fill(params.out_weight.mutable_values().begin(), params.out_weight.mutable_values().end(), 0.0);
    auto [xn, s] = window_normalize(random_array({3, 2, 8}, rng));
    Array theta = extract_theta(xn, params, true);
    for (double v : theta.values()) EXPECT_EQ(v, 0.0);
}

TEST(ExtractTheta, SingleChannelMatchesDenseStack) {
    std::mt19937_64 rng(8);
    const std::size_t B = 6, H = 16, hidden = 10, R = 4;
    auto params = ExtractorParams::create(H, hidden, 4, R, rng);
    auto dense = params; // same weights, separate running buffers
    auto [xn, s] = window_normalize(random_array({B, 1, H}, rng, -2, 2));

    Array theta = extract_theta(xn, params, true);

    // dense reference: rows are samples, features are time steps
    Array h = diff::reshape(xn, {B, H});
    for (auto& st : dense.stages) {
        h = diff::linear(h, st.weight, st.bias);
        h = diff::reshape(diff::batchnorm(diff::reshape(h, {B, hidden, 1}), st.gamma, st.beta, st.running, true), {B, hidden});
        h = diff::relu(h);
    }
    h = diff::tanh(diff::linear(h, dense.out_weight, dense.out_bias));
    ASSERT_EQ(theta.size(), h.size());
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(theta[i], h[i]) << "at " << i;
}

TEST(ExtractTheta, WeightsAreSharedAcrossChannels) {
    // channel k of a K-channel batch equals the same window run alone in eval mode
    std::mt19937_64 rng(9);
    auto params = ExtractorParams::create(8, 6, 4, 3, rng);
    auto [xn, s] = window_normalize(random_array({2, 3, 8}, rng));
    Array all = extract_theta(xn, params, false);
    for (std::size_t k = 0; k < 3; ++k) {
        std::vector<double> one;
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t j = 0; j < 8; ++j) one.push_back(xn[(b * 3 + k) * 8 + j]);
        Array single = extract_theta(Array({2, 1, 8}, one), params, false);
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(single[b * 3 + r], all[(b * 3 + k) * 3 + r], 1e-15);
    }
}

TEST(Project, OneHotTrendRowZeroGivesConstant) {
    const std::size_t H = 8;
    auto basis = trend_basis(H, 3);
    Array theta({1, 1, 4}, {1, 0, 0, 0});
    Array comp = project_and_denormalize(theta, basis, stats_of(1, 1, 0, 0, 0, 1.0 - 1e-5));
    for (double v : comp.values()) EXPECT_NEAR(v, 1.0 / H, 1e-15);
}

TEST(Project, ZeroThetaGivesMean) {
    Array comp = project_and_denormalize(Array::zeros({2, 3, 4}), trend_basis(8, 3), stats_of(2, 3, -1, 3.5, 9, 4.0));
    EXPECT_EQ(comp.shape(), (Shape{2, 3, 8}));
    for (double v : comp.values()) EXPECT_EQ(v, 3.5);
}

TEST(Project, MatchesTripleLoop) {
    std::mt19937_64 rng(12);
    const std::size_t B = 3, K = 2, H = 16;
    auto basis = seasonal_basis(H);
    Array theta = random_array({B, K, H}, rng);
    // unit scale: var chosen so sqrt(var + eps) == 1
    Array comp = project_and_denormalize(theta, basis, stats_of(B, K, 0, 0, 0, 1.0 - 1e-5));
    double worst = 0.0;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t j = 0; j < H; ++j) {
                double acc = 0.0;
                for (std::size_t r = 0; r < H; ++r) acc += theta[(b * K + k) * H + r] * basis(r, j);
                worst = std::max(worst, std::fabs(acc - comp[(b * K + k) * H + j]));
            }
    EXPECT_LT(worst, 1e-12);
}

TEST(Project, RowMismatchIsShapeError) {
    EXPECT_THROW(project_and_denormalize(Array::zeros({1, 1, 3}), trend_basis(8, 3), stats_of(1, 1, 0, 0, 0, 1)), ShapeError);
}

TEST(Project, TrendComponentIsPolynomialOfDegreeP) {
    std::mt19937_64 rng(13);
    for (std::size_t p : {1u, 2u, 3u}) {
        const std::size_t H = 32;
        Array theta = random_array({4, 2, p + 1}, rng);
        Array comp = diff::matmul(theta, trend_basis(H, p).as_array());
        for (std::size_t row = 0; row < 8; ++row) {
            std::vector<double> y(comp.values().begin() + row * H, comp.values().begin() + (row + 1) * H);
            EXPECT_LT(oracle::polyfit_residual(y, p), 1e-9) << "p " << p;
        }
    }
}

TEST(ToMultiplicative, HandValues) {
    Array y = to_multiplicative(Array({3}, {0, 2, -1}));
    EXPECT_EQ(y[0], 1.0);
    EXPECT_EQ(y[1], 3.0);
    EXPECT_EQ(y[2], 0.5);
}

TEST(ToMultiplicative, PositiveMonotoneOnDenseGrid) {
    const std::size_t n = 100001;
    std::vector<double> grid(n);
    for (std::size_t i = 0; i < n; ++i) grid[i] = -10.0 + 20.0 * static_cast<double>(i) / (n - 1);
    Array y = to_multiplicative(Array({n}, grid));
    for (std::size_t i = 0; i < n; ++i) {
        ASSERT_GT(y[i], 0.0);
        if (i) ASSERT_GE(y[i], y[i - 1]) << "at x=" << grid[i];
    }
    EXPECT_EQ(y[n / 2], 1.0);
}

TEST(Clamp, AdditiveHandValues) {
    Array comp({1, 1, 3}, {4, -3, 1});
    Array out = clamp_component(comp, stats_of(1, 1, -2, 0, 3, 1), Mode::additive);
    EXPECT_NEAR(out[0], 3.3, 1e-15);
    EXPECT_NEAR(out[1], -2.2, 1e-15);
    EXPECT_EQ(out[2], 1.0);
}

TEST(Clamp, MultiplicativeHandValues) {
    Array out = clamp_component(Array({1, 1, 3}, {5, 0.1, 1}), stats_of(1, 1, 0, 0, 0, 0), Mode::multiplicative);
    EXPECT_EQ(out[0], 2.0);
    EXPECT_EQ(out[1], 0.5);
    EXPECT_EQ(out[2], 1.0);
}

TEST(Clamp, WithinBoundsAndIdempotent) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> d(-10, 10);
    for (int trial = 0; trial < 200; ++trial) {
        double a = d(rng), b = d(rng);
        if (a > b) std::swap(a, b);
        WindowStats s = stats_of(1, 2, a, 0.5 * (a + b), b, 1);
        Array comp = random_array({1, 2, 25}, rng, -15, 15);
        for (Mode mode : {Mode::additive, Mode::multiplicative}) {
            Array once = clamp_component(comp, s, mode);
            Array twice = clamp_component(once, s, mode);
            const double lo = mode == Mode::additive ? a - 0.1 * std::fabs(a) : 0.5;
            const double hi = mode == Mode::additive ? b + 0.1 * std::fabs(b) : 2.0;
            for (std::size_t i = 0; i < once.size(); ++i) {
                ASSERT_GE(once[i], lo);
                ASSERT_LE(once[i], hi);
                ASSERT_EQ(once[i], twice[i]);
                if (comp[i] >= lo && comp[i] <= hi) ASSERT_EQ(once[i], comp[i]);
            }
        }
    }
}

TEST(DecomposeLayer, AdditiveComponentRespectsBounds) {
    std::mt19937_64 rng(30);
    for (BlockKind kind : {BlockKind::trend, BlockKind::seasonal, BlockKind::general}) {
        LayerConfig cfg{kind, 8, 2, Mode::additive};
        auto basis = basis_for(cfg, 16);
        auto params = ExtractorParams::create(16, 8, cfg.depth(), basis.rows(), rng);
        Array x = random_array({4, 3, 16}, rng, -5, 5);
        LayerOutput out = decompose_layer(x, cfg, params, basis, true);
        EXPECT_EQ(out.component.shape(), x.shape());
        for (std::size_t bk = 0; bk < 12; ++bk) {
            const double lo = out.stats.min[bk] - 0.1 * std::fabs(out.stats.min[bk]);
            const double hi = out.stats.max[bk] + 0.1 * std::fabs(out.stats.max[bk]);
            for (std::size_t j = 0; j < 16; ++j) {
                EXPECT_GE(out.component[bk * 16 + j], lo);
                EXPECT_LE(out.component[bk * 16 + j], hi);
            }
        }
    }
}

TEST(DecomposeLayer, MultiplicativeComponentInHalfToTwo) {
    std::mt19937_64 rng(31);
    LayerConfig cfg{BlockKind::seasonal, 8, 3, Mode::multiplicative};
    auto basis = basis_for(cfg, 8);
    auto params = ExtractorParams::create(8, 8, cfg.depth(), basis.rows(), rng);
    LayerOutput out = decompose_layer(random_array({3, 2, 8}, rng, 0.5, 4.0), cfg, params, basis, true);
    for (double v : out.component.values()) {
        EXPECT_GE(v, 0.5);
        EXPECT_LE(v, 2.0);
    }
}

TEST(DecomposeLayer, MultiplicativeRejectsNonPositiveResidual) {
    std::mt19937_64 rng(32);
    LayerConfig cfg{BlockKind::trend, 4, 1, Mode::multiplicative};
    auto basis = basis_for(cfg, 4);
    auto params = ExtractorParams::create(4, 4, cfg.depth(), basis.rows(), rng);
    EXPECT_THROW(decompose_layer(Array({1, 1, 4}, {1, 2, 0, 3}), cfg, params, basis, true), NumericError);
}
