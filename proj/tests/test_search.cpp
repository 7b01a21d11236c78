#include <gtest/gtest.h>

#include "surftune/search.hpp"

using namespace surftune;

TEST(Simplex, OneDimensionalParabola) {
    const double start[] = {0.9};
    const auto r = maximize_surface([](std::span<const double> x) { return 1.0 - (x[0] - 0.3) * (x[0] - 0.3); },
                                    start);
    EXPECT_NEAR(r.best[0], 0.3, 1e-4);
}

TEST(Simplex, BoundaryMaximumThroughClamping) {
    for (auto s : {std::array<double, 2>{0.2, 0.6}, std::array<double, 2>{0.99, 0.0}}) {
        const auto r = maximize_surface([](std::span<const double> x) { return x[0] + x[1]; }, s);
        EXPECT_NEAR(r.best[0], 1.0, 1e-4);
        EXPECT_NEAR(r.best[1], 1.0, 1e-4);
    }
}

TEST(Simplex, ConstantSurfaceStopsOnValueSpread) {
    const double start[] = {0.4, 0.4, 0.4};
    SimplexSettings s;
    const auto r = maximize_surface([](std::span<const double>) { return 2.0; }, start, s);
    EXPECT_EQ(r.reason, StopReason::f_tolerance);
    EXPECT_LT(r.evaluations, 200 * 3 / 10);
    for (double v : r.best) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Simplex, InitialStepReflectsAtUpperFace) {
    std::vector<point> seen;
    const double start[] = {1.0, 0.5};
    SimplexSettings s;
    s.max_evals = 3;
    maximize_surface(
        [&](std::span<const double> x) {
            seen.emplace_back(x.begin(), x.end());
            return 0.0;
        },
        start, s);
    ASSERT_GE(seen.size(), 3u);
    EXPECT_EQ(seen[1], (point{0.95, 0.5}));
    EXPECT_EQ(seen[2], (point{1.0, 0.55}));
}

TEST(Simplex, RejectsStartOutsideCube) {
    const double start[] = {1.2};
    EXPECT_THROW(maximize_surface([](std::span<const double>) { return 0.0; }, start), out_of_bounds_error);
}

TEST(Simplex, RejectsBadCoefficients) {
    SimplexSettings s;
    s.expansion = 0.9;
    const double start[] = {0.5};
    EXPECT_THROW(maximize_surface([](std::span<const double>) { return 0.0; }, start, s), config_error);
}

TEST(Simplex, RandomQuadraticsStayInCubeAndImprove) {
    rng_type rng(31337);
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t k = 1 + uniform_index(rng, 4);
        point c(k), w(k), start(k);
        std::vector<double> cross(k * k);
        for (std::size_t l = 0; l < k; ++l) {
            c[l] = uniform(rng, -0.5, 1.5);
            w[l] = uniform(rng, -1.0, 2.0);  // negative weights give saddles and minima
            start[l] = unit_uniform(rng);
        }
        for (auto& v : cross) v = uniform(rng, -0.5, 0.5);
        auto f = [&](std::span<const double> x) {
            double s = 0.0;
            for (std::size_t l = 0; l < k; ++l) s -= w[l] * (x[l] - c[l]) * (x[l] - c[l]);
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = a + 1; b < k; ++b) s += cross[a * k + b] * x[a] * x[b];
            return s;
        };
        const auto r = maximize_surface(f, start);
        ASSERT_EQ(r.best.size(), k);
        for (double v : r.best) {
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, 1.0);
        }
        ASSERT_GE(r.value, f(start));
        ASSERT_EQ(r.value, f(r.best));
    }
}

TEST(Simplex, Deterministic) {
    auto f = [](std::span<const double> x) { return std::sin(5 * x[0]) * std::cos(3 * x[1]); };
    const double start[] = {0.1, 0.8};
    const auto a = maximize_surface(f, start), b = maximize_surface(f, start);
    EXPECT_EQ(a.best, b.best);
    EXPECT_EQ(a.evaluations, b.evaluations);
}

TEST(Simplex, RegressionModelOverload) {
    RegressionModel m;
    m.basis = PolynomialBasis(1, 2);
    m.intercept = 0.0;
    m.coefficients = {1.2, -1.0};  // max at x = 0.6
    const double start[] = {0.1};
    EXPECT_NEAR(maximize_surface(m, start).best[0], 0.6, 1e-4);
}
