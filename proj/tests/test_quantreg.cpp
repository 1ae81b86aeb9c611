#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "qcoh/quantreg.hpp"
#include "qcoh/rng.hpp"
#include "test_oracles.hpp"

using namespace qcoh;

TEST(CheckLoss, Values) {
    EXPECT_DOUBLE_EQ(check_loss(2.0, 0.25), 0.5);
    EXPECT_DOUBLE_EQ(check_loss(-2.0, 0.25), 1.5);
    EXPECT_DOUBLE_EQ(check_loss(0.0, 0.7), 0.0);
}

TEST(TrigQuantileRegression, MatchesBasicSolutionOracle) {
    Rng rng = make_rng(101);
    NormalSampler normal;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 8 + uniform_index(rng, 13);
        std::vector<double> y(n);
        for (double& v : y) v = normal(rng);
        const std::size_t l = 1 + uniform_index(rng, n);
        const double omega = static_cast<double>(l) / (2.0 * static_cast<double>(n));
        const double alpha = 0.05 + 0.9 * static_cast<double>(uniform_index(rng, 1000)) / 1000.0;
        const auto sol = trig_quantile_regression(y, omega, alpha);
        const double best = oracle::brute_force_trig_qr(y, omega, alpha);
        EXPECT_LE(sol.objective, best + 1e-8) << "n=" << n << " l=" << l << " alpha=" << alpha;
        EXPECT_GE(sol.objective, best - 1e-8);
        EXPECT_NEAR(oracle::trig_qr_objective(y, omega, alpha, sol.intercept, sol.a_coef, sol.b_coef), sol.objective, 1e-10);
    }
}

TEST(TrigQuantileRegression, TiedIntegerDataMatchesOracle) {
    // Many equal values put several zero residuals on one vertex.
    Rng rng = make_rng(404);
    NormalSampler normal;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 8 + uniform_index(rng, 13);
        std::vector<double> y(n);
        for (double& v : y) v = std::round((1 + trial % 3) * normal(rng));
        const std::size_t l = 1 + uniform_index(rng, n);
        const double omega = static_cast<double>(l) / (2.0 * static_cast<double>(n));
        const double alpha = 0.02 + 0.96 * static_cast<double>(uniform_index(rng, 1000)) / 1000.0;
        const auto sol = trig_quantile_regression(y, omega, alpha);
        EXPECT_LE(sol.objective, oracle::brute_force_trig_qr(y, omega, alpha) + 1e-8) << "trial " << trial;
    }
    // Found by the randomized search above before degenerate vertices were handled.
    const std::vector<double> y = {1, -2, 0, -1, 0, -3, 3, 0, 0, 3, 2, -1, 3, -4, 0};
    const double omega = 2.0 / 15.0, alpha = 0.514855;
    EXPECT_LE(trig_quantile_regression(y, omega, alpha).objective, oracle::brute_force_trig_qr(y, omega, alpha) + 1e-8);
}

TEST(TrigQuantileRegression, WarmStartAgreesWithColdStart) {
    Rng rng = make_rng(7);
    NormalSampler normal;
    std::vector<double> y(64);
    for (double& v : y) v = normal(rng);
    for (double omega : {3.0 / 128.0, 17.0 / 128.0, 0.5}) {
        TrigQuantileSolver warm(y, omega);
        for (double alpha = 0.05; alpha < 0.96; alpha += 0.05) {
            const double w = warm.solve(alpha).objective;
            const double c = trig_quantile_regression(y, omega, alpha).objective;
            EXPECT_NEAR(w, c, 1e-10 * (1.0 + std::abs(c)));
        }
    }
}

TEST(TrigQuantileRegression, ExactSinusoidIsRecovered) {
    const std::size_t n = 40;
    const double omega = 5.0 / 80.0;
    std::vector<double> y(n);
    for (std::size_t t = 1; t <= n; ++t)
        y[t - 1] = 0.3 + 1.2 * std::cos(2 * std::numbers::pi * omega * t) - 0.7 * std::sin(2 * std::numbers::pi * omega * t);
    const auto sol = trig_quantile_regression(y, omega, 0.4);
    EXPECT_NEAR(sol.intercept, 0.3, 1e-10);
    EXPECT_NEAR(sol.a_coef, 1.2, 1e-10);
    EXPECT_NEAR(sol.b_coef, -0.7, 1e-10);
    EXPECT_NEAR(sol.objective, 0.0, 1e-10);
}

TEST(TrigQuantileRegression, NyquistHasNoSineTerm) {
    Rng rng = make_rng(3);
    NormalSampler normal;
    std::vector<double> y(15);
    for (double& v : y) v = normal(rng);
    TrigQuantileSolver solver(y, 0.5);
    EXPECT_EQ(solver.parameter_count(), 2);
    const auto sol = solver.solve(0.5);
    EXPECT_EQ(sol.b_coef, 0.0);
    EXPECT_LE(sol.objective, oracle::brute_force_trig_qr(y, 0.5, 0.5) + 1e-8);
}

TEST(TrigQuantileRegression, ConstantSeriesFitsExactly) {
    std::vector<double> y(20, 2.5);
    const auto sol = trig_quantile_regression(y, 0.1, 0.3);
    EXPECT_NEAR(sol.intercept, 2.5, 1e-12);
    EXPECT_NEAR(sol.objective, 0.0, 1e-12);
}

TEST(TrigQuantileRegression, RejectsBadInput) {
    std::vector<double> short_y(5, 1.0);
    EXPECT_THROW(trig_quantile_regression(short_y, 0.1, 0.5), InputError);
    std::vector<double> y(16, 1.0);
    EXPECT_THROW(trig_quantile_regression(y, 0.0, 0.5), InputError);
    EXPECT_THROW(trig_quantile_regression(y, 0.6, 0.5), InputError);
    EXPECT_THROW(trig_quantile_regression(y, 0.1, 1.0), InputError);
    y[3] = std::nan("");
    EXPECT_THROW(trig_quantile_regression(y, 0.1, 0.5), InputError);
}
