#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "qcoh/grid.hpp"
#include "qcoh/parallel.hpp"
#include "qcoh/rng.hpp"
#include "qcoh/sim.hpp"

using namespace qcoh;

TEST(Models, CompanionModuli) {
    const auto var2 = varma_coefficients(ModelKind::Var2);
    const auto m1 = companion_moduli(var2.a1, var2.a2);
    const std::vector<double> expect1 = {0.2384, 0.5, 0.9607, 0.9607};
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(m1[i], expect1[i], 5e-5);
    const auto varma = varma_coefficients(ModelKind::Varma21);
    const auto m2 = companion_moduli(varma.a1, varma.a2);
    const std::vector<double> expect2 = {0.4412, 0.8303, 0.8303, 0.9158};
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(m2[i], expect2[i], 5e-5);
}

TEST(Models, MixtureWeightsAtBreakpoints) {
    EXPECT_DOUBLE_EQ(mixture_weight_1(-2.0), 0.1);
    EXPECT_DOUBLE_EQ(mixture_weight_1(-0.8), 0.1);
    EXPECT_DOUBLE_EQ(mixture_weight_1(0.0), 0.45);
    EXPECT_DOUBLE_EQ(mixture_weight_1(0.8), 0.8);
    EXPECT_DOUBLE_EQ(mixture_weight_1(3.0), 0.8);
    EXPECT_DOUBLE_EQ(mixture_weight_2_lower(-0.4), 0.5);
    EXPECT_DOUBLE_EQ(mixture_weight_2_lower(0.0), 0.25);
    EXPECT_DOUBLE_EQ(mixture_weight_2_lower(0.4), 0.0);
    EXPECT_DOUBLE_EQ(mixture_weight_2_lower(-1.0), 0.5);
    EXPECT_DOUBLE_EQ(mixture_weight_2_lower(0.2), 0.125);
    EXPECT_DOUBLE_EQ(mixture_weight_2_upper(-0.4), 0.0);
    EXPECT_DOUBLE_EQ(mixture_weight_2_upper(0.4), 0.5);
    EXPECT_DOUBLE_EQ(mixture_weight_2_upper(-0.2), 0.125);
    EXPECT_DOUBLE_EQ(mixture_weight_2_upper(1.0), 0.5);
}

TEST(Models, ArInnovationVariancesGiveUnitVariance) {
    // Direct check through the AR(2) autocovariance recursion.
    const double phi1 = 0.55, phi2 = -0.81;
    const double s2 = ar2_innovation_variance(phi1, phi2);
    const double rho1 = phi1 / (1.0 - phi2);
    const double gamma0 = s2 / (1.0 - phi1 * rho1 - phi2 * (phi1 * rho1 + phi2));
    EXPECT_NEAR(gamma0, 1.0, 1e-14);
    EXPECT_NEAR(ar1_innovation_variance(0.8), 0.36, 1e-15);
}

TEST(Simulate, DeterministicAndShaped) {
    for (ModelKind k : kAllModels) {
        const ModelSpec spec{k, 300, 42, 500};
        const SeriesMatrix a = simulate(spec);
        const SeriesMatrix b = simulate(spec);
        EXPECT_EQ(a.rows(), 300);
        EXPECT_EQ(a.cols(), 2);
        EXPECT_TRUE((a.array() == b.array()).all());
        EXPECT_TRUE(a.allFinite());
        const SeriesMatrix c = simulate({k, 300, 43, 500});
        EXPECT_FALSE((a.array() == c.array()).all());
    }
}

TEST(Simulate, DelayedCopyCoupling) {
    for (ModelKind k : {ModelKind::MixtureLower, ModelKind::MixtureUpper})
        for (std::uint64_t seed : {1ULL, 99ULL}) {
            const SeriesMatrix y = simulate({k, 200, seed, 1000, MixtureCoupling::DelayedCopy});
            for (Eigen::Index t = 10; t < y.rows(); ++t) EXPECT_EQ(y(t, 1), y(t - 10, 0));
        }
}

TEST(Simulate, MixtureMarginalsHaveModerateVariance) {
    const SeriesMatrix y = simulate({ModelKind::MixtureLower, 20000, 5, 1000});
    for (Eigen::Index j = 0; j < 2; ++j) {
        const double mean = y.col(j).mean();
        const double var = (y.col(j).array() - mean).square().mean();
        EXPECT_NEAR(mean, 0.0, 0.1);
        EXPECT_GT(var, 0.2);
        EXPECT_LT(var, 1.2);
    }
}

TEST(Simulate, VarSampleCovarianceMatchesTheory) {
    const SeriesMatrix y = simulate({ModelKind::Var2, 60000, 77, 1000});
    // Theoretical Gamma(0) from the companion Lyapunov equation by iteration.
    const auto c = varma_coefficients(ModelKind::Var2);
    Eigen::Matrix4d f = Eigen::Matrix4d::Zero();
    f.block<2, 2>(0, 0) = c.a1;
    f.block<2, 2>(0, 2) = c.a2;
    f.block<2, 2>(2, 0).setIdentity();
    Eigen::Matrix4d q = Eigen::Matrix4d::Zero();
    q.block<2, 2>(0, 0) = c.sigma;
    Eigen::Matrix4d s = q;
    for (int i = 0; i < 5000; ++i) s = f * s * f.transpose() + q;
    const Eigen::Matrix2d gamma0 = s.block<2, 2>(0, 0);
    const Eigen::MatrixXd centered = y.rowwise() - y.colwise().mean();
    const Eigen::Matrix2d sample = centered.transpose() * centered / static_cast<double>(y.rows());
    EXPECT_LE(((sample - gamma0).array().abs() / gamma0.array().abs()).maxCoeff(), 0.15);
}

TEST(Simulate, RejectsShortSeries) { EXPECT_THROW(simulate({ModelKind::Var2, 32, 1, 10}), ConfigError); }

TEST(Oracle, SingleReplicateIsRankOne) {
    OracleConfig cfg{1, {0.3, 0.5, 0.8}, 64, 3, 200};
    const CoherenceField f = true_coherence_oracle(ModelKind::Varma21, cfg);
    EXPECT_EQ(f.values.rows(), 64);
    for (Eigen::Index i = 0; i < f.values.size(); ++i) EXPECT_NEAR(f.values.data()[i], 1.0, 1e-12);
}

TEST(Oracle, IndependentColumnsAverageToZero) {
    auto iid = [](std::uint64_t seed) {
        Rng rng = make_rng(seed);
        NormalSampler normal;
        SeriesMatrix y(64, 2);
        for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = normal(rng);
        return y;
    };
    const CoherenceField f = averaged_periodogram_coherence(iid, 64, 2000, {0.25, 0.5, 0.75}, 17);
    EXPECT_LE(f.values.maxCoeff(), 0.05);
    EXPECT_GE(f.values.minCoeff(), 0.0);
}

TEST(Oracle, BenchmarkVarIsCoherentAtLowFrequency) {
    OracleConfig cfg{200, {0.25, 0.5, 0.75}, 64, 17, 200};
    const CoherenceField f = true_coherence_oracle(ModelKind::Var2, cfg);
    EXPECT_GT(f.values.topRows(3).mean(), 0.5);
    EXPECT_GE(f.values.minCoeff(), 0.0);
    EXPECT_LE(f.values.maxCoeff(), 1.0);
}

TEST(Oracle, ThreadCountDoesNotChangeResult) {
    OracleConfig cfg{40, {0.2, 0.5}, 64, 5, 100};
    const unsigned before = thread_budget();
    set_thread_budget(1);
    const CoherenceField a = true_coherence_oracle(ModelKind::MixtureUpper, cfg);
    set_thread_budget(4);
    const CoherenceField b = true_coherence_oracle(ModelKind::MixtureUpper, cfg);
    set_thread_budget(before);
    EXPECT_TRUE((a.values.array() == b.values.array()).all());
}

TEST(GaussianLevel, TabulatedValues) {
    EXPECT_NEAR(gaussian_median_spectrum_level(0.5), 1.570796326794896619, 1e-13);
    EXPECT_NEAR(gaussian_median_spectrum_level(0.25), 1.856767469110269475, 1e-12);
    EXPECT_NEAR(gaussian_median_spectrum_level(0.1), 2.922109751150292015, 1e-11);
    for (double a : {0.04, 0.17, 0.33})
        EXPECT_NEAR(gaussian_median_spectrum_level(a), gaussian_median_spectrum_level(1.0 - a), 1e-10);
    EXPECT_THROW(gaussian_median_spectrum_level(0.0), InputError);
}
