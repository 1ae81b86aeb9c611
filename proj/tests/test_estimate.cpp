#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "qcoh/estimate.hpp"
#include "qcoh/sim.hpp"

using namespace qcoh;

TEST(Estimate, EndToEndShapesAndBounds) {
    const SeriesMatrix y = simulate({ModelKind::Var2, 128, 21, 500});
    EstimateOptions opt;
    opt.quantiles = linear_grid(0.1, 0.9, 0.05);
    opt.p_max = 6;
    const EstimateResult r = estimate_coherence(y, opt);
    EXPECT_EQ(r.smoothed.values.rows(), 128);
    EXPECT_EQ(r.smoothed.values.cols(), 17);
    EXPECT_GE(r.smoothed.values.minCoeff(), 0.0);
    EXPECT_LE(r.smoothed.values.maxCoeff(), 1.0);
    EXPECT_GE(r.parametric.selection.order, 1);
    EXPECT_EQ(r.lambda.scores.size(), 40u);
    EXPECT_GT(r.lambda.lambda, 0.0);
}

TEST(Estimate, FixedLambdaAndOrder) {
    const SeriesMatrix y = simulate({ModelKind::MixtureLower, 128, 2, 500});
    EstimateOptions opt;
    opt.quantiles = linear_grid(0.1, 0.9, 0.1);
    opt.order = 2;
    opt.lambda = 0.0;
    const EstimateResult r = estimate_coherence(y, opt);
    EXPECT_EQ(r.parametric.selection.order, 2);
    EXPECT_TRUE(r.lambda.scores.empty());
    EXPECT_LE((r.smoothed.values - r.parametric.raw.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Estimate, RejectsBadOptions) {
    const SeriesMatrix y = simulate({ModelKind::Var2, 64, 2, 100});
    EstimateOptions opt;
    opt.quantiles = linear_grid(0.1, 0.9, 0.1);
    opt.series_b = 0;
    EXPECT_THROW(estimate_coherence(y, opt), ConfigError);
    opt.series_b = 1;
    opt.order = 100;
    EXPECT_THROW(estimate_coherence(y, opt), ConfigError);
}
