#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "coherence.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "qspec.hpp"
#include "smooth.hpp"
#include "varfit.hpp"

namespace qcoh {

struct EstimateOptions {
    std::vector<double> quantiles = linear_grid(0.04, 0.96, 0.01);
    std::optional<int> order;      ///< fixed VAR order; AIC when empty
    int p_max = -1;                ///< -1: default_max_order(n)
    std::optional<double> lambda;  ///< fixed smoothing parameter; CV when empty
    int folds = 5;
    std::uint64_t cv_seed = 11;
    std::vector<double> lambda_grid = log_grid(1e-7, 1e3, 40);
    Eigen::Index series_a = 0;
    Eigen::Index series_b = 1;
};

struct EstimateResult {
    QuantileVarFit parametric; ///< raw (parametric) coherence and the fitted models
    LambdaSelection lambda;    ///< scores empty when lambda was fixed
    CoherenceField smoothed;   ///< semi-parametric coherence
};

/// VAR fit, order selection, coherence and common-lambda smoothing on a
/// precomputed periodogram field.
inline EstimateResult estimate_from_field(const QPField& field, const EstimateOptions& opt) {
    const std::size_t n = field.n;
    const int p_max = opt.p_max >= 0 ? opt.p_max : default_max_order(n);
    const int lags = opt.order ? *opt.order : p_max;
    if (lags < 0 || static_cast<std::size_t>(lags) >= n) throw ConfigError("estimate: VAR order must lie in [0, n)");
    if (opt.series_a == opt.series_b || opt.series_a < 0 || opt.series_b < 0 ||
        static_cast<std::size_t>(std::max(opt.series_a, opt.series_b)) >= field.k)
        throw ConfigError("estimate: invalid series pair");

    EstimateResult res;
    const QacfSet qacf = qacf_from_field(field, static_cast<std::size_t>(lags));
    res.parametric = quantile_var_coherence(qacf, n, opt.order, p_max, opt.series_a, opt.series_b);
    if (opt.lambda) {
        if (!(*opt.lambda >= 0.0)) throw ConfigError("estimate: lambda must be >= 0");
        res.lambda.lambda = *opt.lambda;
    } else {
        const CvPlan plan = CvPlan::make(field.n_quantiles(), opt.folds, opt.cv_seed, opt.lambda_grid);
        res.lambda = select_lambda(res.parametric.raw, plan);
    }
    res.smoothed = smooth_coherence(res.parametric.raw, res.lambda.lambda);
    return res;
}

/// Semi-parametric quantile coherence of a multivariate series.
inline EstimateResult estimate_coherence(const SeriesMatrix& y, const EstimateOptions& opt) {
    if (!y.allFinite()) throw InputError("estimate: series contains non-finite values");
    return estimate_from_field(quantile_periodogram_field(y, opt.quantiles), opt);
}

} // namespace qcoh
