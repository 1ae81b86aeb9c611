#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coherence.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace qcoh {

/// Natural cubic smoothing spline: knot values g and interior second
/// derivatives gamma (zero at both ends).
struct SplineFit {
    std::vector<double> knots;
    std::vector<double> fitted;
    std::vector<double> second_derivs;
    double lambda = 0.0;

    double operator()(double x) const {
        const std::size_t n = knots.size();
        if (x <= knots.front()) {
            const double h = knots[1] - knots[0];
            const double slope = (fitted[1] - fitted[0]) / h - h * second_derivs[1] / 6.0;
            return fitted[0] + slope * (x - knots[0]);
        }
        if (x >= knots.back()) {
            const double h = knots[n - 1] - knots[n - 2];
            const double slope = (fitted[n - 1] - fitted[n - 2]) / h + h * second_derivs[n - 2] / 6.0;
            return fitted[n - 1] + slope * (x - knots[n - 1]);
        }
        const auto it = std::upper_bound(knots.begin(), knots.end(), x);
        const std::size_t i = static_cast<std::size_t>(it - knots.begin()) - 1;
        const double h = knots[i + 1] - knots[i];
        const double a = x - knots[i];
        const double b = knots[i + 1] - x;
        return (a * fitted[i + 1] + b * fitted[i]) / h -
               a * b / 6.0 * ((1.0 + a / h) * second_derivs[i + 1] + (1.0 + b / h) * second_derivs[i]);
    }
};

/**
 * Prefactored Reinsch system (R + lambda Q^T Q) gamma = Q^T y for fixed knots
 * and lambda; smoothing a new data vector costs O(n).
 */
class SplineSmoother {
public:
    SplineSmoother(std::vector<double> knots, double lambda) : knots_(std::move(knots)), lambda_(lambda) {
        const std::size_t n = knots_.size();
        if (n < 4) throw InputError("smoothing_spline: need at least 4 points");
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("smoothing_spline: lambda must be finite and >= 0");
        h_.resize(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            h_[i] = knots_[i + 1] - knots_[i];
            if (!(h_[i] > 0.0)) throw InputError("smoothing_spline: knots must be strictly increasing");
        }
        const std::size_t m = n - 2;
        // Q column i (interior knot i+1) has entries at rows i, i+1, i+2.
        qa_.resize(m);
        qb_.resize(m);
        qc_.resize(m);
        for (std::size_t i = 0; i < m; ++i) {
            qa_[i] = 1.0 / h_[i];
            qb_[i] = -1.0 / h_[i] - 1.0 / h_[i + 1];
            qc_[i] = 1.0 / h_[i + 1];
        }
        // Pentadiagonal A = R + lambda Q^T Q as three diagonals.
        std::vector<double> d0(m), d1(m, 0.0), d2(m, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            d0[i] = (h_[i] + h_[i + 1]) / 3.0 + lambda_ * (qa_[i] * qa_[i] + qb_[i] * qb_[i] + qc_[i] * qc_[i]);
            if (i + 1 < m) d1[i] = h_[i + 1] / 6.0 + lambda_ * (qb_[i] * qa_[i + 1] + qc_[i] * qb_[i + 1]);
            if (i + 2 < m) d2[i] = lambda_ * qc_[i] * qa_[i + 2];
        }
        // Banded LDL^T.
        diag_.assign(m, 0.0);
        l1_.assign(m, 0.0);
        l2_.assign(m, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            double d = d0[i];
            if (i >= 1) d -= l1_[i - 1] * l1_[i - 1] * diag_[i - 1];
            if (i >= 2) d -= l2_[i - 2] * l2_[i - 2] * diag_[i - 2];
            if (!(d > 0.0)) throw NumericalError("smoothing_spline: penalized system is not positive definite");
            diag_[i] = d;
            if (i + 1 < m) {
                double e = d1[i];
                if (i >= 1) e -= l2_[i - 1] * l1_[i - 1] * diag_[i - 1];
                l1_[i] = e / d;
            }
            if (i + 2 < m) l2_[i] = d2[i] / d;
        }
    }

    const std::vector<double>& knots() const { return knots_; }
    double lambda() const { return lambda_; }

    SplineFit fit(std::span<const double> y) const {
        const std::size_t n = knots_.size();
        if (y.size() != n) throw InputError("smoothing_spline: x and y differ in length");
        const std::size_t m = n - 2;
        std::vector<double> g(m);
        for (std::size_t i = 0; i < m; ++i) g[i] = qa_[i] * y[i] + qb_[i] * y[i + 1] + qc_[i] * y[i + 2];
        for (std::size_t i = 0; i < m; ++i) {
            if (i >= 1) g[i] -= l1_[i - 1] * g[i - 1];
            if (i >= 2) g[i] -= l2_[i - 2] * g[i - 2];
        }
        for (std::size_t i = 0; i < m; ++i) g[i] /= diag_[i];
        for (std::size_t ii = m; ii-- > 0;) {
            if (ii + 1 < m) g[ii] -= l1_[ii] * g[ii + 1];
            if (ii + 2 < m) g[ii] -= l2_[ii] * g[ii + 2];
        }

        SplineFit out;
        out.knots = knots_;
        out.lambda = lambda_;
        out.second_derivs.assign(n, 0.0);
        for (std::size_t i = 0; i < m; ++i) out.second_derivs[i + 1] = g[i];
        out.fitted.assign(y.begin(), y.end());
        if (lambda_ > 0.0) {
            for (std::size_t i = 0; i < m; ++i) {
                out.fitted[i] -= lambda_ * qa_[i] * g[i];
                out.fitted[i + 1] -= lambda_ * qb_[i] * g[i];
                out.fitted[i + 2] -= lambda_ * qc_[i] * g[i];
            }
        }
        return out;
    }

private:
    std::vector<double> knots_, h_;
    double lambda_;
    std::vector<double> qa_, qb_, qc_;
    std::vector<double> diag_, l1_, l2_;
};

/// Minimizes sum (y_m - f(x_m))^2 + lambda * int f''^2 over natural cubic splines.
inline SplineFit smoothing_spline(const std::vector<double>& x, std::span<const double> y, double lambda) {
    return SplineSmoother(x, lambda).fit(y);
}

inline SplineFit smoothing_spline(const std::vector<double>& x, const std::vector<double>& y, double lambda) {
    return smoothing_spline(x, std::span<const double>(y), lambda);
}

/// log-spaced grid of `count` points from lo to hi.
inline std::vector<double> log_grid(double lo, double hi, std::size_t count) {
    if (!(lo > 0.0) || !(hi >= lo) || count == 0) throw ConfigError("lambda grid: need 0 < lo <= hi and count >= 1");
    std::vector<double> grid(count);
    if (count == 1) {
        grid[0] = lo;
        return grid;
    }
    const double a = std::log10(lo), b = std::log10(hi);
    for (std::size_t i = 0; i < count; ++i)
        grid[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
    return grid;
}

/// Fold assignment of quantile indices plus the candidate lambdas.
struct CvPlan {
    int folds = 5;
    std::vector<int> partition; ///< fold of each quantile index
    std::vector<double> lambda_grid;
    std::uint64_t seed = 11;

    /// Random near-equal partition of n_quantiles indices into `folds` folds.
    static CvPlan make(std::size_t n_quantiles, int folds, std::uint64_t seed,
                       std::vector<double> lambda_grid = log_grid(1e-7, 1e3, 40)) {
        if (folds < 2) throw ConfigError("cv: need at least 2 folds");
        CvPlan plan;
        plan.folds = folds;
        plan.seed = seed;
        plan.lambda_grid = std::move(lambda_grid);
        std::vector<std::size_t> order(n_quantiles);
        for (std::size_t i = 0; i < n_quantiles; ++i) order[i] = i;
        Rng rng = make_rng(seed, 0x5f01d5);
        shuffle(order, rng);
        plan.partition.assign(n_quantiles, 0);
        for (std::size_t pos = 0; pos < n_quantiles; ++pos)
            plan.partition[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(folds));
        return plan;
    }

    void validate(std::size_t n_quantiles) const {
        if (lambda_grid.empty()) throw ConfigError("cv: lambda grid is empty");
        for (double l : lambda_grid)
            if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("cv: lambda values must be finite and >= 0");
        if (folds < 2) throw ConfigError("cv: need at least 2 folds");
        if (partition.size() != n_quantiles) throw ConfigError("cv: partition does not match the quantile grid");
        std::vector<std::size_t> sizes(static_cast<std::size_t>(folds), 0);
        for (int f : partition) {
            if (f < 0 || f >= folds) throw ConfigError("cv: fold index out of range");
            ++sizes[static_cast<std::size_t>(f)];
        }
        for (std::size_t s : sizes) {
            if (s < 2) throw ConfigError("cv: every fold needs at least 2 quantile levels (too many folds)");
            if (n_quantiles - s < 4) throw ConfigError("cv: every training set needs at least 4 quantile levels");
        }
    }
};

struct LambdaSelection {
    double lambda = 0.0;
    std::vector<double> scores; ///< CV(lambda) per grid entry
};

/**
 * Common-lambda K-fold CV. For each fold the spline is fitted on the remaining
 * quantile levels at every frequency; the mean of its predictions at the held-out
 * levels is compared with the mean of the held-out raw values. The prediction
 * mean is a fixed linear functional of the training values, so it is computed
 * once per (lambda, fold) and applied to all frequencies.
 */
inline LambdaSelection select_lambda(const CoherenceField& raw, const CvPlan& plan) {
    const std::size_t nq = raw.n_quantiles();
    const auto nf = static_cast<std::size_t>(raw.values.rows());
    plan.validate(nq);
    const std::size_t folds = static_cast<std::size_t>(plan.folds);

    std::vector<std::vector<std::size_t>> train(folds), test(folds);
    for (std::size_t m = 0; m < nq; ++m)
        for (std::size_t f = 0; f < folds; ++f)
            (static_cast<std::size_t>(plan.partition[m]) == f ? test[f] : train[f]).push_back(m);

    // Per-fold mean of the held-out raw values at every frequency.
    std::vector<Eigen::VectorXd> test_mean(folds);
    std::vector<Eigen::MatrixXd> train_values(folds);
    double scale = 0.0;
    for (std::size_t f = 0; f < folds; ++f) {
        test_mean[f] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nf));
        for (std::size_t m : test[f]) test_mean[f] += raw.values.col(static_cast<Eigen::Index>(m));
        test_mean[f] /= static_cast<double>(test[f].size());
        scale += test_mean[f].squaredNorm();
        train_values[f].resize(static_cast<Eigen::Index>(nf), static_cast<Eigen::Index>(train[f].size()));
        for (std::size_t i = 0; i < train[f].size(); ++i)
            train_values[f].col(static_cast<Eigen::Index>(i)) = raw.values.col(static_cast<Eigen::Index>(train[f][i]));
    }

    const std::size_t n_lambda = plan.lambda_grid.size();
    std::vector<double> fold_scores(n_lambda * folds, 0.0);
    parallel_for(n_lambda * folds, [&](std::size_t task) {
        const std::size_t li = task / folds;
        const std::size_t f = task % folds;
        std::vector<double> x(train[f].size());
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = raw.quantiles[train[f][i]];
        const SplineSmoother smoother(x, plan.lambda_grid[li]);
        // weights(i) = mean over test points of the prediction from unit data e_i.
        Eigen::VectorXd weights(static_cast<Eigen::Index>(x.size()));
        std::vector<double> unit(x.size(), 0.0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            unit[i] = 1.0;
            const SplineFit fit = smoother.fit(unit);
            double mean = 0.0;
            for (std::size_t m : test[f]) mean += fit(raw.quantiles[m]);
            weights(static_cast<Eigen::Index>(i)) = mean / static_cast<double>(test[f].size());
            unit[i] = 0.0;
        }
        fold_scores[task] = (train_values[f] * weights - test_mean[f]).squaredNorm();
    });

    LambdaSelection sel;
    sel.scores.assign(n_lambda, 0.0);
    for (std::size_t li = 0; li < n_lambda; ++li)
        for (std::size_t f = 0; f < folds; ++f) sel.scores[li] += fold_scores[li * folds + f];

    // Ties (within rounding) go to the largest lambda.
    const double tol = 1e-12 * std::max(scale, std::numeric_limits<double>::min());
    std::size_t best = 0;
    for (std::size_t li = 1; li < n_lambda; ++li) {
        const bool better = sel.scores[li] < sel.scores[best] - tol;
        const bool tie = std::abs(sel.scores[li] - sel.scores[best]) <= tol;
        if (better || (tie && plan.lambda_grid[li] >= plan.lambda_grid[best])) best = li;
    }
    sel.lambda = plan.lambda_grid[best];
    return sel;
}

/// Smooths every frequency slice across quantiles with one lambda; clips to [0, 1].
inline CoherenceField smooth_coherence(const CoherenceField& raw, double lambda) {
    CoherenceField out = raw;
    const SplineSmoother smoother(raw.quantiles, lambda);
    const auto nf = static_cast<std::size_t>(raw.values.rows());
    const std::size_t nq = raw.n_quantiles();
    parallel_for(nf, [&](std::size_t l) {
        std::vector<double> y(nq);
        for (std::size_t m = 0; m < nq; ++m) y[m] = raw.values(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m));
        const SplineFit fit = smoother.fit(y);
        for (std::size_t m = 0; m < nq; ++m)
            out.values(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m)) = std::clamp(fit.fitted[m], 0.0, 1.0);
    });
    return out;
}

} // namespace qcoh
