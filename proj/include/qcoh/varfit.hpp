#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coherence.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "parallel.hpp"
#include "qspec.hpp"

namespace qcoh {

/// Fitted VAR(p) in the convention Y_t = sum_r Phi_r Y_{t-r} + e_t.
struct VarModel {
    int order = 0;
    std::vector<Eigen::MatrixXd> coefficients;          ///< Phi_{p,1..p}
    Eigen::MatrixXd innovation_cov;                     ///< V_p
    std::vector<Eigen::MatrixXd> backward_coefficients; ///< Phi~_{p,1..p}
    Eigen::MatrixXd backward_cov;                       ///< V~_p
    std::vector<Eigen::MatrixXd> pacf;                  ///< Psi_1..Psi_p

    Eigen::Index dimension() const { return innovation_cov.rows(); }
};

/// Complex k x k spectral matrices on a frequency grid, optionally per quantile.
/// Entry l * max(1, n_q) + m.
struct SpectrumField {
    std::vector<double> freqs;
    std::vector<double> quantiles;
    std::vector<Eigen::MatrixXcd> data;

    std::size_t n_layers() const { return quantiles.empty() ? 1 : quantiles.size(); }
    const Eigen::MatrixXcd& at(std::size_t l, std::size_t m = 0) const { return data[l * n_layers() + m]; }
    Eigen::MatrixXcd& at(std::size_t l, std::size_t m = 0) { return data[l * n_layers() + m]; }
};

inline int default_max_order(std::size_t n) {
    return std::min(20, static_cast<int>(std::floor(10.0 * std::log10(static_cast<double>(n)))));
}

namespace detail {

struct LevinsonPath {
    VarModel model;                 ///< fit at the last order reached
    std::vector<double> log_det;    ///< log|V_r|, r = 0..reached
    std::optional<std::string> failure;
    bool failure_is_instability = false;
    int failed_order = 0;
};

inline double log_det_from_cholesky(const Eigen::MatrixXd& l) { return 2.0 * l.diagonal().array().log().sum(); }

/// Runs the recursion up to `max_order`, stopping at the first failure.
inline LevinsonPath levinson(std::span<const Eigen::MatrixXd> gammas, int max_order) {
    if (gammas.empty()) throw InputError("durbin_levinson: empty autocovariance sequence");
    if (max_order < 0 || static_cast<std::size_t>(max_order) + 1 > gammas.size())
        throw InputError("durbin_levinson: order exceeds the available lags");
    const Eigen::Index k = gammas[0].rows();
    for (const auto& g : gammas)
        if (g.rows() != k || g.cols() != k) throw InputError("durbin_levinson: autocovariances must be k x k");
    const Eigen::MatrixXd& g0 = gammas[0];
    if ((g0 - g0.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, g0.cwiseAbs().maxCoeff()))
        throw InputError("durbin_levinson: Gamma(0) is not symmetric");

    LevinsonPath path;
    VarModel& mod = path.model;
    mod.innovation_cov = 0.5 * (g0 + g0.transpose());
    mod.backward_cov = mod.innovation_cov;
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(k, k);

    Eigen::LLT<Eigen::MatrixXd> llt(mod.innovation_cov);
    if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0)) {
        path.failure = "durbin_levinson: Gamma(0) is not positive definite";
        return path;
    }
    Eigen::MatrixXd lf = llt.matrixL();
    Eigen::MatrixXd lb = lf;
    path.log_det.push_back(log_det_from_cholesky(lf));

    for (int r = 1; r <= max_order; ++r) {
        Eigen::MatrixXd delta = gammas[static_cast<std::size_t>(r)];
        for (int i = 1; i < r; ++i)
            delta -= mod.coefficients[static_cast<std::size_t>(i - 1)] * gammas[static_cast<std::size_t>(r - i)];

        // Psi = L^{-1} Delta Lb^{-T}
        const Eigen::MatrixXd left = lf.triangularView<Eigen::Lower>().solve(delta);
        const Eigen::MatrixXd psi = lb.triangularView<Eigen::Lower>().solve(left.transpose()).transpose();
        const double sigma = Eigen::JacobiSVD<Eigen::MatrixXd>(psi).singularValues()(0);
        if (!(sigma < 1.0)) {
            path.failure = "durbin_levinson: partial autocorrelation at lag " + std::to_string(r) +
                           " has singular value " + std::to_string(sigma) + " >= 1";
            path.failure_is_instability = true;
            path.failed_order = r;
            return path;
        }

        // Phi_rr = L Psi Lb^{-1}, Phi~_rr = Lb Psi^T L^{-1}
        const Eigen::MatrixXd lbinv = lb.triangularView<Eigen::Lower>().solve(id);
        const Eigen::MatrixXd lfinv = lf.triangularView<Eigen::Lower>().solve(id);
        const Eigen::MatrixXd phi_rr = lf * psi * lbinv;
        const Eigen::MatrixXd phib_rr = lb * psi.transpose() * lfinv;

        std::vector<Eigen::MatrixXd> phi(static_cast<std::size_t>(r)), phib(static_cast<std::size_t>(r));
        for (int i = 1; i < r; ++i) {
            const auto ii = static_cast<std::size_t>(i - 1);
            const auto mirror = static_cast<std::size_t>(r - i - 1);
            phi[ii] = mod.coefficients[ii] - phi_rr * mod.backward_coefficients[mirror];
            phib[ii] = mod.backward_coefficients[ii] - phib_rr * mod.coefficients[mirror];
        }
        phi[static_cast<std::size_t>(r - 1)] = phi_rr;
        phib[static_cast<std::size_t>(r - 1)] = phib_rr;

        Eigen::MatrixXd v = lf * (id - psi * psi.transpose()) * lf.transpose();
        Eigen::MatrixXd vb = lb * (id - psi.transpose() * psi) * lb.transpose();
        v = 0.5 * (v + v.transpose());
        vb = 0.5 * (vb + vb.transpose());

        Eigen::LLT<Eigen::MatrixXd> llt_v(v), llt_vb(vb);
        if (llt_v.info() != Eigen::Success || llt_vb.info() != Eigen::Success) {
            path.failure = "durbin_levinson: innovation covariance lost positive definiteness at order " + std::to_string(r);
            path.failed_order = r;
            return path;
        }
        Eigen::MatrixXd lf_new = llt_v.matrixL();
        Eigen::MatrixXd lb_new = llt_vb.matrixL();
        if (!(lf_new.diagonal().minCoeff() > 0.0) || !(lb_new.diagonal().minCoeff() > 0.0)) {
            path.failure = "durbin_levinson: innovation covariance lost positive definiteness at order " + std::to_string(r);
            path.failed_order = r;
            return path;
        }

        mod.order = r;
        mod.coefficients = std::move(phi);
        mod.backward_coefficients = std::move(phib);
        mod.innovation_cov = std::move(v);
        mod.backward_cov = std::move(vb);
        mod.pacf.push_back(psi);
        lf = std::move(lf_new);
        lb = std::move(lb_new);
        path.log_det.push_back(log_det_from_cholesky(lf));
    }
    return path;
}

[[noreturn]] inline void raise_levinson_failure(const LevinsonPath& path) {
    if (path.failure_is_instability) throw NonStableModelError(path.failed_order, *path.failure);
    throw NumericalError(*path.failure);
}

} // namespace detail

/// Multivariate Durbin-Levinson fit of order gammas.size() - 1.
inline VarModel durbin_levinson(std::span<const Eigen::MatrixXd> gammas) {
    auto path = detail::levinson(gammas, static_cast<int>(gammas.size()) - 1);
    if (path.failure) detail::raise_levinson_failure(path);
    return std::move(path.model);
}

inline VarModel durbin_levinson(const std::vector<Eigen::MatrixXd>& gammas) {
    return durbin_levinson(std::span<const Eigen::MatrixXd>(gammas));
}

struct OrderSelection {
    int order = 0;
    std::vector<double> aic; ///< per candidate order; +inf where a fit failed
};

/// Averaged AIC over quantile levels: (1/n_q) sum_m [n log|V_p(alpha_m)| + 2 k^2 p].
inline OrderSelection select_order_aic(const QacfSet& qacf, std::size_t n, int p_max) {
    if (p_max < 0) throw ConfigError("select_order_aic: p_max must be >= 0");
    if (static_cast<std::size_t>(p_max) > qacf.h_max)
        throw ConfigError("select_order_aic: p_max exceeds the available QACF lags");
    const std::size_t nq = qacf.n_quantiles();
    if (nq == 0) throw InputError("select_order_aic: empty quantile grid");
    const double k = static_cast<double>(qacf.at(0, 0).rows());

    std::vector<detail::LevinsonPath> paths(nq);
    parallel_for(nq, [&](std::size_t m) {
        const auto seq = qacf.sequence(m, static_cast<std::size_t>(p_max));
        paths[m] = detail::levinson(seq, p_max);
    });

    OrderSelection sel;
    sel.aic.assign(static_cast<std::size_t>(p_max) + 1, std::numeric_limits<double>::infinity());
    for (int p = 0; p <= p_max; ++p) {
        double total = 0.0;
        bool ok = true;
        for (std::size_t m = 0; m < nq && ok; ++m) {
            if (paths[m].log_det.size() <= static_cast<std::size_t>(p)) ok = false;
            else total += static_cast<double>(n) * paths[m].log_det[static_cast<std::size_t>(p)];
        }
        if (ok) sel.aic[static_cast<std::size_t>(p)] = total / static_cast<double>(nq) + 2.0 * k * k * p;
    }
    int best = -1;
    for (int p = 0; p <= p_max; ++p)
        if (std::isfinite(sel.aic[static_cast<std::size_t>(p)]) && (best < 0 || sel.aic[static_cast<std::size_t>(p)] < sel.aic[static_cast<std::size_t>(best)]))
            best = p;
    if (best < 0) {
        for (std::size_t m = 0; m < nq; ++m)
            if (paths[m].failure) {
                try {
                    detail::raise_levinson_failure(paths[m]);
                } catch (const NumericalError& e) {
                    throw NumericalError(std::string(e.what()) + " (alpha=" + std::to_string(qacf.quantiles[m]) + ")");
                }
            }
        throw NumericalError("select_order_aic: no candidate order could be fitted");
    }
    sel.order = best;
    return sel;
}

/// U_p(omega) = I - sum_r Phi_r exp(-i 2 pi r omega).
inline Eigen::MatrixXcd var_transfer(const VarModel& model, double omega) {
    const Eigen::Index k = model.dimension();
    Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(k, k);
    for (int r = 1; r <= model.order; ++r) {
        const double angle = -2.0 * std::numbers::pi * r * omega;
        u -= model.coefficients[static_cast<std::size_t>(r - 1)].cast<std::complex<double>>() *
             std::complex<double>(std::cos(angle), std::sin(angle));
    }
    return u;
}

/// S(omega) = U^{-1} V U^{-H}.
inline Eigen::MatrixXcd var_spectrum_at(const VarModel& model, double omega) {
    const Eigen::MatrixXcd u = var_transfer(model, omega);
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(u);
    const double det = std::abs(lu.determinant());
    if (!(det > 1e-14)) throw NumericalError("var_spectrum: transfer matrix is singular at omega=" + std::to_string(omega));
    const Eigen::MatrixXcd uinv = lu.inverse();
    Eigen::MatrixXcd s = uinv * model.innovation_cov.cast<std::complex<double>>() * uinv.adjoint();
    return 0.5 * (s + s.adjoint());
}

inline SpectrumField var_spectrum(const VarModel& model, const std::vector<double>& freqs) {
    SpectrumField field;
    field.freqs = freqs;
    field.data.resize(freqs.size());
    for (std::size_t l = 0; l < freqs.size(); ++l) field.data[l] = var_spectrum_at(model, freqs[l]);
    return field;
}

/// Coherence between series j and jj. A field without quantile axis yields a
/// single-column CoherenceField.
inline CoherenceField coherence_from_spectrum(const SpectrumField& spec, Eigen::Index j, Eigen::Index jj) {
    if (j == jj) throw InputError("coherence_from_spectrum: need two distinct series");
    CoherenceField out;
    out.freqs = spec.freqs;
    out.quantiles = spec.quantiles;
    const std::size_t layers = spec.n_layers();
    out.values.resize(static_cast<Eigen::Index>(spec.freqs.size()), static_cast<Eigen::Index>(layers));
    for (std::size_t l = 0; l < spec.freqs.size(); ++l)
        for (std::size_t m = 0; m < layers; ++m)
            out.values(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m)) = coherence_value(spec.at(l, m), j, jj);
    return out;
}

struct QuantileVarFit {
    OrderSelection selection; ///< aic empty when the order was fixed
    CoherenceField raw;       ///< freqs l/(2n), l = 1..n
    std::vector<VarModel> models;
};

/// Parametric quantile coherence: one VAR per quantile level with a shared
/// order (AIC when `order` is empty), evaluated at l/(2n), l = 1..n.
inline QuantileVarFit quantile_var_coherence(const QacfSet& qacf, std::size_t n, std::optional<int> order,
                                             int p_max, Eigen::Index j = 0, Eigen::Index jj = 1) {
    QuantileVarFit fit;
    if (order) {
        if (*order < 0 || static_cast<std::size_t>(*order) > qacf.h_max)
            throw ConfigError("quantile_var_coherence: order outside the available QACF lags");
        fit.selection.order = *order;
    } else {
        fit.selection = select_order_aic(qacf, n, p_max);
    }
    const int p = fit.selection.order;
    const std::size_t nq = qacf.n_quantiles();
    fit.raw.freqs = coherence_frequencies(n);
    fit.raw.quantiles = qacf.quantiles;
    fit.raw.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nq));
    fit.models.resize(nq);
    parallel_for(nq, [&](std::size_t m) {
        try {
            fit.models[m] = durbin_levinson(qacf.sequence(m, static_cast<std::size_t>(p)));
            for (std::size_t l = 0; l < n; ++l)
                fit.raw.values(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m)) =
                    coherence_value(var_spectrum_at(fit.models[m], fit.raw.freqs[l]), j, jj);
        } catch (const NonStableModelError& e) {
            throw NonStableModelError(e.lag(), std::string(e.what()) + " (alpha=" + std::to_string(qacf.quantiles[m]) + ")");
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " (alpha=" + std::to_string(qacf.quantiles[m]) + ")");
        }
    });
    return fit;
}

/// Sample autocovariances Gamma(h) = n^{-1} sum_t (Y_{t+h} - mean)(Y_t - mean)^T, h = 0..h_max.
inline std::vector<Eigen::MatrixXd> sample_acf(const SeriesMatrix& y, std::size_t h_max) {
    const Eigen::Index n = y.rows();
    if (static_cast<Eigen::Index>(h_max) >= n) throw InputError("sample_acf: h_max must be below n");
    const Eigen::MatrixXd c = y.rowwise() - y.colwise().mean();
    std::vector<Eigen::MatrixXd> out(h_max + 1);
    for (std::size_t h = 0; h <= h_max; ++h) {
        const auto hh = static_cast<Eigen::Index>(h);
        out[h] = c.bottomRows(n - hh).transpose() * c.topRows(n - hh) / static_cast<double>(n);
    }
    return out;
}

struct OrdinaryVarFit {
    int order = 0;
    VarModel model;
    CoherenceCurve curve;
};

/// Ordinary VAR coherence between columns j and jj on l/(2n), l = 1..n.
inline OrdinaryVarFit ordinary_var_coherence(const SeriesMatrix& y, std::optional<int> order, int p_max,
                                             Eigen::Index j = 0, Eigen::Index jj = 1) {
    const auto n = static_cast<std::size_t>(y.rows());
    if (y.cols() < 2) throw InputError("ordinary_var_coherence: need at least two series");
    if (!y.allFinite()) throw InputError("ordinary_var_coherence: non-finite values");
    const int h = order ? *order : p_max;
    if (h < 0 || static_cast<std::size_t>(h) >= n) throw ConfigError("ordinary_var_coherence: order out of range");
    const auto gammas = sample_acf(y, static_cast<std::size_t>(h));

    OrdinaryVarFit fit;
    if (order) {
        fit.order = *order;
    } else {
        QacfSet set;
        set.h_max = static_cast<std::size_t>(h);
        set.quantiles = {0.5};
        set.data = gammas;
        fit.order = select_order_aic(set, n, p_max).order;
    }
    fit.model = durbin_levinson(std::span<const Eigen::MatrixXd>(gammas.data(), static_cast<std::size_t>(fit.order) + 1));
    fit.curve.freqs = coherence_frequencies(n);
    fit.curve.values.resize(static_cast<Eigen::Index>(n));
    for (std::size_t l = 0; l < n; ++l)
        fit.curve.values(static_cast<Eigen::Index>(l)) = coherence_value(var_spectrum_at(fit.model, fit.curve.freqs[l]), j, jj);
    return fit;
}

} // namespace qcoh
