#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "errors.hpp"
#include "grid.hpp"
#include "parallel.hpp"
#include "quantreg.hpp"

namespace qcoh {

/**
 * Raw extended quantile periodogram matrices Q(omega_l, alpha_m) on the
 * 2n-point grid omega_l = l/(2n), l = 0..2n-1.
 *
 * Only l = 1..n are computed from quantile regressions; l = 0 is the zero
 * matrix and l = n+1..2n-1 are conjugates of l' = 2n - l.
 */
struct QPField {
    std::size_t n = 0; ///< series length
    std::size_t k = 0; ///< number of series
    std::vector<double> quantiles;
    std::vector<Eigen::MatrixXcd> data; ///< index l * n_q + m

    std::size_t n_freqs() const { return 2 * n; }
    std::size_t n_quantiles() const { return quantiles.size(); }
    double freq(std::size_t l) const { return grid_frequency(l, n); }

    Eigen::MatrixXcd& at(std::size_t l, std::size_t m) { return data[l * quantiles.size() + m]; }
    const Eigen::MatrixXcd& at(std::size_t l, std::size_t m) const { return data[l * quantiles.size() + m]; }

    /// Empty field of zero matrices.
    static QPField zeros(std::size_t n, std::size_t k, std::vector<double> quantiles) {
        QPField f;
        f.n = n;
        f.k = k;
        f.quantiles = std::move(quantiles);
        f.data.assign(2 * n * f.quantiles.size(), Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)));
        return f;
    }
};

/// Real k x k autocovariance matrices Gamma(h, alpha_m), h = 0..h_max.
struct QacfSet {
    std::size_t h_max = 0;
    std::vector<double> quantiles;
    std::vector<Eigen::MatrixXd> data; ///< index h * n_q + m

    std::size_t n_quantiles() const { return quantiles.size(); }
    Eigen::MatrixXd& at(std::size_t h, std::size_t m) { return data[h * quantiles.size() + m]; }
    const Eigen::MatrixXd& at(std::size_t h, std::size_t m) const { return data[h * quantiles.size() + m]; }

    /// Gamma(0..h, alpha_m) as a contiguous sequence.
    std::vector<Eigen::MatrixXd> sequence(std::size_t m, std::size_t up_to) const {
        std::vector<Eigen::MatrixXd> seq;
        seq.reserve(up_to + 1);
        for (std::size_t h = 0; h <= up_to; ++h) seq.push_back(at(h, m));
        return seq;
    }
};

/// Quantile-regression Fourier coefficients z_j(omega_l, alpha_m) for one
/// series at l = 1..n. Entry (l - 1) * n_q + m.
///
/// z = (sqrt(n)/2)(A - iB) off the Nyquist frequency; at omega = 1/2 the fit
/// has a cosine term only and z = sqrt(n) A, which is the same normalization
/// that makes sqrt(n) A/2 - i sqrt(n) B/2 the DFT for least squares fits.
inline std::vector<std::complex<double>> quantile_fourier_coefficients(std::span<const double> y,
                                                                       const std::vector<double>& quantiles) {
    const std::size_t n = y.size();
    const std::size_t nq = quantiles.size();
    const double root_n = std::sqrt(static_cast<double>(n));
    std::vector<std::complex<double>> z(n * nq);
    parallel_for(n, [&](std::size_t idx) {
        const std::size_t l = idx + 1;
        TrigQuantileSolver solver(y, grid_frequency(l, n));
        for (std::size_t m = 0; m < nq; ++m) {
            TrigQrSolution sol;
            try {
                sol = solver.solve(quantiles[m]);
            } catch (const NumericalError& e) {
                throw NumericalError(std::string(e.what()) + " (l=" + std::to_string(l) + ", m=" + std::to_string(m) + ")");
            }
            z[idx * nq + m] = (l == n) ? std::complex<double>(root_n * sol.a_coef, 0.0)
                                       : 0.5 * root_n * std::complex<double>(sol.a_coef, -sol.b_coef);
        }
    });
    return z;
}

/// Assembles Q(omega_l, alpha_m) = z z^H from per-series coefficients and
/// fills the conjugate-symmetric half.
inline QPField field_from_coefficients(std::size_t n, const std::vector<std::vector<std::complex<double>>>& coefficients,
                                       const std::vector<double>& quantiles) {
    const std::size_t k = coefficients.size();
    const std::size_t nq = quantiles.size();
    QPField field = QPField::zeros(n, k, quantiles);
    Eigen::VectorXcd z(static_cast<Eigen::Index>(k));
    for (std::size_t l = 1; l <= n; ++l) {
        for (std::size_t m = 0; m < nq; ++m) {
            for (std::size_t j = 0; j < k; ++j) z(static_cast<Eigen::Index>(j)) = coefficients[j][(l - 1) * nq + m];
            field.at(l, m) = z * z.adjoint();
            if (l < n) field.at(2 * n - l, m) = field.at(l, m).conjugate();
        }
    }
    return field;
}

inline QPField quantile_periodogram_field(const SeriesMatrix& series, const std::vector<double>& quantiles) {
    const auto n = static_cast<std::size_t>(series.rows());
    const auto k = static_cast<std::size_t>(series.cols());
    if (n < 32) throw InputError("quantile_periodogram_field: need n >= 32");
    if (k < 1) throw InputError("quantile_periodogram_field: no series");
    require_quantile_grid(quantiles);

    std::vector<std::vector<std::complex<double>>> coefficients(k);
    for (std::size_t j = 0; j < k; ++j) {
        const Eigen::VectorXd col = series.col(static_cast<Eigen::Index>(j));
        coefficients[j] = quantile_fourier_coefficients(std::span<const double>(col.data(), n), quantiles);
    }
    return field_from_coefficients(n, coefficients, quantiles);
}

/// Checks that the field is Hermitian and conjugate-symmetric in frequency,
/// which is what makes its inverse transform real.
inline void require_conjugate_symmetric(const QPField& field, double rel_tol = 1e-10) {
    double scale = 0.0;
    for (const auto& q : field.data) scale = std::max(scale, q.cwiseAbs().maxCoeff());
    const double tol = rel_tol * (scale > 0.0 ? scale : 1.0);
    const std::size_t n = field.n;
    for (std::size_t m = 0; m < field.n_quantiles(); ++m) {
        for (std::size_t l = 0; l <= n; ++l) {
            const auto& q = field.at(l, m);
            if ((q - q.adjoint()).cwiseAbs().maxCoeff() > tol)
                throw InputError("qacf_from_field: field is not Hermitian at l=" + std::to_string(l));
            const auto& mirror = field.at((2 * n - l) % (2 * n), m);
            if ((mirror - q.conjugate()).cwiseAbs().maxCoeff() > tol)
                throw InputError("qacf_from_field: field breaks conjugate symmetry at l=" + std::to_string(l));
        }
    }
}

/**
 * Gamma(h, alpha_m) = (2n)^{-1} sum_{l=0}^{2n-1} Q(omega_l, alpha_m) exp(i 2 pi omega_l h)
 * for h = 0..h_max, one length-2n inverse FFT per matrix entry and quantile.
 * h_max may be n: lags 0..n together with Gamma(-h) = Gamma(h)^T carry the
 * whole field.
 */
inline QacfSet qacf_from_field(const QPField& field, std::size_t h_max) {
    const std::size_t n = field.n;
    const std::size_t k = field.k;
    const std::size_t nq = field.n_quantiles();
    if (h_max > n) throw InputError("qacf_from_field: h_max must not exceed n");
    require_conjugate_symmetric(field);

    QacfSet out;
    out.h_max = h_max;
    out.quantiles = field.quantiles;
    out.data.assign((h_max + 1) * nq, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)));

    const std::size_t entries = k * k * nq;
    std::vector<double> worst_imag(entries, 0.0), worst_real(entries, 0.0);
    parallel_for(entries, [&](std::size_t task) {
        const std::size_t m = task / (k * k);
        const auto j = static_cast<Eigen::Index>((task / k) % k);
        const auto jj = static_cast<Eigen::Index>(task % k);
        std::vector<std::complex<double>> spectrum(2 * n), lags;
        for (std::size_t l = 0; l < 2 * n; ++l) spectrum[l] = field.at(l, m)(j, jj);
        Eigen::FFT<double> fft;
        fft.inv(lags, spectrum); // includes the 1/(2n) factor
        for (std::size_t h = 0; h <= h_max; ++h) {
            out.at(h, m)(j, jj) = lags[h].real();
            worst_imag[task] = std::max(worst_imag[task], std::abs(lags[h].imag()));
            worst_real[task] = std::max(worst_real[task], std::abs(lags[h].real()));
        }
    });

    double imag = 0.0, real = 0.0;
    for (std::size_t t = 0; t < entries; ++t) {
        imag = std::max(imag, worst_imag[t]);
        real = std::max(real, worst_real[t]);
    }
    if (imag > 1e-8 * real + 1e-300) throw NumericalError("qacf_from_field: inverse transform is not real");
    return out;
}

/// Forward transform of a full QACF (h_max = n):
/// Q(omega_l) = Gamma(0) + sum_{h=1}^{n-1} [Gamma(h) e^{-i2pi omega_l h} + Gamma(h)^T e^{i2pi omega_l h}] + Gamma(n)(-1)^l.
inline QPField field_from_qacf(const QacfSet& qacf, std::size_t n) {
    if (qacf.h_max != n) throw InputError("field_from_qacf: need lags 0..n");
    const std::size_t nq = qacf.n_quantiles();
    const auto k = static_cast<std::size_t>(qacf.at(0, 0).rows());
    QPField field = QPField::zeros(n, k, qacf.quantiles);
    const std::size_t entries = k * k * nq;
    parallel_for(entries, [&](std::size_t task) {
        const std::size_t m = task / (k * k);
        const auto j = static_cast<Eigen::Index>((task / k) % k);
        const auto jj = static_cast<Eigen::Index>(task % k);
        // Lag sequence on the circle of length 2n: index h for h >= 0, 2n - h for -h.
        std::vector<std::complex<double>> lags(2 * n, 0.0), spectrum;
        lags[0] = qacf.at(0, m)(j, jj);
        for (std::size_t h = 1; h < n; ++h) {
            lags[h] = qacf.at(h, m)(j, jj);
            lags[2 * n - h] = qacf.at(h, m)(jj, j);
        }
        lags[n] = qacf.at(n, m)(j, jj);
        Eigen::FFT<double> fft;
        fft.fwd(spectrum, lags);
        for (std::size_t l = 0; l < 2 * n; ++l) field.at(l, m)(j, jj) = spectrum[l];
    });
    return field;
}

} // namespace qcoh
