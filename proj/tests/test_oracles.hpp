#pragma once

// Slow, direct reference implementations used only by the tests.

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "qcoh/rng.hpp"

namespace oracle {

inline double trig_qr_objective(const std::vector<double>& y, double omega, double alpha, double c, double a, double b) {
    double obj = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double t = static_cast<double>(i + 1);
        const double u = y[i] - c - a * std::cos(2 * std::numbers::pi * omega * t) - b * std::sin(2 * std::numbers::pi * omega * t);
        obj += u >= 0 ? alpha * u : (alpha - 1.0) * u;
    }
    return obj;
}

/// Minimum over all basic solutions (fits through p points with a
/// nonsingular design block). The LP optimum is attained at one of them.
inline double brute_force_trig_qr(const std::vector<double>& y, double omega, double alpha) {
    const std::size_t n = y.size();
    const bool nyquist = std::abs(omega - 0.5) < 1e-12;
    auto row = [&](std::size_t i) {
        const double t = static_cast<double>(i + 1);
        Eigen::Vector3d r(1.0, std::cos(2 * std::numbers::pi * omega * t), std::sin(2 * std::numbers::pi * omega * t));
        return r;
    };
    double best = std::numeric_limits<double>::infinity();
    if (nyquist) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                Eigen::Matrix2d x;
                x << 1.0, row(i)(1), 1.0, row(j)(1);
                if (std::abs(x.determinant()) < 1e-9) continue;
                const Eigen::Vector2d beta = x.partialPivLu().solve(Eigen::Vector2d(y[i], y[j]));
                best = std::min(best, trig_qr_objective(y, omega, alpha, beta(0), beta(1), 0.0));
            }
        return best;
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            for (std::size_t k = j + 1; k < n; ++k) {
                Eigen::Matrix3d x;
                x.row(0) = row(i);
                x.row(1) = row(j);
                x.row(2) = row(k);
                if (std::abs(x.determinant()) < 1e-9) continue;
                const Eigen::Vector3d beta = x.partialPivLu().solve(Eigen::Vector3d(y[i], y[j], y[k]));
                best = std::min(best, trig_qr_objective(y, omega, alpha, beta(0), beta(1), beta(2)));
            }
    return best;
}

/// Random stable VAR(p) of dimension k with companion spectral radius `radius`.
struct RandomVar {
    std::vector<Eigen::MatrixXd> phi;
    Eigen::MatrixXd sigma;
};

inline Eigen::MatrixXd companion(const std::vector<Eigen::MatrixXd>& phi) {
    const auto k = phi[0].rows();
    const auto p = static_cast<Eigen::Index>(phi.size());
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(k * p, k * p);
    for (Eigen::Index r = 0; r < p; ++r) f.block(0, r * k, k, k) = phi[static_cast<std::size_t>(r)];
    if (p > 1) f.block(k, 0, k * (p - 1), k * (p - 1)).setIdentity();
    return f;
}

inline double spectral_radius(const Eigen::MatrixXd& f) {
    return Eigen::EigenSolver<Eigen::MatrixXd>(f).eigenvalues().cwiseAbs().maxCoeff();
}

inline RandomVar random_stable_var(Eigen::Index k, int p, qcoh::Rng& rng, double radius = 0.85) {
    qcoh::NormalSampler normal;
    RandomVar v;
    for (int r = 0; r < p; ++r) {
        Eigen::MatrixXd m(k, k);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng) / (1.0 + r);
        v.phi.push_back(m);
    }
    // Scaling Phi_r by s^r scales every companion eigenvalue by s.
    const double rho = spectral_radius(companion(v.phi));
    const double s = radius / rho;
    for (int r = 0; r < p; ++r) v.phi[static_cast<std::size_t>(r)] *= std::pow(s, r + 1);
    Eigen::MatrixXd a(k, k);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
    v.sigma = a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(k, k);
    return v;
}

/// Gamma(0..h_max) of a stable VAR through the companion Lyapunov equation.
inline std::vector<Eigen::MatrixXd> var_autocovariances(const RandomVar& v, int h_max) {
    const auto k = v.sigma.rows();
    const Eigen::MatrixXd f = companion(v.phi);
    const auto d = f.rows();
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(d, d);
    q.topLeftCorner(k, k) = v.sigma;
    const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(d * d, d * d) - Eigen::kroneckerProduct(f, f);
    const Eigen::VectorXd vec = lhs.fullPivLu().solve(Eigen::Map<const Eigen::VectorXd>(q.data(), d * d));
    Eigen::MatrixXd sx = Eigen::Map<const Eigen::MatrixXd>(vec.data(), d, d);
    sx = 0.5 * (sx + sx.transpose());
    std::vector<Eigen::MatrixXd> out;
    Eigen::MatrixXd fh = Eigen::MatrixXd::Identity(d, d);
    for (int h = 0; h <= h_max; ++h) {
        out.push_back((fh * sx).topLeftCorner(k, k));
        fh = f * fh;
    }
    return out;
}

/// Solves [Gamma(1) .. Gamma(p)] = [Phi_1 .. Phi_p] G, G_{r,h} = Gamma(h - r), directly.
inline std::vector<Eigen::MatrixXd> dense_yule_walker(const std::vector<Eigen::MatrixXd>& gammas, int p) {
    const auto k = gammas[0].rows();
    auto gamma = [&](int h) -> Eigen::MatrixXd {
        return h >= 0 ? gammas[static_cast<std::size_t>(h)] : Eigen::MatrixXd(gammas[static_cast<std::size_t>(-h)].transpose());
    };
    Eigen::MatrixXd g(k * p, k * p), rhs(k, k * p);
    for (int r = 0; r < p; ++r)
        for (int h = 0; h < p; ++h) g.block(r * k, h * k, k, k) = gamma(h - r);
    for (int h = 0; h < p; ++h) rhs.block(0, h * k, k, k) = gamma(h + 1);
    const Eigen::MatrixXd phi = g.transpose().fullPivLu().solve(rhs.transpose()).transpose();
    std::vector<Eigen::MatrixXd> out;
    for (int r = 0; r < p; ++r) out.push_back(phi.block(0, r * k, k, k));
    return out;
}

/// Natural smoothing spline values via dense matrices:
/// (R + lambda Q^T Q) gamma = Q^T y, g = y - lambda Q gamma.
inline Eigen::VectorXd dense_spline(const std::vector<double>& x, const Eigen::VectorXd& y, double lambda) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n - 2), r = Eigen::MatrixXd::Zero(n - 2, n - 2);
    for (Eigen::Index j = 1; j + 1 < n; ++j) {
        const double h0 = x[static_cast<std::size_t>(j)] - x[static_cast<std::size_t>(j - 1)];
        const double h1 = x[static_cast<std::size_t>(j + 1)] - x[static_cast<std::size_t>(j)];
        q(j - 1, j - 1) = 1.0 / h0;
        q(j, j - 1) = -1.0 / h0 - 1.0 / h1;
        q(j + 1, j - 1) = 1.0 / h1;
        r(j - 1, j - 1) = (h0 + h1) / 3.0;
        if (j + 1 < n - 1) r(j - 1, j) = r(j, j - 1) = h1 / 6.0;
    }
    const Eigen::VectorXd gamma = (r + lambda * q.transpose() * q).fullPivLu().solve(q.transpose() * y);
    return y - lambda * q * gamma;
}

} // namespace oracle
