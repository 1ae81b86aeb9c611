#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "coherence.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "parallel.hpp"
#include "qspec.hpp"
#include "rng.hpp"

namespace qcoh {

enum class ModelKind { Var2, Varma21, MixtureLower, MixtureUpper };

/// How the second mixture component is tied to the first.
///  - SharedBandpass: Z2 is built like Z1 from its own lowpass/highpass
///    components and the bandpass component of Z1 delayed by 10.
///  - DelayedCopy: Z2 is Z1 delayed by 10.
enum class MixtureCoupling { SharedBandpass, DelayedCopy };

inline constexpr std::array<ModelKind, 4> kAllModels = {ModelKind::Var2, ModelKind::Varma21, ModelKind::MixtureLower,
                                                         ModelKind::MixtureUpper};

inline std::string_view model_name(ModelKind kind) {
    switch (kind) {
    case ModelKind::Var2: return "var2";
    case ModelKind::Varma21: return "varma21";
    case ModelKind::MixtureLower: return "mix-lower";
    case ModelKind::MixtureUpper: return "mix-upper";
    }
    return "?";
}

inline ModelKind parse_model(std::string_view name) {
    for (ModelKind k : kAllModels)
        if (model_name(k) == name) return k;
    throw ConfigError("unknown model '" + std::string(name) + "' (expected var2, varma21, mix-lower, mix-upper)");
}

inline std::string_view coupling_name(MixtureCoupling c) { return c == MixtureCoupling::SharedBandpass ? "shared" : "delayed"; }

inline MixtureCoupling parse_coupling(std::string_view name) {
    if (name == "shared") return MixtureCoupling::SharedBandpass;
    if (name == "delayed") return MixtureCoupling::DelayedCopy;
    throw ConfigError("unknown mixture coupling '" + std::string(name) + "' (expected shared or delayed)");
}

struct ModelSpec {
    ModelKind kind = ModelKind::Var2;
    std::size_t n = 500;
    std::uint64_t seed = 1;
    std::size_t burn_in = 1000;
    MixtureCoupling coupling = MixtureCoupling::SharedBandpass;
};

/// Coefficients of the two linear benchmark models.
struct VarmaCoefficients {
    Eigen::Matrix2d a1, a2, b1, sigma;
};

inline VarmaCoefficients varma_coefficients(ModelKind kind) {
    VarmaCoefficients c;
    if (kind == ModelKind::Var2) {
        c.a1 << 1.5, -0.6, 0.3, 0.2;
        c.a2 << -0.5, 0.3, 0.7, -0.2;
        c.b1.setZero();
        c.sigma << 4, 1, 1, 2;
    } else if (kind == ModelKind::Varma21) {
        c.a1 << 0.816, -0.623, -1.116, 1.074;
        c.a2 << -0.643, 0.592, 0.615, -0.133;
        c.b1 << 0, -1.248, -0.801, 0;
        c.sigma << 4, 2, 2, 5;
    } else {
        throw InputError("varma_coefficients: mixture models have no VARMA coefficients");
    }
    return c;
}

/// Moduli of the eigenvalues of the 4 x 4 companion matrix [A1 A2; I 0].
inline std::vector<double> companion_moduli(const Eigen::Matrix2d& a1, const Eigen::Matrix2d& a2) {
    Eigen::Matrix4d c = Eigen::Matrix4d::Zero();
    c.block<2, 2>(0, 0) = a1;
    c.block<2, 2>(0, 2) = a2;
    c.block<2, 2>(2, 0) = Eigen::Matrix2d::Identity();
    const Eigen::Vector4cd ev = Eigen::EigenSolver<Eigen::Matrix4d>(c).eigenvalues();
    std::vector<double> mod(4);
    for (int i = 0; i < 4; ++i) mod[static_cast<std::size_t>(i)] = std::abs(ev(i));
    std::sort(mod.begin(), mod.end());
    return mod;
}

inline double mixture_weight_1(double x) { return std::clamp(0.45 + 0.4375 * x, 0.1, 0.8); }
inline double mixture_weight_2_lower(double x) { return std::clamp(0.25 - 0.625 * x, 0.0, 0.5); }
inline double mixture_weight_2_upper(double x) { return std::clamp(0.25 + 0.625 * x, 0.0, 0.5); }

/// Innovation variance that gives an AR(1) unit marginal variance.
inline double ar1_innovation_variance(double phi) { return 1.0 - phi * phi; }

/// Innovation variance that gives an AR(2) unit marginal variance.
inline double ar2_innovation_variance(double phi1, double phi2) {
    return (1.0 + phi2) * ((1.0 - phi2) * (1.0 - phi2) - phi1 * phi1) / (1.0 - phi2);
}

namespace detail {

inline SeriesMatrix simulate_varma(const ModelSpec& spec) {
    const VarmaCoefficients c = varma_coefficients(spec.kind);
    const auto moduli = companion_moduli(c.a1, c.a2);
    if (!(moduli.back() < 1.0)) throw ConfigError("simulate: model is not stationary");
    const Eigen::Matrix2d chol = c.sigma.llt().matrixL();

    Rng rng = make_rng(spec.seed, 1);
    NormalSampler normal;
    const std::size_t total = spec.n + spec.burn_in;
    SeriesMatrix out(static_cast<Eigen::Index>(spec.n), 2);
    Eigen::Vector2d z1 = Eigen::Vector2d::Zero(), z2 = Eigen::Vector2d::Zero(), w_prev = Eigen::Vector2d::Zero();
    for (std::size_t t = 0; t < total; ++t) {
        Eigen::Vector2d e;
        e(0) = normal(rng);
        e(1) = normal(rng);
        const Eigen::Vector2d w = chol * e;
        const Eigen::Vector2d z = c.a1 * z1 + c.a2 * z2 + w - c.b1 * w_prev;
        z2 = z1;
        z1 = z;
        w_prev = w;
        if (t >= spec.burn_in) out.row(static_cast<Eigen::Index>(t - spec.burn_in)) = z.transpose();
    }
    return out;
}

/// Unit-variance AR components sampled jointly over `total` steps.
struct MixtureComponents {
    std::vector<double> lowpass, highpass, bandpass;
};

inline MixtureComponents mixture_components(std::size_t total, Rng& rng, NormalSampler& normal, bool with_bandpass) {
    const double s1 = std::sqrt(ar1_innovation_variance(0.8));
    const double s2 = std::sqrt(ar1_innovation_variance(-0.7));
    const double s3 = std::sqrt(ar2_innovation_variance(0.55, -0.81));
    MixtureComponents c;
    c.lowpass.resize(total);
    c.highpass.resize(total);
    if (with_bandpass) c.bandpass.resize(total);
    double u1 = 0.0, u2 = 0.0, u3a = 0.0, u3b = 0.0;
    for (std::size_t t = 0; t < total; ++t) {
        u1 = 0.8 * u1 + s1 * normal(rng);
        u2 = -0.7 * u2 + s2 * normal(rng);
        c.lowpass[t] = u1;
        c.highpass[t] = u2;
        if (with_bandpass) {
            const double u3 = 0.55 * u3a - 0.81 * u3b + s3 * normal(rng);
            u3b = u3a;
            u3a = u3;
            c.bandpass[t] = u3;
        }
    }
    return c;
}

inline double mix(double u1, double u2, double u3, bool lower) {
    const double w1 = mixture_weight_1(u1);
    const double xi = w1 * u2 + (1.0 - w1) * u1;
    const double w2 = lower ? mixture_weight_2_lower(xi) : mixture_weight_2_upper(xi);
    return w2 * u3 + (1.0 - w2) * xi;
}

inline SeriesMatrix simulate_mixture(const ModelSpec& spec) {
    constexpr std::size_t delay = 10;
    const bool lower = spec.kind == ModelKind::MixtureLower;
    const std::size_t total = spec.n + spec.burn_in + delay;
    Rng rng = make_rng(spec.seed, 2);
    NormalSampler normal;
    const MixtureComponents first = mixture_components(total, rng, normal, true);

    std::vector<double> z1(total);
    for (std::size_t t = 0; t < total; ++t) z1[t] = mix(first.lowpass[t], first.highpass[t], first.bandpass[t], lower);

    SeriesMatrix out(static_cast<Eigen::Index>(spec.n), 2);
    if (spec.coupling == MixtureCoupling::DelayedCopy) {
        for (std::size_t i = 0; i < spec.n; ++i) {
            const std::size_t t = spec.burn_in + delay + i;
            out(static_cast<Eigen::Index>(i), 0) = z1[t];
            out(static_cast<Eigen::Index>(i), 1) = z1[t - delay];
        }
        return out;
    }
    const MixtureComponents second = mixture_components(total, rng, normal, false);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const std::size_t t = spec.burn_in + delay + i;
        out(static_cast<Eigen::Index>(i), 0) = z1[t];
        out(static_cast<Eigen::Index>(i), 1) = mix(second.lowpass[t], second.highpass[t], first.bandpass[t - delay], lower);
    }
    return out;
}

} // namespace detail

/// n x 2 sample of a benchmark model after discarding burn_in steps.
inline SeriesMatrix simulate(const ModelSpec& spec) {
    if (spec.n < 64) throw ConfigError("simulate: need n >= 64");
    switch (spec.kind) {
    case ModelKind::Var2:
    case ModelKind::Varma21: return detail::simulate_varma(spec);
    case ModelKind::MixtureLower:
    case ModelKind::MixtureUpper: return detail::simulate_mixture(spec);
    }
    throw ConfigError("simulate: unknown model");
}

struct OracleConfig {
    std::size_t replicates = 500;
    std::vector<double> quantiles;
    std::size_t n = 500;
    std::uint64_t seed = 20240501;
    std::size_t burn_in = 1000;
    MixtureCoupling coupling = MixtureCoupling::SharedBandpass;
};

/// Replicates summed per wave before being added to the running total; fixed so
/// that the reduction order does not depend on the thread count.
inline constexpr std::size_t kOracleWave = 16;

/**
 * Coherence of the averaged raw quantile periodogram matrices of `replicates`
 * bivariate series, on l/(2n), l = 1..n. `generate(seed)` returns an n x 2
 * sample; replicate r is generated from stream_seed(seed, r).
 */
template <class Generator>
CoherenceField averaged_periodogram_coherence(Generator&& generate, std::size_t n, std::size_t replicates,
                                              const std::vector<double>& quantiles, std::uint64_t seed) {
    if (replicates < 1) throw ConfigError("oracle: need at least one replicate");
    require_quantile_grid(quantiles);
    const std::size_t nq = quantiles.size();
    const std::size_t cells = n * nq;

    std::vector<double> s11(cells, 0.0), s22(cells, 0.0);
    std::vector<std::complex<double>> s12(cells, 0.0);
    for (std::size_t wave = 0; wave < replicates; wave += kOracleWave) {
        const std::size_t count = std::min(kOracleWave, replicates - wave);
        std::vector<std::vector<std::complex<double>>> z1(count), z2(count);
        parallel_for(count, [&](std::size_t i) {
            const SeriesMatrix y = generate(stream_seed(seed, wave + i));
            if (static_cast<std::size_t>(y.rows()) != n || y.cols() != 2) throw InputError("oracle: generator returned a wrong shape");
            const Eigen::VectorXd a = y.col(0), b = y.col(1);
            z1[i] = quantile_fourier_coefficients(std::span<const double>(a.data(), n), quantiles);
            z2[i] = quantile_fourier_coefficients(std::span<const double>(b.data(), n), quantiles);
        });
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t c = 0; c < cells; ++c) {
                s11[c] += std::norm(z1[i][c]);
                s22[c] += std::norm(z2[i][c]);
                s12[c] += z1[i][c] * std::conj(z2[i][c]);
            }
    }

    CoherenceField out;
    out.freqs = coherence_frequencies(n);
    out.quantiles = quantiles;
    out.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nq));
    Eigen::MatrixXcd s(2, 2);
    for (std::size_t l = 0; l < n; ++l)
        for (std::size_t m = 0; m < nq; ++m) {
            const std::size_t c = l * nq + m;
            s << s11[c], s12[c], std::conj(s12[c]), s22[c];
            out.values(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m)) = coherence_value(s, 0, 1);
        }
    return out;
}

/// "True" quantile coherence of a benchmark model: the averaged-periodogram
/// coherence over cfg.replicates simulated series.
inline CoherenceField true_coherence_oracle(ModelKind kind, const OracleConfig& cfg) {
    return averaged_periodogram_coherence(
        [&](std::uint64_t s) { return simulate({kind, cfg.n, s, cfg.burn_in, cfg.coupling}); }, cfg.n, cfg.replicates,
        cfg.quantiles, cfg.seed);
}

/// eta^2 = alpha(1-alpha) / phi(Phi^{-1}(alpha))^2 for a standard normal marginal:
/// the flat level of the quantile periodogram of Gaussian white noise.
inline double gaussian_median_spectrum_level(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("gaussian_median_spectrum_level: alpha must lie in (0,1)");
    const boost::math::normal_distribution<double> nd;
    const double q = boost::math::quantile(nd, alpha);
    const double dens = boost::math::pdf(nd, q);
    return alpha * (1.0 - alpha) / (dens * dens);
}

} // namespace qcoh
