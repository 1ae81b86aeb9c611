#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "qcoh/qspec.hpp"
#include "qcoh/rng.hpp"
#include "qcoh/sim.hpp"

using namespace qcoh;

namespace {

QPField random_hermitian_field(std::size_t n, std::size_t k, std::size_t nq, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    NormalSampler normal;
    std::vector<double> q;
    for (std::size_t m = 0; m < nq; ++m) q.push_back(0.1 + 0.8 * static_cast<double>(m) / static_cast<double>(nq));
    QPField f = QPField::zeros(n, k, q);
    const auto kk = static_cast<Eigen::Index>(k);
    for (std::size_t m = 0; m < nq; ++m)
        for (std::size_t l = 0; l <= n; ++l) {
            Eigen::MatrixXcd a(kk, kk);
            for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = {normal(rng), normal(rng)};
            Eigen::MatrixXcd h = a * a.adjoint();
            if (l == 0 || l == n) h = h.real().cast<std::complex<double>>(); // self-conjugate frequencies
            f.at(l, m) = h;
            if (l > 0 && l < n) f.at(2 * n - l, m) = h.conjugate();
        }
    return f;
}

} // namespace

TEST(Qacf, RoundTripRecoversField) {
    const QPField f = random_hermitian_field(128, 2, 3, 5);
    const QacfSet g = qacf_from_field(f, 128);
    const QPField back = field_from_qacf(g, 128);
    double err = 0.0;
    for (std::size_t i = 0; i < f.data.size(); ++i) err = std::max(err, (f.data[i] - back.data[i]).cwiseAbs().maxCoeff());
    EXPECT_LE(err, 1e-10);
}

TEST(Qacf, NegativeLagsAreTransposes) {
    const QPField f = random_hermitian_field(32, 3, 1, 9);
    const QacfSet g = qacf_from_field(f, 32);
    // Direct sum for Gamma(-h) compared with Gamma(h)^T.
    for (int h : {1, 5}) {
        Eigen::MatrixXcd neg = Eigen::MatrixXcd::Zero(3, 3);
        for (std::size_t l = 0; l < 64; ++l)
            neg += f.at(l, 0) * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(l) * h / 64.0);
        neg /= 64.0;
        EXPECT_LE((neg.real() - g.at(static_cast<std::size_t>(h), 0).transpose()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE(neg.imag().cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Qacf, RejectsNonSymmetricField) {
    QPField f = random_hermitian_field(16, 2, 1, 2);
    f.at(3, 0)(0, 1) += std::complex<double>(0.0, 1.0);
    EXPECT_THROW(qacf_from_field(f, 4), InputError);
    const QPField ok = random_hermitian_field(16, 2, 1, 2);
    EXPECT_THROW(qacf_from_field(ok, 17), InputError);
}

TEST(QuantilePeriodogram, LeastSquaresScalingMatchesDft) {
    // Every quantile fit reproduces a pure sinusoid, so z is the ordinary DFT.
    const std::size_t n = 64;
    const std::size_t l = 6;
    const double omega = grid_frequency(l, n);
    SeriesMatrix y(static_cast<Eigen::Index>(n), 1);
    std::complex<double> dft = 0.0;
    for (std::size_t t = 1; t <= n; ++t) {
        const double v = 2.0 * std::cos(2 * std::numbers::pi * omega * t) + 0.5 * std::sin(2 * std::numbers::pi * omega * t);
        y(static_cast<Eigen::Index>(t - 1), 0) = v;
        dft += v * std::polar(1.0, -2 * std::numbers::pi * omega * t);
    }
    dft /= std::sqrt(static_cast<double>(n));
    const QPField f = quantile_periodogram_field(y, {0.5});
    EXPECT_NEAR(f.at(l, 0)(0, 0).real(), std::norm(dft), 1e-8 * std::norm(dft));
}

TEST(QuantilePeriodogram, FieldIsHermitianAndConjugateSymmetric) {
    const SeriesMatrix y = simulate({ModelKind::Var2, 64, 4, 200});
    const QPField f = quantile_periodogram_field(y, {0.3, 0.5, 0.7});
    EXPECT_NO_THROW(require_conjugate_symmetric(f));
    for (std::size_t m = 0; m < 3; ++m) {
        EXPECT_EQ(f.at(0, m).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_NEAR(f.at(64, m).imag().cwiseAbs().maxCoeff(), 0.0, 1e-12);
        // rank one: |q12|^2 = q11 q22
        const auto& q = f.at(10, m);
        EXPECT_NEAR(std::norm(q(0, 1)), q(0, 0).real() * q(1, 1).real(), 1e-9 * (1 + std::norm(q(0, 1))));
    }
}

TEST(QuantilePeriodogram, WhiteNoiseLevelNearEtaSquared) {
    // Mean diagonal at alpha = 0.5 over frequencies and a few replicates.
    double sum = 0.0;
    std::size_t count = 0;
    for (std::uint64_t rep = 0; rep < 4; ++rep) {
        Rng rng = make_rng(77, rep);
        NormalSampler normal;
        SeriesMatrix y(512, 1);
        for (Eigen::Index t = 0; t < y.rows(); ++t) y(t, 0) = normal(rng);
        const QPField f = quantile_periodogram_field(y, {0.5});
        for (std::size_t l = 1; l < 512; ++l) {
            sum += f.at(l, 0)(0, 0).real();
            ++count;
        }
    }
    EXPECT_NEAR(sum / static_cast<double>(count), gaussian_median_spectrum_level(0.5), 0.1);
}

TEST(QuantilePeriodogram, ValidatesInput) {
    SeriesMatrix small(20, 2);
    small.setRandom();
    EXPECT_THROW(quantile_periodogram_field(small, {0.5}), InputError);
    SeriesMatrix y(64, 2);
    y.setRandom();
    EXPECT_THROW(quantile_periodogram_field(y, {0.5, 0.4}), InputError);
    EXPECT_THROW(quantile_periodogram_field(y, {1.0}), InputError);
}
