#pragma once

#include <algorithm>
#include <atomic>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace qcoh {

/// Coherence values on a (frequency x quantile) grid.
struct CoherenceField {
    std::vector<double> freqs;
    std::vector<double> quantiles;
    Eigen::MatrixXd values; // freqs.size() x quantiles.size()

    std::size_t n_freqs() const { return freqs.size(); }
    std::size_t n_quantiles() const { return quantiles.size(); }
    double operator()(std::size_t l, std::size_t m) const {
        return values(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m));
    }
};

/// Coherence as a function of frequency only (ordinary VAR coherence).
struct CoherenceCurve {
    std::vector<double> freqs;
    Eigen::VectorXd values;
};

/// Largest pre-clip excess c - 1 seen by coherence_value since the last reset.
class CoherenceDiagnostics {
public:
    static CoherenceDiagnostics& instance() {
        static CoherenceDiagnostics d;
        return d;
    }

    void record(double raw) {
        const double excess = raw - 1.0;
        double seen = max_excess_.load();
        while (excess > seen && !max_excess_.compare_exchange_weak(seen, excess)) {
        }
        evaluations_.fetch_add(1, std::memory_order_relaxed);
    }

    double max_excess() const { return max_excess_.load(); }
    long long evaluations() const { return evaluations_.load(); }
    void reset() {
        max_excess_ = -1.0;
        evaluations_ = 0;
    }

private:
    std::atomic<double> max_excess_{-1.0};
    std::atomic<long long> evaluations_{0};
};

/// Tolerated numerical excess of |s_12|^2 / (s_11 s_22) above 1.
inline constexpr double kCoherenceExcessTolerance = 1e-12;

/// |s_jj'|^2 / (s_jj s_j'j') clipped to [0, 1].
inline double coherence_value(const Eigen::MatrixXcd& s, Eigen::Index j, Eigen::Index jj) {
    const double a = s(j, j).real();
    const double b = s(jj, jj).real();
    if (!(a > 0.0 && b > 0.0)) throw NumericalError("coherence: spectrum has a nonpositive diagonal entry");
    const double c = std::norm(s(j, jj)) / (a * b);
    CoherenceDiagnostics::instance().record(c);
    if (!(c <= 1.0 + kCoherenceExcessTolerance))
        throw NumericalError("coherence: value " + std::to_string(c) + " exceeds 1 beyond tolerance");
    return std::clamp(c, 0.0, 1.0);
}

} // namespace qcoh
