#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace qcoh {

/// Check (pinball) loss u * (alpha - 1{u < 0}).
inline double check_loss(double u, double alpha) noexcept { return u * (alpha - (u < 0.0 ? 1.0 : 0.0)); }

struct TrigQrSolution {
    double intercept = 0.0;
    double a_coef = 0.0; ///< cosine coefficient
    double b_coef = 0.0; ///< sine coefficient; 0 at omega = 1/2
    double objective = 0.0;
};

/**
 * Exact solver for the trigonometric quantile regression
 *
 *     min  sum_t rho_alpha(y_t - lambda - A cos(2 pi omega t) - B sin(2 pi omega t)),  t = 1..n
 *
 * at one frequency. The problem is a linear program whose optimum is attained
 * at a basic solution (a fit passing through p data points, p = number of
 * parameters). The solver walks between such vertices: at each vertex it
 * evaluates the directional derivative along the 2p edges, follows the
 * steepest descending one, and finds the exact minimizer along that edge by a
 * weighted-median line search. Every move strictly decreases the objective,
 * so the walk terminates at an optimal vertex.
 *
 * The last basis is kept between calls, so sweeping alpha upward for a fixed
 * (y, omega) restarts each fit from the previous optimum.
 */
class TrigQuantileSolver {
public:
    TrigQuantileSolver(std::span<const double> y, double omega) : n_(y.size()), y_(y.begin(), y.end()) {
        if (n_ < 8) throw InputError("trig_quantile_regression: need n >= 8");
        for (double v : y_)
            if (!std::isfinite(v)) throw InputError("trig_quantile_regression: non-finite input");
        if (!(omega > 0.0 && omega <= 0.5)) throw InputError("trig_quantile_regression: omega must lie in (0, 1/2]");
        nyquist_ = std::abs(omega - 0.5) < 1e-12;
        p_ = nyquist_ ? 2 : 3;

        // At omega = 1/2 the sine column vanishes; it is kept as zeros so the
        // hot loops stay branch-free.
        cos_.resize(n_);
        sin_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            const double t = static_cast<double>(i + 1);
            if (nyquist_) {
                cos_[i] = (i % 2 == 0) ? -1.0 : 1.0;
                sin_[i] = 0.0;
            } else {
                const double cycles = omega * t;
                const double angle = 2.0 * std::numbers::pi * (cycles - std::floor(cycles));
                cos_[i] = std::cos(angle);
                sin_[i] = std::sin(angle);
            }
        }
        double scale = 0.0;
        for (double v : y_) scale = std::max(scale, std::abs(v));
        residual_tol_ = 1e-11 * (scale > 0.0 ? scale : 1.0);
        slope_tol_ = 1e-11 * static_cast<double>(n_);
        residuals_.resize(n_);
        slopes_.resize(n_);
        steps_.resize(n_);
        in_basis_.assign(n_, 0);
    }

    int parameter_count() const noexcept { return p_; }
    std::size_t descent_steps() const noexcept { return descent_steps_; }

    TrigQrSolution solve(double alpha) {
        if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("trig_quantile_regression: alpha must lie in (0,1)");
        if (!has_basis_) initial_basis(alpha);

        refresh(alpha);
        bool fresh = true;
        const std::size_t max_steps = 50 * n_ + 100;
        for (std::size_t step = 0;; ++step) {
            if (step > max_steps) throw NumericalError("trig_quantile_regression: descent did not terminate");
            const Edge edge = steepest_edge(alpha);
            if (edge.column < 0) {
                // Optimality is only accepted on a freshly recomputed subgradient.
                if (!fresh) {
                    refresh(alpha);
                    fresh = true;
                    continue;
                }
                if (degenerate_.empty() || !degenerate_descent(alpha)) break;
                fresh = false;
                ++descent_steps_;
                continue;
            }
            move_along(alpha, edge);
            fresh = false;
            ++descent_steps_;
        }

        TrigQrSolution sol;
        sol.intercept = coef_(0);
        sol.a_coef = coef_(1);
        sol.b_coef = p_ == 3 ? coef_(2) : 0.0;
        double obj = 0.0;
        for (std::size_t i = 0; i < n_; ++i) obj += check_loss(residuals_[i], alpha);
        sol.objective = obj;
        return sol;
    }

private:
    using Vec = Eigen::Vector3d;
    using Mat = Eigen::Matrix3d;

    struct Edge {
        int column = -1;
        double sign = 0.0;
        double slope = 0.0;
    };

    // Breakpoint of the line search. t > 0 implies the residual has the sign
    // of `slope` (= a_i) before the move.
    struct Break {
        double t;
        double slope;
        std::size_t index;
        double weight() const noexcept { return std::abs(slope); }
    };

    double row_dot(std::size_t i, const Vec& v) const noexcept { return v(0) + cos_[i] * v(1) + sin_[i] * v(2); }

    void accumulate(Vec& g, std::size_t i, double w) const noexcept {
        g(0) += w;
        g(1) += w * cos_[i];
        g(2) += w * sin_[i];
    }

    double basis_determinant(const std::array<std::size_t, 3>& idx) const noexcept {
        if (p_ == 2) return cos_[idx[1]] - cos_[idx[0]];
        const auto [a, b, c] = idx;
        return (cos_[b] - cos_[a]) * (sin_[c] - sin_[a]) - (cos_[c] - cos_[a]) * (sin_[b] - sin_[a]);
    }

    // Picks p points near the alpha-quantile of y whose regressors are well
    // spread; the fit through them is close to the intercept-only solution.
    void initial_basis(double alpha) {
        std::vector<std::size_t> order(n_);
        std::iota(order.begin(), order.end(), 0);
        const auto k = static_cast<std::size_t>(alpha * static_cast<double>(n_ - 1));
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                         [&](std::size_t a, std::size_t b) { return y_[a] < y_[b]; });
        const double q = y_[order[k]];
        const std::size_t m = std::min<std::size_t>(n_, 16);
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(),
                          [&](std::size_t a, std::size_t b) { return std::abs(y_[a] - q) < std::abs(y_[b] - q); });

        auto search = [&](std::size_t limit) {
            double best = 0.0;
            std::array<std::size_t, 3> best_idx{};
            std::array<std::size_t, 3> idx{};
            for (std::size_t a = 0; a < limit; ++a) {
                idx[0] = order[a];
                for (std::size_t b = a + 1; b < limit; ++b) {
                    idx[1] = order[b];
                    if (p_ == 2) {
                        const double det = std::abs(basis_determinant(idx));
                        if (det > best) { best = det; best_idx = idx; }
                        continue;
                    }
                    for (std::size_t c = b + 1; c < limit; ++c) {
                        idx[2] = order[c];
                        const double det = std::abs(basis_determinant(idx));
                        if (det > best) { best = det; best_idx = idx; }
                    }
                }
            }
            return std::pair{best, best_idx};
        };

        auto [det, idx] = search(m);
        if (det < 1e-6 && m < n_) {
            // Near-quantile points do not span the design; search the head of
            // the sample instead.
            std::iota(order.begin(), order.end(), 0);
            auto wide = search(std::min<std::size_t>(n_, 48));
            if (wide.first > det) std::tie(det, idx) = wide;
        }
        if (!(det > 1e-12)) throw NumericalError("trig_quantile_regression: degenerate design at this frequency");

        for (int j = 0; j < p_; ++j) {
            basis_[j] = idx[j];
            in_basis_[idx[j]] = 1;
        }
        has_basis_ = true;
    }

    // Basis inverse and vertex coefficients. For p = 2 the 2x2 system is
    // embedded in the 3x3 one with a unit third coordinate that stays at zero.
    void factor_basis() {
        Mat b = Mat::Identity();
        Vec yb = Vec::Zero();
        for (int r = 0; r < p_; ++r) {
            b(r, 0) = 1.0;
            b(r, 1) = cos_[basis_[r]];
            b(r, 2) = p_ == 3 ? sin_[basis_[r]] : 0.0;
            yb(r) = y_[basis_[r]];
        }
        if (p_ == 2) b(2, 2) = 1.0;
        Eigen::FullPivLU<Mat> lu(b);
        if (!lu.isInvertible()) throw NumericalError("trig_quantile_regression: singular basis");
        basis_inverse_ = lu.inverse();
        coef_ = basis_inverse_ * yb;
        if (p_ == 2) coef_(2) = 0.0;
    }

    // Recomputes residuals and the subgradient g = sum psi_alpha(r_i) x_i over
    // off-basis points with nonzero residual; zero residuals go to degenerate_.
    void refresh(double alpha) {
        factor_basis();
        const double c0 = coef_(0), c1 = coef_(1), c2 = coef_(2);
        double g0 = 0.0, g1 = 0.0, g2 = 0.0;
        std::size_t zeros = 0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double r = y_[i] - c0 - c1 * cos_[i] - c2 * sin_[i];
            residuals_[i] = r;
            const double psi = r > residual_tol_ ? alpha : (r < -residual_tol_ ? alpha - 1.0 : 0.0);
            zeros += (psi == 0.0);
            g0 += psi;
            g1 += psi * cos_[i];
            g2 += psi * sin_[i];
        }
        g_ = Vec(g0, g1, g2);
        for (int j = 0; j < p_; ++j) {
            const std::size_t b = basis_[j];
            const double r = residuals_[b];
            if (std::abs(r) > residual_tol_) accumulate(g_, b, -(r > 0.0 ? alpha : alpha - 1.0));
            residuals_[b] = 0.0;
        }
        degenerate_.clear();
        if (zeros > static_cast<std::size_t>(p_) || zeros_off_basis()) {
            for (std::size_t i = 0; i < n_; ++i)
                if (!in_basis_[i] && std::abs(residuals_[i]) <= residual_tol_) degenerate_.push_back(i);
        }
    }

    bool zeros_off_basis() const noexcept {
        for (int j = 0; j < p_; ++j)
            if (std::abs(y_[basis_[j]] - row_dot(basis_[j], coef_)) > residual_tol_) return true;
        return false;
    }

    // Directional derivative along each edge +/- column j of B^{-1}; returns
    // the most negative one, or column -1 at an optimal vertex.
    Edge steepest_edge(double alpha) const {
        Edge best;
        for (int j = 0; j < p_; ++j) {
            const Vec c = basis_inverse_.col(j);
            const double gc = g_.dot(c);
            double deg_plus = 0.0, deg_minus = 0.0;
            for (std::size_t i : degenerate_) {
                const double a = row_dot(i, c);
                deg_plus += a > 0.0 ? (1.0 - alpha) * a : -alpha * a;
                deg_minus += a < 0.0 ? -(1.0 - alpha) * a : alpha * a;
            }
            const double d_plus = -gc + (1.0 - alpha) + deg_plus;
            const double d_minus = gc + alpha + deg_minus;
            if (d_plus < best.slope) best = {j, 1.0, d_plus};
            if (d_minus < best.slope) best = {j, -1.0, d_minus};
        }
        if (best.slope >= -slope_tol_) best.column = -1;
        return best;
    }

    // Exact minimization along the edge: residual i moves as r_i - t a_i and
    // the slope of the objective jumps by |a_i| when it crosses zero. The
    // subgradient is updated for the points that changed sign.
    void move_along(double alpha, const Edge& edge) {
        Vec direction = edge.sign * basis_inverse_.col(edge.column);
        if (p_ == 2) direction(2) = 0.0;
        const double c0 = coef_(0), c1 = coef_(1), c2 = coef_(2);
        const double d0 = direction(0), d1 = direction(1), d2 = direction(2);

        // Basis points have |r| <= tol and never qualify as breakpoints.
        for (std::size_t i = 0; i < n_; ++i) {
            const double r = y_[i] - c0 - c1 * cos_[i] - c2 * sin_[i];
            const double a = d0 + d1 * cos_[i] + d2 * sin_[i];
            slopes_[i] = a;
            steps_[i] = (std::abs(r) > residual_tol_ && std::abs(a) > 1e-12) ? r / a : -1.0;
        }
        breaks_.clear();
        for (std::size_t i = 0; i < n_; ++i)
            if (steps_[i] > 0.0) breaks_.push_back({steps_[i], slopes_[i], i});

        const std::size_t entering_pos = weighted_select(-edge.slope);
        const Break entering = breaks_[entering_pos];
        for (std::size_t k = 0; k < entering_pos; ++k) accumulate(g_, breaks_[k].index, breaks_[k].slope > 0.0 ? -1.0 : 1.0);
        accumulate(g_, entering.index, entering.slope > 0.0 ? -alpha : 1.0 - alpha);
        const std::size_t leaving = basis_[edge.column];
        accumulate(g_, leaving, edge.sign > 0.0 ? alpha - 1.0 : alpha);

        in_basis_[leaving] = 0;
        basis_[edge.column] = entering.index;
        in_basis_[entering.index] = 1;
        // A tie at the entering step leaves extra zero residuals, which the
        // incremental update above does not see.
        bool tie = false;
        for (const Break& b : breaks_)
            tie = tie || (b.index != entering.index && std::abs(b.t - entering.t) <= 1e-9 * (1.0 + entering.t));
        if (degenerate_.empty() && !tie)
            factor_basis();
        else
            refresh(alpha);
    }

    // At a degenerate vertex (more than p zero residuals) the basis edges do
    // not cover every descent direction. The directional derivative is
    // piecewise linear over the cones cut out by the zero-residual rows, so it
    // suffices to test their extreme rays: directions orthogonal to p - 1 of
    // those rows. Moves along the best descending ray and returns true, or
    // returns false if the vertex is optimal.
    bool degenerate_descent(double alpha) {
        std::vector<std::size_t> zero;
        for (int j = 0; j < p_; ++j) zero.push_back(basis_[j]);
        zero.insert(zero.end(), degenerate_.begin(), degenerate_.end());
        auto row = [&](std::size_t i) { return Vec(1.0, cos_[i], p_ == 3 ? sin_[i] : 0.0); };
        auto derivative = [&](const Vec& d) {
            double v = -g_.dot(d);
            for (std::size_t i : zero) {
                const double a = row(i).dot(d);
                if (std::abs(a) > 1e-12) v += a > 0.0 ? (1.0 - alpha) * a : -alpha * a;
            }
            return v;
        };

        double best = -slope_tol_;
        Vec best_dir = Vec::Zero();
        std::array<std::size_t, 2> best_keep{};
        auto consider = [&](Vec d, std::array<std::size_t, 2> keep) {
            const double norm = d.norm();
            if (norm < 1e-9) return;
            d /= norm;
            for (double sign : {1.0, -1.0}) {
                const double v = derivative(sign * d);
                if (v < best) {
                    best = v;
                    best_dir = sign * d;
                    best_keep = keep;
                }
            }
        };
        for (std::size_t a = 0; a < zero.size(); ++a) {
            if (p_ == 2) {
                consider(Vec(cos_[zero[a]], -1.0, 0.0), {zero[a], 0});
                continue;
            }
            for (std::size_t b = a + 1; b < zero.size(); ++b) consider(row(zero[a]).cross(row(zero[b])), {zero[a], zero[b]});
        }
        if (best_dir.isZero()) return false;

        breaks_.clear();
        for (std::size_t i = 0; i < n_; ++i) {
            if (std::abs(residuals_[i]) <= residual_tol_) continue;
            const double a = row(i).dot(best_dir);
            if (std::abs(a) > 1e-12 && residuals_[i] / a > 0.0) breaks_.push_back({residuals_[i] / a, a, i});
        }
        const Break entering = breaks_[weighted_select(-best)];
        std::fill(in_basis_.begin(), in_basis_.end(), 0);
        for (int j = 0; j + 1 < p_; ++j) basis_[j] = best_keep[j];
        basis_[p_ - 1] = entering.index;
        for (int j = 0; j < p_; ++j) in_basis_[basis_[j]] = 1;
        refresh(alpha);
        return true;
    }

    // Rearranges breaks_ so that every element before the returned position
    // has a smaller step, and returns the position of the breakpoint at which
    // the cumulative weight (in step order) first reaches `need`.
    std::size_t weighted_select(double need) {
        std::size_t lo = 0, hi = breaks_.size();
        auto sum = [&](std::size_t a, std::size_t b) {
            double w = 0.0;
            for (std::size_t k = a; k < b; ++k) w += breaks_[k].weight();
            return w;
        };
        // Scans [a, b) in order. When the block sum was already found to
        // cover `need`, running out can only be rounding, and the last
        // element is the answer.
        auto scan = [&](std::size_t a, std::size_t b, bool covered) -> std::size_t {
            for (std::size_t k = a; k < b; ++k) {
                need -= breaks_[k].weight();
                if (need <= 0.0) return k;
            }
            return covered && b > a ? b - 1 : breaks_.size();
        };
        while (hi - lo > 24) {
            const double t0 = breaks_[lo].t, t1 = breaks_[lo + (hi - lo) / 2].t, t2 = breaks_[hi - 1].t;
            const double pivot = std::max(std::min(t0, t1), std::min(std::max(t0, t1), t2));
            auto first = breaks_.begin() + static_cast<std::ptrdiff_t>(lo);
            auto last = breaks_.begin() + static_cast<std::ptrdiff_t>(hi);
            const auto mid = static_cast<std::size_t>(
                std::partition(first, last, [pivot](const Break& b) { return b.t < pivot; }) - breaks_.begin());
            if (mid == lo) {
                // Everything is >= pivot: split off the block equal to pivot.
                const auto eq = static_cast<std::size_t>(
                    std::partition(first, last, [pivot](const Break& b) { return b.t <= pivot; }) - breaks_.begin());
                const double w = sum(lo, eq);
                if (w >= need) return scan(lo, eq, true);
                need -= w;
                lo = eq;
                continue;
            }
            const double w = sum(lo, mid);
            if (w >= need)
                hi = mid;
            else {
                need -= w;
                lo = mid;
            }
        }
        std::sort(breaks_.begin() + static_cast<std::ptrdiff_t>(lo), breaks_.begin() + static_cast<std::ptrdiff_t>(hi),
                  [](const Break& a, const Break& b) { return a.t < b.t; });
        const std::size_t pos = scan(lo, hi, hi < breaks_.size());
        if (pos >= breaks_.size()) throw NumericalError("trig_quantile_regression: unbounded descent direction");
        return pos;
    }

    std::size_t n_;
    std::vector<double> y_;
    std::vector<double> cos_, sin_;
    bool nyquist_ = false;
    int p_ = 3;
    double residual_tol_ = 0.0;
    double slope_tol_ = 0.0;

    std::array<std::size_t, 3> basis_{};
    bool has_basis_ = false;
    std::vector<unsigned char> in_basis_;
    Mat basis_inverse_;
    Vec coef_ = Vec::Zero();
    Vec g_ = Vec::Zero();
    std::vector<double> residuals_;
    std::vector<double> slopes_, steps_;
    std::vector<std::size_t> degenerate_;
    std::vector<Break> breaks_;
    std::size_t descent_steps_ = 0;
};

/// Single (omega, alpha) fit. Sweeps over alpha should reuse one
/// TrigQuantileSolver instead.
inline TrigQrSolution trig_quantile_regression(std::span<const double> y, double omega, double alpha) {
    TrigQuantileSolver solver(y, omega);
    return solver.solve(alpha);
}

} // namespace qcoh
