#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace qcoh {

/// n x k multivariate series; column j is series j.
using SeriesMatrix = Eigen::MatrixXd;

/// Frequency l / (2n) of the extended Fourier grid.
inline double grid_frequency(std::size_t l, std::size_t n) { return static_cast<double>(l) / (2.0 * static_cast<double>(n)); }

/// Frequencies l / (2n), l = 1..n, on which coherence fields live.
inline std::vector<double> coherence_frequencies(std::size_t n) {
    std::vector<double> freqs(n);
    for (std::size_t l = 1; l <= n; ++l) freqs[l - 1] = grid_frequency(l, n);
    return freqs;
}

/// Evenly spaced grid lo, lo+step, ..., hi. Values are rounded to 12 decimals
/// so that "0.04:0.96:0.01" yields exactly the printed levels.
inline std::vector<double> linear_grid(double lo, double hi, double step) {
    if (!(step > 0.0) || !(hi >= lo)) throw InputError("grid: need step > 0 and hi >= lo");
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> grid(count);
    for (std::size_t i = 0; i < count; ++i) grid[i] = std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12;
    return grid;
}

/// Parses "lo:hi:step" (or "lo:hi", step 0.01).
inline std::vector<double> parse_grid(std::string_view text) {
    std::vector<double> parts;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto colon = text.find(':', start);
        const auto piece = text.substr(start, colon == std::string_view::npos ? std::string_view::npos : colon - start);
        try {
            std::size_t used = 0;
            parts.push_back(std::stod(std::string(piece), &used));
            if (used != piece.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw InputError("cannot parse grid '" + std::string(text) + "'");
        }
        if (colon == std::string_view::npos) break;
        start = colon + 1;
    }
    if (parts.size() == 2) return linear_grid(parts[0], parts[1], 0.01);
    if (parts.size() == 3) return linear_grid(parts[0], parts[1], parts[2]);
    throw InputError("grid must be lo:hi or lo:hi:step, got '" + std::string(text) + "'");
}

inline void require_quantile_grid(const std::vector<double>& quantiles) {
    if (quantiles.empty()) throw InputError("quantile grid is empty");
    for (std::size_t m = 0; m < quantiles.size(); ++m) {
        if (!(quantiles[m] > 0.0 && quantiles[m] < 1.0)) throw InputError("quantile levels must lie in (0,1)");
        if (m > 0 && !(quantiles[m] > quantiles[m - 1])) throw InputError("quantile grid must be strictly increasing");
    }
}

} // namespace qcoh
