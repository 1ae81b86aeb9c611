#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "coherence.hpp"
#include "errors.hpp"
#include "grid.hpp"

namespace qcoh::io {

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        std::string cell(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        out.push_back(std::move(cell));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline double parse_number(const std::string& cell, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw InputError(where + ": cannot parse '" + cell + "' as a number");
    }
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw InputError("csv: missing column '" + std::string(name) + "'");
    }
};

inline Table read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw InputError(path.string() + ": empty file");
    t.header = split_csv_line(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv_line(line);
        if (cells.size() != t.header.size())
            throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) + " fields");
        t.rows.push_back(std::move(cells));
    }
    return t;
}

/// Numeric series from a CSV; a leading "t" or "date" column is skipped.
inline SeriesMatrix read_series_csv(const std::filesystem::path& path) {
    const Table t = read_csv(path);
    std::size_t first = 0;
    if (!t.header.empty() && (t.header[0] == "t" || t.header[0] == "date")) first = 1;
    if (t.header.size() <= first) throw InputError(path.string() + ": no data columns");
    SeriesMatrix y(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size() - first));
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        for (std::size_t c = first; c < t.header.size(); ++c) {
            const double v = parse_number(t.rows[r][c], path.string() + ":" + std::to_string(r + 2));
            if (!std::isfinite(v)) throw InputError(path.string() + ":" + std::to_string(r + 2) + ": non-finite value");
            y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - first)) = v;
        }
    return y;
}

/// Writes `t,z1,z2,...` with t = 1..n.
inline void write_series_csv(std::ostream& out, const SeriesMatrix& y) {
    out << 't';
    for (Eigen::Index j = 0; j < y.cols(); ++j) out << ",z" << j + 1;
    out << '\n' << std::setprecision(17);
    for (Eigen::Index t = 0; t < y.rows(); ++t) {
        out << t + 1;
        for (Eigen::Index j = 0; j < y.cols(); ++j) out << ',' << y(t, j);
        out << '\n';
    }
}

/// Writes `freq,alpha,coherence`, frequency-major.
inline void write_coherence_csv(std::ostream& out, const CoherenceField& f) {
    out << "freq,alpha,coherence\n" << std::setprecision(17);
    for (std::size_t l = 0; l < f.n_freqs(); ++l)
        for (std::size_t m = 0; m < f.n_quantiles(); ++m) out << f.freqs[l] << ',' << f.quantiles[m] << ',' << f(l, m) << '\n';
}

inline void write_coherence_curve_csv(std::ostream& out, const CoherenceCurve& c) {
    out << "freq,coherence\n" << std::setprecision(17);
    for (std::size_t l = 0; l < c.freqs.size(); ++l) out << c.freqs[l] << ',' << c.values(static_cast<Eigen::Index>(l)) << '\n';
}

/// Reads a `freq,alpha,coherence` file back into a field; rows may come in any order.
inline CoherenceField read_coherence_csv(const std::filesystem::path& path) {
    const Table t = read_csv(path);
    const std::size_t cf = t.column("freq"), ca = t.column("alpha"), cc = t.column("coherence");
    std::map<double, std::map<double, double>> cells;
    std::map<double, int> alphas;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string where = path.string() + ":" + std::to_string(r + 2);
        const double f = parse_number(t.rows[r][cf], where), a = parse_number(t.rows[r][ca], where);
        const double c = parse_number(t.rows[r][cc], where);
        if (!(c >= 0.0 && c <= 1.0)) throw InputError(where + ": coherence outside [0,1]");
        cells[f][a] = c;
        alphas[a] = 0;
    }
    if (cells.empty()) throw InputError(path.string() + ": no rows");
    CoherenceField out;
    for (const auto& [a, unused] : alphas) out.quantiles.push_back(a);
    out.values.resize(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(out.quantiles.size()));
    Eigen::Index l = 0;
    for (const auto& [f, row] : cells) {
        if (row.size() != out.quantiles.size()) throw InputError(path.string() + ": incomplete (freq, alpha) grid");
        out.freqs.push_back(f);
        Eigen::Index m = 0;
        for (const auto& [a, c] : row) out.values(l, m++) = c;
        ++l;
    }
    return out;
}

struct PriceSeries {
    std::vector<std::string> dates;
    std::vector<double> close;
};

/// `date,close` file; dates must be strictly increasing (ISO dates sort lexically).
inline PriceSeries read_prices_csv(const std::filesystem::path& path) {
    const Table t = read_csv(path);
    const std::size_t cd = t.column("date"), cc = t.column("close");
    PriceSeries p;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string where = path.string() + ":" + std::to_string(r + 2);
        const double v = parse_number(t.rows[r][cc], where);
        if (!(v > 0.0) || !std::isfinite(v)) throw InputError(where + ": close price must be positive");
        if (!p.dates.empty() && !(t.rows[r][cd] > p.dates.back())) throw InputError(where + ": dates must be strictly increasing");
        p.dates.push_back(t.rows[r][cd]);
        p.close.push_back(v);
    }
    return p;
}

/// Inner join of two price series on date.
inline std::pair<PriceSeries, PriceSeries> align_prices(const PriceSeries& a, const PriceSeries& b) {
    PriceSeries oa, ob;
    std::size_t i = 0, j = 0;
    while (i < a.dates.size() && j < b.dates.size()) {
        if (a.dates[i] < b.dates[j]) ++i;
        else if (b.dates[j] < a.dates[i]) ++j;
        else {
            oa.dates.push_back(a.dates[i]);
            oa.close.push_back(a.close[i]);
            ob.dates.push_back(b.dates[j]);
            ob.close.push_back(b.close[j]);
            ++i;
            ++j;
        }
    }
    return {oa, ob};
}

inline std::vector<double> log_returns(const std::vector<double>& close) {
    std::vector<double> r;
    for (std::size_t i = 1; i < close.size(); ++i) r.push_back(std::log(close[i] / close[i - 1]));
    return r;
}

/// Log returns of stock and market on their common dates, as an n x 2 series.
inline SeriesMatrix aligned_returns(const PriceSeries& stock, const PriceSeries& market) {
    const auto [a, b] = align_prices(stock, market);
    const auto ra = log_returns(a.close), rb = log_returns(b.close);
    SeriesMatrix y(static_cast<Eigen::Index>(ra.size()), 2);
    for (std::size_t i = 0; i < ra.size(); ++i) {
        y(static_cast<Eigen::Index>(i), 0) = ra[i];
        y(static_cast<Eigen::Index>(i), 1) = rb[i];
    }
    return y;
}

} // namespace qcoh::io
