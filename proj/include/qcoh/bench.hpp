#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "coherence.hpp"
#include "errors.hpp"
#include "estimate.hpp"
#include "grid.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "sim.hpp"

namespace qcoh {

/// Root mean squared difference over the whole grid.
inline double rmse(const CoherenceField& truth, const CoherenceField& estimate) {
    if (truth.values.rows() != estimate.values.rows() || truth.values.cols() != estimate.values.cols() ||
        truth.freqs.size() != estimate.freqs.size() || truth.quantiles.size() != estimate.quantiles.size())
        throw InputError("rmse: grids differ");
    for (std::size_t i = 0; i < truth.freqs.size(); ++i)
        if (std::abs(truth.freqs[i] - estimate.freqs[i]) > 1e-12) throw InputError("rmse: frequency grids differ");
    for (std::size_t i = 0; i < truth.quantiles.size(); ++i)
        if (std::abs(truth.quantiles[i] - estimate.quantiles[i]) > 1e-12) throw InputError("rmse: quantile grids differ");
    return std::sqrt((truth.values - estimate.values).squaredNorm() / static_cast<double>(truth.values.size()));
}

enum class Estimator { SemiParametric, Parametric };

inline std::string_view estimator_name(Estimator e) { return e == Estimator::SemiParametric ? "semi-param" : "parametric"; }

inline Estimator parse_estimator(std::string_view name) {
    if (name == "semi-param") return Estimator::SemiParametric;
    if (name == "parametric") return Estimator::Parametric;
    throw ConfigError("unknown estimator '" + std::string(name) + "' (expected semi-param or parametric)");
}

struct BenchConfig {
    std::vector<ModelKind> models = {ModelKind::Var2};
    std::vector<std::size_t> ns = {500};
    std::size_t runs = 20;
    std::vector<double> quantiles = linear_grid(0.04, 0.96, 0.02);
    std::size_t oracle_replicates = 500;
    std::vector<Estimator> estimators = {Estimator::SemiParametric, Estimator::Parametric};
    std::uint64_t seed = 2024;
    std::size_t burn_in = 1000;
    MixtureCoupling coupling = MixtureCoupling::SharedBandpass;
    int folds = 5;
    std::uint64_t cv_seed = 11;
    int p_max = -1;
    std::string cache_dir; ///< empty: no oracle cache
    bool record_timing = false;

    void validate() const {
        if (models.empty() || ns.empty() || estimators.empty()) throw ConfigError("bench: models, n values and estimators must be nonempty");
        if (runs < 1) throw ConfigError("bench: runs must be >= 1");
        if (oracle_replicates < 1) throw ConfigError("bench: oracle replicates must be >= 1");
        for (std::size_t n : ns)
            if (n < 64) throw ConfigError("bench: n must be >= 64");
        require_quantile_grid(quantiles);
    }
};

struct BenchCell {
    ModelKind model = ModelKind::Var2;
    std::size_t n = 0;
    Estimator estimator = Estimator::SemiParametric;
    std::size_t runs = 0;     ///< successful runs
    std::size_t failures = 0;
    double mean_rmse = 0.0;
    std::optional<double> sd_rmse;    ///< absent for a single run
    std::optional<double> std_error;  ///< absent for a single run
    std::vector<double> run_rmse;     ///< per run, NaN for failures
    double wall_seconds = 0.0;
};

struct BenchReport {
    std::vector<BenchCell> cells;
    std::vector<std::string> failures; ///< one message per failed run

    const BenchCell* find(ModelKind model, std::size_t n, Estimator e) const {
        for (const auto& c : cells)
            if (c.model == model && c.n == n && c.estimator == e) return &c;
        return nullptr;
    }
};

/// Master seed of the oracle for one (model, n) cell.
inline std::uint64_t oracle_seed(std::uint64_t seed, ModelKind model, std::size_t n) {
    return stream_seed(seed ^ 0x0a11cea5e5ULL, static_cast<std::uint64_t>(model) * 1000003ULL + n);
}

/// Seed of simulation run r in one (model, n) cell.
inline std::uint64_t run_seed(std::uint64_t seed, ModelKind model, std::size_t n, std::size_t r) {
    return stream_seed(stream_seed(seed, static_cast<std::uint64_t>(model) * 1000003ULL + n), r);
}

namespace detail {

inline std::string oracle_key(ModelKind kind, const OracleConfig& cfg) {
    std::ostringstream key;
    key << std::setprecision(17) << "oracle v1 model=" << model_name(kind) << " n=" << cfg.n << " R=" << cfg.replicates
        << " seed=" << cfg.seed << " burn_in=" << cfg.burn_in << " coupling=" << coupling_name(cfg.coupling) << " grid=";
    for (double q : cfg.quantiles) key << q << ',';
    return key.str();
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::optional<CoherenceField> read_cached_oracle(const std::filesystem::path& file, const std::string& key,
                                                        const OracleConfig& cfg) {
    std::ifstream in(file);
    if (!in) return std::nullopt;
    std::string header;
    if (!std::getline(in, header) || header != key) return std::nullopt;
    CoherenceField f;
    f.freqs = coherence_frequencies(cfg.n);
    f.quantiles = cfg.quantiles;
    f.values.resize(static_cast<Eigen::Index>(cfg.n), static_cast<Eigen::Index>(cfg.quantiles.size()));
    for (Eigen::Index i = 0; i < f.values.size(); ++i) {
        std::string token;
        if (!(in >> token)) return std::nullopt;
        try {
            f.values.data()[i] = std::stod(token);
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }
    return f;
}

inline void write_cached_oracle(const std::filesystem::path& file, const std::string& key, const CoherenceField& f) {
    std::filesystem::create_directories(file.parent_path());
    const auto tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp);
        out << key << '\n' << std::setprecision(17);
        for (Eigen::Index i = 0; i < f.values.size(); ++i) out << f.values.data()[i] << '\n';
        if (!out) throw InputError("bench: cannot write oracle cache " + tmp);
    }
    std::filesystem::rename(tmp, file);
}

} // namespace detail

/// Oracle field, read from or written to `cache_dir` when it is nonempty.
inline CoherenceField cached_oracle(ModelKind kind, const OracleConfig& cfg, const std::string& cache_dir) {
    if (cache_dir.empty()) return true_coherence_oracle(kind, cfg);
    const std::string key = detail::oracle_key(kind, cfg);
    std::ostringstream name;
    name << "oracle-" << model_name(kind) << "-" << cfg.n << "-" << std::hex << detail::fnv1a(key) << ".txt";
    const std::filesystem::path file = std::filesystem::path(cache_dir) / name.str();
    if (auto hit = detail::read_cached_oracle(file, key, cfg)) return *hit;
    CoherenceField f = true_coherence_oracle(kind, cfg);
    detail::write_cached_oracle(file, key, f);
    return f;
}

inline void summarize(BenchCell& cell) {
    double sum = 0.0;
    std::size_t ok = 0;
    for (double v : cell.run_rmse)
        if (std::isfinite(v)) {
            sum += v;
            ++ok;
        }
    cell.runs = ok;
    cell.failures = cell.run_rmse.size() - ok;
    cell.mean_rmse = ok ? sum / static_cast<double>(ok) : std::nan("");
    if (ok >= 2) {
        double ss = 0.0;
        for (double v : cell.run_rmse)
            if (std::isfinite(v)) ss += (v - cell.mean_rmse) * (v - cell.mean_rmse);
        cell.sd_rmse = std::sqrt(ss / static_cast<double>(ok - 1));
        cell.std_error = *cell.sd_rmse / std::sqrt(static_cast<double>(ok));
    }
}

/**
 * For each (model, n): one oracle field, then `runs` simulated series estimated
 * by every requested estimator. Failed runs are skipped and counted. The report
 * depends only on the configuration (wall-clock aside).
 */
inline BenchReport run_benchmark(const BenchConfig& cfg) {
    cfg.validate();
    BenchReport report;
    for (ModelKind model : cfg.models)
        for (std::size_t n : cfg.ns) {
            const auto start = std::chrono::steady_clock::now();
            OracleConfig ocfg{cfg.oracle_replicates, cfg.quantiles, n, oracle_seed(cfg.seed, model, n), cfg.burn_in, cfg.coupling};
            const CoherenceField truth = cached_oracle(model, ocfg, cfg.cache_dir);

            EstimateOptions opt;
            opt.quantiles = cfg.quantiles;
            opt.p_max = cfg.p_max;
            opt.folds = cfg.folds;
            opt.cv_seed = cfg.cv_seed;

            const std::size_t ne = cfg.estimators.size();
            std::vector<double> results(cfg.runs * ne, std::nan(""));
            std::vector<std::string> errors(cfg.runs);
            parallel_for(cfg.runs, [&](std::size_t r) {
                try {
                    const SeriesMatrix y = simulate({model, n, run_seed(cfg.seed, model, n, r), cfg.burn_in, cfg.coupling});
                    const EstimateResult est = estimate_coherence(y, opt);
                    for (std::size_t e = 0; e < ne; ++e)
                        results[r * ne + e] = rmse(truth, cfg.estimators[e] == Estimator::SemiParametric ? est.smoothed : est.parametric.raw);
                } catch (const Error& err) {
                    errors[r] = std::string(model_name(model)) + " n=" + std::to_string(n) + " run " + std::to_string(r) + ": " + err.what();
                }
            });
            const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            for (const auto& e : errors)
                if (!e.empty()) report.failures.push_back(e);
            for (std::size_t e = 0; e < ne; ++e) {
                BenchCell cell;
                cell.model = model;
                cell.n = n;
                cell.estimator = cfg.estimators[e];
                for (std::size_t r = 0; r < cfg.runs; ++r) cell.run_rmse.push_back(results[r * ne + e]);
                cell.wall_seconds = seconds;
                summarize(cell);
                report.cells.push_back(std::move(cell));
            }
        }
    return report;
}

/// CSV: model,n,estimator,runs,failures,mean_rmse,sd_rmse,std_error[,wall_seconds].
inline void write_report_csv(std::ostream& out, const BenchReport& report, bool with_timing) {
    out << "model,n,estimator,runs,failures,mean_rmse,sd_rmse,std_error";
    if (with_timing) out << ",wall_seconds";
    out << '\n' << std::setprecision(17);
    for (const auto& c : report.cells) {
        out << model_name(c.model) << ',' << c.n << ',' << estimator_name(c.estimator) << ',' << c.runs << ',' << c.failures << ','
            << c.mean_rmse << ',';
        if (c.sd_rmse) out << *c.sd_rmse;
        out << ',';
        if (c.std_error) out << *c.std_error;
        if (with_timing) out << ',' << c.wall_seconds;
        out << '\n';
    }
}

} // namespace qcoh
