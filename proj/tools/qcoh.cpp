// qcoh: command-line front end for simulation, quantile periodograms,
// coherence estimation, clustering, benchmarking and CAPM betas.
//
// Every command that writes files also writes <primary output>.manifest.json
// with the tool version, the full argument list, seeds, parameters and
// SHA-256 digests of inputs and outputs. `qcoh rerun --manifest m.json`
// replays it into a scratch directory and compares the output digests.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "qcoh/qcoh.hpp"
#include "toml_lite.hpp"

#ifndef QCOH_VERSION
#define QCOH_VERSION "0.1.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace qcoh;

namespace {

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return hex.str();
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, mode);
    if (!out) throw InputError("cannot write " + path.string());
    return out;
}

/// Collects what a command read and wrote, then writes the manifest.
class Manifest {
public:
    Manifest(std::string command, std::vector<std::string> argv) : command_(std::move(command)), argv_(std::move(argv)) {}

    json params = json::object();

    void input(const fs::path& p) { inputs_.push_back(p); }
    void output(const std::string& flag, const fs::path& p) { outputs_.emplace_back(flag, p); }

    void write(const fs::path& primary) const {
        json m;
        m["tool"] = "qcoh";
        m["version"] = QCOH_VERSION;
        m["command"] = command_;
        m["argv"] = argv_;
        m["threads"] = thread_budget();
        m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." + std::to_string(EIGEN_MINOR_VERSION);
        m["params"] = params;
        json in = json::array();
        for (const auto& p : inputs_) in.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
        m["inputs"] = in;
        json out = json::array();
        for (const auto& [flag, p] : outputs_) out.push_back({{"flag", flag}, {"path", p.string()}, {"sha256", sha256_file(p)}});
        m["outputs"] = out;
        auto f = open_out(fs::path(primary.string() + ".manifest.json"));
        f << m.dump(2) << '\n';
    }

private:
    std::string command_;
    std::vector<std::string> argv_;
    std::vector<fs::path> inputs_;
    std::vector<std::pair<std::string, fs::path>> outputs_;
};

json grid_json(const std::vector<double>& g) { return json(g); }

std::vector<std::size_t> parse_pair(const std::string& text) {
    const auto comma = text.find(',');
    if (comma == std::string::npos) throw ConfigError("--pair expects 'i,j' (1-based)");
    try {
        const long a = std::stol(text.substr(0, comma)), b = std::stol(text.substr(comma + 1));
        if (a < 1 || b < 1) throw ConfigError("--pair indices are 1-based");
        return {static_cast<std::size_t>(a - 1), static_cast<std::size_t>(b - 1)};
    } catch (const std::logic_error&) {
        throw ConfigError("--pair expects 'i,j' (1-based)");
    }
}

std::optional<int> parse_order(const std::string& text) {
    if (text == "auto") return std::nullopt;
    try {
        std::size_t used = 0;
        const int p = std::stoi(text, &used);
        if (used == text.size() && p >= 0) return p;
    } catch (const std::logic_error&) {
    }
    throw ConfigError("--order expects 'auto' or a nonnegative integer");
}

/// "cv", "lambda=VALUE" or a bare number.
std::optional<double> parse_smooth(const std::string& text) {
    if (text == "cv") return std::nullopt;
    std::string v = text;
    for (const std::string prefix : {"lambda=", "\xCE\xBB="})
        if (v.rfind(prefix, 0) == 0) v = v.substr(prefix.size());
    try {
        std::size_t used = 0;
        const double l = std::stod(v, &used);
        if (used == v.size() && l >= 0.0) return l;
    } catch (const std::logic_error&) {
    }
    throw ConfigError("--smooth expects 'cv' or 'lambda=VALUE' with VALUE >= 0");
}

SeriesMatrix load_series(const std::string& in, const std::string& stock, const std::string& market, Manifest& mf) {
    if (!in.empty()) {
        if (!stock.empty() || !market.empty()) throw ConfigError("use either --in or --stock/--market");
        mf.input(in);
        return io::read_series_csv(in);
    }
    if (stock.empty() || market.empty()) throw ConfigError("need --in, or both --stock and --market");
    mf.input(stock);
    mf.input(market);
    const SeriesMatrix y = io::aligned_returns(io::read_prices_csv(stock), io::read_prices_csv(market));
    if (y.rows() < 64)
        throw InputError("stock and market share only " + std::to_string(y.rows()) + " returns after alignment (need >= 64)");
    return y;
}

/// Reads `freq,alpha,coherence` fields or `freq,coherence` curves.
FeatureVector read_feature_file(const fs::path& path, double lo, double hi) {
    const io::Table t = io::read_csv(path);
    const std::string id = path.stem().string();
    for (const auto& h : t.header)
        if (h == "alpha") return feature_vector(io::read_coherence_csv(path), lo, hi, id);
    const std::size_t cf = t.column("freq"), cc = t.column("coherence");
    CoherenceCurve c;
    c.values.resize(static_cast<Eigen::Index>(t.rows.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        c.freqs.push_back(io::parse_number(t.rows[r][cf], path.string()));
        c.values(static_cast<Eigen::Index>(r)) = io::parse_number(t.rows[r][cc], path.string());
    }
    return feature_vector(c, id);
}

BenchConfig bench_config_from_toml(const std::string& path) {
    const toml_lite::Document doc = toml_lite::parse_file(path);
    BenchConfig cfg;
    auto get = [&](const std::string& key) -> const toml_lite::Value* {
        for (const std::string& k : {"bench." + key, key}) {
            auto it = doc.find(k);
            if (it != doc.end()) return &it->second;
        }
        return nullptr;
    };
    auto as_int = [&](const toml_lite::Value& v, const std::string& key) -> std::int64_t {
        if (!v.is_integer()) throw ConfigError(path + ": '" + key + "' must be an integer");
        return std::get<std::int64_t>(v.v);
    };
    auto as_string = [&](const toml_lite::Value& v, const std::string& key) -> std::string {
        if (!v.is_string()) throw ConfigError(path + ": '" + key + "' must be a string");
        return std::get<std::string>(v.v);
    };
    auto as_list = [&](const toml_lite::Value& v) {
        return v.is_array() ? std::get<toml_lite::Array>(v.v) : toml_lite::Array{v};
    };
    auto nonneg = [&](std::int64_t x, const std::string& key) {
        if (x < 0) throw ConfigError(path + ": '" + key + "' must be >= 0");
        return static_cast<std::uint64_t>(x);
    };
    for (const auto& [key, value] : doc) {
        const std::string k = key.rfind("bench.", 0) == 0 ? key.substr(6) : key;
        static const std::vector<std::string> known = {"models", "n", "runs", "quantiles", "oracle_replicates", "estimators", "seed",
                                                       "burn_in", "mixture_coupling", "folds", "cv_seed", "p_max"};
        if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError(path + ": unknown key '" + key + "'");
    }
    if (auto v = get("models")) {
        cfg.models.clear();
        for (const auto& m : as_list(*v)) cfg.models.push_back(parse_model(as_string(m, "models")));
    }
    if (auto v = get("n")) {
        cfg.ns.clear();
        for (const auto& n : as_list(*v)) cfg.ns.push_back(nonneg(as_int(n, "n"), "n"));
    }
    if (auto v = get("runs")) cfg.runs = nonneg(as_int(*v, "runs"), "runs");
    if (auto v = get("quantiles")) cfg.quantiles = parse_grid(as_string(*v, "quantiles"));
    if (auto v = get("oracle_replicates")) cfg.oracle_replicates = nonneg(as_int(*v, "oracle_replicates"), "oracle_replicates");
    if (auto v = get("estimators")) {
        cfg.estimators.clear();
        for (const auto& e : as_list(*v)) cfg.estimators.push_back(parse_estimator(as_string(e, "estimators")));
    }
    if (auto v = get("seed")) cfg.seed = nonneg(as_int(*v, "seed"), "seed");
    if (auto v = get("burn_in")) cfg.burn_in = nonneg(as_int(*v, "burn_in"), "burn_in");
    if (auto v = get("mixture_coupling")) cfg.coupling = parse_coupling(as_string(*v, "mixture_coupling"));
    if (auto v = get("folds")) cfg.folds = static_cast<int>(as_int(*v, "folds"));
    if (auto v = get("cv_seed")) cfg.cv_seed = nonneg(as_int(*v, "cv_seed"), "cv_seed");
    if (auto v = get("p_max")) cfg.p_max = static_cast<int>(as_int(*v, "p_max"));
    return cfg;
}

json bench_config_json(const BenchConfig& cfg) {
    json j;
    json models = json::array(), est = json::array();
    for (auto m : cfg.models) models.push_back(std::string(model_name(m)));
    for (auto e : cfg.estimators) est.push_back(std::string(estimator_name(e)));
    j["models"] = models;
    j["n"] = cfg.ns;
    j["runs"] = cfg.runs;
    j["quantiles"] = grid_json(cfg.quantiles);
    j["oracle_replicates"] = cfg.oracle_replicates;
    j["estimators"] = est;
    j["seed"] = cfg.seed;
    j["burn_in"] = cfg.burn_in;
    j["mixture_coupling"] = std::string(coupling_name(cfg.coupling));
    j["folds"] = cfg.folds;
    j["cv_seed"] = cfg.cv_seed;
    j["p_max"] = cfg.p_max;
    return j;
}

int run(const std::vector<std::string>& args);

/// Replays a manifest into `out_dir` and compares output digests.
int rerun(const fs::path& manifest_path, const fs::path& out_dir) {
    std::ifstream in(manifest_path);
    if (!in) throw InputError("cannot open " + manifest_path.string());
    json m;
    try {
        m = json::parse(in);
    } catch (const json::exception& e) {
        throw InputError(manifest_path.string() + ": " + e.what());
    }
    for (const auto& inp : m.at("inputs")) {
        const std::string p = inp.at("path");
        if (sha256_file(p) != inp.at("sha256").get<std::string>()) throw InputError("input changed since the manifest was written: " + p);
    }
    std::vector<std::string> argv = m.at("argv").get<std::vector<std::string>>();
    // Outputs of one flag go to out_dir/<flag>/, keeping file names.
    std::map<std::string, fs::path> flag_dir;
    for (const auto& o : m.at("outputs")) {
        const std::string flag = o.at("flag");
        flag_dir[flag] = out_dir / flag.substr(flag.find_first_not_of('-'));
    }
    for (std::size_t i = 0; i + 1 < argv.size(); ++i) {
        auto it = flag_dir.find(argv[i]);
        if (it != flag_dir.end()) {
            argv[i + 1] = (it->second / fs::path(argv[i + 1]).filename()).string();
            ++i;
        }
    }
    const int code = run(argv);
    if (code != 0) return code;
    bool same = true;
    for (const auto& o : m.at("outputs")) {
        const fs::path p = flag_dir.at(o.at("flag")) / fs::path(o.at("path").get<std::string>()).filename();
        const bool ok = fs::exists(p) && sha256_file(p) == o.at("sha256").get<std::string>();
        std::cout << (ok ? "identical " : "DIFFERENT ") << p.string() << '\n';
        same = same && ok;
    }
    return same ? 0 : 1;
}

int run(const std::vector<std::string>& args) {
    CLI::App app{"qcoh: quantile coherence estimation and clustering"};
    app.require_subcommand(1);
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    app.add_option("--threads", threads, "Worker threads for numerical kernels")->check(CLI::PositiveNumber);
    app.set_version_flag("--version", QCOH_VERSION);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Simulate a bivariate test series");
    std::string sim_model = "var2", sim_out, coupling = "shared";
    std::size_t sim_n = 500, burn_in = 1000;
    std::uint64_t sim_seed = 1;
    sim->add_option("--model", sim_model, "var2 | varma21 | mix-lower | mix-upper")->capture_default_str();
    sim->add_option("--n", sim_n, "Series length")->capture_default_str();
    sim->add_option("--seed", sim_seed)->capture_default_str();
    sim->add_option("--burn-in", burn_in)->capture_default_str();
    sim->add_option("--mixture-coupling", coupling, "shared | delayed")->capture_default_str();
    sim->add_option("--out", sim_out, "CSV with header t,z1,z2")->required();

    // qr
    auto* qr = app.add_subcommand("qr", "Trigonometric quantile regression at one (frequency, alpha)");
    std::string qr_in, qr_out;
    double qr_freq = 0.25, qr_alpha = 0.5;
    std::size_t qr_series = 1;
    qr->add_option("--in", qr_in)->required();
    qr->add_option("--freq", qr_freq, "Frequency in cycles per sample, (0, 0.5]")->required();
    qr->add_option("--alpha", qr_alpha)->required();
    qr->add_option("--series", qr_series, "1-based column")->capture_default_str();
    qr->add_option("--out", qr_out, "JSON output (stdout when omitted)");

    // qper
    auto* qper = app.add_subcommand("qper", "Raw quantile periodogram field");
    std::string qp_in, qp_alphas = "0.04:0.96:0.01", qp_out;
    qper->add_option("--in", qp_in)->required();
    qper->add_option("--alphas", qp_alphas)->capture_default_str();
    qper->add_option("--out", qp_out, "Binary field; a JSON sidecar <out>.json describes it")->required();

    // estimate
    auto* est = app.add_subcommand("estimate", "Parametric and semi-parametric quantile coherence");
    std::string es_in, es_stock, es_market, es_alphas = "0.04:0.96:0.01", es_order = "auto", es_smooth = "cv", es_out, es_raw,
                                                    es_ordinary, es_pair = "1,2";
    int es_pmax = -1, es_folds = 5;
    std::uint64_t es_cv_seed = 11;
    est->add_option("--in", es_in, "Series CSV");
    est->add_option("--stock", es_stock, "Stock prices (date,close), paired with --market");
    est->add_option("--market", es_market, "Benchmark prices (date,close)");
    est->add_option("--alphas", es_alphas)->capture_default_str();
    est->add_option("--pmax", es_pmax, "Largest VAR order for AIC (default min(20, floor(10 log10 n)))");
    est->add_option("--order", es_order, "auto | P")->capture_default_str();
    est->add_option("--smooth", es_smooth, "cv | lambda=VALUE")->capture_default_str();
    est->add_option("--folds", es_folds)->capture_default_str();
    est->add_option("--cv-seed", es_cv_seed)->capture_default_str();
    est->add_option("--pair", es_pair, "1-based series pair")->capture_default_str();
    est->add_option("--out", es_out, "Smoothed coherence CSV (freq,alpha,coherence)")->required();
    est->add_option("--raw-out", es_raw, "Parametric coherence CSV");
    est->add_option("--ordinary-out", es_ordinary, "Ordinary VAR coherence CSV (freq,coherence)");

    // cluster
    auto* clu = app.add_subcommand("cluster", "Hierarchical clustering of coherence features");
    std::string cl_dir, cl_range = "0.04:0.96", cl_k = "auto", cl_link = "ward", cl_out;
    int cl_kmax = 10;
    clu->add_option("--features", cl_dir, "Directory of coherence CSVs, one per series")->required();
    clu->add_option("--range", cl_range, "Quantile range lo:hi")->capture_default_str();
    clu->add_option("--k", cl_k, "auto | K")->capture_default_str();
    clu->add_option("--k-max", cl_kmax, "Largest K on the WSS curve")->capture_default_str();
    clu->add_option("--linkage", cl_link, "ward | complete | average")->capture_default_str();
    clu->add_option("--out", cl_out, "JSON output")->required();

    // bench
    auto* ben = app.add_subcommand("bench", "Simulation benchmark");
    std::string bn_config, bn_out, bn_cache;
    bool bn_timing = false;
    ben->add_option("--config", bn_config, "TOML config")->required();
    ben->add_option("--out", bn_out, "Report CSV")->required();
    ben->add_option("--cache", bn_cache, "Oracle cache directory (default $QCOH_CACHE)");
    ben->add_flag("--timing", bn_timing, "Append a wall_seconds column");

    // beta
    auto* bet = app.add_subcommand("beta", "CAPM beta from price files");
    std::string bt_stock, bt_market, bt_out;
    bet->add_option("--stock", bt_stock)->required();
    bet->add_option("--market", bt_market)->required();
    bet->add_option("--out", bt_out, "JSON output (stdout when omitted)");

    // rerun
    auto* rer = app.add_subcommand("rerun", "Replay a manifest and compare outputs");
    std::string rr_manifest, rr_dir;
    rer->add_option("--manifest", rr_manifest)->required();
    rer->add_option("--out-dir", rr_dir, "Where regenerated outputs go (default: a fresh temporary directory)");

    std::vector<const char*> argv{"qcoh"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_code(ErrorKind::config);
    }
    set_thread_budget(threads);

    std::vector<std::string> recorded = args;
    if (std::find(recorded.begin(), recorded.end(), "--threads") == recorded.end()) {
        recorded.insert(recorded.begin(), std::to_string(threads));
        recorded.insert(recorded.begin(), "--threads");
    }

    if (*sim) {
        Manifest mf("simulate", recorded);
        const ModelSpec spec{parse_model(sim_model), sim_n, sim_seed, burn_in, parse_coupling(coupling)};
        const SeriesMatrix y = simulate(spec);
        {
            auto out = open_out(sim_out);
            io::write_series_csv(out, y);
        }
        mf.params = {{"model", sim_model}, {"n", sim_n}, {"seed", sim_seed}, {"burn_in", burn_in}, {"mixture_coupling", coupling}};
        mf.output("--out", sim_out);
        mf.write(sim_out);
    } else if (*qr) {
        Manifest mf("qr", recorded);
        mf.input(qr_in);
        const SeriesMatrix y = io::read_series_csv(qr_in);
        if (qr_series < 1 || static_cast<Eigen::Index>(qr_series) > y.cols()) throw ConfigError("--series out of range");
        const Eigen::VectorXd col = y.col(static_cast<Eigen::Index>(qr_series - 1));
        const TrigQrSolution s = trig_quantile_regression(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), qr_freq, qr_alpha);
        json j = {{"freq", qr_freq}, {"alpha", qr_alpha}, {"intercept", s.intercept}, {"a", s.a_coef}, {"b", s.b_coef}, {"objective", s.objective}};
        if (qr_out.empty()) std::cout << j.dump(2) << '\n';
        else {
            auto out = open_out(qr_out);
            out << j.dump(2) << '\n';
            out.close();
            mf.params = {{"freq", qr_freq}, {"alpha", qr_alpha}, {"series", qr_series}};
            mf.output("--out", qr_out);
            mf.write(qr_out);
        }
    } else if (*qper) {
        Manifest mf("qper", recorded);
        mf.input(qp_in);
        const SeriesMatrix y = io::read_series_csv(qp_in);
        const QPField f = quantile_periodogram_field(y, parse_grid(qp_alphas));
        {
            auto out = open_out(qp_out, std::ios::binary);
            for (const auto& mat : f.data)
                for (Eigen::Index i = 0; i < mat.rows(); ++i)
                    for (Eigen::Index j = 0; j < mat.cols(); ++j) {
                        const float re = static_cast<float>(mat(i, j).real()), im = static_cast<float>(mat(i, j).imag());
                        out.write(reinterpret_cast<const char*>(&re), sizeof re);
                        out.write(reinterpret_cast<const char*>(&im), sizeof im);
                    }
        }
        const std::string sidecar = qp_out + ".json";
        {
            json s = {{"format", "complex64 little-endian (re, im) float32 pairs"},
                      {"order", "frequency l = 0..2n-1, then quantile m, then matrix row i, then column j"},
                      {"n", f.n},
                      {"k", f.k},
                      {"n_freqs", f.n_freqs()},
                      {"freq_rule", "omega_l = l / (2n)"},
                      {"quantiles", grid_json(f.quantiles)}};
            auto out = open_out(sidecar);
            out << s.dump(2) << '\n';
        }
        mf.params = {{"alphas", qp_alphas}};
        mf.output("--out", qp_out);
        mf.output("--out", sidecar);
        mf.write(qp_out);
    } else if (*est) {
        Manifest mf("estimate", recorded);
        const SeriesMatrix y = load_series(es_in, es_stock, es_market, mf);
        EstimateOptions opt;
        opt.quantiles = parse_grid(es_alphas);
        opt.order = parse_order(es_order);
        opt.p_max = es_pmax;
        opt.lambda = parse_smooth(es_smooth);
        opt.folds = es_folds;
        opt.cv_seed = es_cv_seed;
        const auto pair = parse_pair(es_pair);
        opt.series_a = static_cast<Eigen::Index>(pair[0]);
        opt.series_b = static_cast<Eigen::Index>(pair[1]);
        if (std::max(opt.series_a, opt.series_b) >= y.cols()) throw ConfigError("--pair exceeds the number of series");
        const EstimateResult r = estimate_coherence(y, opt);
        {
            auto out = open_out(es_out);
            io::write_coherence_csv(out, r.smoothed);
        }
        mf.output("--out", es_out);
        if (!es_raw.empty()) {
            auto out = open_out(es_raw);
            io::write_coherence_csv(out, r.parametric.raw);
            out.close();
            mf.output("--raw-out", es_raw);
        }
        json ordinary;
        if (!es_ordinary.empty()) {
            const int p_max = es_pmax >= 0 ? es_pmax : default_max_order(static_cast<std::size_t>(y.rows()));
            const OrdinaryVarFit of = ordinary_var_coherence(y, opt.order, p_max, opt.series_a, opt.series_b);
            auto out = open_out(es_ordinary);
            io::write_coherence_curve_csv(out, of.curve);
            out.close();
            mf.output("--ordinary-out", es_ordinary);
            ordinary = {{"order", of.order}};
        }
        mf.params = {{"n", y.rows()},
                     {"alphas", es_alphas},
                     {"order", es_order},
                     {"selected_order", r.parametric.selection.order},
                     {"pmax", es_pmax},
                     {"smooth", es_smooth},
                     {"lambda", r.lambda.lambda},
                     {"folds", es_folds},
                     {"cv_seed", es_cv_seed},
                     {"pair", es_pair}};
        if (!ordinary.is_null()) mf.params["ordinary"] = ordinary;
        mf.write(es_out);
    } else if (*clu) {
        Manifest mf("cluster", recorded);
        const auto colon = cl_range.find(':');
        if (colon == std::string::npos) throw ConfigError("--range expects lo:hi");
        double lo = 0.0, hi = 0.0;
        try {
            lo = std::stod(cl_range.substr(0, colon));
            hi = std::stod(cl_range.substr(colon + 1));
        } catch (const std::logic_error&) {
            throw ConfigError("--range expects lo:hi");
        }
        std::vector<fs::path> files;
        if (!fs::is_directory(cl_dir)) throw InputError(cl_dir + " is not a directory");
        for (const auto& e : fs::directory_iterator(cl_dir))
            if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (files.size() < 2) throw InputError("cluster: need at least two feature files in " + cl_dir);
        std::vector<FeatureVector> features;
        for (const auto& f : files) {
            mf.input(f);
            features.push_back(read_feature_file(f, lo, hi));
        }
        const ClusterResult res = hierarchical_cluster(distance_matrix(features), parse_linkage(cl_link));
        const int k_max = std::min<int>(cl_kmax, static_cast<int>(features.size()));
        const auto wss = wss_curve(features, res, k_max);
        int k = 0;
        if (cl_k == "auto") {
            if (wss.size() < 3) throw ConfigError("--k auto needs --k-max >= 3 and at least three series");
            k = elbow(wss);
        } else {
            try {
                k = std::stoi(cl_k);
            } catch (const std::logic_error&) {
                throw ConfigError("--k expects 'auto' or an integer");
            }
            if (k < 1 || k > static_cast<int>(features.size())) throw ConfigError("--k out of range");
        }
        const auto labels = res.labels_at(k);
        json j;
        json ids = json::array();
        for (const auto& f : features) ids.push_back(f.id);
        j["ids"] = ids;
        j["linkage"] = cl_link;
        j["range"] = {lo, hi};
        json merges = json::array();
        for (const auto& m : res.merges) merges.push_back({{"left", m.left}, {"right", m.right}, {"height", m.height}, {"size", m.size}});
        j["merges"] = merges;
        j["wss"] = wss;
        j["k"] = k;
        j["labels"] = labels;
        json centroids = json::array();
        for (int c = 0; c < k; ++c) {
            std::vector<FeatureVector> members;
            for (std::size_t i = 0; i < labels.size(); ++i)
                if (labels[i] == c) members.push_back(features[i]);
            const CoherenceField cf = centroid_field(members);
            json rows = json::array();
            for (Eigen::Index l = 0; l < cf.values.rows(); ++l) {
                std::vector<double> row(static_cast<std::size_t>(cf.values.cols()));
                for (Eigen::Index m = 0; m < cf.values.cols(); ++m) row[static_cast<std::size_t>(m)] = cf.values(l, m);
                rows.push_back(row);
            }
            centroids.push_back({{"cluster", c}, {"size", members.size()}, {"freqs", cf.freqs}, {"quantiles", cf.quantiles}, {"values", rows}});
        }
        j["centroids"] = centroids;
        {
            auto out = open_out(cl_out);
            out << j.dump(2) << '\n';
        }
        mf.params = {{"range", cl_range}, {"k", cl_k}, {"k_max", k_max}, {"linkage", cl_link}};
        mf.output("--out", cl_out);
        mf.write(cl_out);
    } else if (*ben) {
        Manifest mf("bench", recorded);
        mf.input(bn_config);
        BenchConfig cfg = bench_config_from_toml(bn_config);
        if (bn_cache.empty())
            if (const char* env = std::getenv("QCOH_CACHE")) bn_cache = env;
        cfg.cache_dir = bn_cache;
        cfg.record_timing = bn_timing;
        const BenchReport report = run_benchmark(cfg);
        for (const auto& f : report.failures) std::cerr << "run failed: " << f << '\n';
        {
            auto out = open_out(bn_out);
            write_report_csv(out, report, bn_timing);
        }
        mf.params = bench_config_json(cfg);
        mf.output("--out", bn_out);
        mf.write(bn_out);
    } else if (*bet) {
        Manifest mf("beta", recorded);
        mf.input(bt_stock);
        mf.input(bt_market);
        const SeriesMatrix r = io::aligned_returns(io::read_prices_csv(bt_stock), io::read_prices_csv(bt_market));
        if (r.rows() < 30) throw InputError("beta: need at least 30 aligned returns, got " + std::to_string(r.rows()));
        const Eigen::VectorXd s = r.col(0), m = r.col(1);
        const double beta = capm_beta(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())),
                                      std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
        json j = {{"beta", beta}, {"n", r.rows()}};
        if (bt_out.empty()) std::cout << j.dump(2) << '\n';
        else {
            auto out = open_out(bt_out);
            out << j.dump(2) << '\n';
            out.close();
            mf.output("--out", bt_out);
            mf.write(bt_out);
        }
    } else if (*rer) {
        fs::path dir = rr_dir;
        if (dir.empty()) {
            std::string tmpl = (fs::temp_directory_path() / "qcoh-rerun-XXXXXX").string();
            if (!mkdtemp(tmpl.data())) throw InputError("cannot create a temporary directory");
            dir = tmpl;
        }
        return rerun(rr_manifest, dir);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return run(args);
    } catch (const Error& e) {
        std::cerr << "qcoh: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "qcoh: " << e.what() << '\n';
        return 1;
    }
}
