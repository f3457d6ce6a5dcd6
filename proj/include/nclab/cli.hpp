#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "nclab/closed_form.hpp"
#include "nclab/io.hpp"
#include "nclab/landscape.hpp"
#include "nclab/metrics.hpp"
#include "nclab/optimize.hpp"
#include "nclab/viz.hpp"

namespace nclab::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kUsage = 2, kNumerical = 3 };

inline const char* kTraceHeader = "iter,loss,grad_norm,nc1,nc2,nc3,numrank,balance";
inline const char* kLandscapeHeader =
    "s,theta,loss_mse,loss_ce,grad_s_mse,grad_theta_mse,grad_s_ce,grad_theta_ce";

/// Output directory plus the manifest of everything written to it.
class Run {
public:
    Run(std::string subcommand, std::filesystem::path out_dir)
        : subcommand_(std::move(subcommand)), out_(std::move(out_dir)),
          start_(std::chrono::steady_clock::now()) {
        std::filesystem::create_directories(out_);
    }

    void write(const std::string& name, const std::string& content) {
        std::ofstream f(out_ / name, std::ios::binary);
        if (!f)
            throw ConfigError("cannot write " + (out_ / name).string());
        f << content;
        files_.push_back(name);
    }

    io::json& manifest() { return manifest_; }
    const std::filesystem::path& dir() const { return out_; }

    void finish() {
        io::json m;
        m["tool"] = "nclab";
        m["version"] = kVersion;
        m["subcommand"] = subcommand_;
        for (auto& [k, v] : manifest_.items())
            m[k] = v;
        m["files"] = files_;
        m["wall_clock_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        std::ofstream f(out_ / "manifest.json", std::ios::binary);
        f << m.dump(2) << "\n";
    }

private:
    std::string subcommand_;
    std::filesystem::path out_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::string> files_;
    io::json manifest_ = io::json::object();
};

/// Seed precedence: explicit flag, then NC_LAB_SEED, then the config files.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::optional<std::uint64_t> config) {
    if (flag)
        return *flag;
    if (const char* env = std::getenv("NC_LAB_SEED")) {
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(env, &used);
            if (used == std::string(env).size())
                return v;
        } catch (const std::exception&) {
        }
        throw ConfigError("NC_LAB_SEED must be an unsigned integer");
    }
    return config.value_or(0);
}

class KeyValue {
public:
    template <class T>
    KeyValue& add(const std::string& key, const T& value) {
        if constexpr (std::is_floating_point_v<T>)
            text_ += key + "=" + io::fmt(value) + "\n";
        else if constexpr (std::is_convertible_v<T, std::string_view>)
            text_ += key + "=" + std::string(std::string_view(value)) + "\n";
        else
            text_ += key + "=" + std::to_string(value) + "\n";
        return *this;
    }
    KeyValue& add(const std::string& key, const std::optional<double>& v) {
        return v ? add(key, *v) : add(key, "nan");
    }
    KeyValue& add(const std::string& key, const Vector& v) {
        std::string s;
        for (Eigen::Index i = 0; i < v.size(); ++i)
            s += (i ? " " : "") + io::fmt(v(i));
        text_ += key + "=" + s + "\n";
        return *this;
    }
    const std::string& str() const { return text_; }

private:
    std::string text_;
};

inline void add_metrics(KeyValue& kv, const MetricsReport& m) {
    kv.add("nc1", m.nc1).add("nc2", m.nc2).add("nc3", m.nc3).add("numrank", m.numerical_rank);
    kv.add("ncc_agreement", m.ncc_agreement).add("balance_residual", m.balance_residual);
    if (!m.cosine_margins.empty())
        kv.add("cosine_margin_min", m.cosine_margins.front()).add("cosine_margin_max", m.cosine_margins.back());
}

inline std::string matrix_csv(const Matrix& m) {
    std::vector<std::string> header;
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        header.push_back("c" + std::to_string(j));
    io::CsvWriter csv(header);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            row[static_cast<std::size_t>(j)] = m(i, j);
        csv.row(row);
    }
    return csv.str();
}

inline std::string margins_csv(const std::vector<double>& margins) {
    io::CsvWriter csv({"index", "cosine_margin"});
    for (std::size_t i = 0; i < margins.size(); ++i)
        csv.row(std::vector<std::string>{std::to_string(i), io::fmt(margins[i])});
    return csv.str();
}

inline std::string trace_csv(const TrainTrace& trace) {
    io::CsvWriter csv({"iter", "loss", "grad_norm", "nc1", "nc2", "nc3", "numrank", "balance"});
    for (const TraceRecord& r : trace)
        csv.row(std::vector<std::string>{std::to_string(r.iteration), io::fmt(r.loss), io::fmt(r.gradient_norm),
                                         io::fmt(r.nc1), io::fmt(r.nc2), io::fmt(r.nc3),
                                         io::fmt(r.numerical_rank), io::fmt(r.balance_residual)});
    return csv.str();
}

// ---------------------------------------------------------------------------
// solve

struct SolveOptions {
    std::string config_path;
    std::filesystem::path out_dir = ".";
};

inline int cmd_solve(const SolveOptions& o) {
    const io::ProblemFile pf = io::parse_problem(io::read_file(o.config_path));
    const ProblemConfig& cfg = pf.cfg;
    if (!cfg.is_vanilla())
        throw ConfigError("solve: closed form requires alpha = 1 and M = 1");
    const ClosedFormSolution sol = global_minimizer(cfg);
    const Params p = sol.params();

    Run run("solve", o.out_dir);
    run.manifest()["config"] = io::to_json(cfg, pf.seed);
    KeyValue kv;
    kv.add("regime", to_string(sol.regime))
        .add("b_star", sol.b_star_scalar)
        .add("objective", sol.objective_value)
        .add("objective_reevaluated", loss(cfg, p))
        .add("collapse_ratio", collapse_ratio(cfg))
        .add("bias_threshold", bias_threshold(cfg))
        .add("shrinkage_levels", sol.shrinkage_levels)
        .add("spectrum", sol.spectrum)
        .add("gram_constant", sol.gram_constant)
        .add("W_norm", sol.W_star.norm())
        .add("H_norm", sol.H_star.norm());
    add_metrics(kv, metrics_report(cfg, p));
    run.write("solution.txt", kv.str());
    run.write("gram.csv", matrix_csv(sol.predicted_gram));
    run.write("params.json", io::serialize_params(p));
    run.finish();
    return kOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
    std::string config_path;
    std::string train_path;
    std::filesystem::path out_dir = ".";
    std::optional<std::uint64_t> seed;
};

inline int cmd_train(const TrainOptions& o) {
    const io::ProblemFile pf = io::parse_problem(io::read_file(o.config_path));
    io::TrainFile tf = io::parse_train(io::read_file(o.train_path));
    const ProblemConfig& cfg = pf.cfg;
    const bool train_has_seed = io::parse_json(io::read_file(o.train_path), "train config").contains("seed");
    tf.tcfg.seed = resolve_seed(o.seed, train_has_seed ? std::optional(tf.tcfg.seed) : pf.seed);

    Run run("train", o.out_dir);
    run.manifest()["config"] = io::to_json(cfg, pf.seed);
    run.manifest()["train_config"] = io::to_json(tf.tcfg, tf.init_scale);
    run.manifest()["seed"] = tf.tcfg.seed;

    Rng rng(tf.tcfg.seed);
    const Params init = init_params(cfg, tf.init_scale, rng);
    TrainResult res;
    try {
        res = train(cfg, tf.tcfg, init);
    } catch (const TrainDivergence& e) {
        run.write("trace.csv", trace_csv(e.trace));
        run.manifest()["error"] = e.what();
        run.finish();
        std::cerr << "nclab train: " << e.what() << "\n";
        return kNumerical;
    }
    run.write("trace.csv", trace_csv(res.trace));

    const CriticalReport rep = classify_critical_point(cfg, res.final, {.probe_seed = tf.tcfg.seed});
    KeyValue kv;
    kv.add("classification", to_string(rep.classification))
        .add("iterations", res.iterations)
        .add("converged", res.converged ? "true" : "false")
        .add("perturbations", res.perturbations)
        .add("final_step_size", res.final_step_size)
        .add("loss", rep.objective)
        .add("closed_form_objective", rep.reference_objective)
        .add("gradient_norm", rep.gradient_norm)
        .add("b_mean", res.final.b.mean())
        .add("b", Vector(res.final.b));
    add_metrics(kv, metrics_report(cfg, res.final));
    run.write("final.txt", kv.str());
    run.write("params.json", io::serialize_params(res.final));
    run.finish();
    return kOk;
}

// ---------------------------------------------------------------------------
// probe

struct ProbeOptions {
    std::string config_path;
    std::string params_path; // empty with zero_saddle
    bool zero_saddle = false;
    int trials = 200;
    std::filesystem::path out_dir = ".";
    std::optional<std::uint64_t> seed;
};

/// (W, H, b) = (0, 0, 1/(K(1+lambda_b)) 1): a critical point of the full
/// objective for every config.
inline Params zero_saddle(const ProblemConfig& cfg) {
    Params p = Params::zeros(cfg);
    p.b.setConstant(small_bias_branch(cfg));
    return p;
}

inline int cmd_probe(const ProbeOptions& o) {
    const io::ProblemFile pf = io::parse_problem(io::read_file(o.config_path));
    const ProblemConfig& cfg = pf.cfg;
    if (o.zero_saddle == !o.params_path.empty())
        throw ConfigError("probe: give exactly one of a params file or --zero-saddle");
    const Params p = o.zero_saddle ? zero_saddle(cfg) : io::parse_params(cfg, io::read_file(o.params_path));
    const std::uint64_t seed = resolve_seed(o.seed, pf.seed);

    Run run("probe", o.out_dir);
    run.manifest()["config"] = io::to_json(cfg, pf.seed);
    run.manifest()["seed"] = seed;
    run.manifest()["input"] = o.zero_saddle ? std::string("zero-saddle") : o.params_path;

    const CriticalReport rep = classify_critical_point(cfg, p, {.probe_seed = seed});
    const ProbeResult probe = min_curvature_probe(cfg, p, o.trials, Rng(seed));
    KeyValue kv;
    kv.add("classification", to_string(rep.classification))
        .add("gradient_norm", rep.gradient_norm)
        .add("criticality_tolerance", criticality_tolerance(p))
        .add("balance_residual", rep.balance_residual)
        .add("objective", rep.objective)
        .add("closed_form_objective", rep.reference_objective)
        .add("curvature_value", rep.curvature_value)
        .add("certificate", rep.certificate ? "present" : "absent")
        .add("probe_trials", o.trials)
        .add("probe_estimate", probe.estimate);
    if (rep.certificate)
        kv.add("certificate_norm", rep.certificate->norm());
    run.write("report.txt", kv.str());
    run.finish();
    return kOk;
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsOptions {
    std::string config_path;
    std::string params_path;
    std::filesystem::path out_dir = ".";
};

inline int cmd_metrics(const MetricsOptions& o) {
    const io::ProblemFile pf = io::parse_problem(io::read_file(o.config_path));
    const Params p = io::parse_params(pf.cfg, io::read_file(o.params_path));
    Run run("metrics", o.out_dir);
    run.manifest()["config"] = io::to_json(pf.cfg, pf.seed);
    run.manifest()["input"] = o.params_path;
    const MetricsReport m = metrics_report(pf.cfg, p);
    KeyValue kv;
    kv.add("loss", loss(pf.cfg, p));
    add_metrics(kv, m);
    run.write("metrics.txt", kv.str());
    run.write("margins.csv", margins_csv(m.cosine_margins));
    run.finish();
    return kOk;
}

// ---------------------------------------------------------------------------
// landscape

struct LandscapeOptions {
    int K = 10;
    double alpha = 1.0;
    double M = 1.0;
    double s_min = 0.0, s_max = 5.0;
    double theta_min = 0.0, theta_max = std::numbers::pi;
    int s_resolution = 101;
    int theta_resolution = 101;
    bool limit = false;
    std::filesystem::path out_dir = ".";
    std::string file_name = "landscape.csv";
};

inline std::string landscape_csv(const viz::LandscapeGrid& g) {
    io::CsvWriter csv({"s", "theta", "loss_mse", "loss_ce", "grad_s_mse", "grad_theta_mse", "grad_s_ce",
                       "grad_theta_ce"});
    const auto& lm = g.surface("loss_mse");
    const auto& lc = g.surface("loss_ce");
    const auto& gsm = g.surface("grad_s_mse");
    const auto& gtm = g.surface("grad_theta_mse");
    const auto& gsc = g.surface("grad_s_ce");
    const auto& gtc = g.surface("grad_theta_ce");
    std::size_t idx = 0;
    for (double s : g.s_values)
        for (double t : g.theta_values) {
            csv.row(std::vector<double>{s, t, lm[idx], lc[idx], gsm[idx], gtm[idx], gsc[idx], gtc[idx]});
            ++idx;
        }
    return csv.str();
}

inline int cmd_landscape(const LandscapeOptions& o) {
    if (o.K < 3)
        throw ConfigError("landscape: K must be at least 3");
    if (!(o.alpha >= 1.0) || !(o.M > 0))
        throw ConfigError("landscape: need alpha >= 1 and M > 0");
    viz::LandscapeGrid g;
    try {
        g = viz::emit_grid(o.K, o.alpha, o.M, {o.s_min, o.s_max}, {o.theta_min, o.theta_max}, o.s_resolution,
                           o.theta_resolution, o.limit);
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    Run run("landscape", o.out_dir);
    run.manifest()["config"] = {{"K", o.K},
                                {"alpha", o.alpha},
                                {"M", o.M},
                                {"s_range", {o.s_min, o.s_max}},
                                {"theta_range", {o.theta_min, o.theta_max}},
                                {"resolution", {o.s_resolution, o.theta_resolution}},
                                {"limit", o.limit}};
    run.write(o.file_name, landscape_csv(g));
    run.finish();
    return kOk;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepOptions {
    std::string config_path;
    std::string sweep_path;
    std::string train_path; // optional; defaults to gd with library defaults
    std::filesystem::path out_dir = ".";
    std::optional<std::uint64_t> seed;
};

struct SweepSpec {
    std::string axis;
    std::vector<double> values;
};

/// {"<axis>": [values...]} with exactly one axis in {lambda_b, alpha, M, d}.
inline SweepSpec parse_sweep(const std::string& text) {
    const io::json j = io::parse_json(text, "sweep spec");
    if (!j.is_object() || j.size() != 1)
        throw ConfigError("sweep spec must name exactly one axis");
    SweepSpec s;
    s.axis = j.begin().key();
    if (s.axis != "lambda_b" && s.axis != "alpha" && s.axis != "M" && s.axis != "d")
        throw ConfigError("sweep axis must be one of lambda_b, alpha, M, d");
    const io::json& v = j.begin().value();
    if (!v.is_array() || v.empty())
        throw ConfigError("sweep values must be a non-empty array");
    for (const io::json& x : v) {
        if (!x.is_number())
            throw ConfigError("sweep values must be numbers");
        if (s.axis == "d" && !x.is_number_integer())
            throw ConfigError("d sweep values must be integers");
        s.values.push_back(x.get<double>());
    }
    return s;
}

inline ProblemConfig apply_axis(ProblemConfig cfg, const std::string& axis, double value) {
    if (axis == "lambda_b")
        cfg.lambda_b = value;
    else if (axis == "alpha")
        cfg.alpha = value;
    else if (axis == "M")
        cfg.M = value;
    else
        cfg.d = static_cast<int>(value);
    cfg.validate();
    return cfg;
}

inline int cmd_sweep(const SweepOptions& o) {
    const io::ProblemFile pf = io::parse_problem(io::read_file(o.config_path));
    const SweepSpec spec = parse_sweep(io::read_file(o.sweep_path));
    io::TrainFile tf;
    std::optional<std::uint64_t> config_seed = pf.seed;
    if (!o.train_path.empty()) {
        const std::string text = io::read_file(o.train_path);
        tf = io::parse_train(text);
        if (io::parse_json(text, "train config").contains("seed"))
            config_seed = tf.tcfg.seed;
    }
    tf.tcfg.seed = resolve_seed(o.seed, config_seed);
    tf.tcfg.trace_every = 0;
    std::vector<ProblemConfig> points;
    for (double v : spec.values)
        points.push_back(apply_axis(pf.cfg, spec.axis, v));

    Run run("sweep", o.out_dir);
    run.manifest()["config"] = io::to_json(pf.cfg, pf.seed);
    run.manifest()["train_config"] = io::to_json(tf.tcfg, tf.init_scale);
    run.manifest()["sweep"] = {{"axis", spec.axis}, {"values", spec.values}};
    run.manifest()["seed"] = tf.tcfg.seed;

    io::CsvWriter csv({"index", "axis", "value", "regime", "b_star", "objective", "final_loss", "b_mean", "nc1",
                       "nc2", "nc3", "numrank", "balance", "classification"});
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < points.size(); ++i) {
        const ProblemConfig& cfg = points[i];
        std::string regime = "none";
        double b_star = nan, objective = nan;
        if (cfg.is_vanilla()) {
            const ClosedFormSolution sol = global_minimizer(cfg);
            regime = std::string(to_string(sol.regime));
            b_star = sol.b_star_scalar;
            objective = sol.objective_value;
        }
        // Every grid point starts from the same init draw.
        Rng rng(tf.tcfg.seed);
        const Params init = init_params(cfg, tf.init_scale, rng);
        TrainResult res;
        try {
            res = train(cfg, tf.tcfg, init);
        } catch (const TrainDivergence& e) {
            run.write("sweep.csv", csv.str());
            run.manifest()["error"] = e.what();
            run.finish();
            std::cerr << "nclab sweep: " << e.what() << "\n";
            return kNumerical;
        }
        const TraceRecord r = make_record(cfg, res.final, res.iterations, loss(cfg, res.final), 0.0);
        const CriticalReport rep = classify_critical_point(cfg, res.final, {.probe_seed = tf.tcfg.seed});
        csv.row(std::vector<std::string>{std::to_string(i), spec.axis, io::fmt(spec.values[i]), regime,
                                         io::fmt(b_star), io::fmt(objective), io::fmt(r.loss),
                                         io::fmt(res.final.b.mean()), io::fmt(r.nc1), io::fmt(r.nc2),
                                         io::fmt(r.nc3), io::fmt(r.numerical_rank), io::fmt(r.balance_residual),
                                         std::string(to_string(rep.classification))});
    }
    run.write("sweep.csv", csv.str());
    run.finish();
    return kOk;
}

} // namespace nclab::cli
