#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nclab/errors.hpp"
#include "nclab/model.hpp"
#include "nclab/optimize.hpp"

namespace nclab::io {

using json = nlohmann::ordered_json;

/// 17 significant digits: bit-faithful for doubles.
inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

struct ProblemFile {
    ProblemConfig cfg;
    std::optional<std::uint64_t> seed;
};

namespace detail {
template <class T>
T get_number(const json& j, const char* key, T fallback, bool required) {
    if (!j.contains(key)) {
        if (required)
            throw ConfigError(std::string("missing key '") + key + "'");
        return fallback;
    }
    const json& v = j.at(key);
    if (!v.is_number())
        throw ConfigError(std::string("key '") + key + "' must be a number");
    if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer())
            throw ConfigError(std::string("key '") + key + "' must be an integer");
    }
    return v.get<T>();
}
} // namespace detail

/// Flat JSON object with keys K, n, d, lambda_w, lambda_h, lambda_b and the
/// optional alpha, M (default 1) and seed. A per-class count list for n is
/// accepted only when every class has the same count.
inline ProblemFile parse_problem(const std::string& text) {
    const json j = parse_json(text, "problem config");
    if (!j.is_object())
        throw ConfigError("problem config must be a JSON object");
    static const char* known[] = {"K", "n", "d", "lambda_w", "lambda_h", "lambda_b", "alpha", "M", "seed"};
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known)
            ok = ok || key == k;
        if (!ok)
            throw ConfigError("unknown key '" + key + "'");
    }
    ProblemFile out;
    ProblemConfig& c = out.cfg;
    c.K = detail::get_number<int>(j, "K", 0, true);
    if (j.contains("n") && j.at("n").is_array()) {
        const json& counts = j.at("n");
        if (counts.empty() || static_cast<int>(counts.size()) != c.K)
            throw ConfigError("per-class counts must list K entries");
        for (const json& v : counts)
            if (!v.is_number_integer() || v != counts.front())
                throw ConfigError("unbalanced classes are not supported");
        c.n = counts.front().get<int>();
    } else {
        c.n = detail::get_number<int>(j, "n", 0, true);
    }
    c.d = detail::get_number<int>(j, "d", 0, true);
    c.lambda_w = detail::get_number<double>(j, "lambda_w", 0, true);
    c.lambda_h = detail::get_number<double>(j, "lambda_h", 0, true);
    c.lambda_b = detail::get_number<double>(j, "lambda_b", 0, true);
    c.alpha = detail::get_number<double>(j, "alpha", 1.0, false);
    c.M = detail::get_number<double>(j, "M", 1.0, false);
    if (j.contains("seed"))
        out.seed = detail::get_number<std::uint64_t>(j, "seed", 0, true);
    c.validate();
    return out;
}

inline json to_json(const ProblemConfig& c, std::optional<std::uint64_t> seed = std::nullopt) {
    json j;
    j["K"] = c.K;
    j["n"] = c.n;
    j["d"] = c.d;
    j["lambda_w"] = c.lambda_w;
    j["lambda_h"] = c.lambda_h;
    j["lambda_b"] = c.lambda_b;
    j["alpha"] = c.alpha;
    j["M"] = c.M;
    if (seed)
        j["seed"] = *seed;
    return j;
}

inline std::string serialize_problem(const ProblemFile& f) { return to_json(f.cfg, f.seed).dump(2) + "\n"; }

inline Method parse_method(const std::string& s) {
    if (s == "gd")
        return Method::GD;
    if (s == "momentum")
        return Method::Momentum;
    if (s == "pgd")
        return Method::PGD;
    throw ConfigError("unknown method '" + s + "'");
}

struct TrainFile {
    TrainConfig tcfg;
    double init_scale = 1.0;
};

/// Training config; every key is optional.
inline TrainFile parse_train(const std::string& text) {
    const json j = parse_json(text, "train config");
    if (!j.is_object())
        throw ConfigError("train config must be a JSON object");
    TrainFile out;
    TrainConfig& t = out.tcfg;
    if (j.contains("method")) {
        if (!j.at("method").is_string())
            throw ConfigError("method must be a string");
        t.method = parse_method(j.at("method").get<std::string>());
    }
    t.step_size = detail::get_number<double>(j, "step_size", t.step_size, false);
    t.momentum_coeff = detail::get_number<double>(j, "momentum_coeff", t.momentum_coeff, false);
    t.max_iters = detail::get_number<long>(j, "max_iters", t.max_iters, false);
    t.grad_tol = detail::get_number<double>(j, "grad_tol", t.grad_tol, false);
    t.perturb_radius = detail::get_number<double>(j, "perturb_radius", t.perturb_radius, false);
    t.perturb_patience = detail::get_number<long>(j, "perturb_patience", t.perturb_patience, false);
    t.seed = detail::get_number<std::uint64_t>(j, "seed", t.seed, false);
    t.trace_every = detail::get_number<long>(j, "trace_every", t.trace_every, false);
    out.init_scale = detail::get_number<double>(j, "init_scale", out.init_scale, false);
    if (t.method != Method::PGD && (j.contains("perturb_radius") || j.contains("perturb_patience")))
        throw ConfigError("perturb_radius/perturb_patience are only valid with method pgd");
    if (!(out.init_scale > 0))
        throw ConfigError("init_scale must be positive");
    t.validate();
    return out;
}

inline json to_json(const TrainConfig& t, double init_scale) {
    json j;
    j["method"] = std::string(to_string(t.method));
    j["step_size"] = t.step_size;
    if (t.method == Method::Momentum)
        j["momentum_coeff"] = t.momentum_coeff;
    j["max_iters"] = t.max_iters;
    j["grad_tol"] = t.grad_tol;
    if (t.method == Method::PGD) {
        j["perturb_radius"] = t.perturb_radius;
        j["perturb_patience"] = t.perturb_patience;
    }
    j["seed"] = t.seed;
    j["trace_every"] = t.trace_every;
    j["init_scale"] = init_scale;
    return j;
}

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const char* name) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
        throw ConfigError(std::string("params: ") + name + " has the wrong number of rows");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const json& row = j.at(static_cast<std::size_t>(i));
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw ConfigError(std::string("params: ") + name + " has the wrong number of columns");
        for (Eigen::Index c = 0; c < cols; ++c) {
            if (!row.at(static_cast<std::size_t>(c)).is_number())
                throw ConfigError(std::string("params: ") + name + " entries must be numbers");
            m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
        }
    }
    return m;
}

/// Params as {"W": [[...]], "H": [[...]], "b": [...]}, row-major, exact
/// round-trip of every double.
inline std::string serialize_params(const Params& p) {
    json j;
    j["W"] = matrix_to_json(p.W);
    j["H"] = matrix_to_json(p.H);
    json b = json::array();
    for (Eigen::Index i = 0; i < p.b.size(); ++i)
        b.push_back(p.b(i));
    j["b"] = std::move(b);
    return j.dump() + "\n";
}

inline Params parse_params(const ProblemConfig& cfg, const std::string& text) {
    const json j = parse_json(text, "params");
    if (!j.is_object() || !j.contains("W") || !j.contains("H") || !j.contains("b"))
        throw ConfigError("params file needs W, H and b");
    Params p;
    p.W = matrix_from_json(j.at("W"), cfg.K, cfg.d, "W");
    p.H = matrix_from_json(j.at("H"), cfg.d, cfg.N(), "H");
    const json& b = j.at("b");
    if (!b.is_array() || static_cast<int>(b.size()) != cfg.K)
        throw ConfigError("params: b must have K entries");
    p.b = Vector(cfg.K);
    for (int i = 0; i < cfg.K; ++i)
        p.b(i) = b.at(static_cast<std::size_t>(i)).get<double>();
    if (!p.all_finite())
        throw ConfigError("params: non-finite entries");
    return p;
}

/// Minimal CSV writer: header plus rows of preformatted cells.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { line(header); }

    void row(const std::vector<double>& values) {
        std::vector<std::string> cells;
        cells.reserve(values.size());
        for (double v : values)
            cells.push_back(fmt(v));
        line(cells);
    }
    void row(const std::vector<std::string>& cells) { line(cells); }

    const std::string& str() const { return text_; }

private:
    void line(const std::vector<std::string>& cells) {
        if (cells.size() != columns_)
            throw InvalidInput("csv: row width does not match header");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i)
                text_ += ',';
            text_ += cells[i];
        }
        text_ += '\n';
    }
    std::size_t columns_;
    std::string text_;
};

} // namespace nclab::io
