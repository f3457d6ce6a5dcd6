#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "nclab/closed_form.hpp"
#include "nclab/landscape.hpp"
#include "nclab/metrics.hpp"
#include "nclab/model.hpp"

namespace nclab {

enum class Method { GD, Momentum, PGD };

inline std::string_view to_string(Method m) {
    switch (m) {
    case Method::GD: return "gd";
    case Method::Momentum: return "momentum";
    case Method::PGD: return "pgd";
    }
    return "unknown";
}

struct TrainConfig {
    Method method = Method::GD;
    double step_size = 0.0;      // <= 0 selects default_step_size()
    double momentum_coeff = 0.9; // momentum only
    long max_iters = 200000;
    double grad_tol = 1e-10;
    double perturb_radius = 0.0; // pgd; <= 0 selects 1e-3 (1 + ||x||)
    long perturb_patience = 200; // pgd; iterations before the next check
    std::uint64_t seed = 0;
    long trace_every = 1000;     // 0 disables intermediate records

    void validate() const {
        if (!(step_size >= 0) || !std::isfinite(step_size))
            throw ConfigError("step_size must be positive (or 0 for the default)");
        if (!(momentum_coeff >= 0 && momentum_coeff < 1))
            throw ConfigError("momentum_coeff must lie in [0, 1)");
        if (max_iters < 0)
            throw ConfigError("max_iters must be nonnegative");
        if (!(grad_tol > 0))
            throw ConfigError("grad_tol must be positive");
        if (perturb_patience < 1)
            throw ConfigError("perturb_patience must be at least 1");
        if (trace_every < 0)
            throw ConfigError("trace_every must be nonnegative");
    }
};

struct TraceRecord {
    long iteration;
    double loss;
    double gradient_norm;
    double nc1, nc2, nc3, numerical_rank, balance_residual; // NaN when undefined
};

using TrainTrace = std::vector<TraceRecord>;

struct TrainResult {
    Params final;
    TrainTrace trace;
    long iterations = 0;
    bool converged = false;
    int perturbations = 0;
    double final_step_size = 0.0;
};

struct TrainDivergence : DivergenceError {
    TrainDivergence(const std::string& what, double step, TrainTrace partial)
        : DivergenceError(what, step), trace(std::move(partial)) {}
    TrainTrace trace;
};

/// 0.2 / (1 + sigma_1(Y)^2 / N); sigma_1(Y)^2 = n for balanced one-hot labels.
inline double default_step_size(const ProblemConfig& cfg) {
    const double s1 = thin_svd(build_labels(cfg)).singular_values(0);
    return 0.2 / (1.0 + s1 * s1 / cfg.N());
}

/// Gaussian init: std scale/sqrt(d) for W and H, scale for b.
inline Params init_params(const ProblemConfig& cfg, double scale, Rng& rng) {
    if (!(scale > 0))
        throw InvalidInput("init_params: scale must be positive");
    const double fs = scale / std::sqrt(static_cast<double>(cfg.d));
    Params p;
    p.W = rng.normal_matrix(cfg.K, cfg.d, fs);
    p.H = rng.normal_matrix(cfg.d, cfg.N(), fs);
    p.b = rng.normal_vector(cfg.K, scale);
    return p;
}

inline TraceRecord make_record(const ProblemConfig& cfg, const Params& p, long it, double f, double gn) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    auto val = [](std::optional<double> v) { return v ? *v : nan; };
    return {it,
            f,
            gn,
            nc1(cfg, p),
            val(try_metric([&] { return nc2(cfg, p); })),
            val(try_metric([&] { return nc3(cfg, p); })),
            val(try_metric([&] { return numerical_rank(cfg, p); })),
            balance_residual(cfg, p)};
}

/// Uniform sample from the ball of the given radius in parameter space.
inline Params ball_perturbation(const ProblemConfig& cfg, double radius, Rng& rng) {
    Params dir{rng.normal_matrix(cfg.K, cfg.d), rng.normal_matrix(cfg.d, cfg.N()), rng.normal_vector(cfg.K)};
    const double dim = static_cast<double>(cfg.K) * cfg.d + static_cast<double>(cfg.d) * cfg.N() + cfg.K;
    const double r = radius * std::pow(rng.uniform(), 1.0 / dim);
    return dir.scaled(r / dir.norm());
}

/// True once pgd may stop: the point is a verified global minimum (vanilla)
/// or no negative curvature is found (rescaled).
inline bool pgd_may_stop(const ProblemConfig& cfg, const Params& x, std::uint64_t seed) {
    if (cfg.is_vanilla())
        return classify_critical_point(cfg, x, {.probe_seed = seed}).classification ==
               Classification::GlobalMinimum;
    return min_curvature_probe(cfg, x, 32, Rng(seed)).estimate >= -1e-10;
}

/// Largest loss increase attributed to floating-point roundoff.
inline double loss_roundoff(double f) { return 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f)); }

/// Full-batch first-order training. gd and pgd halve the step on any loss
/// increase, so their loss trace is nonincreasing between perturbations.
inline TrainResult train(const ProblemConfig& cfg, const TrainConfig& tcfg, const Params& init) {
    cfg.validate();
    tcfg.validate();
    check_shapes(cfg, init);
    constexpr double diverged = 1e12;

    TrainResult res;
    Params x = init;
    Params velocity = Params::zeros(cfg);
    double step = tcfg.step_size > 0 ? tcfg.step_size : default_step_size(cfg);
    Rng perturb_rng = Rng(tcfg.seed).derive(0x70676421);
    long since_perturb = std::numeric_limits<long>::max();
    double f = loss(cfg, x);
    long it = 0;

    auto record = [&](double gn) {
        if (res.trace.empty() || res.trace.back().iteration != it)
            res.trace.push_back(make_record(cfg, x, it, f, gn));
    };
    auto fail = [&](const std::string& why) {
        throw TrainDivergence(why + " (step size " + std::to_string(step) + ")", step, res.trace);
    };

    for (;; ++it) {
        const Params g = gradient(cfg, x);
        const double gn = g.norm();
        if (tcfg.trace_every > 0 && it % tcfg.trace_every == 0)
            record(gn);
        if (gn <= tcfg.grad_tol) {
            if (tcfg.method != Method::PGD) {
                res.converged = true;
                record(gn);
                break;
            }
            if (since_perturb >= tcfg.perturb_patience) {
                if (pgd_may_stop(cfg, x, tcfg.seed)) {
                    res.converged = true;
                    record(gn);
                    break;
                }
                const double radius = tcfg.perturb_radius > 0 ? tcfg.perturb_radius : 1e-3 * (1.0 + x.norm());
                x.add_scaled(1.0, ball_perturbation(cfg, radius, perturb_rng));
                f = loss(cfg, x);
                since_perturb = 0;
                ++res.perturbations;
                continue;
            }
        }
        if (it >= tcfg.max_iters) {
            record(gn);
            break;
        }
        if (since_perturb < std::numeric_limits<long>::max())
            ++since_perturb;

        if (tcfg.method == Method::Momentum) {
            velocity = velocity.scaled(tcfg.momentum_coeff).add_scaled(-step, g);
            x.add_scaled(1.0, velocity);
            f = loss(cfg, x);
            if (!std::isfinite(f) || f > diverged)
                fail("training diverged");
            continue;
        }
        // gd / pgd: accept only non-increasing steps (up to roundoff in f).
        for (;;) {
            Params trial = x;
            trial.add_scaled(-step, g);
            const double ft = loss(cfg, trial);
            if (std::isfinite(ft) && ft <= f + loss_roundoff(f)) {
                x = std::move(trial);
                f = ft;
                break;
            }
            step *= 0.5;
            if (step < 1e-300)
                fail("step size underflow");
        }
    }
    res.final = std::move(x);
    res.iterations = it;
    res.final_step_size = step;
    return res;
}

struct MultistartResult {
    Params best;
    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<double> losses; // per start, in start order
};

/// Best-of-`starts` training from Gaussian inits; start i uses substream i
/// of rng for both the init and the trainer seed.
inline MultistartResult multistart_oracle(const ProblemConfig& cfg, int starts, const TrainConfig& tcfg,
                                          const Rng& rng, double init_scale = 1.0) {
    if (starts < 1)
        throw InvalidInput("multistart_oracle: starts must be >= 1");
    MultistartResult out;
    for (int s = 0; s < starts; ++s) {
        Rng sub = rng.derive(static_cast<std::uint64_t>(s));
        TrainConfig run = tcfg;
        run.seed = sub.next_u64();
        run.trace_every = 0;
        const Params init = init_params(cfg, init_scale, sub);
        TrainResult r = train(cfg, run, init);
        const double f = loss(cfg, r.final);
        out.losses.push_back(f);
        if (f < out.best_loss) {
            out.best_loss = f;
            out.best = std::move(r.final);
        }
    }
    return out;
}

} // namespace nclab
