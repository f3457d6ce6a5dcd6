#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "nclab/errors.hpp"
#include "nclab/numerics.hpp"

namespace nclab::viz {

/// Polar coordinates of a feature in span{w^k, w^k'} with polar axis w^k.
struct PolarPoint {
    double s = 0.0;
    double theta = 0.0;
};

inline void require_k3(int K, const char* who) {
    if (K < 3)
        throw InvalidInput(std::string(who) + ": K must be at least 3");
}

inline void require_point(const PolarPoint& p) {
    if (!std::isfinite(p.s) || !std::isfinite(p.theta) || p.s < 0 || p.theta < 0 || p.theta > std::numbers::pi)
        throw InvalidInput("polar point must have s >= 0 and theta in [0, pi]");
}

/// h = s (sin t / sqrt(K^2-2K) + cos t) w^k + s (K-1) sin t / sqrt(K^2-2K) w^k'
inline Vector feature_from_polar(int K, const PolarPoint& p, const Vector& wk, const Vector& wkp) {
    require_k3(K, "feature_from_polar");
    const double root = std::sqrt(static_cast<double>(K) * K - 2.0 * K);
    const double st = std::sin(p.theta), ct = std::cos(p.theta);
    return p.s * (st / root + ct) * wk + p.s * (K - 1) * st / root * wkp;
}

struct ClassifierOutputs {
    double own;
    double neighbor;
    double others;
};

/// Outputs of an ETF classifier (b = 0) on the polar feature.
inline ClassifierOutputs classifier_outputs(int K, const PolarPoint& p) {
    require_k3(K, "classifier_outputs");
    const double km1 = K - 1.0;
    const double st = std::sin(p.theta), ct = std::cos(p.theta);
    return {p.s * ct,
            p.s * std::sqrt(static_cast<double>(K) * K - 2.0 * K) / km1 * st - p.s * ct / km1,
            -p.s * std::sqrt(static_cast<double>(K) / (K - 2)) / km1 * st - p.s * ct / km1};
}

namespace detail {
// neighbor = s*A(t), others = -s*B(t)
inline double coef_a(int K, double t) {
    return (std::sqrt(static_cast<double>(K) * K - 2.0 * K) * std::sin(t) - std::cos(t)) / (K - 1.0);
}
inline double coef_a_prime(int K, double t) {
    return (std::sqrt(static_cast<double>(K) * K - 2.0 * K) * std::cos(t) + std::sin(t)) / (K - 1.0);
}
inline double coef_b(int K, double t) {
    return (std::sqrt(static_cast<double>(K) / (K - 2)) * std::sin(t) + std::cos(t)) / (K - 1.0);
}
inline double coef_b_prime(int K, double t) {
    return (std::sqrt(static_cast<double>(K) / (K - 2)) * std::cos(t) - std::sin(t)) / (K - 1.0);
}
} // namespace detail

/// Rescaled MSE of a single class-k feature on the slice.
inline double loss_surface_mse(int K, double alpha, double M, const PolarPoint& p) {
    require_k3(K, "loss_surface_mse");
    const double a = detail::coef_a(K, p.theta), b = detail::coef_b(K, p.theta);
    const double own = p.s * std::cos(p.theta) - M;
    return 0.5 * alpha * own * own + 0.5 * p.s * p.s * a * a + 0.5 * p.s * p.s * (K - 2) * b * b;
}

namespace detail {
// Softmax weights of (own, neighbor, K-2 others) with max subtraction.
struct Softmax {
    double p_own, p_nb, p_oth_each, log_partition_minus_own;
};
inline Softmax softmax(int K, const PolarPoint& p) {
    const ClassifierOutputs z = classifier_outputs(K, p);
    const double m = std::max({z.own, z.neighbor, z.others});
    const double e0 = std::exp(z.own - m), e1 = std::exp(z.neighbor - m), e2 = std::exp(z.others - m);
    const double zsum = e0 + e1 + (K - 2) * e2;
    return {e0 / zsum, e1 / zsum, e2 / zsum, m + std::log(zsum) - z.own};
}
} // namespace detail

/// Cross-entropy of a single class-k feature on the slice.
inline double loss_surface_ce(int K, const PolarPoint& p) {
    require_k3(K, "loss_surface_ce");
    return detail::softmax(K, p).log_partition_minus_own;
}

struct Gradient2 {
    double d_s;
    double d_theta;
};

/// Exact partial derivatives of loss_surface_mse at finite K.
inline Gradient2 gradient_mse(int K, double alpha, double M, const PolarPoint& p) {
    require_k3(K, "gradient_mse");
    const double t = p.theta, s = p.s;
    const double a = detail::coef_a(K, t), ap = detail::coef_a_prime(K, t);
    const double b = detail::coef_b(K, t), bp = detail::coef_b_prime(K, t);
    const double own = s * std::cos(t) - M;
    return {alpha * std::cos(t) * own + s * a * a + s * (K - 2) * b * b,
            -alpha * s * std::sin(t) * own + s * s * a * ap + s * s * (K - 2) * b * bp};
}

/// Exact partial derivatives of loss_surface_ce at finite K.
inline Gradient2 gradient_ce(int K, const PolarPoint& p) {
    require_k3(K, "gradient_ce");
    const double t = p.theta, s = p.s;
    const detail::Softmax sm = detail::softmax(K, p);
    const double a = detail::coef_a(K, t), ap = detail::coef_a_prime(K, t);
    const double b = detail::coef_b(K, t), bp = detail::coef_b_prime(K, t);
    // d/dx [logsumexp(z) - z_own] = sum_i p_i dz_i - dz_own
    const double ds = sm.p_own * std::cos(t) + sm.p_nb * a - (K - 2) * sm.p_oth_each * b - std::cos(t);
    const double dt = sm.p_own * (-s * std::sin(t)) + sm.p_nb * s * ap - (K - 2) * sm.p_oth_each * s * bp +
                      s * std::sin(t);
    return {ds, dt};
}

enum class LimitLoss { Mse, Ce };

/// Gradient of the K -> infinity slice losses.
inline Gradient2 gradient_field_limit(double alpha, double M, const PolarPoint& p, LimitLoss which) {
    const double s = p.s, st = std::sin(p.theta), ct = std::cos(p.theta);
    if (which == LimitLoss::Mse)
        return {s + (alpha - 1.0) * s * ct * ct - alpha * M * ct,
                alpha * M * s * st - (alpha - 1.0) * s * s * st * ct};
    const double es = std::exp(st), ec = std::exp(ct);
    return {es * (st - ct) / (es + ec), s * es * (st + ct) / (es + ec)};
}

/// (alpha/2)(s cos t - M)^2 + (s^2/2) sin^2 t
inline double limit_loss_mse(double alpha, double M, const PolarPoint& p) {
    const double own = p.s * std::cos(p.theta) - M;
    const double st = std::sin(p.theta);
    return 0.5 * alpha * own * own + 0.5 * p.s * p.s * st * st;
}

struct LandscapeGrid {
    std::vector<double> s_values;
    std::vector<double> theta_values;
    // Row-major over (s, theta): index = i_s * theta_values.size() + i_theta.
    std::vector<std::pair<std::string, std::vector<double>>> surfaces;
    int K = 3;
    double alpha = 1.0;
    double M = 1.0;
    bool limit_mode = false;

    const std::vector<double>& surface(const std::string& name) const {
        for (const auto& [n, v] : surfaces)
            if (n == name)
                return v;
        throw InvalidInput("no surface named " + name);
    }
};

inline std::vector<double> linspace(double lo, double hi, int count) {
    std::vector<double> v(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        v[static_cast<std::size_t>(i)] = (i == count - 1) ? hi : lo + (hi - lo) * i / (count - 1);
    return v;
}

/// Evaluates both loss surfaces and both gradient fields on a uniform grid.
/// In limit mode the gradient columns are the K -> infinity fields; the loss
/// columns always use the finite-K formulas.
inline LandscapeGrid emit_grid(int K, double alpha, double M, std::pair<double, double> s_range,
                               std::pair<double, double> theta_range, int s_resolution, int theta_resolution,
                               bool limit_mode = false) {
    require_k3(K, "emit_grid");
    if (s_resolution < 2 || theta_resolution < 2)
        throw InvalidInput("emit_grid: resolution must be at least 2 per axis");
    if (!(s_range.second > s_range.first) || !(theta_range.second > theta_range.first))
        throw InvalidInput("emit_grid: empty range");
    if (s_range.first < 0 || theta_range.first < 0 || theta_range.second > std::numbers::pi)
        throw InvalidInput("emit_grid: s must be >= 0 and theta within [0, pi]");

    LandscapeGrid g;
    g.K = K;
    g.alpha = alpha;
    g.M = M;
    g.limit_mode = limit_mode;
    g.s_values = linspace(s_range.first, s_range.second, s_resolution);
    g.theta_values = linspace(theta_range.first, theta_range.second, theta_resolution);
    const std::size_t total = g.s_values.size() * g.theta_values.size();
    std::vector<double> lm(total), lc(total), gsm(total), gtm(total), gsc(total), gtc(total);
    std::size_t idx = 0;
    for (double s : g.s_values) {
        for (double t : g.theta_values) {
            const PolarPoint p{s, t};
            lm[idx] = loss_surface_mse(K, alpha, M, p);
            lc[idx] = loss_surface_ce(K, p);
            const Gradient2 m = limit_mode ? gradient_field_limit(alpha, M, p, LimitLoss::Mse)
                                           : gradient_mse(K, alpha, M, p);
            const Gradient2 c = limit_mode ? gradient_field_limit(alpha, M, p, LimitLoss::Ce) : gradient_ce(K, p);
            gsm[idx] = m.d_s;
            gtm[idx] = m.d_theta;
            gsc[idx] = c.d_s;
            gtc[idx] = c.d_theta;
            ++idx;
        }
    }
    g.surfaces = {{"loss_mse", std::move(lm)},   {"loss_ce", std::move(lc)},
                  {"grad_s_mse", std::move(gsm)}, {"grad_theta_mse", std::move(gtm)},
                  {"grad_s_ce", std::move(gsc)},  {"grad_theta_ce", std::move(gtc)}};
    return g;
}

} // namespace nclab::viz
