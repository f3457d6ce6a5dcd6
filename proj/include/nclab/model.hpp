#pragma once

#include <cmath>
#include <string>

#include "nclab/errors.hpp"
#include "nclab/numerics.hpp"

namespace nclab {

/// A UFM problem instance: K balanced classes of n samples each, feature
/// dimension d, weight decay on (W, H, b), and the (alpha, M) rescaling.
/// alpha = M = 1 is the vanilla regularized MSE.
struct ProblemConfig {
    int K = 2;
    int n = 1;
    int d = 1;
    double lambda_w = 1e-3;
    double lambda_h = 1e-3;
    double lambda_b = 1e-3;
    double alpha = 1.0;
    double M = 1.0;

    int N() const { return n * K; }
    bool is_vanilla() const { return alpha == 1.0 && M == 1.0; }

    void validate() const {
        if (K < 2)
            throw ConfigError("K must be at least 2");
        if (n < 1)
            throw ConfigError("n must be at least 1");
        if (d < 1)
            throw ConfigError("d must be at least 1");
        auto positive = [](double v, const char* name) {
            if (!(v > 0) || !std::isfinite(v))
                throw ConfigError(std::string(name) + " must be a positive finite number");
        };
        positive(lambda_w, "lambda_w");
        positive(lambda_h, "lambda_h");
        positive(lambda_b, "lambda_b");
        positive(M, "M");
        if (!(alpha >= 1.0) || !std::isfinite(alpha))
            throw ConfigError("alpha must be >= 1");
    }
};

/// Optimization state: classifier W (K x d), features H (d x N), bias b (K).
struct Params {
    Matrix W;
    Matrix H;
    Vector b;

    static Params zeros(const ProblemConfig& cfg) {
        return {Matrix::Zero(cfg.K, cfg.d), Matrix::Zero(cfg.d, cfg.N()), Vector::Zero(cfg.K)};
    }

    double squared_norm() const {
        return W.squaredNorm() + H.squaredNorm() + b.squaredNorm();
    }
    double norm() const { return std::sqrt(squared_norm()); }

    double dot(const Params& o) const {
        return (W.array() * o.W.array()).sum() + (H.array() * o.H.array()).sum() + b.dot(o.b);
    }

    Params& add_scaled(double t, const Params& o) {
        W += t * o.W;
        H += t * o.H;
        b += t * o.b;
        return *this;
    }

    Params scaled(double t) const { return {t * W, t * H, t * b}; }

    bool all_finite() const { return W.allFinite() && H.allFinite() && b.allFinite(); }
};

inline Params operator+(Params a, const Params& b) { return a.add_scaled(1.0, b); }
inline Params operator-(Params a, const Params& b) { return a.add_scaled(-1.0, b); }

inline int class_of(const ProblemConfig& cfg, Eigen::Index column) {
    return static_cast<int>(column / cfg.n);
}

inline void check_shapes(const ProblemConfig& cfg, const Params& p) {
    if (p.W.rows() != cfg.K || p.W.cols() != cfg.d)
        throw ShapeMismatch("W must be K x d");
    if (p.H.rows() != cfg.d || p.H.cols() != cfg.N())
        throw ShapeMismatch("H must be d x N");
    if (p.b.size() != cfg.K)
        throw ShapeMismatch("b must have length K");
}

/// Class-blocked one-hot labels: column j belongs to class floor(j / n).
inline Matrix build_labels(const ProblemConfig& cfg) {
    Matrix y = Matrix::Zero(cfg.K, cfg.N());
    for (Eigen::Index j = 0; j < cfg.N(); ++j)
        y(class_of(cfg, j), j) = 1.0;
    return y;
}

/// WH + b1^T - M*Y, unweighted.
inline Matrix raw_residual(const ProblemConfig& cfg, const Params& p) {
    check_shapes(cfg, p);
    Matrix r = p.W * p.H;
    r.colwise() += p.b;
    for (Eigen::Index j = 0; j < cfg.N(); ++j)
        r(class_of(cfg, j), j) -= cfg.M;
    return r;
}

/// Omega_alpha ⊙ residual. Omega is never materialized: only the true-class
/// entry of each column carries the weight alpha.
inline Matrix weighted_residual(const ProblemConfig& cfg, const Params& p) {
    Matrix r = raw_residual(cfg, p);
    if (cfg.alpha != 1.0)
        for (Eigen::Index j = 0; j < cfg.N(); ++j)
            r(class_of(cfg, j), j) *= cfg.alpha;
    return r;
}

/// (1/2N) ||Omega^{1/2} ⊙ (WH + b1^T - M Y)||_F^2
inline double data_fit(const ProblemConfig& cfg, const Params& p) {
    const Matrix r = raw_residual(cfg, p);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < r.cols(); ++j) {
        const Eigen::Index k = class_of(cfg, j);
        for (Eigen::Index i = 0; i < r.rows(); ++i) {
            const double w = (i == k) ? cfg.alpha : 1.0;
            acc += w * (r(i, j) * r(i, j));
        }
    }
    return acc / (2.0 * cfg.N());
}

inline double penalty(const ProblemConfig& cfg, const Params& p) {
    return 0.5 * cfg.lambda_w * p.W.squaredNorm() + 0.5 * cfg.lambda_h * p.H.squaredNorm() +
           0.5 * cfg.lambda_b * p.b.squaredNorm();
}

/// Rescaled regularized MSE objective; reduces to the vanilla objective at
/// alpha = M = 1.
inline double loss(const ProblemConfig& cfg, const Params& p) {
    return data_fit(cfg, p) + penalty(cfg, p);
}

/// Vanilla objective, coded independently of the rescaled path:
/// (1/2N)||WH + b1^T - Y||_F^2 + penalties.
inline double vanilla_loss(const ProblemConfig& cfg, const Params& p) {
    check_shapes(cfg, p);
    const Matrix y = build_labels(cfg);
    Matrix r = p.W * p.H;
    r.colwise() += p.b;
    r -= y;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < r.cols(); ++j)
        for (Eigen::Index i = 0; i < r.rows(); ++i)
            acc += r(i, j) * r(i, j);
    return acc / (2.0 * cfg.N()) + penalty(cfg, p);
}

/// Exact gradient (dW, dH, db) of loss().
inline Params gradient(const ProblemConfig& cfg, const Params& p) {
    const Matrix r = weighted_residual(cfg, p);
    const double inv_n = 1.0 / cfg.N();
    Params g;
    g.W = inv_n * (r * p.H.transpose()) + cfg.lambda_w * p.W;
    g.H = inv_n * (p.W.transpose() * r) + cfg.lambda_h * p.H;
    g.b = inv_n * r.rowwise().sum() + cfg.lambda_b * p.b;
    return g;
}

struct ClassStats {
    Matrix class_means;          // d x K
    Vector global_mean;          // d
    Vector classifier_mean;      // d, mean of the rows of W
    Matrix centered_class_means; // d x K
};

inline ClassStats class_stats(const ProblemConfig& cfg, const Params& p) {
    check_shapes(cfg, p);
    ClassStats s;
    s.class_means = Matrix::Zero(cfg.d, cfg.K);
    for (int k = 0; k < cfg.K; ++k)
        s.class_means.col(k) = p.H.middleCols(static_cast<Eigen::Index>(k) * cfg.n, cfg.n).rowwise().mean();
    s.global_mean = p.H.rowwise().mean();
    s.classifier_mean = p.W.colwise().mean().transpose();
    s.centered_class_means = s.class_means.colwise() - s.global_mean;
    return s;
}

} // namespace nclab
