#pragma once

#include <cassert>
#include <cmath>
#include <string>
#include <string_view>

#include "nclab/model.hpp"
#include "nclab/numerics.hpp"

namespace nclab {

/// Which case of the global-optimality characterization a config falls in.
enum class Regime {
    CollapsedZero,   // lambda_w * lambda_h >= 1/(NK): W* = 0, H* = 0
    DLessKm1,        // d < K-1: best rank-d approximation of the centered ETF
    DEqKm1,          // d = K-1: simplex ETF
    DGeKSmallBias,   // d >= K, lambda_b below threshold: simplex ETF
    DGeKLargeBias,   // d >= K, lambda_b above threshold: I - beta 11^T
};

inline std::string_view to_string(Regime r) {
    switch (r) {
    case Regime::CollapsedZero: return "collapsed-zero";
    case Regime::DLessKm1: return "d-lt-Km1";
    case Regime::DEqKm1: return "d-eq-Km1";
    case Regime::DGeKSmallBias: return "d-ge-K-small-lb";
    case Regime::DGeKLargeBias: return "d-ge-K-large-lb";
    }
    return "unknown";
}

struct SpectralSummary {
    Vector singular_values; // K, nonincreasing
    Matrix left_vectors;    // K x K
    Vector bias_used;
};

/// Singular values and left vectors of Y - b 1_N^T.
inline SpectralSummary spectrum_shifted_labels(const ProblemConfig& cfg, const Vector& b) {
    if (b.size() != cfg.K)
        throw ShapeMismatch("bias must have length K");
    Matrix shifted = build_labels(cfg);
    shifted.colwise() -= b;
    SvdResult s = thin_svd(shifted);
    return {s.singular_values, s.left_vectors, b};
}

/// Minimal value of the unnormalized factored problem
///   1/2||WH - Y~||^2 + lw/2||W||^2 + lh/2||H||^2
/// given the spectrum of Y~ and tau = sqrt(lw*lh). Triples beyond rank d
/// contribute their full 1/2 sigma^2.
inline double shrinkage_objective(const Vector& sigma, double tau, int d) {
    double xi = 0.0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        if (i < d) {
            const double eta = positive_part(sigma(i) - tau);
            xi += 0.5 * (sigma(i) - eta) * (sigma(i) - eta) + tau * eta;
        } else {
            xi += 0.5 * sigma(i) * sigma(i);
        }
    }
    return xi;
}

struct ShrinkageSolution {
    Matrix W;    // K x d
    Matrix H;    // d x N
    double xi_star;
    Vector eta;  // min(d, rank) shrinkage levels
};

/// Global minimizer of 1/2||WH - Y~||^2 + lw/2||W||^2 + lh/2||H||^2:
/// WH = sum_i [sigma_i - sqrt(lw lh)]_+ u_i v_i^T over the top min(d, K)
/// triples, split so that lw W^T W = lh H H^T.
inline ShrinkageSolution shrinkage_minimizer(const Matrix& y_tilde, double lambda_w,
                                             double lambda_h, int d) {
    if (!(lambda_w > 0) || !(lambda_h > 0))
        throw InvalidInput("shrinkage_minimizer: penalties must be positive");
    if (d < 1)
        throw InvalidInput("shrinkage_minimizer: d must be at least 1");
    const SvdResult s = thin_svd(y_tilde);
    const double tau = std::sqrt(lambda_w * lambda_h);
    const double w_scale = std::pow(lambda_h / lambda_w, 0.25);
    const Eigen::Index r = std::min<Eigen::Index>(d, s.singular_values.size());

    ShrinkageSolution out;
    out.W = Matrix::Zero(y_tilde.rows(), d);
    out.H = Matrix::Zero(d, y_tilde.cols());
    out.eta = Vector::Zero(r);
    for (Eigen::Index i = 0; i < r; ++i) {
        const double eta = positive_part(s.singular_values(i) - tau);
        out.eta(i) = eta;
        if (eta == 0.0)
            continue;
        const double root = std::sqrt(eta);
        out.W.col(i) = (w_scale * root) * s.left_vectors.col(i);
        out.H.row(i) = (root / w_scale) * s.right_vectors.col(i).transpose();
    }
    out.xi_star = shrinkage_objective(s.singular_values, tau, d);
    return out;
}

/// sqrt(K N lambda_w lambda_h); the collapse boundary is s = 1.
inline double collapse_ratio(const ProblemConfig& cfg) {
    return std::sqrt(static_cast<double>(cfg.K) * cfg.N() * cfg.lambda_w * cfg.lambda_h);
}

inline bool is_collapsed(const ProblemConfig& cfg) {
    return static_cast<double>(cfg.K) * cfg.N() * cfg.lambda_w * cfg.lambda_h >= 1.0;
}

/// lambda_b threshold s/(1-s) separating the two d >= K bias branches;
/// +inf when s >= 1 (the large-bias branch is unreachable there).
inline double bias_threshold(const ProblemConfig& cfg) {
    const double s = collapse_ratio(cfg);
    if (s >= 1.0)
        return std::numeric_limits<double>::infinity();
    return s / (1.0 - s);
}

inline double small_bias_branch(const ProblemConfig& cfg) {
    return 1.0 / (cfg.K * (cfg.lambda_b + 1.0));
}

inline double large_bias_branch(const ProblemConfig& cfg) {
    return std::sqrt(cfg.n * cfg.lambda_w * cfg.lambda_h) / cfg.lambda_b;
}

/// Objective as a function of c = ||b|| along b = (c/sqrt K) 1, dropping
/// terms that do not depend on c. Piecewise quadratic for d >= K.
inline double reduced_bias_objective(const ProblemConfig& cfg, double c) {
    const double n = cfg.n, N = cfg.N(), K = cfg.K;
    const double sigma_k = std::sqrt(n) * (1.0 - std::sqrt(K) * c);
    const double lt = N * std::sqrt(cfg.lambda_w * cfg.lambda_h);
    double fit;
    if (cfg.d < cfg.K || sigma_k <= lt)
        fit = 0.5 * sigma_k * sigma_k;
    else
        fit = lt * sigma_k - 0.5 * lt * lt;
    return 0.5 * cfg.lambda_b * c * c + fit / N;
}

struct BiasChoice {
    double b_star;
    Regime regime;
};

/// Optimal scalar bias b* (b = b* 1) and the regime it puts the problem in.
inline BiasChoice optimal_bias(const ProblemConfig& cfg) {
    cfg.validate();
    if (is_collapsed(cfg))
        return {small_bias_branch(cfg), Regime::CollapsedZero};
    if (cfg.d < cfg.K - 1)
        return {small_bias_branch(cfg), Regime::DLessKm1};
    if (cfg.d == cfg.K - 1)
        return {small_bias_branch(cfg), Regime::DEqKm1};
    // Not collapsed, so s < 1 and the threshold is finite.
    assert(collapse_ratio(cfg) < 1.0);
    if (cfg.lambda_b <= bias_threshold(cfg))
        return {small_bias_branch(cfg), Regime::DGeKSmallBias};
    return {large_bias_branch(cfg), Regime::DGeKLargeBias};
}

struct ClosedFormSolution {
    Matrix W_star;
    Matrix H_star;
    double b_star_scalar = 0.0;
    double objective_value = 0.0;
    Matrix predicted_gram; // Hbar*^T Hbar* over the (uncentered) class means
    Regime regime = Regime::CollapsedZero;
    Vector shrinkage_levels;
    Vector spectrum;       // singular values of Y - b* 1 1^T
    double gram_constant = 0.0;

    Params params() const {
        return {W_star, H_star, Vector::Constant(W_star.rows(), b_star_scalar)};
    }
};

/// Reference shape the class-mean Gram takes in each regime (before the
/// positive constant). For d < K-1 the best rank-d approximation is not
/// unique; this returns the one the construction uses.
inline Matrix reference_gram(const ProblemConfig& cfg, Regime regime, double b_star) {
    const int K = cfg.K;
    const Matrix centered = Matrix::Identity(K, K) - Matrix::Constant(K, K, 1.0 / K);
    switch (regime) {
    case Regime::CollapsedZero:
        return Matrix::Zero(K, K);
    case Regime::DLessKm1: {
        const Matrix basis = ones_complement_basis(K).leftCols(cfg.d);
        return basis * basis.transpose();
    }
    case Regime::DEqKm1:
    case Regime::DGeKSmallBias:
        return centered;
    case Regime::DGeKLargeBias: {
        const double beta = b_star / (1.0 - collapse_ratio(cfg));
        return Matrix::Identity(K, K) - Matrix::Constant(K, K, beta);
    }
    }
    return centered;
}

/// Constructs the global minimizer of the vanilla objective. The rotation
/// freedom is fixed to the identity and the eigenvector of the smallest
/// singular value is pinned to 1/sqrt(K) rather than recovered numerically.
inline ClosedFormSolution global_minimizer(const ProblemConfig& cfg) {
    cfg.validate();
    if (!cfg.is_vanilla())
        throw InvalidInput("global_minimizer: no closed form for alpha != 1 or M != 1");

    const int K = cfg.K, n = cfg.n, d = cfg.d, N = cfg.N();
    const BiasChoice bias = optimal_bias(cfg);
    ClosedFormSolution sol;
    sol.regime = bias.regime;
    sol.b_star_scalar = bias.b_star;

    // Y - b* 11^T = U Sigma V^T with U = [basis of 1-perp, 1/sqrt K] and
    // V repeating rows of U / sqrt(n) across each class block.
    Matrix U(K, K);
    U.leftCols(K - 1) = ones_complement_basis(K);
    U.col(K - 1).setConstant(1.0 / std::sqrt(static_cast<double>(K)));
    Vector sigma = Vector::Constant(K, std::sqrt(static_cast<double>(n)));
    sigma(K - 1) = std::sqrt(static_cast<double>(n)) * (1.0 - K * bias.b_star);
    sol.spectrum = sigma;

    const double tau = N * std::sqrt(cfg.lambda_w * cfg.lambda_h);
    const double w_scale = std::pow(cfg.lambda_h / cfg.lambda_w, 0.25);
    const int r = std::min(d, K);
    sol.shrinkage_levels = Vector::Zero(r);
    sol.W_star = Matrix::Zero(K, d);
    sol.H_star = Matrix::Zero(d, N);
    if (bias.regime != Regime::CollapsedZero) {
        for (int i = 0; i < r; ++i) {
            const double eta = positive_part(sigma(i) - tau);
            sol.shrinkage_levels(i) = eta;
            if (eta == 0.0)
                continue;
            const double root = std::sqrt(eta);
            sol.W_star.col(i) = (w_scale * root) * U.col(i);
            for (int j = 0; j < N; ++j)
                sol.H_star(i, j) = (root / w_scale) * U(j / n, i) / std::sqrt(static_cast<double>(n));
        }
    }

    sol.objective_value = 0.5 * cfg.lambda_b * K * bias.b_star * bias.b_star +
                          shrinkage_objective(sigma, tau, d) / N;

    const Matrix means = class_stats(cfg, sol.params()).class_means;
    sol.predicted_gram = means.transpose() * means;

    const Matrix ref = reference_gram(cfg, sol.regime, sol.b_star_scalar);
    const double ref_norm2 = ref.squaredNorm();
    sol.gram_constant = ref_norm2 > 0 ? (sol.predicted_gram.array() * ref.array()).sum() / ref_norm2 : 0.0;
    return sol;
}

/// Standard simplex ETF as the columns of a d x K matrix:
/// sqrt(K/(K-1)) P (I - 11^T/K), P with orthonormal columns (d >= K), or the
/// Helmert embedding of the centered simplex when d = K-1.
inline Matrix etf(int K, int d) {
    if (K < 2)
        throw InvalidInput("etf: K must be at least 2");
    if (d < K - 1)
        throw UnsupportedDimension("etf: d must be at least K-1");
    const double scale = std::sqrt(static_cast<double>(K) / (K - 1));
    const Matrix centered = Matrix::Identity(K, K) - Matrix::Constant(K, K, 1.0 / K);
    Matrix out = Matrix::Zero(d, K);
    if (d >= K)
        out.topRows(K) = scale * centered;
    else
        out = scale * ones_complement_basis(K).transpose();
    return out;
}

/// A randomly rotated simplex ETF (same Gram as etf(K, d)).
inline Matrix etf(int K, int d, Rng& rng) { return random_orthogonal(d, rng) * etf(K, d); }

} // namespace nclab
