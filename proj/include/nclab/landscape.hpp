#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string_view>

#include "nclab/closed_form.hpp"
#include "nclab/model.hpp"
#include "nclab/numerics.hpp"

namespace nclab {

/// A perturbation (dW, dH, db) with the same shapes as Params.
using Direction = Params;

/// Second directional derivative d^2/dt^2 f(x + t delta) at t = 0 of the
/// (rescaled) objective.
inline double hessian_bilinear(const ProblemConfig& cfg, const Params& p, const Direction& delta) {
    check_shapes(cfg, p);
    check_shapes(cfg, delta);
    const Matrix r = weighted_residual(cfg, p);
    Matrix lin = delta.W * p.H + p.W * delta.H;
    lin.colwise() += delta.b;
    double first = 0.0;
    for (Eigen::Index j = 0; j < lin.cols(); ++j) {
        const Eigen::Index k = class_of(cfg, j);
        for (Eigen::Index i = 0; i < lin.rows(); ++i) {
            const double w = (i == k) ? cfg.alpha : 1.0;
            first += w * lin(i, j) * lin(i, j);
        }
    }
    const double cross = (r.array() * (delta.W * delta.H).array()).sum();
    return (first + 2.0 * cross) / cfg.N() + cfg.lambda_w * delta.W.squaredNorm() +
           cfg.lambda_h * delta.H.squaredNorm() + cfg.lambda_b * delta.b.squaredNorm();
}

/// ||lambda_w W^T W - lambda_h H H^T||_F; zero at every critical point.
inline double balance_residual(const ProblemConfig& cfg, const Params& p) {
    return (cfg.lambda_w * p.W.transpose() * p.W - cfg.lambda_h * p.H * p.H.transpose()).norm();
}

inline double criticality_tolerance(const Params& p) { return 1e-8 * (1.0 + p.norm()); }

struct CertificateCandidate {
    Direction direction;
    double curvature;
};

/// Negative-curvature direction for a non-global critical point of the
/// bias-free factored subproblem at the current b.
///
/// With alpha the eigenvector of the smallest eigenvalue of W^T W (the last
/// column of the rotation that orthogonalizes W; a null vector of W when
/// d >= K and W is rank deficient), each singular triple (sigma_j, u_j, v_j)
/// of the residual Y~ - WH with sigma_j > N sqrt(lw lh) gives
///   dW = (lh/lw)^{1/4} u_j alpha^T,  dH = (lw/lh)^{1/4} alpha v_j^T,  db = 0.
/// Uncovered singular directions of Y~ are exactly the residual triples
/// above the threshold, so this also resolves degenerate singular blocks.
/// The most negative candidate is returned; none at a global minimizer.
inline std::optional<CertificateCandidate> find_certificate(const ProblemConfig& cfg, const Params& p) {
    check_shapes(cfg, p);
    const Matrix target_gap = -weighted_residual(cfg, p);
    const SvdResult gap = thin_svd(target_gap);
    const SymEigResult gram = sym_eig(p.W.transpose() * p.W);
    const Vector alpha = gram.eigenvectors.col(cfg.d - 1);
    const double threshold = cfg.N() * std::sqrt(cfg.lambda_w * cfg.lambda_h);
    const double w_scale = std::pow(cfg.lambda_h / cfg.lambda_w, 0.25);

    std::optional<CertificateCandidate> best;
    for (Eigen::Index j = 0; j < gap.singular_values.size(); ++j) {
        if (!(gap.singular_values(j) > threshold))
            break;
        Direction dir{w_scale * gap.left_vectors.col(j) * alpha.transpose(),
                      (1.0 / w_scale) * alpha * gap.right_vectors.col(j).transpose(),
                      Vector::Zero(cfg.K)};
        const double c = hessian_bilinear(cfg, p, dir);
        if (c < -1e-10 * dir.squared_norm() && (!best || c < best->curvature))
            best = CertificateCandidate{std::move(dir), c};
    }
    return best;
}

/// Analytic certificate at a (near-)critical point; throws if the point is
/// not critical within the trainer tolerance.
inline std::optional<Direction> negative_curvature_certificate(const ProblemConfig& cfg, const Params& p) {
    const double gn = gradient(cfg, p).norm();
    if (gn > criticality_tolerance(p))
        throw InvalidInput("negative_curvature_certificate: point is not critical (gradient norm " +
                           std::to_string(gn) + ")");
    auto c = find_certificate(cfg, p);
    if (!c)
        return std::nullopt;
    return std::move(c->direction);
}

struct ProbeResult {
    double estimate;
    Direction best_direction; // unit norm
};

/// Minimum of the Hessian form over `trials` random unit directions (trial i
/// draws from rng.derive(i)) plus the normalized analytic certificate when
/// the point is critical. An upper bound on the smallest Hessian eigenvalue.
inline ProbeResult min_curvature_probe(const ProblemConfig& cfg, const Params& p, int trials, const Rng& rng) {
    if (trials < 1)
        throw InvalidInput("min_curvature_probe: trials must be >= 1");
    check_shapes(cfg, p);
    ProbeResult out{std::numeric_limits<double>::infinity(), Params::zeros(cfg)};
    for (int t = 0; t < trials; ++t) {
        Rng sub = rng.derive(static_cast<std::uint64_t>(t));
        Direction dir{sub.normal_matrix(cfg.K, cfg.d), sub.normal_matrix(cfg.d, cfg.N()),
                      sub.normal_vector(cfg.K)};
        dir = dir.scaled(1.0 / dir.norm());
        const double c = hessian_bilinear(cfg, p, dir);
        if (c < out.estimate)
            out = {c, std::move(dir)};
    }
    if (gradient(cfg, p).norm() <= criticality_tolerance(p)) {
        if (auto cert = find_certificate(cfg, p)) {
            const double nrm2 = cert->direction.squared_norm();
            const double c = cert->curvature / nrm2;
            if (c < out.estimate)
                out = {c, cert->direction.scaled(1.0 / std::sqrt(nrm2))};
        }
    }
    return out;
}

enum class Classification { GlobalMinimum, StrictSaddle, NotCritical, Unresolved };

inline std::string_view to_string(Classification c) {
    switch (c) {
    case Classification::GlobalMinimum: return "global-minimum";
    case Classification::StrictSaddle: return "strict-saddle";
    case Classification::NotCritical: return "not-critical";
    case Classification::Unresolved: return "critical-unresolved";
    }
    return "unknown";
}

struct CriticalReport {
    double gradient_norm = 0.0;
    double balance_residual = 0.0;
    double objective = 0.0;
    double reference_objective = std::numeric_limits<double>::quiet_NaN();
    Classification classification = Classification::NotCritical;
    double curvature_value = std::numeric_limits<double>::quiet_NaN();
    std::optional<Direction> certificate;
};

struct ClassifyOptions {
    double objective_rel_tol = 1e-6;
    int fallback_trials = 64;
    std::uint64_t probe_seed = 0;
};

/// Critical-point dichotomy: not-critical above the gradient tolerance;
/// global-minimum when the objective matches the closed form (vanilla loss
/// only); otherwise strict-saddle with a certificate. The analytic
/// certificate covers the bias-free construction; when it finds nothing a
/// random-direction probe is tried before reporting critical-unresolved.
inline CriticalReport classify_critical_point(const ProblemConfig& cfg, const Params& p,
                                              const ClassifyOptions& opt = {}) {
    CriticalReport rep;
    rep.gradient_norm = gradient(cfg, p).norm();
    rep.balance_residual = balance_residual(cfg, p);
    rep.objective = loss(cfg, p);
    if (cfg.is_vanilla())
        rep.reference_objective = global_minimizer(cfg).objective_value;
    if (rep.gradient_norm > criticality_tolerance(p)) {
        rep.classification = Classification::NotCritical;
        return rep;
    }
    if (cfg.is_vanilla() &&
        std::abs(rep.objective - rep.reference_objective) <= opt.objective_rel_tol * std::abs(rep.reference_objective)) {
        rep.classification = Classification::GlobalMinimum;
        rep.curvature_value = min_curvature_probe(cfg, p, 8, Rng(opt.probe_seed)).estimate;
        return rep;
    }
    if (auto cert = find_certificate(cfg, p)) {
        rep.classification = Classification::StrictSaddle;
        rep.curvature_value = cert->curvature;
        rep.certificate = std::move(cert->direction);
        return rep;
    }
    const ProbeResult probe = min_curvature_probe(cfg, p, opt.fallback_trials, Rng(opt.probe_seed));
    rep.curvature_value = probe.estimate;
    if (probe.estimate < -1e-10) {
        rep.classification = Classification::StrictSaddle;
        rep.certificate = probe.best_direction;
    } else {
        rep.classification = Classification::Unresolved;
    }
    return rep;
}

} // namespace nclab
