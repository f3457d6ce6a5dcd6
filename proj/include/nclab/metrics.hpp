#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "nclab/landscape.hpp"
#include "nclab/model.hpp"
#include "nclab/numerics.hpp"

namespace nclab {

/// Within-class variability collapse: (1/K) tr(Sigma_W Sigma_B^+).
/// Degenerate convention: 0 when both covariances vanish, +inf when only
/// Sigma_B does.
inline double nc1(const ProblemConfig& cfg, const Params& p) {
    const ClassStats st = class_stats(cfg, p);
    Matrix within = p.H;
    for (Eigen::Index j = 0; j < within.cols(); ++j)
        within.col(j) -= st.class_means.col(class_of(cfg, j));
    const Matrix sigma_w = within * within.transpose() / cfg.N();
    const Matrix sigma_b = st.centered_class_means * st.centered_class_means.transpose() / cfg.K;
    constexpr double tiny = 1e-14;
    if (sigma_b.norm() < tiny)
        return sigma_w.norm() < tiny ? 0.0 : std::numeric_limits<double>::infinity();
    return (sigma_w * pinv(sigma_b)).trace() / cfg.K;
}

inline Matrix unit_centered_simplex(int K) {
    return (Matrix::Identity(K, K) - Matrix::Constant(K, K, 1.0 / K)) / std::sqrt(K - 1.0);
}

/// Distance of WW^T (unit Frobenius energy) from the unit-energy simplex ETF.
inline double nc2(const ProblemConfig& cfg, const Params& p) {
    check_shapes(cfg, p);
    if (cfg.d < cfg.K - 1)
        throw UnsupportedDimension("nc2 requires d >= K-1");
    const Matrix g = p.W * p.W.transpose();
    const double nrm = g.norm();
    if (nrm == 0.0)
        throw DegenerateInput("nc2: W is zero");
    return (g / nrm - unit_centered_simplex(cfg.K)).norm();
}

/// Self-duality: distance of W Hbar (unit energy) from the simplex ETF,
/// Hbar being the globally centered class means.
inline double nc3(const ProblemConfig& cfg, const Params& p) {
    check_shapes(cfg, p);
    if (cfg.d < cfg.K - 1)
        throw UnsupportedDimension("nc3 requires d >= K-1");
    const Matrix wh = p.W * class_stats(cfg, p).centered_class_means;
    const double nrm = wh.norm();
    if (nrm == 0.0)
        throw DegenerateInput("nc3: W Hbar is zero");
    return (wh / nrm - unit_centered_simplex(cfg.K)).norm();
}

/// (1/K) sum_k ||H_k||_*^2 / ||H_k||_F^2.
inline double numerical_rank(const ProblemConfig& cfg, const Params& p) {
    check_shapes(cfg, p);
    double acc = 0.0;
    for (int k = 0; k < cfg.K; ++k) {
        const Matrix block = p.H.middleCols(static_cast<Eigen::Index>(k) * cfg.n, cfg.n);
        const double fro2 = block.squaredNorm();
        if (fro2 == 0.0)
            throw DegenerateInput("numerical_rank: class block is zero");
        const double nuc = nuclear_norm(block);
        acc += nuc * nuc / fro2;
    }
    return acc / cfg.K;
}

/// Per-sample cosine margins, ascending. A sample whose centered feature
/// (or any centered classifier row) is zero gets margin 0.
inline std::vector<double> cosine_margins(const ProblemConfig& cfg, const Params& p) {
    const ClassStats st = class_stats(cfg, p);
    Matrix wc = p.W.rowwise() - st.classifier_mean.transpose(); // K x d
    Vector wnorm = wc.rowwise().norm();
    const bool rows_ok = (wnorm.array() > 0.0).all();
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(cfg.N()));
    for (Eigen::Index j = 0; j < cfg.N(); ++j) {
        const Vector h = p.H.col(j) - st.global_mean;
        const double hn = h.norm();
        if (!rows_ok || hn == 0.0) {
            out.push_back(0.0);
            continue;
        }
        const Vector cosines = (wc * h).cwiseQuotient(wnorm) / hn;
        const int k = class_of(cfg, j);
        double rival = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < cfg.K; ++c)
            if (c != k)
                rival = std::max(rival, cosines(c));
        out.push_back(cosines(k) - rival);
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Fraction of samples where the classifier's argmax agrees with the
/// nearest class mean. Ties go to the lowest class index in both rules.
inline double ncc_agreement(const ProblemConfig& cfg, const Params& p) {
    const ClassStats st = class_stats(cfg, p);
    int agree = 0;
    for (Eigen::Index j = 0; j < cfg.N(); ++j) {
        const Vector h = p.H.col(j);
        const Vector logits = p.W * h + p.b;
        int arg_logit = 0, arg_near = 0;
        double best_near = (h - st.class_means.col(0)).squaredNorm();
        for (int c = 1; c < cfg.K; ++c) {
            if (logits(c) > logits(arg_logit))
                arg_logit = c;
            const double dist = (h - st.class_means.col(c)).squaredNorm();
            if (dist < best_near) {
                best_near = dist;
                arg_near = c;
            }
        }
        agree += (arg_logit == arg_near);
    }
    return static_cast<double>(agree) / cfg.N();
}

struct MetricsReport {
    double nc1 = 0.0;
    std::optional<double> nc2; // absent when d < K-1 or degenerate
    std::optional<double> nc3;
    std::optional<double> numerical_rank; // absent when a class block is zero
    std::vector<double> cosine_margins;
    double ncc_agreement = 0.0;
    double balance_residual = 0.0;
};

template <class F>
std::optional<double> try_metric(F&& f) {
    try {
        return f();
    } catch (const UnsupportedDimension&) {
        return std::nullopt;
    } catch (const DegenerateInput&) {
        return std::nullopt;
    }
}

inline MetricsReport metrics_report(const ProblemConfig& cfg, const Params& p) {
    MetricsReport r;
    r.nc1 = nc1(cfg, p);
    r.nc2 = try_metric([&] { return nc2(cfg, p); });
    r.nc3 = try_metric([&] { return nc3(cfg, p); });
    r.numerical_rank = try_metric([&] { return numerical_rank(cfg, p); });
    r.cosine_margins = cosine_margins(cfg, p);
    r.ncc_agreement = ncc_agreement(cfg, p);
    r.balance_residual = balance_residual(cfg, p);
    return r;
}

} // namespace nclab
