#include <gtest/gtest.h>

#include "nclab/closed_form.hpp"
#include "nclab/landscape.hpp"
#include "oracles.hpp"

using namespace nclab;

namespace {

ProblemConfig make_cfg(int K, int n, int d, double lw, double lh, double lb) {
    ProblemConfig c;
    c.K = K;
    c.n = n;
    c.d = d;
    c.lambda_w = lw;
    c.lambda_h = lh;
    c.lambda_b = lb;
    return c;
}

// Penalties with sqrt(K N lw lh) = s.
ProblemConfig with_ratio(int K, int n, int d, double s, double lb, double skew = 1.0) {
    const double prod = s * s / (static_cast<double>(K) * K * n);
    return make_cfg(K, n, d, std::sqrt(prod) * skew, std::sqrt(prod) / skew, lb);
}

// Objective of the best (W, H) at a fixed uniform bias b 1, computed from a
// Jacobi spectrum of Y - b 11^T and explicit scalar shrinkage.
double objective_at_bias(const ProblemConfig& cfg, double b) {
    Matrix y = build_labels(cfg);
    y.array() -= b;
    const std::vector<double> sigma = oracle::singular_values(oracle::to_dense(y));
    const double tau = cfg.N() * std::sqrt(cfg.lambda_w * cfg.lambda_h);
    double fit = 0.0;
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        const double s = sigma[i];
        if (static_cast<int>(i) < cfg.d && s > tau)
            fit += tau * s - 0.5 * tau * tau;
        else
            fit += 0.5 * s * s;
    }
    return 0.5 * cfg.lambda_b * cfg.K * b * b + fit / cfg.N();
}

// Plain gradient descent on 1/2||WH - Y||^2 + l/2(||W||^2 + ||H||^2).
double shrinkage_gd(const Matrix& y, double lw, double lh, int d, Rng& rng) {
    Matrix w = rng.normal_matrix(y.rows(), d), h = rng.normal_matrix(d, y.cols());
    auto xi = [&](const Matrix& a, const Matrix& b) {
        return 0.5 * (a * b - y).squaredNorm() + 0.5 * lw * a.squaredNorm() + 0.5 * lh * b.squaredNorm();
    };
    double step = 0.05;
    double f = xi(w, h);
    for (int it = 0; it < 20000; ++it) {
        const Matrix r = w * h - y;
        const Matrix gw = r * h.transpose() + lw * w, gh = w.transpose() * r + lh * h;
        if (std::sqrt(gw.squaredNorm() + gh.squaredNorm()) < 1e-12)
            break;
        const Matrix w2 = w - step * gw, h2 = h - step * gh;
        const double f2 = xi(w2, h2);
        if (f2 <= f) {
            w = w2;
            h = h2;
            f = f2;
        } else {
            step *= 0.5;
        }
    }
    return f;
}

double normalized_distance(const Matrix& a, const Matrix& b) { return (a / a.norm() - b / b.norm()).norm(); }

} // namespace

TEST(Shrinkage, DiagonalExampleAndMultistartOracle) {
    Matrix y = Matrix::Zero(2, 2);
    y(0, 0) = 2;
    y(1, 1) = 1;
    const ShrinkageSolution s = shrinkage_minimizer(y, 0.25, 0.25, 2);
    Matrix expect = Matrix::Zero(2, 2);
    expect(0, 0) = 1.75;
    expect(1, 1) = 0.75;
    EXPECT_LE((s.W * s.H - expect).norm(), 1e-12);
    EXPECT_NEAR(s.xi_star, 0.6875, 1e-14);
    const double direct = 0.5 * (s.W * s.H - y).squaredNorm() + 0.125 * (s.W.squaredNorm() + s.H.squaredNorm());
    EXPECT_NEAR(direct, 0.6875, 1e-12);

    Rng rng(31);
    double best = std::numeric_limits<double>::infinity();
    for (int start = 0; start < 50; ++start)
        best = std::min(best, shrinkage_gd(y, 0.25, 0.25, 2, rng));
    EXPECT_NEAR(best, 0.6875, 1e-9);
    EXPECT_GE(best, 0.6875 - 1e-12);
}

TEST(Shrinkage, FullClampAndBalance) {
    Rng rng(32);
    const Matrix y = rng.normal_matrix(3, 5);
    const double s1 = thin_svd(y).singular_values(0);
    const ShrinkageSolution s = shrinkage_minimizer(y, s1, s1 * 1.01, 3);
    EXPECT_EQ((s.W * s.H).norm(), 0.0);
    EXPECT_NEAR(s.xi_star, 0.5 * y.squaredNorm(), 1e-12);

    const ShrinkageSolution eq = shrinkage_minimizer(y, 0.3, 0.3, 2);
    EXPECT_NEAR(eq.W.norm(), eq.H.norm(), 1e-12);
    const ShrinkageSolution un = shrinkage_minimizer(y, 0.1, 0.7, 3);
    EXPECT_LE((0.1 * un.W.transpose() * un.W - 0.7 * un.H * un.H.transpose()).norm(), 1e-12);
}

TEST(Shrinkage, RandomAgainstMultistartOracle) {
    Rng rng(33);
    for (int d : {1, 2, 4}) {
        const Matrix y = rng.normal_matrix(3, 4);
        const ShrinkageSolution s = shrinkage_minimizer(y, 0.2, 0.6, d);
        const double direct = 0.5 * (s.W * s.H - y).squaredNorm() + 0.1 * s.W.squaredNorm() + 0.3 * s.H.squaredNorm();
        EXPECT_NEAR(direct, s.xi_star, 1e-12);
        double best = std::numeric_limits<double>::infinity();
        for (int start = 0; start < 20; ++start)
            best = std::min(best, shrinkage_gd(y, 0.2, 0.6, d, rng));
        EXPECT_NEAR(best, s.xi_star, 1e-8 * (1 + s.xi_star));
    }
    EXPECT_THROW(shrinkage_minimizer(Matrix::Ones(2, 2), 0.0, 1.0, 1), InvalidInput);
    EXPECT_THROW(shrinkage_minimizer(Matrix::Ones(2, 2), 1.0, 1.0, 0), InvalidInput);
}

TEST(Spectrum, ThirdBias) {
    const ProblemConfig cfg = make_cfg(3, 4, 2, 0.1, 0.1, 0.1);
    const SpectralSummary s = spectrum_shifted_labels(cfg, Vector::Constant(3, 1.0 / 3));
    EXPECT_NEAR(s.singular_values(0), 2.0, 1e-12);
    EXPECT_NEAR(s.singular_values(1), 2.0, 1e-12);
    EXPECT_NEAR(s.singular_values(2), 0.0, 1e-12);
    EXPECT_LE((s.left_vectors.transpose() * s.left_vectors - Matrix::Identity(3, 3)).norm(), 1e-12);
}

TEST(Spectrum, ZeroBiasAllRootN) {
    const ProblemConfig cfg = make_cfg(5, 3, 2, 0.1, 0.1, 0.1);
    const SpectralSummary s = spectrum_shifted_labels(cfg, Vector::Zero(5));
    for (int i = 0; i < 5; ++i)
        EXPECT_NEAR(s.singular_values(i), std::sqrt(3.0), 1e-13);
    EXPECT_THROW(spectrum_shifted_labels(cfg, Vector::Zero(4)), ShapeMismatch);
}

TEST(Spectrum, UniformBiasStructure) {
    const int K = 6, n = 4;
    const ProblemConfig cfg = make_cfg(K, n, 2, 0.1, 0.1, 0.1);
    for (double c : {0.0, 0.1, 0.3, 1.0 / std::sqrt(K)}) {
        const SpectralSummary s = spectrum_shifted_labels(cfg, Vector::Constant(K, c / std::sqrt(K)));
        for (int i = 0; i < K - 1; ++i)
            EXPECT_NEAR(s.singular_values(i), std::sqrt(n), 1e-12);
        EXPECT_NEAR(s.singular_values(K - 1), std::sqrt(n) * (1 - std::sqrt(K) * c), 1e-12);
    }
}

TEST(Spectrum, SigmaOneLowerBound) {
    const int K = 4, n = 3;
    const ProblemConfig cfg = make_cfg(K, n, 2, 0.1, 0.1, 0.1);
    Rng rng(34);
    for (int t = 0; t < 50; ++t) {
        Vector b = rng.normal_vector(K);
        const double c = rng.uniform() / std::sqrt(K);
        b *= c / b.norm();
        const double sum = b.sum();
        const double bound = std::sqrt(n) * std::max(std::sqrt(1 + K * (b.squaredNorm() - sum * sum / K)),
                                                     std::abs(1 - sum));
        EXPECT_GE(spectrum_shifted_labels(cfg, b).singular_values(0), bound - 1e-12);
    }
}

TEST(Bias, PaperExamples) {
    EXPECT_NEAR(optimal_bias(make_cfg(10, 2, 5, 0.001, 0.001, 0.1)).b_star, 1.0 / 11, 1e-15);
    EXPECT_NEAR(optimal_bias(make_cfg(10, 2, 12, 0.001, 0.001, 1e6)).b_star, 0.0, 1e-6);
    EXPECT_NEAR(optimal_bias(make_cfg(10, 2, 12, 0.001, 0.001, 1e-9)).b_star, 0.1, 1e-9);
    EXPECT_NEAR(optimal_bias(make_cfg(10, 2, 5, 0.001, 0.001, 1e-9)).b_star, 0.1, 1e-9);
}

TEST(Bias, BranchContinuityAtThreshold) {
    const ProblemConfig base = make_cfg(4, 5, 6, 0.05, 0.05, 1.0);
    const double s = std::sqrt(0.2);
    EXPECT_NEAR(collapse_ratio(base), s, 1e-15);
    ProblemConfig at = base;
    at.lambda_b = bias_threshold(base);
    EXPECT_NEAR(at.lambda_b, 0.80901699437494742, 1e-14);
    EXPECT_NEAR(small_bias_branch(at), (1 - s) / 4, 1e-12);
    EXPECT_NEAR(large_bias_branch(at), (1 - s) / 4, 1e-12);
    EXPECT_NEAR(small_bias_branch(at), large_bias_branch(at), 1e-12);
}

TEST(Bias, RegimeSelection) {
    EXPECT_EQ(optimal_bias(with_ratio(5, 3, 2, 1.5, 0.1)).regime, Regime::CollapsedZero);
    EXPECT_EQ(optimal_bias(with_ratio(5, 3, 2, 0.5, 0.1)).regime, Regime::DLessKm1);
    EXPECT_EQ(optimal_bias(with_ratio(5, 3, 4, 0.5, 0.1)).regime, Regime::DEqKm1);
    EXPECT_EQ(optimal_bias(with_ratio(5, 3, 5, 0.5, 0.1)).regime, Regime::DGeKSmallBias);
    EXPECT_EQ(optimal_bias(with_ratio(5, 3, 8, 0.5, 5.0)).regime, Regime::DGeKLargeBias);
    EXPECT_EQ(bias_threshold(with_ratio(5, 3, 8, 1.2, 5.0)), std::numeric_limits<double>::infinity());
    EXPECT_TRUE(is_collapsed(with_ratio(5, 3, 8, 1.0, 5.0)));
}

TEST(Bias, DenseGridOracle) {
    for (const ProblemConfig& cfg :
         {with_ratio(4, 3, 6, 0.5, 0.2), with_ratio(4, 3, 6, 0.5, 3.0), with_ratio(4, 3, 2, 0.4, 0.5),
          with_ratio(3, 2, 2, 0.3, 0.05), with_ratio(5, 2, 7, 0.7, 4.0, 2.0), with_ratio(4, 2, 5, 1.3, 0.3)}) {
        const BiasChoice bc = optimal_bias(cfg);
        EXPECT_LE(bc.b_star, 1.0 / cfg.K);
        const int steps = 4000;
        double best_b = 0, best_f = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= steps; ++i) {
            const double b = (1.0 / cfg.K) * i / steps;
            const double f = objective_at_bias(cfg, b);
            if (f < best_f) {
                best_f = f;
                best_b = b;
            }
        }
        EXPECT_NEAR(best_b, bc.b_star, 2.0 / (cfg.K * steps)) << to_string(bc.regime);
        const ClosedFormSolution sol = global_minimizer(cfg);
        EXPECT_NEAR(sol.objective_value, objective_at_bias(cfg, bc.b_star), 1e-12);
        EXPECT_LE(sol.objective_value, best_f + 1e-14);
        // The reduced objective differs from the grid objective by a constant.
        const double offset = objective_at_bias(cfg, 0.0) - reduced_bias_objective(cfg, 0.0);
        for (double b : {0.0, 0.3 / cfg.K, bc.b_star, 0.9 / cfg.K})
            EXPECT_NEAR(reduced_bias_objective(cfg, std::sqrt(cfg.K) * b) + offset, objective_at_bias(cfg, b), 1e-12);
    }
}

TEST(GlobalMinimizer, CollapsedIsZero) {
    const ClosedFormSolution s = global_minimizer(with_ratio(4, 3, 6, 1.2, 0.1));
    EXPECT_EQ(s.regime, Regime::CollapsedZero);
    EXPECT_EQ(s.W_star.norm(), 0.0);
    EXPECT_EQ(s.H_star.norm(), 0.0);
    EXPECT_NEAR(s.b_star_scalar, 1.0 / (4 * 1.1), 1e-15);
}

TEST(GlobalMinimizer, InvariantsAcrossRegimes) {
    Rng rng(35);
    int seen[5] = {0, 0, 0, 0, 0};
    for (int t = 0; t < 40; ++t) {
        const int K = 3 + static_cast<int>(rng.uniform() * 4);
        const int n = 1 + static_cast<int>(rng.uniform() * 4);
        const int d = std::max(1, K - 3 + static_cast<int>(rng.uniform() * 7));
        const double s = 0.1 + 1.3 * rng.uniform();
        const double lb = std::exp(-4 + 6 * rng.uniform());
        const ProblemConfig cfg = with_ratio(K, n, d, s, lb, std::exp(rng.uniform() - 0.5));
        const ClosedFormSolution sol = global_minimizer(cfg);
        ++seen[static_cast<int>(sol.regime)];
        const Params p = sol.params();

        EXPECT_LE(sol.b_star_scalar, 1.0 / K);
        EXPECT_LE(oracle::rel_err(loss(cfg, p), sol.objective_value), 1e-12);
        EXPECT_LE(oracle::rel_err(oracle::loss(cfg, p), sol.objective_value), 1e-12);
        EXPECT_LE(balance_residual(cfg, p), 1e-10 * std::max(cfg.lambda_w * sol.W_star.squaredNorm(), 1e-300));
        EXPECT_LE(gradient(cfg, p).norm(), 1e-8 * (1 + p.norm()));

        const ClassStats st = class_stats(cfg, p);
        for (int j = 0; j < cfg.N(); ++j)
            EXPECT_LE((sol.H_star.col(j) - st.class_means.col(j / n)).norm(), 1e-14);
        const double c = std::sqrt(cfg.lambda_w / (cfg.lambda_h * n));
        EXPECT_LE((c * sol.W_star.transpose() - st.class_means).norm(), 1e-10 * std::max(sol.W_star.norm(), 1e-300));

        EXPECT_LE((sol.predicted_gram - sol.predicted_gram.transpose()).norm(), 1e-14);
        EXPECT_GE(sym_eig(sol.predicted_gram).eigenvalues.minCoeff(), -1e-12);

        if (sol.regime == Regime::CollapsedZero) {
            EXPECT_EQ(sol.predicted_gram.norm(), 0.0);
            continue;
        }
        EXPECT_GT(sol.gram_constant, 0.0);
        const Matrix ref = reference_gram(cfg, sol.regime, sol.b_star_scalar);
        if (sol.regime == Regime::DLessKm1) {
            // Compare spectra: the rank-d approximation is not unique.
            const Vector ev = sym_eig(sol.predicted_gram).eigenvalues / sol.predicted_gram.norm();
            const Vector er = sym_eig(ref).eigenvalues / ref.norm();
            EXPECT_LE((ev - er).norm(), 1e-8);
            for (int i = 0; i < K; ++i)
                EXPECT_NEAR(er(i), i < d ? 1 / std::sqrt(d) : 0.0, 1e-12);
        } else {
            EXPECT_LE(normalized_distance(sol.predicted_gram, ref), 1e-8) << to_string(sol.regime);
        }
        if (sol.regime == Regime::DGeKLargeBias) {
            const double beta = std::sqrt(n * cfg.lambda_w * cfg.lambda_h) / (cfg.lambda_b * (1 - collapse_ratio(cfg)));
            EXPECT_LE(beta, 1.0 / K + 1e-15);
            const Matrix shape = Matrix::Identity(K, K) - Matrix::Constant(K, K, beta);
            EXPECT_LE(normalized_distance(sol.predicted_gram, shape), 1e-8);
        }
    }
    for (int r = 0; r < 5; ++r)
        EXPECT_GT(seen[r], 0) << "regime " << r << " not sampled";
}

TEST(GlobalMinimizer, EqKm1GramIsCenteredSimplex) {
    const ClosedFormSolution s = global_minimizer(with_ratio(5, 2, 4, 0.5, 0.3));
    ASSERT_EQ(s.regime, Regime::DEqKm1);
    const Matrix centered = Matrix::Identity(5, 5) - Matrix::Constant(5, 5, 0.2);
    EXPECT_LE(normalized_distance(s.predicted_gram, centered), 1e-12);
}

TEST(GlobalMinimizer, RejectsRescaled) {
    ProblemConfig cfg = with_ratio(4, 2, 5, 0.5, 0.1);
    cfg.alpha = 2.0;
    EXPECT_THROW(global_minimizer(cfg), InvalidInput);
    cfg.alpha = 1.0;
    cfg.M = 3.0;
    EXPECT_THROW(global_minimizer(cfg), InvalidInput);
}

TEST(Etf, Examples) {
    const Matrix e2 = etf(2, 1);
    EXPECT_NEAR(std::abs(e2(0, 0)), 1.0, 1e-15);
    EXPECT_NEAR(e2(0, 0), -e2(0, 1), 1e-15);
    Rng rng(36);
    for (auto [K, d] : {std::pair{3, 2}, {3, 3}, {5, 4}, {5, 9}, {10, 10}}) {
        const Matrix m = etf(K, d);
        ASSERT_EQ(m.rows(), d);
        ASSERT_EQ(m.cols(), K);
        const Matrix g = m.transpose() * m;
        for (int i = 0; i < K; ++i)
            for (int j = 0; j < K; ++j)
                EXPECT_NEAR(g(i, j), i == j ? 1.0 : -1.0 / (K - 1), 1e-14);
        EXPECT_LE(g.colwise().sum().norm(), 1e-14);
        const Matrix r = etf(K, d, rng);
        EXPECT_LE((r.transpose() * r - g).norm(), 1e-12);
    }
    EXPECT_THROW(etf(5, 3), UnsupportedDimension);
    EXPECT_THROW(etf(1, 3), InvalidInput);
}
