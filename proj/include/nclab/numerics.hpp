#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>

#include <Eigen/Dense>

#include "nclab/errors.hpp"

namespace nclab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct SvdResult {
    Matrix left_vectors;   // rows x r, orthonormal columns
    Vector singular_values; // r, nonincreasing
    Matrix right_vectors;  // cols x r, orthonormal columns
};

struct SymEigResult {
    Vector eigenvalues; // nonincreasing
    Matrix eigenvectors;
};

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

inline void require_finite(const Matrix& a, const char* who) {
    if (!a.allFinite())
        throw InvalidInput(std::string(who) + ": non-finite input");
}

/// Thin SVD with r = min(rows, cols) triples, sigma sorted nonincreasing.
/// Backed by Eigen's two-sided Jacobi SVD, which is deterministic for a
/// given input and accurate to working precision.
inline SvdResult thin_svd(const Matrix& a) {
    require_finite(a, "thin_svd");
    const Eigen::Index r = std::min(a.rows(), a.cols());
    if (r == 0)
        return {Matrix(a.rows(), 0), Vector(0), Matrix(a.cols(), 0)};
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(0.0);
    // JacobiSVD already sorts decreasingly; keep the contract explicit.
    return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

/// Eigendecomposition of a symmetric matrix, eigenvalues nonincreasing.
inline SymEigResult sym_eig(const Matrix& a) {
    require_finite(a, "sym_eig");
    if (a.rows() != a.cols())
        throw InvalidInput("sym_eig: matrix is not square");
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw InvalidInput("sym_eig: matrix is not symmetric");
    const Matrix sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    const Eigen::Index n = a.rows();
    SymEigResult out{Vector(n), Matrix(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        out.eigenvalues(i) = es.eigenvalues()(n - 1 - i);
        out.eigenvectors.col(i) = es.eigenvectors().col(n - 1 - i);
    }
    return out;
}

/// Default rank tolerance: max(rows, cols) * eps, relative to sigma_max.
inline double default_pinv_tol(const Matrix& a) {
    return static_cast<double>(std::max(a.rows(), a.cols())) *
           std::numeric_limits<double>::epsilon();
}

/// Moore-Penrose pseudoinverse; singular values below rel_tol * sigma_max
/// are treated as zero.
inline Matrix pinv(const Matrix& a, double rel_tol) {
    if (!(rel_tol > 0))
        throw InvalidInput("pinv: rel_tol must be positive");
    const SvdResult s = thin_svd(a);
    Matrix out = Matrix::Zero(a.cols(), a.rows());
    if (s.singular_values.size() == 0)
        return out;
    const double cutoff = rel_tol * s.singular_values(0);
    for (Eigen::Index i = 0; i < s.singular_values.size(); ++i) {
        const double sv = s.singular_values(i);
        if (sv > cutoff && sv > 0)
            out += (1.0 / sv) * s.right_vectors.col(i) *
                   s.left_vectors.col(i).transpose();
    }
    return out;
}

inline Matrix pinv(const Matrix& a) { return pinv(a, default_pinv_tol(a)); }

inline double nuclear_norm(const Matrix& a) {
    return thin_svd(a).singular_values.sum();
}

/// Seeded 64-bit generator. Identical seeds give identical draw sequences;
/// substreams are derived with a splitmix64 mix of (seed, index).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    std::uint64_t next_u64() { return engine_(); }

    Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev = 1.0) {
        Matrix m(rows, cols);
        // Column-major fill order is part of the determinism contract.
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i)
                m(i, j) = stddev * normal();
        return m;
    }

    Vector normal_vector(Eigen::Index n, double stddev = 1.0) {
        return normal_matrix(n, 1, stddev);
    }

    Rng derive(std::uint64_t index) const { return Rng(mix(seed_ ^ mix(index + 1))); }

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Haar-ish random orthogonal matrix via QR of a Gaussian matrix with the
/// sign of R's diagonal folded into Q.
inline Matrix random_orthogonal(Eigen::Index n, Rng& rng) {
    const Matrix g = rng.normal_matrix(n, n);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(n, n);
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < n; ++i)
        if (r(i, i) < 0)
            q.col(i) = -q.col(i);
    return q;
}

/// Orthonormal basis (as columns) of the complement of the all-ones vector
/// in R^k, using the Helmert construction.
inline Matrix ones_complement_basis(Eigen::Index k) {
    Matrix b = Matrix::Zero(k, k - 1);
    for (Eigen::Index j = 0; j + 1 < k; ++j) {
        const double m = static_cast<double>(j + 1);
        const double norm = std::sqrt(m * (m + 1));
        for (Eigen::Index i = 0; i <= j; ++i)
            b(i, j) = 1.0 / norm;
        b(j + 1, j) = -m / norm;
    }
    return b;
}

inline double positive_part(double x) { return x > 0 ? x : 0.0; }

} // namespace nclab
