#include "ddctl/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ddctl/error.hpp"

namespace ddctl {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::Length: return "length";
    case ErrorCode::DimensionMismatch: return "dimension_mismatch";
    case ErrorCode::RankDeficient: return "rank_deficient";
    case ErrorCode::ExcitationFailure: return "excitation_failure";
    case ErrorCode::Instability: return "instability";
    case ErrorCode::ConvergenceFailure: return "convergence_failure";
    case ErrorCode::Parameter: return "parameter";
    case ErrorCode::Construction: return "construction";
    case ErrorCode::Schema: return "schema";
    case ErrorCode::WindowTooShort: return "window_too_short";
    case ErrorCode::Uncontrollable: return "uncontrollable";
    case ErrorCode::Io: return "io";
    }
    return "unknown";
}

double auto_rank_tolerance(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    const double largest = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
    return static_cast<double>(std::max(m.rows(), m.cols())) * std::numeric_limits<double>::epsilon() * largest;
}

int numerical_rank(const Matrix& m, std::optional<double> tol) {
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& s = svd.singularValues();
    const double threshold =
        tol ? *tol
            : static_cast<double>(std::max(m.rows(), m.cols())) * std::numeric_limits<double>::epsilon() *
                  (s.size() ? s(0) : 0.0);
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > threshold) ++rank;
    }
    return rank;
}

Matrix equilibrate(const Matrix& m, int sweeps) {
    Matrix out = m;
    for (int s = 0; s < sweeps; ++s) {
        for (Eigen::Index r = 0; r < out.rows(); ++r) {
            const double v = out.row(r).cwiseAbs().maxCoeff();
            if (v > 0.0) out.row(r) /= std::sqrt(v);
        }
        for (Eigen::Index c = 0; c < out.cols(); ++c) {
            const double v = out.col(c).cwiseAbs().maxCoeff();
            if (v > 0.0) out.col(c) /= std::sqrt(v);
        }
    }
    return out;
}

int equilibrated_rank(const Matrix& m, std::optional<double> tol) {
    if (m.size() == 0) return 0;
    return numerical_rank(equilibrate(m), tol);
}

double spectral_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

double spectral_radius(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> es(m, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix pseudoinverse(const Matrix& m) {
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    const double tol = static_cast<double>(std::max(m.rows(), m.cols())) *
                       std::numeric_limits<double>::epsilon() * (s.size() ? s(0) : 0.0);
    Vector inv = Vector::Zero(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > tol) inv(i) = 1.0 / s(i);
    }
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

double min_eigenvalue(const Matrix& symmetric) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(symmetric), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

double max_eigenvalue(const Matrix& symmetric) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(symmetric), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(es.eigenvalues().size() - 1);
}

Matrix stein_residual(const Matrix& a, const Matrix& p) {
    return a.transpose() * p * a - p + Matrix::Identity(a.rows(), a.rows());
}

Matrix solve_stein(const Matrix& a) {
    const Eigen::Index n = a.rows();
    if (a.cols() != n) throw Error(ErrorCode::DimensionMismatch, "Lyapunov equation needs a square matrix");
    if (spectral_radius(a) >= 1.0) {
        throw Error(ErrorCode::Instability, "Lyapunov equation: matrix is not Schur stable");
    }
    // vec(A^T P A) = (A^T kron A^T) vec(P)
    const Matrix at = a.transpose();
    Matrix kron(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            kron.block(i * n, j * n, n, n) = at(i, j) * at;
        }
    }
    const Matrix lhs = Matrix::Identity(n * n, n * n) - kron;
    const Eigen::PartialPivLU<Matrix> lu(lhs);
    const Matrix id = Matrix::Identity(n, n);
    Vector rhs = Eigen::Map<const Vector>(id.data(), n * n);
    Vector sol = lu.solve(rhs);
    Matrix p = symmetrize(Eigen::Map<const Matrix>(sol.data(), n, n));
    for (int iter = 0; iter < 3; ++iter) {
        const Matrix r = stein_residual(a, p);
        if (r.cwiseAbs().maxCoeff() == 0.0) break;
        const Vector rv = Eigen::Map<const Vector>(r.data(), n * n);
        const Vector corr = lu.solve(rv);
        p = symmetrize(p + Eigen::Map<const Matrix>(corr.data(), n, n));
    }
    return p;
}

Matrix controllability_matrix(const Matrix& a, const Matrix& b) {
    const Eigen::Index n = a.rows();
    const Eigen::Index m = b.cols();
    Matrix c(n, n * m);
    Matrix block = b;
    for (Eigen::Index i = 0; i < n; ++i) {
        c.middleCols(i * m, m) = block;
        block = a * block;
    }
    return c;
}

bool is_controllable(const Matrix& a, const Matrix& b) {
    if (b.cols() == 0) return false;
    return numerical_rank(controllability_matrix(a, b)) == a.rows();
}

} // namespace ddctl
