#pragma once

// Dense linear-algebra helpers shared by the controller, the oracles and the
// stability analysis. All matrices are small (n <= 4, T <= ~40).

#include <optional>

#include <Eigen/Dense>

namespace ddctl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Singular-value threshold used when no explicit tolerance is given:
// max(rows, cols) * machine epsilon * largest singular value.
[[nodiscard]] double auto_rank_tolerance(const Matrix& m);

// Number of singular values strictly above `tol` (auto tolerance when empty).
[[nodiscard]] int numerical_rank(const Matrix& m, std::optional<double> tol = std::nullopt);

// Two-sided diagonal scaling D1 M D2 (Ruiz iterations) that brings every
// nonzero row and column to unit max-norm. Rank is unchanged in exact
// arithmetic; geometrically graded data (decaying closed-loop signals) become
// well conditioned.
[[nodiscard]] Matrix equilibrate(const Matrix& m, int sweeps = 10);

// numerical_rank of the equilibrated matrix.
[[nodiscard]] int equilibrated_rank(const Matrix& m, std::optional<double> tol = std::nullopt);

[[nodiscard]] double spectral_norm(const Matrix& m);
[[nodiscard]] double spectral_radius(const Matrix& m);

// Moore-Penrose pseudoinverse via SVD with the auto tolerance.
[[nodiscard]] Matrix pseudoinverse(const Matrix& m);

[[nodiscard]] double min_eigenvalue(const Matrix& symmetric);
[[nodiscard]] double max_eigenvalue(const Matrix& symmetric);

[[nodiscard]] inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Solves A^T P A - P + I = 0 for a Schur-stable A (throws Error::Instability
// otherwise). Kronecker vectorization followed by iterative refinement.
[[nodiscard]] Matrix solve_stein(const Matrix& a);

// Residual A^T P A - P + I.
[[nodiscard]] Matrix stein_residual(const Matrix& a, const Matrix& p);

// Controllability matrix [B AB ... A^{n-1}B].
[[nodiscard]] Matrix controllability_matrix(const Matrix& a, const Matrix& b);
[[nodiscard]] bool is_controllable(const Matrix& a, const Matrix& b);

} // namespace ddctl
