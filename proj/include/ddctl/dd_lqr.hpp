#pragma once

#include <utility>

#include "ddctl/conic_solver.hpp"
#include "ddctl/data_window.hpp"

namespace ddctl {

enum class EqualityHandling {
    LinearEquality,     ///< X_{k-1} Q = P as exact equality rows
    TwoSidedInequality, ///< |X_{k-1} Q - P| <= feasibility_tol entrywise
};

struct SolverOptions {
    double feasibility_tol = 1e-8;
    double optimality_tol = 1e-11;
    EqualityHandling equality = EqualityHandling::LinearEquality;
    int max_iterations = 100;
};

/// Violation of each constraint of the data-driven LQR program.
struct SdpResiduals {
    double lyapunov_block = 0.0; ///< max(0, lambda_max([[I-P, X_k Q],[., -P]]))
    double cost_block = 0.0;     ///< max(0, -lambda_min([[L, U Q],[., P]]))
    double equality = 0.0;       ///< max |X_{k-1} Q - P|
    double trace = 0.0;          ///< max(0, tr P + tr L - gamma)
    double p_lower = 0.0;        ///< max(0, -lambda_min(P - I))

    [[nodiscard]] double max() const noexcept;
};

struct SdpSolution {
    double gamma = 0.0;
    Matrix q; ///< T x n
    Matrix p; ///< n x n
    Matrix l; ///< m x m
    Matrix gain; ///< m x n, U_{k-1} Q P^{-1}
    SolverStatus status = SolverStatus::NumericalTrouble;
    SdpResiduals residuals;
    int iterations = 0;
};

/// Index layout of the decision variables (gamma, Q, sym(P), sym(L)).
struct SdpLayout {
    int t = 0;
    int n = 0;
    int m = 0;

    [[nodiscard]] int gamma() const noexcept { return 0; }
    [[nodiscard]] int q(int row, int col) const noexcept { return 1 + col * t + row; }
    [[nodiscard]] int p(int i, int j) const noexcept { return 1 + t * n + sym_index(i, j); }
    [[nodiscard]] int l(int i, int j) const noexcept { return 1 + t * n + n * (n + 1) / 2 + sym_index(i, j); }
    [[nodiscard]] int count() const noexcept { return 1 + t * n + n * (n + 1) / 2 + m * (m + 1) / 2; }

private:
    // Packed upper triangle, column by column.
    [[nodiscard]] static int sym_index(int i, int j) noexcept {
        if (i > j) std::swap(i, j);
        return j * (j + 1) / 2 + i;
    }
};

/// Encodes
///   min gamma
///   s.t. [[I - P, X_k Q], [Q'X_k', -P]] <= 0
///        [[L, U Q], [Q'U', P]] >= 0
///        X_{k-1} Q = P
///        tr P + tr L <= gamma
/// The first block is stored negated so every block reads ">= 0".
[[nodiscard]] ConicProblem build_sdp(const DataMatrices& data);
[[nodiscard]] inline ConicProblem build_sdp(const DataWindow& window) { return build_sdp(window.matrices()); }

/// Independent evaluation of the program's constraints at a candidate point.
[[nodiscard]] SdpResiduals evaluate_sdp_residuals(const DataMatrices& data, double gamma, const Matrix& q,
                                                  const Matrix& p, const Matrix& l);

/// Solves the program on the window data and extracts K = U Q P^{-1}.
/// Never throws on solver failure; inspect `status`.
[[nodiscard]] SdpSolution solve_dd_lqr(const DataMatrices& data, const SolverOptions& opts = {});
[[nodiscard]] inline SdpSolution solve_dd_lqr(const DataWindow& window, const SolverOptions& opts = {}) {
    return solve_dd_lqr(window.matrices(), opts);
}

struct LqrSolution {
    Matrix gain;       ///< K_opt, m x n (u = K x)
    Matrix cost_to_go; ///< stabilizing DARE solution S
    int iterations = 0;
};

/// Unit-weight discrete Riccati equation by fixed-point iteration from S = I.
/// Throws Error(ConvergenceFailure) if the pair is not stabilizable.
[[nodiscard]] LqrSolution dare_lqr(const Matrix& a, const Matrix& b, int max_iterations = 1'000'000);

/// Solves (A+BK) P (A+BK)' - P + I = 0 and returns tr(P) + tr(K P K').
/// Throws Error(Instability) for an unstable closed loop.
[[nodiscard]] double closed_loop_h2_cost(const Matrix& a, const Matrix& b, const Matrix& k);

/// Solution of A P A' - P + I = 0 (closed-loop Gramian orientation).
[[nodiscard]] Matrix closed_loop_gramian(const Matrix& a_cl);

struct IdentifiedModel {
    Matrix a;
    Matrix b;
};

/// [B_hat A_hat] = X_k pinv([U; X_{k-1}]). Throws Error(RankDeficient) when
/// the rank condition fails.
[[nodiscard]] IdentifiedModel least_squares_id(const DataMatrices& data);
[[nodiscard]] inline IdentifiedModel least_squares_id(const DataWindow& window) {
    return least_squares_id(window.matrices());
}

} // namespace ddctl
