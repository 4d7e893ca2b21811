#pragma once

// Small dense semidefinite programming solver.
//
// Problem form:
//
//   minimize    c' y
//   subject to  F0_b + sum_i y_i F_{i,b}  >= 0   (PSD, for every block b)
//               A y = b
//
// Equalities are eliminated by a nullspace parametrization, directions that
// no block and no objective term can see are projected out, and the rest is
// handed to an infeasible-start primal-dual path-following method with the
// HKM search direction and Mehrotra predictor-corrector steps.

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ddctl/linalg.hpp"

namespace ddctl {

/// One symmetric block F0 + sum_i y_i F_i that must be PSD. Coefficients are
/// stored sparsely by variable index.
struct LmiBlock {
    std::string name;
    Matrix constant;
    std::vector<std::pair<int, Matrix>> terms;

    [[nodiscard]] int size() const noexcept { return static_cast<int>(constant.rows()); }
    [[nodiscard]] Matrix evaluate(const Vector& y) const;
};

struct ConicProblem {
    std::vector<std::string> variable_names;
    Vector objective;
    std::vector<LmiBlock> blocks;
    Matrix eq_matrix; ///< rows x num_variables (may have zero rows)
    Vector eq_rhs;

    [[nodiscard]] int num_variables() const noexcept { return static_cast<int>(variable_names.size()); }
    [[nodiscard]] int num_equalities() const noexcept { return static_cast<int>(eq_matrix.rows()); }

    /// Plain-text dump: variable list, then every block as dense coefficient
    /// matrices, then the equality rows. See docs/conic_dump.md.
    void dump(std::ostream& os) const;
};

/// Replaces every equality a'y = b with the pair of scalar inequalities
/// |a'y - b| <= slack collected into one diagonal block.
[[nodiscard]] ConicProblem relax_equalities(const ConicProblem& problem, double slack);

enum class SolverStatus { Optimal, Infeasible, NumericalTrouble };

[[nodiscard]] const char* to_string(SolverStatus status) noexcept;

struct ConicOptions {
    double tolerance = 1e-9; ///< relative gap and relative infeasibility target
    int max_iterations = 100;
    /// Accepted for the best iterate when the iteration stalls short of `tolerance`.
    double acceptable_tolerance = 1e-7;
};

struct ConicResult {
    SolverStatus status = SolverStatus::NumericalTrouble;
    Vector y;
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    int iterations = 0;
    std::string message;
};

[[nodiscard]] ConicResult solve_conic(const ConicProblem& problem, const ConicOptions& options = {});

} // namespace ddctl
