#include "ddctl/dd_lqr.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ddctl/error.hpp"

namespace ddctl {

namespace {

Matrix sym_basis(int dim, int i, int j) {
    Matrix e = Matrix::Zero(dim, dim);
    e(i, j) = 1.0;
    e(j, i) = 1.0;
    return e;
}

Matrix unpack_sym(const Vector& y, int dim, auto index) {
    Matrix s(dim, dim);
    for (int j = 0; j < dim; ++j) {
        for (int i = 0; i <= j; ++i) {
            s(i, j) = s(j, i) = y(index(i, j));
        }
    }
    return s;
}

// Relative singular-value cutoff for the range-space reduction. Directions
// below it are treated as rounding noise of an exactly dependent row.
constexpr double kReductionTolerance = 1e-10;

} // namespace

double SdpResiduals::max() const noexcept {
    return std::max({lyapunov_block, cost_block, equality, trace, p_lower});
}

ConicProblem build_sdp(const DataMatrices& data) {
    const int t = data.length();
    const int n = data.state_dim();
    const int m = data.input_dim();
    if (data.states_prev.cols() != t || data.states_next.cols() != t || data.states_next.rows() != n) {
        throw Error(ErrorCode::DimensionMismatch, "data matrices have inconsistent shapes");
    }
    const SdpLayout lay{t, n, m};

    ConicProblem prob;
    prob.variable_names.resize(static_cast<std::size_t>(lay.count()));
    prob.objective = Vector::Zero(lay.count());
    prob.variable_names[0] = "gamma";
    prob.objective(lay.gamma()) = 1.0;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < t; ++i) {
            prob.variable_names[static_cast<std::size_t>(lay.q(i, j))] =
                "Q[" + std::to_string(i) + "," + std::to_string(j) + "]";
        }
    }
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i <= j; ++i) {
            prob.variable_names[static_cast<std::size_t>(lay.p(i, j))] =
                "P[" + std::to_string(i) + "," + std::to_string(j) + "]";
        }
    }
    for (int j = 0; j < m; ++j) {
        for (int i = 0; i <= j; ++i) {
            prob.variable_names[static_cast<std::size_t>(lay.l(i, j))] =
                "L[" + std::to_string(i) + "," + std::to_string(j) + "]";
        }
    }

    // [[P - I, -X_k Q], [-Q'X_k', P]] >= 0
    LmiBlock lyap;
    lyap.name = "lyapunov";
    lyap.constant = Matrix::Zero(2 * n, 2 * n);
    lyap.constant.topLeftCorner(n, n) = -Matrix::Identity(n, n);
    // [[L, U Q], [Q'U', P]] >= 0
    LmiBlock cost;
    cost.name = "cost";
    cost.constant = Matrix::Zero(m + n, m + n);

    for (int j = 0; j < n; ++j) {
        for (int i = 0; i <= j; ++i) {
            const Matrix e = sym_basis(n, i, j);
            Matrix c1 = Matrix::Zero(2 * n, 2 * n);
            c1.topLeftCorner(n, n) = e;
            c1.bottomRightCorner(n, n) = e;
            lyap.terms.emplace_back(lay.p(i, j), std::move(c1));
            Matrix c2 = Matrix::Zero(m + n, m + n);
            c2.bottomRightCorner(n, n) = e;
            cost.terms.emplace_back(lay.p(i, j), std::move(c2));
        }
    }
    for (int j = 0; j < m; ++j) {
        for (int i = 0; i <= j; ++i) {
            Matrix c2 = Matrix::Zero(m + n, m + n);
            c2.topLeftCorner(m, m) = sym_basis(m, i, j);
            cost.terms.emplace_back(lay.l(i, j), std::move(c2));
        }
    }
    // Q(i, j) enters X_k Q and U Q as (column i of the data) * e_j'.
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < t; ++i) {
            Matrix c1 = Matrix::Zero(2 * n, 2 * n);
            c1.block(0, n + j, n, 1) = -data.states_next.col(i);
            c1.block(n + j, 0, 1, n) = -data.states_next.col(i).transpose();
            lyap.terms.emplace_back(lay.q(i, j), std::move(c1));
            Matrix c2 = Matrix::Zero(m + n, m + n);
            c2.block(0, m + j, m, 1) = data.inputs.col(i);
            c2.block(m + j, 0, 1, m) = data.inputs.col(i).transpose();
            cost.terms.emplace_back(lay.q(i, j), std::move(c2));
        }
    }

    // gamma - tr P - tr L >= 0
    LmiBlock budget;
    budget.name = "trace";
    budget.constant = Matrix::Zero(1, 1);
    budget.terms.emplace_back(lay.gamma(), Matrix::Constant(1, 1, 1.0));
    for (int i = 0; i < n; ++i) budget.terms.emplace_back(lay.p(i, i), Matrix::Constant(1, 1, -1.0));
    for (int i = 0; i < m; ++i) budget.terms.emplace_back(lay.l(i, i), Matrix::Constant(1, 1, -1.0));

    prob.blocks.push_back(std::move(lyap));
    prob.blocks.push_back(std::move(cost));
    prob.blocks.push_back(std::move(budget));

    // (X_{k-1} Q)(a, b) - P(a, b) = 0 for all n^2 entries.
    prob.eq_matrix = Matrix::Zero(n * n, lay.count());
    prob.eq_rhs = Vector::Zero(n * n);
    for (int b = 0; b < n; ++b) {
        for (int a = 0; a < n; ++a) {
            const int row = b * n + a;
            for (int i = 0; i < t; ++i) prob.eq_matrix(row, lay.q(i, b)) = data.states_prev(a, i);
            prob.eq_matrix(row, lay.p(a, b)) -= 1.0;
        }
    }
    return prob;
}

SdpResiduals evaluate_sdp_residuals(const DataMatrices& data, double gamma, const Matrix& q, const Matrix& p,
                                    const Matrix& l) {
    const int n = data.state_dim();
    const int m = data.input_dim();
    SdpResiduals r;
    Matrix first(2 * n, 2 * n);
    const Matrix xq = data.states_next * q;
    first << Matrix::Identity(n, n) - p, xq, xq.transpose(), -p;
    r.lyapunov_block = std::max(0.0, max_eigenvalue(first));
    Matrix second(m + n, m + n);
    const Matrix uq = data.inputs * q;
    second << l, uq, uq.transpose(), p;
    r.cost_block = std::max(0.0, -min_eigenvalue(second));
    r.equality = (data.states_prev * q - p).cwiseAbs().maxCoeff();
    r.trace = std::max(0.0, p.trace() + l.trace() - gamma);
    r.p_lower = std::max(0.0, -min_eigenvalue(p - Matrix::Identity(n, n)));
    return r;
}

SdpSolution solve_dd_lqr(const DataMatrices& data, const SolverOptions& opts) {
    const int t = data.length();
    const int n = data.state_dim();
    const int m = data.input_dim();

    // Q enters the program only through Z Q with Z = [U; X_{k-1}; X_k]. With
    // Z D = W S V' (thin SVD, r numerically nonzero singular values), the
    // substitution Q = D V S^{-1} Q_r turns the data into the orthonormal
    // columns W, which removes both the scale of the data and the null space
    // of Z from the problem the interior-point method sees.
    // Columns are normalized first (Q absorbs the diagonal factor), so samples
    // of a decaying closed-loop trajectory keep their weight in the basis.
    Matrix z(m + 2 * n, t);
    z << data.inputs, data.states_prev, data.states_next;
    Vector column_scale(t);
    for (int j = 0; j < t; ++j) {
        const double nrm = z.col(j).norm();
        column_scale(j) = nrm > 0.0 ? 1.0 / nrm : 1.0;
    }
    z = z * column_scale.asDiagonal();
    const Eigen::JacobiSVD<Matrix> svd(z, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    int r = 0;
    while (r < sv.size() && sv(r) > kReductionTolerance * sv(0)) ++r;
    if (r == 0) {
        SdpSolution sol;
        sol.status = SolverStatus::Infeasible;
        sol.q = Matrix::Zero(t, n);
        sol.p = Matrix::Identity(n, n);
        sol.l = Matrix::Zero(m, m);
        sol.gain = Matrix::Zero(m, n);
        return sol;
    }
    const Matrix basis = svd.matrixU().leftCols(r);
    const DataMatrices reduced{basis.topRows(m), basis.middleRows(m, n), basis.bottomRows(n)};

    ConicProblem prob = build_sdp(reduced);
    if (opts.equality == EqualityHandling::TwoSidedInequality) prob = relax_equalities(prob, opts.feasibility_tol);
    const ConicResult res = solve_conic(prob, ConicOptions{opts.optimality_tol, opts.max_iterations});

    const SdpLayout lay{r, n, m};
    SdpSolution sol;
    sol.iterations = res.iterations;
    sol.gamma = res.y(lay.gamma());
    Matrix q_reduced(r, n);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < r; ++i) q_reduced(i, j) = res.y(lay.q(i, j));
    }
    sol.q = column_scale.asDiagonal() * (svd.matrixV().leftCols(r) * sv.head(r).cwiseInverse().asDiagonal() * q_reduced);
    sol.p = unpack_sym(res.y, n, [&](int i, int j) { return lay.p(i, j); });
    sol.l = unpack_sym(res.y, m, [&](int i, int j) { return lay.l(i, j); });
    sol.residuals = evaluate_sdp_residuals(data, sol.gamma, sol.q, sol.p, sol.l);

    Eigen::LLT<Matrix> llt(sol.p);
    if (llt.info() == Eigen::Success) {
        // K = U Q P^{-1}  <=>  P K' = (U Q)', with U Q read off the reduced data.
        sol.gain = llt.solve((reduced.inputs * q_reduced).transpose()).transpose();
    } else {
        sol.gain = Matrix::Zero(m, n);
    }

    sol.status = res.status;
    if (sol.status == SolverStatus::Optimal &&
        (llt.info() != Eigen::Success || sol.residuals.max() > opts.feasibility_tol || !sol.gain.allFinite())) {
        sol.status = SolverStatus::NumericalTrouble;
    }
    return sol;
}

LqrSolution dare_lqr(const Matrix& a, const Matrix& b, int max_iterations) {
    const Eigen::Index n = a.rows();
    const Eigen::Index m = b.cols();
    if (a.cols() != n || b.rows() != n) throw Error(ErrorCode::DimensionMismatch, "DARE: A and B do not match");
    const Matrix id_n = Matrix::Identity(n, n);
    const Matrix id_m = Matrix::Identity(m, m);
    Matrix s = id_n;
    LqrSolution out;
    for (int iter = 1; iter <= max_iterations; ++iter) {
        const Matrix bts = b.transpose() * s;
        const Matrix next =
            symmetrize(a.transpose() * s * a - (bts * a).transpose() * (id_m + bts * b).ldlt().solve(bts * a) + id_n);
        if (!next.allFinite() || next.cwiseAbs().maxCoeff() > 1e14) {
            throw Error(ErrorCode::ConvergenceFailure, "DARE iteration diverged: pair is not stabilizable");
        }
        const double change = (next - s).cwiseAbs().maxCoeff();
        s = next;
        if (change <= 1e-12 * std::max(1.0, s.cwiseAbs().maxCoeff())) {
            out.iterations = iter;
            const Matrix bts2 = b.transpose() * s;
            out.gain = -(id_m + bts2 * b).ldlt().solve(bts2 * a);
            out.cost_to_go = s;
            if (spectral_radius(a + b * out.gain) >= 1.0) {
                throw Error(ErrorCode::ConvergenceFailure, "DARE converged to a non-stabilizing solution");
            }
            return out;
        }
    }
    throw Error(ErrorCode::ConvergenceFailure,
                "DARE iteration did not converge in " + std::to_string(max_iterations) + " iterations");
}

Matrix closed_loop_gramian(const Matrix& a_cl) { return solve_stein(a_cl.transpose()); }

double closed_loop_h2_cost(const Matrix& a, const Matrix& b, const Matrix& k) {
    const Matrix a_cl = a + b * k;
    if (spectral_radius(a_cl) >= 1.0) throw Error(ErrorCode::Instability, "closed loop A + BK is not Schur stable");
    const Matrix p = closed_loop_gramian(a_cl);
    return p.trace() + (k * p * k.transpose()).trace();
}

IdentifiedModel least_squares_id(const DataMatrices& data) {
    if (!rank_condition_holds(data)) {
        throw Error(ErrorCode::RankDeficient, "least-squares identification needs rank [U; X] = m + n");
    }
    const Matrix ba = data.states_next * pseudoinverse(data.stacked());
    const int m = data.input_dim();
    const int n = data.state_dim();
    return IdentifiedModel{ba.rightCols(n), ba.leftCols(m)};
}

} // namespace ddctl
