#include "ddctl/conic_solver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "ddctl/error.hpp"

namespace ddctl {

namespace {

using BlockList = std::vector<Matrix>;

double inner(const BlockList& a, const BlockList& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k].cwiseProduct(b[k]).sum();
    return s;
}

double frobenius(const BlockList& a) { return std::sqrt(inner(a, a)); }

// Largest alpha with X + alpha dX still PSD (infinity if dX keeps it PSD).
double max_step(const BlockList& x, const BlockList& dx) {
    double alpha = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < x.size(); ++k) {
        Eigen::LLT<Matrix> llt(x[k]);
        if (llt.info() != Eigen::Success) return 0.0;
        const Matrix linv = llt.matrixL().solve(Matrix::Identity(x[k].rows(), x[k].cols()));
        const double lmin = min_eigenvalue(linv * dx[k] * linv.transpose());
        if (lmin < 0.0) alpha = std::min(alpha, -1.0 / lmin);
    }
    return alpha;
}

// Problem after equality elimination and removal of invisible directions:
// minimize offset + c'w  s.t.  F0 + sum_j w_j G_j >= 0.
struct ReducedProblem {
    BlockList constant;
    std::vector<BlockList> coeffs;
    Vector cost;
    double offset = 0.0;
    Vector y0;     // y = y0 + basis * w
    Matrix basis;
};

BlockList dense_coefficient(const ConicProblem& p, const Vector& direction) {
    BlockList out;
    out.reserve(p.blocks.size());
    for (const auto& b : p.blocks) {
        Matrix m = Matrix::Zero(b.size(), b.size());
        for (const auto& [idx, coef] : b.terms) {
            if (direction(idx) != 0.0) m += direction(idx) * coef;
        }
        out.push_back(std::move(m));
    }
    return out;
}

struct Reduction {
    ReducedProblem problem;
    SolverStatus status = SolverStatus::Optimal;
    std::string message;
};

Reduction reduce(const ConicProblem& p) {
    Reduction red;
    const int nv = p.num_variables();
    Vector y0 = Vector::Zero(nv);
    Matrix null_basis = Matrix::Identity(nv, nv);

    if (p.num_equalities() > 0) {
        Eigen::JacobiSVD<Matrix> svd(p.eq_matrix, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const auto& s = svd.singularValues();
        const double tol = static_cast<double>(std::max(p.eq_matrix.rows(), p.eq_matrix.cols())) *
                           std::numeric_limits<double>::epsilon() * (s.size() ? s(0) : 0.0);
        int rank = 0;
        for (Eigen::Index i = 0; i < s.size(); ++i) rank += s(i) > tol ? 1 : 0;
        Vector inv = Vector::Zero(s.size());
        for (int i = 0; i < rank; ++i) inv(i) = 1.0 / s(i);
        y0 = svd.matrixV().leftCols(s.size()) * inv.asDiagonal() * svd.matrixU().leftCols(s.size()).transpose() *
             p.eq_rhs;
        const double eq_res = (p.eq_matrix * y0 - p.eq_rhs).norm();
        if (eq_res > 1e-9 * (1.0 + p.eq_rhs.norm())) {
            red.status = SolverStatus::Infeasible;
            red.message = "inconsistent equality constraints";
            return red;
        }
        null_basis = svd.matrixV().rightCols(nv - rank);
    }

    // Directions of the nullspace as dense block coefficients.
    const int nz = static_cast<int>(null_basis.cols());
    std::vector<BlockList> g(static_cast<std::size_t>(nz));
    int packed = 0;
    for (const auto& b : p.blocks) packed += b.size() * (b.size() + 1) / 2;
    Matrix visibility(packed, nz);
    for (int j = 0; j < nz; ++j) {
        g[static_cast<std::size_t>(j)] = dense_coefficient(p, null_basis.col(j));
        int r = 0;
        for (const auto& blk : g[static_cast<std::size_t>(j)]) {
            for (Eigen::Index c = 0; c < blk.cols(); ++c) {
                for (Eigen::Index i = 0; i <= c; ++i) visibility(r++, j) = blk(i, c);
            }
        }
    }

    const Vector cost_z = null_basis.transpose() * p.objective;
    Matrix range_basis;
    if (nz > 0 && packed > 0) {
        Eigen::JacobiSVD<Matrix> svd(visibility, Eigen::ComputeFullV);
        const auto& s = svd.singularValues();
        const double tol = 1e-12 * (s.size() ? s(0) : 0.0);
        int rank = 0;
        for (Eigen::Index i = 0; i < s.size(); ++i) rank += s(i) > tol ? 1 : 0;
        range_basis = svd.matrixV().leftCols(rank);
        const Matrix invisible = svd.matrixV().rightCols(nz - rank);
        if (invisible.cols() > 0 && (invisible.transpose() * cost_z).norm() > 1e-10 * (1.0 + cost_z.norm())) {
            red.status = SolverStatus::NumericalTrouble;
            red.message = "objective is unbounded along a direction no constraint sees";
            return red;
        }
    } else {
        range_basis = Matrix(nz, 0);
    }

    ReducedProblem& rp = red.problem;
    rp.y0 = y0;
    rp.basis = null_basis * range_basis;
    rp.offset = p.objective.dot(y0);
    rp.cost = rp.basis.transpose() * p.objective;
    rp.constant = dense_coefficient(p, y0);
    for (std::size_t k = 0; k < p.blocks.size(); ++k) rp.constant[k] += p.blocks[k].constant;
    const int nw = static_cast<int>(range_basis.cols());
    rp.coeffs.resize(static_cast<std::size_t>(nw));
    for (int j = 0; j < nw; ++j) {
        BlockList acc;
        for (const auto& b : p.blocks) acc.push_back(Matrix::Zero(b.size(), b.size()));
        for (int i = 0; i < nz; ++i) {
            const double w = range_basis(i, j);
            if (w == 0.0) continue;
            for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += w * g[static_cast<std::size_t>(i)][k];
        }
        rp.coeffs[static_cast<std::size_t>(j)] = std::move(acc);
    }
    return red;
}

struct Iterate {
    Vector w;
    BlockList s;
    BlockList y;
};

} // namespace

Matrix LmiBlock::evaluate(const Vector& y) const {
    Matrix m = constant;
    for (const auto& [idx, coef] : terms) m += y(idx) * coef;
    return m;
}

const char* to_string(SolverStatus status) noexcept {
    switch (status) {
    case SolverStatus::Optimal: return "optimal";
    case SolverStatus::Infeasible: return "infeasible";
    case SolverStatus::NumericalTrouble: return "numerical_trouble";
    }
    return "unknown";
}

void ConicProblem::dump(std::ostream& os) const {
    const auto old_flags = os.flags();
    const auto old_prec = os.precision();
    os << std::setprecision(17);
    os << "variables " << num_variables() << "\n";
    for (int i = 0; i < num_variables(); ++i) {
        os << i << ' ' << variable_names[static_cast<std::size_t>(i)] << ' ' << objective(i) << "\n";
    }
    auto write_matrix = [&os](const Matrix& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? " " : "") << m(r, c);
            os << "\n";
        }
    };
    os << "blocks " << blocks.size() << "\n";
    for (const auto& b : blocks) {
        os << "block " << b.name << " size " << b.size() << " terms " << b.terms.size() << "\n";
        os << "constant\n";
        write_matrix(b.constant);
        for (const auto& [idx, coef] : b.terms) {
            os << "coef " << idx << "\n";
            write_matrix(coef);
        }
    }
    os << "equalities " << num_equalities() << "\n";
    for (int r = 0; r < num_equalities(); ++r) {
        for (int c = 0; c < num_variables(); ++c) os << (c ? " " : "") << eq_matrix(r, c);
        os << " = " << eq_rhs(r) << "\n";
    }
    os.flags(old_flags);
    os.precision(old_prec);
}

ConicProblem relax_equalities(const ConicProblem& problem, double slack) {
    ConicProblem out = problem;
    const int ne = problem.num_equalities();
    out.eq_matrix = Matrix(0, problem.num_variables());
    out.eq_rhs = Vector(0);
    if (ne == 0) return out;
    LmiBlock blk;
    blk.name = "equality_band";
    blk.constant = Matrix::Zero(2 * ne, 2 * ne);
    for (int r = 0; r < ne; ++r) {
        blk.constant(2 * r, 2 * r) = slack - problem.eq_rhs(r);
        blk.constant(2 * r + 1, 2 * r + 1) = slack + problem.eq_rhs(r);
    }
    for (int v = 0; v < problem.num_variables(); ++v) {
        Matrix coef = Matrix::Zero(2 * ne, 2 * ne);
        bool any = false;
        for (int r = 0; r < ne; ++r) {
            const double a = problem.eq_matrix(r, v);
            if (a == 0.0) continue;
            coef(2 * r, 2 * r) = a;
            coef(2 * r + 1, 2 * r + 1) = -a;
            any = true;
        }
        if (any) blk.terms.emplace_back(v, std::move(coef));
    }
    out.blocks.push_back(std::move(blk));
    return out;
}

ConicResult solve_conic(const ConicProblem& problem, const ConicOptions& options) {
    ConicResult result;
    const int nv = problem.num_variables();
    if (problem.objective.size() != nv) throw Error(ErrorCode::DimensionMismatch, "objective size mismatch");
    for (const auto& b : problem.blocks) {
        for (const auto& [idx, coef] : b.terms) {
            if (idx < 0 || idx >= nv || coef.rows() != b.size() || coef.cols() != b.size()) {
                throw Error(ErrorCode::DimensionMismatch, "malformed LMI block " + b.name);
            }
        }
    }

    Reduction red = reduce(problem);
    if (red.status != SolverStatus::Optimal) {
        result.status = red.status;
        result.message = red.message;
        result.y = red.problem.y0.size() ? red.problem.y0 : Vector::Zero(nv);
        return result;
    }
    const ReducedProblem& rp = red.problem;
    const std::size_t nb = rp.constant.size();
    const int nw = static_cast<int>(rp.cost.size());

    int total_dim = 0;
    for (const auto& b : rp.constant) total_dim += static_cast<int>(b.rows());

    auto recover = [&](const Vector& w) { return Vector(rp.y0 + rp.basis * w); };

    if (nb == 0 || total_dim == 0) {
        // Nothing constrains the remaining directions: optimal iff the cost vanishes.
        result.y = recover(Vector::Zero(nw));
        result.primal_objective = result.dual_objective = rp.offset;
        result.status = rp.cost.norm() == 0.0 ? SolverStatus::Optimal : SolverStatus::NumericalTrouble;
        return result;
    }

    // Starting point in the spirit of SDPT3's default initialization.
    double max_g = 0.0;
    double ratio = 0.0;
    for (int j = 0; j < nw; ++j) {
        const double gn = frobenius(rp.coeffs[static_cast<std::size_t>(j)]);
        max_g = std::max(max_g, gn);
        ratio = std::max(ratio, (1.0 + std::abs(rp.cost(j))) / (1.0 + gn));
    }
    const double f0_norm = frobenius(rp.constant);
    const double root_dim = std::sqrt(static_cast<double>(total_dim));
    const double xi_y = std::max({10.0, root_dim, static_cast<double>(total_dim) * ratio});
    const double xi_s = std::max({10.0, root_dim, f0_norm, max_g});

    Iterate it;
    it.w = Vector::Zero(nw);
    for (const auto& b : rp.constant) {
        it.s.push_back(xi_s * Matrix::Identity(b.rows(), b.cols()));
        it.y.push_back(xi_y * Matrix::Identity(b.rows(), b.cols()));
    }

    const double c_norm = rp.cost.norm();
    auto affine = [&](const Vector& w) {
        BlockList f = rp.constant;
        for (int j = 0; j < nw; ++j) {
            if (w(j) == 0.0) continue;
            for (std::size_t k = 0; k < nb; ++k) f[k] += w(j) * rp.coeffs[static_cast<std::size_t>(j)][k];
        }
        return f;
    };
    auto adjoint = [&](const BlockList& y) {
        Vector out(nw);
        for (int j = 0; j < nw; ++j) out(j) = inner(rp.coeffs[static_cast<std::size_t>(j)], y);
        return out;
    };

    struct Best {
        double metric = std::numeric_limits<double>::infinity();
        Vector w;
        double pobj = 0.0;
        double dobj = 0.0;
    } best;

    int stalls = 0;
    for (int iter = 0; iter < options.max_iterations; ++iter) {
        result.iterations = iter;
        BlockList rp_res = affine(it.w);
        for (std::size_t k = 0; k < nb; ++k) rp_res[k] -= it.s[k];
        const Vector gy = adjoint(it.y);
        const Vector rd = rp.cost - gy;
        const double sy = inner(it.s, it.y);
        const double mu = sy / total_dim;
        const double pobj = rp.cost.dot(it.w) + rp.offset;
        const double dobj = -inner(rp.constant, it.y) + rp.offset;
        const double rel_gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
        const double p_inf = frobenius(rp_res) / (1.0 + f0_norm);
        const double d_inf = rd.norm() / (1.0 + c_norm);

        result.primal_objective = pobj;
        result.dual_objective = dobj;
        if (const double worst = std::max({rel_gap, p_inf, d_inf}); worst < best.metric) {
            best = {worst, it.w, pobj, dobj};
        }

        if (rel_gap <= options.tolerance && p_inf <= options.tolerance && d_inf <= options.tolerance) {
            result.status = SolverStatus::Optimal;
            result.y = recover(it.w);
            return result;
        }

        // Certificate of infeasibility: Y >= 0 with G*(Y) ~ 0 and <F0, Y> < 0.
        const double f0y = inner(rp.constant, it.y);
        if (f0y < 0.0 && frobenius(it.y) > 1e6 && gy.norm() <= 1e-8 * -f0y) {
            result.status = SolverStatus::Infeasible;
            result.message = "infeasibility certificate found";
            result.y = recover(it.w);
            return result;
        }

        // S^{-1} per block.
        BlockList sinv(nb);
        bool chol_ok = true;
        for (std::size_t k = 0; k < nb; ++k) {
            Eigen::LLT<Matrix> llt(it.s[k]);
            if (llt.info() != Eigen::Success) {
                chol_ok = false;
                break;
            }
            sinv[k] = symmetrize(llt.solve(Matrix::Identity(it.s[k].rows(), it.s[k].cols())));
        }
        if (!chol_ok) break;

        // Schur complement M_ij = sum_b tr(G_i S^{-1} G_j Y).
        std::vector<BlockList> t(static_cast<std::size_t>(nw));
        for (int j = 0; j < nw; ++j) {
            BlockList tj(nb);
            for (std::size_t k = 0; k < nb; ++k) tj[k] = sinv[k] * rp.coeffs[static_cast<std::size_t>(j)][k] * it.y[k];
            t[static_cast<std::size_t>(j)] = std::move(tj);
        }
        Matrix schur(nw, nw);
        for (int i = 0; i < nw; ++i) {
            for (int j = i; j < nw; ++j) {
                const double v = inner(rp.coeffs[static_cast<std::size_t>(i)], t[static_cast<std::size_t>(j)]);
                schur(i, j) = v;
                schur(j, i) = v;
            }
        }
        Eigen::LLT<Matrix> schur_llt(schur);
        const bool schur_pd = schur_llt.info() == Eigen::Success;
        Eigen::ColPivHouseholderQR<Matrix> schur_qr;
        if (!schur_pd) schur_qr.compute(schur);

        // S^{-1} Rp Y is shared by predictor and corrector.
        BlockList srpy(nb);
        for (std::size_t k = 0; k < nb; ++k) srpy[k] = sinv[k] * rp_res[k] * it.y[k];

        // Direction for a given S^{-1} Rc, where Rc is the complementarity target.
        auto direction = [&](const BlockList& sinv_rc, Vector& dw, BlockList& ds, BlockList& dy) {
            Vector rhs(nw);
            for (int i = 0; i < nw; ++i) {
                double v = 0.0;
                for (std::size_t k = 0; k < nb; ++k) {
                    v += rp.coeffs[static_cast<std::size_t>(i)][k].cwiseProduct(sinv_rc[k] - srpy[k]).sum();
                }
                rhs(i) = v - rd(i);
            }
            dw = schur_pd ? Vector(schur_llt.solve(rhs)) : Vector(schur_qr.solve(rhs));
            ds = rp_res;
            for (int j = 0; j < nw; ++j) {
                for (std::size_t k = 0; k < nb; ++k) ds[k] += dw(j) * rp.coeffs[static_cast<std::size_t>(j)][k];
            }
            dy.resize(nb);
            for (std::size_t k = 0; k < nb; ++k) dy[k] = symmetrize(sinv_rc[k] - sinv[k] * ds[k] * it.y[k]);
        };

        // Predictor.
        BlockList sinv_rc(nb);
        for (std::size_t k = 0; k < nb; ++k) sinv_rc[k] = -it.y[k];
        Vector dw_a;
        BlockList ds_a, dy_a;
        direction(sinv_rc, dw_a, ds_a, dy_a);
        const double ap_a = std::min(1.0, max_step(it.s, ds_a));
        const double ad_a = std::min(1.0, max_step(it.y, dy_a));
        BlockList s_a = it.s, y_a = it.y;
        for (std::size_t k = 0; k < nb; ++k) {
            s_a[k] += ap_a * ds_a[k];
            y_a[k] += ad_a * dy_a[k];
        }
        const double mu_aff = inner(s_a, y_a) / total_dim;
        const double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);

        // Corrector: Rc = sigma mu I - S Y - dS_a dY_a.
        for (std::size_t k = 0; k < nb; ++k) {
            sinv_rc[k] = sigma * mu * sinv[k] - it.y[k] - sinv[k] * ds_a[k] * dy_a[k];
        }
        Vector dw;
        BlockList ds, dy;
        direction(sinv_rc, dw, ds, dy);

        const double step_frac = 0.98;
        const double ap = std::min(1.0, step_frac * max_step(it.s, ds));
        const double ad = std::min(1.0, step_frac * max_step(it.y, dy));
        if (!(ap > 0.0) || !(ad > 0.0) || !std::isfinite(ap) || !std::isfinite(ad) || !dw.allFinite()) break;

        it.w += ap * dw;
        for (std::size_t k = 0; k < nb; ++k) {
            it.s[k] = symmetrize(it.s[k] + ap * ds[k]);
            it.y[k] = symmetrize(it.y[k] + ad * dy[k]);
        }
        stalls = (ap < 1e-8 && ad < 1e-8) ? stalls + 1 : 0;
        if (stalls >= 3) break;
    }

    // Near the optimum of badly scaled instances the Schur system runs out of
    // digits before the gap closes; keep the best iterate if it is close.
    if (best.metric <= options.acceptable_tolerance) {
        result.y = recover(best.w);
        result.primal_objective = best.pobj;
        result.dual_objective = best.dobj;
        result.status = SolverStatus::Optimal;
        result.message = "stopped at reduced accuracy " + std::to_string(best.metric);
        return result;
    }
    result.y = recover(it.w);
    result.status = SolverStatus::NumericalTrouble;
    result.message = "interior-point iteration did not reach the requested tolerance";
    return result;
}

} // namespace ddctl
