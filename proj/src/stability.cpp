#include "ddctl/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ddctl/error.hpp"

namespace ddctl {

Matrix discrete_lyapunov(const Matrix& a_cl) {
    if (a_cl.rows() != a_cl.cols()) throw Error(ErrorCode::DimensionMismatch, "discrete_lyapunov: A must be square");
    return solve_stein(a_cl);
}

KappaReport kappa_bound(const std::vector<LinearMode>& modes) {
    if (modes.empty()) throw Error(ErrorCode::Parameter, "kappa_bound: no modes");
    KappaReport out;
    for (const auto& mode : modes) {
        ModeGainBound row;
        row.gain = dare_lqr(mode.a, mode.b).gain;
        row.gramian = closed_loop_gramian(mode.a + mode.b * row.gain);
        row.gamma = row.gramian.trace() + (row.gain * row.gramian * row.gain.transpose()).trace();
        // gamma >= n since P >= I; clamp the rounding at the deadbeat corner.
        row.c = std::sqrt(std::max(0.0, row.gamma - static_cast<double>(mode.state_dim())));
        out.kappa = std::max(out.kappa, row.c);
        out.modes.push_back(std::move(row));
    }
    return out;
}

double lyapunov_margin(double lambda_max_p, double a_cl_norm, double b_norm, double d) {
    return lambda_max_p * b_norm * b_norm * d * d + 2.0 * lambda_max_p * a_cl_norm * b_norm * d - 0.5;
}

DeltaReport delta_bar(const std::vector<LinearMode>& modes, const std::vector<Matrix>& gains) {
    if (modes.empty() || modes.size() != gains.size()) {
        throw Error(ErrorCode::DimensionMismatch, "delta_bar: need one gain per mode");
    }
    DeltaReport out;
    out.lambda_min_p = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < modes.size(); ++i) {
        out.lyapunov.push_back(discrete_lyapunov(modes[i].a + modes[i].b * gains[i]));
        out.lambda_max_p = std::max(out.lambda_max_p, max_eigenvalue(out.lyapunov.back()));
        out.lambda_min_p = std::min(out.lambda_min_p, min_eigenvalue(out.lyapunov.back()));
    }
    const double lam = out.lambda_max_p;
    out.delta_bar = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < modes.size(); ++i) {
        const double a_norm = spectral_norm(modes[i].a + modes[i].b * gains[i]);
        const double b_norm = spectral_norm(modes[i].b);
        double d = std::numeric_limits<double>::infinity();
        if (b_norm > 0.0) {
            d = (-lam * a_norm + std::sqrt(lam * lam * a_norm * a_norm + lam / 2.0)) / (lam * b_norm);
        }
        out.delta.push_back(d);
        out.delta_bar = std::min(out.delta_bar, d);
    }
    return out;
}

namespace {

DwellReport dwell_from(const std::vector<LinearMode>& modes, double kappa, double lambda_max_p, double lambda_min_p,
                       double delta, int window_length, std::optional<double> lambda) {
    DwellReport out;
    out.alpha = std::sqrt((lambda_max_p - 0.5) / lambda_max_p);
    out.lambda = lambda.value_or(0.5 * (1.0 + out.alpha));
    if (!(out.lambda > out.alpha && out.lambda < 1.0)) {
        throw Error(ErrorCode::Parameter, "decay rate lambda = " + std::to_string(out.lambda) +
                                              " must satisfy alpha < lambda < 1 (alpha = " +
                                              std::to_string(out.alpha) + ")");
    }
    out.phi = std::sqrt(lambda_max_p / lambda_min_p);
    for (const auto& mode : modes) {
        out.c0 = std::max(out.c0, spectral_norm(mode.a) + spectral_norm(mode.b) * (kappa + delta));
    }
    out.c = std::max(out.c0, 1.0);
    // mu can overflow for long windows; tau_bar is computed in the log domain.
    const double log_mu = std::log(out.phi) + window_length * std::log(out.c / out.alpha);
    out.mu = std::exp(log_mu);
    out.tau_bar = log_mu / std::log(out.lambda / out.alpha);
    return out;
}

} // namespace

DwellReport tau_bar(const std::vector<LinearMode>& modes, const std::vector<Matrix>& gains, double delta,
                    int window_length, std::optional<double> lambda) {
    if (modes.size() != gains.size()) throw Error(ErrorCode::DimensionMismatch, "tau_bar: need one gain per mode");
    double kappa = 0.0;
    for (std::size_t i = 0; i < modes.size(); ++i) {
        const Matrix p = closed_loop_gramian(modes[i].a + modes[i].b * gains[i]);
        const double gamma = p.trace() + (gains[i] * p * gains[i].transpose()).trace();
        kappa = std::max(kappa, std::sqrt(std::max(0.0, gamma - static_cast<double>(modes[i].state_dim()))));
    }
    const DeltaReport d = delta_bar(modes, gains);
    return dwell_from(modes, kappa, d.lambda_max_p, d.lambda_min_p, delta, window_length, lambda);
}

StabilityConstants stability_constants(const std::vector<LinearMode>& modes, double delta, int window_length,
                                       std::optional<double> lambda) {
    StabilityConstants out;
    out.delta = delta;
    out.window_length = window_length;
    out.gains = kappa_bound(modes);
    std::vector<Matrix> gains;
    for (const auto& row : out.gains.modes) gains.push_back(row.gain);
    out.excitation = delta_bar(modes, gains);
    out.dwell = dwell_from(modes, out.gains.kappa, out.excitation.lambda_max_p, out.excitation.lambda_min_p, delta,
                           window_length, lambda);
    return out;
}

FeasibilityTuple build_feasibility_tuple(const DataWindow& window, const LinearMode& old_mode,
                                         const LinearMode& new_mode, std::int64_t k, std::int64_t k_s,
                                         std::optional<int> split) {
    const int n = window.state_dim();
    const int m = window.input_dim();
    const int big_t = window.length();
    const int big_n = min_excitation_length(n, m);
    if (window.current_time() != k) {
        throw Error(ErrorCode::Parameter, "window newest state is x(" + std::to_string(window.current_time()) +
                                              "), expected x(" + std::to_string(k) + ")");
    }
    if (k <= k_s || k >= k_s + big_t) {
        throw Error(ErrorCode::Parameter, "step " + std::to_string(k) + " is outside the transient interval after " +
                                              std::to_string(k_s));
    }
    FeasibilityTuple out;
    out.t = static_cast<int>(k - k_s);
    out.split = split.value_or(big_n - 1);
    if (out.split < big_n - 1 || out.split > big_t - big_n + 1) {
        throw Error(ErrorCode::Parameter, "split point must lie in [N-1, T-N+1]");
    }
    out.uses_new_mode = out.t > out.split;

    const DataMatrices data = window.matrices();
    out.w = data.stacked();
    out.selection = Matrix::Zero(big_t, big_t);
    for (int i = big_t - out.t; i < big_t; ++i) out.selection(i, i) = 1.0;

    const LinearMode& ref = out.uses_new_mode ? new_mode : old_mode;
    const Matrix gain = dare_lqr(ref.a, ref.b).gain;
    out.p = closed_loop_gramian(ref.a + ref.b * gain);

    Matrix stacked(m + n, n);
    stacked << gain, Matrix::Identity(n, n);
    out.q = pseudoinverse(out.w) * stacked * out.p;

    const int head = big_t - out.t;
    const Matrix w1 = out.w.leftCols(head);
    const Matrix w2 = out.w.rightCols(out.t);
    out.kernel = Matrix::Zero(big_t, n);
    if (!out.uses_new_mode) {
        // Zero the rows of Y that meet samples of the new mode.
        if (numerical_rank(w1) != m + n) {
            throw Error(ErrorCode::Construction, "old-mode block of the data matrix is not full row rank");
        }
        out.kernel.bottomRows(out.t) = -out.q.bottomRows(out.t);
        out.kernel.topRows(head) = pseudoinverse(w1) * w2 * out.q.bottomRows(out.t);
    } else {
        if (numerical_rank(w2) != m + n) {
            throw Error(ErrorCode::Construction, "new-mode block of the data matrix is not full row rank");
        }
        out.kernel.topRows(head) = -out.q.topRows(head);
        out.kernel.bottomRows(out.t) = pseudoinverse(w2) * w1 * out.q.topRows(head);
    }
    out.y = out.q + out.kernel;

    Matrix delta_ba(n, m + n);
    delta_ba << new_mode.b - old_mode.b, new_mode.a - old_mode.a;
    const Matrix eye = Matrix::Identity(big_t, big_t);
    out.mismatch = out.uses_new_mode ? Matrix(-delta_ba * out.w * (eye - out.selection) * out.y)
                                     : Matrix(delta_ba * out.w * out.selection * out.y);

    const Matrix uy = data.inputs * out.y;
    out.l = symmetrize(uy * out.p.llt().solve(uy.transpose()));
    out.gamma = out.p.trace() + out.l.trace();
    return out;
}

} // namespace ddctl
