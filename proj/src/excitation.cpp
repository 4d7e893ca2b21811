#include "ddctl/excitation.hpp"

#include <algorithm>
#include <string>

#include "ddctl/error.hpp"

namespace ddctl {

bool is_persistently_exciting(std::span<const Vector> signal, int order, std::optional<double> tol) {
    if (signal.empty()) throw Error(ErrorCode::Length, "empty signal");
    const int m = static_cast<int>(signal.front().size());
    const int needed = (m + 1) * order - 1;
    if (static_cast<int>(signal.size()) < needed) {
        throw Error(ErrorCode::Length, "signal of length " + std::to_string(signal.size()) +
                                           " cannot be PE of order " + std::to_string(order) +
                                           " (needs " + std::to_string(needed) + ")");
    }
    return equilibrated_rank(build_hankel(signal, order).entries(), tol) == m * order;
}

std::vector<Vector> epsilon_candidates(double delta, int m) {
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(2 * m + 1));
    out.push_back(Vector::Zero(m));
    for (int i = 0; i < m; ++i) out.push_back(delta * Vector::Unit(m, i));
    for (int i = 0; i < m; ++i) out.push_back(-delta * Vector::Unit(m, i));
    return out;
}

int suffix_hankel_rank(const DataWindow& window, std::optional<double> tol) {
    const int n = window.state_dim();
    const int big_n = min_excitation_length(n, window.input_dim());
    const Signal suffix = window.input_suffix(big_n);
    return equilibrated_rank(build_hankel(suffix, n + 1).entries(), tol);
}

InputSelection select_input(const DataWindow& window, const Matrix& gain, const Vector& x,
                            const ExcitationPolicy& policy, std::mt19937_64& rng) {
    const int n = window.state_dim();
    const int m = window.input_dim();
    if (gain.rows() != m || gain.cols() != n || x.size() != n) {
        throw Error(ErrorCode::DimensionMismatch, "gain/state do not match the window dimensions");
    }
    if (!(policy.delta > 0.0)) throw Error(ErrorCode::Parameter, "excitation radius delta must be positive");

    const int big_n = min_excitation_length(n, m);
    const int order = n + 1;
    const int target = m * order;

    InputSelection sel;
    sel.report.pe_order_checked = order;
    sel.report.target_rank = target;

    const double xnorm = x.norm();
    if (xnorm == 0.0) {
        sel.u = Vector::Zero(m);
        sel.epsilon = Vector::Zero(m);
        sel.report.source = CandidateSource::ZeroState;
        sel.report.suffix_rank = suffix_hankel_rank(window, policy.rank_tol);
        return sel;
    }

    const Signal current = window.input_suffix(big_n);
    const int current_rank = equilibrated_rank(build_hankel(current, order).entries(), policy.rank_tol);
    if (current_rank != target) {
        throw Error(ErrorCode::ExcitationFailure, "input suffix lost persistence of excitation (rank " +
                                                      std::to_string(current_rank) + " of " +
                                                      std::to_string(target) + ")");
    }

    // Shifted suffix with a free last slot.
    Signal next(current.begin() + 1, current.end());
    next.emplace_back(Vector::Zero(m));
    const Vector feedback = gain * x;

    auto rank_with = [&](const Vector& eps) {
        next.back() = feedback + eps * xnorm;
        return equilibrated_rank(build_hankel(next, order).entries(), policy.rank_tol);
    };

    if (policy.mode == ExcitationMode::RandomThenGuarded) {
        std::uniform_real_distribution<double> dist(-policy.delta, policy.delta);
        Vector eps(m);
        for (int i = 0; i < m; ++i) eps(i) = dist(rng);
        if (const double nrm = eps.norm(); nrm > policy.delta) eps *= policy.delta / nrm;
        const int r = rank_with(eps);
        if (r == target) {
            sel.epsilon = eps;
            sel.u = feedback + eps * xnorm;
            sel.report.source = CandidateSource::Random;
            sel.report.suffix_rank = r;
            return sel;
        }
    }

    const auto candidates = epsilon_candidates(policy.delta, m);
    int best_rank = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const int r = rank_with(candidates[i]);
        best_rank = std::max(best_rank, r);
        if (r == target) {
            sel.epsilon = candidates[i];
            sel.u = feedback + candidates[i] * xnorm;
            sel.report.source = CandidateSource::Sweep;
            sel.report.candidate_index = static_cast<int>(i);
            sel.report.suffix_rank = r;
            return sel;
        }
    }
    throw Error(ErrorCode::ExcitationFailure, "no auxiliary input in the delta-ball restores excitation (best rank " +
                                                  std::to_string(best_rank) + " of " + std::to_string(target) + ")");
}

} // namespace ddctl
