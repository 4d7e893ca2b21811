#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ddctl/data_window.hpp"

namespace ddctl {

enum class ExcitationMode {
    Guarded,           ///< sweep the deterministic candidate list only
    RandomThenGuarded, ///< random draw in the delta-ball, sweep on failure
};

struct ExcitationPolicy {
    double delta = 1e-3;
    ExcitationMode mode = ExcitationMode::RandomThenGuarded;
    std::uint64_t rng_seed = 1;
    std::optional<double> rank_tol; ///< empty = auto tolerance
};

enum class CandidateSource { Random, Sweep, ZeroState };

struct ExcitationReport {
    int pe_order_checked = 0;
    int suffix_rank = 0;
    int target_rank = 0;
    CandidateSource source = CandidateSource::Sweep;
    int candidate_index = -1; ///< index into epsilon_candidates when source == Sweep
};

struct InputSelection {
    Vector u;
    Vector epsilon;
    ExcitationReport report;
};

/// True iff the order-`order` Hankel matrix of `signal` has rank m * order.
/// Throws Error(Length) if the signal is shorter than (m+1)*order - 1.
[[nodiscard]] bool is_persistently_exciting(std::span<const Vector> signal, int order,
                                            std::optional<double> tol = std::nullopt);

/// {0, delta e_1, ..., delta e_m, -delta e_1, ..., -delta e_m}.
[[nodiscard]] std::vector<Vector> epsilon_candidates(double delta, int m);

/// Picks u = K x + eps |x| with |eps| <= delta such that the length-N input
/// suffix, shifted by one and extended with u, stays PE of order n+1.
///
/// Throws Error(ExcitationFailure) if the current suffix is not PE or no
/// candidate restores the rank.
[[nodiscard]] InputSelection select_input(const DataWindow& window, const Matrix& gain, const Vector& x,
                                          const ExcitationPolicy& policy, std::mt19937_64& rng);

/// Rank of the order-(n+1) Hankel matrix of the last N inputs of `window`.
[[nodiscard]] int suffix_hankel_rank(const DataWindow& window, std::optional<double> tol = std::nullopt);

} // namespace ddctl
