#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "ddctl/data_window.hpp"
#include "ddctl/dd_lqr.hpp"
#include "ddctl/excitation.hpp"

namespace ddctl {

struct LinearMode {
    Matrix a;
    Matrix b;
    std::string label;

    [[nodiscard]] int state_dim() const noexcept { return static_cast<int>(a.rows()); }
    [[nodiscard]] int input_dim() const noexcept { return static_cast<int>(b.cols()); }
};

struct SwitchSegment {
    std::int64_t start = 0;
    int mode = 0;

    friend bool operator==(const SwitchSegment&, const SwitchSegment&) = default;
};

struct SwitchingSchedule {
    std::vector<SwitchSegment> segments;
    std::int64_t horizon = 0;

    /// Mode active at step k; steps before 0 use the first segment.
    [[nodiscard]] int mode_at(std::int64_t k) const;
    /// Smallest gap between consecutive switch instants (horizon if none).
    [[nodiscard]] std::int64_t dwell() const;
    /// Throws Error(Schema) unless k_0 = 0, starts increase, modes change at
    /// every switch and every index is below `num_modes`.
    void validate(int num_modes) const;

    friend bool operator==(const SwitchingSchedule&, const SwitchingSchedule&) = default;
};

struct AdditiveStateFault {
    double beta = 0.0;
    Matrix d;
};

struct ActuatorOutage {
    int column = 0;
};

struct FaultEvent {
    std::variant<AdditiveStateFault, ActuatorOutage> kind;
    std::int64_t start = 0;
    std::optional<std::int64_t> end; ///< exclusive; empty = never ends

    [[nodiscard]] bool active(std::int64_t k) const noexcept { return k >= start && (!end || k < *end); }
};

struct SwitchedPlant {
    std::vector<LinearMode> modes;
    SwitchingSchedule schedule;
    std::vector<FaultEvent> faults;

    [[nodiscard]] int state_dim() const { return modes.front().state_dim(); }
    [[nodiscard]] int input_dim() const { return modes.front().input_dim(); }
    /// Mode matrices in force at step k, faults applied.
    [[nodiscard]] LinearMode mode_at(std::int64_t k) const;
};

/// Applies every active fault in declaration order: A += beta D for additive
/// faults, zeroed B column for outages.
[[nodiscard]] LinearMode effective_mode(const LinearMode& base, const std::vector<FaultEvent>& faults, std::int64_t k);

/// x(k+1) = A x + B u. Throws Error(DimensionMismatch).
[[nodiscard]] Vector plant_step(const LinearMode& mode, const Vector& x, const Vector& u);

/// Random schedule over [0, horizon) with every gap in [dwell, 2 dwell] and
/// consecutive modes distinct. One segment when num_modes == 1 or the horizon
/// does not exceed the dwell time.
[[nodiscard]] SwitchingSchedule generate_dwell_schedule(int num_modes, std::int64_t dwell, std::int64_t horizon,
                                                        std::mt19937_64& rng);

/// Piecewise-constant segmentation of the effective dynamics over
/// [first_step, horizon). Each distinct (schedule mode, active fault set) pair
/// is one regime; ids follow first appearance.
struct RegimeMap {
    std::int64_t first_step = 0;
    std::vector<LinearMode> regimes;
    std::vector<int> ids; ///< ids[k - first_step]
    std::vector<std::int64_t> switch_times; ///< steps where the id changes

    [[nodiscard]] int id_at(std::int64_t k) const { return ids[static_cast<std::size_t>(k - first_step)]; }
};

[[nodiscard]] RegimeMap regime_map(const SwitchedPlant& plant, std::int64_t first_step);

struct TraceRecord {
    std::int64_t k = 0;
    int mode = 0; ///< regime id (see RegimeMap)
    Vector x;
    Vector u;
    Vector epsilon;
    Matrix gain;
    SolverStatus solver_status = SolverStatus::Optimal;
    double norm_x = 0.0;
    double norm_gain = 0.0;
    bool pe_ok = true;
    bool rank_ok = true;
    bool gain_held = false; ///< solver failed and K(k-1) was reused
};

struct LoopResult {
    std::vector<TraceRecord> trace;
    Vector final_state;
    bool aborted = false;
    std::string diagnostic;
};

struct OpenLoopOptions {
    double input_low = -1.0;
    double input_high = 1.0;
    int max_attempts = 100;
};

/// Open-loop experiment over k = -T..-1 starting from x(-T) = `x_start` with
/// i.i.d. uniform inputs. Redraws until the inputs are PE of order n+1 (full
/// window and length-N suffix) and the rank condition holds.
[[nodiscard]] DataWindow seed_window(const SwitchedPlant& plant, const Vector& x_start, int window_length,
                                     const OpenLoopOptions& opts, std::mt19937_64& rng,
                                     std::optional<double> rank_tol = std::nullopt);

/// Runs u(k) = K(k) x(k) + eps(k)|x(k)| for k in [0, horizon), re-solving the
/// data-driven program on the sliding window at every step. Failed solves hold
/// the previous gain; `max_consecutive_failures` of them abort the run.
[[nodiscard]] LoopResult run_online_loop(const SwitchedPlant& plant, DataWindow window, const ExcitationPolicy& policy,
                                         const SolverOptions& opts, std::int64_t horizon, std::mt19937_64& rng,
                                         int max_consecutive_failures = 3);

} // namespace ddctl
