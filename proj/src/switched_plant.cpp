#include "ddctl/switched_plant.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "ddctl/error.hpp"

namespace ddctl {

int SwitchingSchedule::mode_at(std::int64_t k) const {
    if (segments.empty()) throw Error(ErrorCode::Schema, "switching schedule has no segments");
    int mode = segments.front().mode;
    for (const auto& s : segments) {
        if (s.start > k) break;
        mode = s.mode;
    }
    return mode;
}

std::int64_t SwitchingSchedule::dwell() const {
    std::int64_t best = horizon;
    for (std::size_t i = 1; i < segments.size(); ++i) best = std::min(best, segments[i].start - segments[i - 1].start);
    return best;
}

void SwitchingSchedule::validate(int num_modes) const {
    if (segments.empty()) throw Error(ErrorCode::Schema, "switching schedule has no segments");
    if (segments.front().start != 0) throw Error(ErrorCode::Schema, "first schedule segment must start at step 0");
    if (horizon < 1) throw Error(ErrorCode::Schema, "schedule horizon must be positive");
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& s = segments[i];
        if (s.mode < 0 || s.mode >= num_modes) {
            throw Error(ErrorCode::Schema, "schedule refers to unknown mode " + std::to_string(s.mode));
        }
        if (i > 0) {
            if (s.start <= segments[i - 1].start) throw Error(ErrorCode::Schema, "schedule starts must increase");
            if (s.mode == segments[i - 1].mode) {
                throw Error(ErrorCode::Schema, "schedule segment at step " + std::to_string(s.start) +
                                                   " does not change the mode");
            }
        }
    }
}

LinearMode effective_mode(const LinearMode& base, const std::vector<FaultEvent>& faults, std::int64_t k) {
    LinearMode out = base;
    for (const auto& f : faults) {
        if (!f.active(k)) continue;
        if (const auto* add = std::get_if<AdditiveStateFault>(&f.kind)) {
            out.a += add->beta * add->d;
        } else if (const auto* outage = std::get_if<ActuatorOutage>(&f.kind)) {
            out.b.col(outage->column).setZero();
        }
    }
    return out;
}

LinearMode SwitchedPlant::mode_at(std::int64_t k) const {
    return effective_mode(modes.at(static_cast<std::size_t>(schedule.mode_at(k))), faults, k);
}

Vector plant_step(const LinearMode& mode, const Vector& x, const Vector& u) {
    if (x.size() != mode.a.cols() || u.size() != mode.b.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "plant_step: state/input size does not match the mode");
    }
    return mode.a * x + mode.b * u;
}

SwitchingSchedule generate_dwell_schedule(int num_modes, std::int64_t dwell, std::int64_t horizon,
                                          std::mt19937_64& rng) {
    if (num_modes < 1) throw Error(ErrorCode::Parameter, "need at least one mode");
    if (dwell < 1) throw Error(ErrorCode::Parameter, "dwell time must be positive");
    SwitchingSchedule sched;
    sched.horizon = horizon;
    std::uniform_int_distribution<int> first(0, num_modes - 1);
    sched.segments.push_back({0, first(rng)});
    if (num_modes == 1 || horizon <= dwell) return sched;
    std::uniform_int_distribution<std::int64_t> extra(0, dwell);
    std::uniform_int_distribution<int> other(0, num_modes - 2);
    for (;;) {
        const std::int64_t next = sched.segments.back().start + dwell + extra(rng);
        if (next >= horizon) break;
        int mode = other(rng);
        if (mode >= sched.segments.back().mode) ++mode;
        sched.segments.push_back({next, mode});
    }
    return sched;
}

RegimeMap regime_map(const SwitchedPlant& plant, std::int64_t first_step) {
    RegimeMap map;
    map.first_step = first_step;
    std::map<std::pair<int, std::vector<bool>>, int> seen;
    const std::int64_t horizon = plant.schedule.horizon;
    for (std::int64_t k = first_step; k < horizon; ++k) {
        std::vector<bool> active(plant.faults.size());
        for (std::size_t f = 0; f < plant.faults.size(); ++f) active[f] = plant.faults[f].active(k);
        auto key = std::make_pair(plant.schedule.mode_at(k), std::move(active));
        auto [it, inserted] = seen.try_emplace(key, static_cast<int>(map.regimes.size()));
        if (inserted) {
            LinearMode m = plant.mode_at(k);
            m.label = plant.modes[static_cast<std::size_t>(key.first)].label;
            for (std::size_t f = 0; f < key.second.size(); ++f) {
                if (key.second[f]) m.label += "+fault" + std::to_string(f);
            }
            map.regimes.push_back(std::move(m));
        }
        if (!map.ids.empty() && map.ids.back() != it->second) map.switch_times.push_back(k);
        map.ids.push_back(it->second);
    }
    return map;
}

DataWindow seed_window(const SwitchedPlant& plant, const Vector& x_start, int window_length,
                       const OpenLoopOptions& opts, std::mt19937_64& rng, std::optional<double> rank_tol) {
    const int n = plant.state_dim();
    const int m = plant.input_dim();
    if (x_start.size() != n) throw Error(ErrorCode::DimensionMismatch, "initial state has the wrong dimension");
    const int big_n = min_excitation_length(n, m);
    if (window_length < big_n) throw Error(ErrorCode::WindowTooShort, "window shorter than the PE length N");
    std::uniform_real_distribution<double> dist(opts.input_low, opts.input_high);
    for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
        Signal inputs;
        Signal states{x_start};
        for (int i = 0; i < window_length; ++i) {
            const std::int64_t k = static_cast<std::int64_t>(i) - window_length;
            Vector u(m);
            for (int j = 0; j < m; ++j) u(j) = dist(rng);
            states.push_back(plant_step(plant.mode_at(k), states.back(), u));
            inputs.push_back(std::move(u));
        }
        DataWindow window(inputs, states, 0);
        const Signal suffix = window.input_suffix(big_n);
        if (is_persistently_exciting(inputs, n + 1, rank_tol) && is_persistently_exciting(suffix, n + 1, rank_tol) &&
            rank_condition_holds(window, rank_tol)) {
            return window;
        }
    }
    throw Error(ErrorCode::ExcitationFailure, "open-loop experiment failed to produce exciting data");
}

LoopResult run_online_loop(const SwitchedPlant& plant, DataWindow window, const ExcitationPolicy& policy,
                           const SolverOptions& opts, std::int64_t horizon, std::mt19937_64& rng,
                           int max_consecutive_failures) {
    LoopResult out;
    const int n = window.state_dim();
    const int m = window.input_dim();
    if (n != plant.state_dim() || m != plant.input_dim()) {
        throw Error(ErrorCode::DimensionMismatch, "window and plant dimensions differ");
    }
    const RegimeMap regimes = regime_map(plant, std::min<std::int64_t>(0, horizon));
    const int target_rank = m * (n + 1);
    std::optional<Matrix> previous_gain;
    int failures = 0;
    out.trace.reserve(static_cast<std::size_t>(std::max<std::int64_t>(horizon, 0)));

    for (std::int64_t k = 0; k < horizon; ++k) {
        TraceRecord rec;
        rec.k = k;
        rec.mode = k < plant.schedule.horizon ? regimes.id_at(k) : -1;
        const DataMatrices data = window.matrices();
        rec.rank_ok = rank_condition_holds(data, policy.rank_tol);

        const SdpSolution sol = solve_dd_lqr(data, opts);
        rec.solver_status = sol.status;
        if (sol.status == SolverStatus::Optimal) {
            rec.gain = sol.gain;
            failures = 0;
        } else {
            ++failures;
            if (!previous_gain || failures >= max_consecutive_failures) {
                out.aborted = true;
                out.diagnostic = "step " + std::to_string(k) + ": data-driven program returned " +
                                 to_string(sol.status) + (previous_gain ? " repeatedly" : " with no gain to hold");
                out.final_state = window.latest_state();
                return out;
            }
            rec.gain = *previous_gain;
            rec.gain_held = true;
        }
        previous_gain = rec.gain;

        rec.x = window.latest_state();
        rec.norm_x = rec.x.norm();
        rec.norm_gain = spectral_norm(rec.gain);

        InputSelection sel;
        try {
            sel = select_input(window, rec.gain, rec.x, policy, rng);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ExcitationFailure) throw;
            out.aborted = true;
            out.diagnostic = "step " + std::to_string(k) + ": " + e.what();
            out.final_state = rec.x;
            return out;
        }
        rec.u = sel.u;
        rec.epsilon = sel.epsilon;

        const Vector x_next = plant_step(plant.mode_at(k), rec.x, rec.u);
        window.push(rec.u, x_next);

        if (sel.report.source == CandidateSource::ZeroState) {
            rec.pe_ok = true;
        } else {
            const bool suffix_ok = suffix_hankel_rank(window, policy.rank_tol) == target_rank;
            rec.pe_ok = suffix_ok && is_persistently_exciting(window.inputs(), n + 1, policy.rank_tol);
        }
        out.trace.push_back(std::move(rec));
    }
    out.final_state = window.latest_state();
    return out;
}

} // namespace ddctl
