#pragma once

// Scenario files, experiment orchestration and trace/report persistence.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ddctl/dd_lqr.hpp"
#include "ddctl/excitation.hpp"
#include "ddctl/stability.hpp"
#include "ddctl/switched_plant.hpp"

namespace ddctl {

struct RandomScheduleSpec {
    std::int64_t dwell = 0;
    std::uint64_t seed = 1;

    friend bool operator==(const RandomScheduleSpec&, const RandomScheduleSpec&) = default;
};

struct ScheduleSpec {
    std::int64_t horizon = 0;
    std::vector<SwitchSegment> segments;    ///< used when `random` is empty
    std::optional<RandomScheduleSpec> random;
    bool allow_short_dwell = false; ///< permit dwell <= T (stress tests)

    friend bool operator==(const ScheduleSpec&, const ScheduleSpec&) = default;
};

struct ScenarioConfig {
    std::string id;
    double sampling_time = 0.1;
    int window_length = 0;
    double delta = 1e-3;
    ExcitationMode excitation_mode = ExcitationMode::RandomThenGuarded;
    std::uint64_t seed = 1;
    std::optional<double> rank_tol;
    std::vector<LinearMode> modes;
    Vector initial_state; ///< x(-T), start of the open-loop experiment
    double input_low = -1.0;
    double input_high = 1.0;
    int max_open_loop_attempts = 100;
    ScheduleSpec schedule;
    std::vector<FaultEvent> faults;
    SolverOptions solver;
    int max_consecutive_failures = 3;
    std::optional<double> lambda;
    std::string trace_path;  ///< empty = "<id>_trace.<ext>"
    std::string report_path; ///< empty = "<id>_report.json"

    [[nodiscard]] int state_dim() const { return modes.front().state_dim(); }
    [[nodiscard]] int input_dim() const { return modes.front().input_dim(); }
};

[[nodiscard]] bool same_config(const ScenarioConfig& a, const ScenarioConfig& b);

/// Parses and validates scenario text (JSON). Times given in seconds
/// (`*_s` keys) are converted to steps with floor(t / h). Error codes:
/// Schema, DimensionMismatch, WindowTooShort, Uncontrollable, Parameter.
[[nodiscard]] ScenarioConfig parse_scenario_text(const std::string& text,
                                                 const std::vector<std::string>& overrides = {});
/// Reads `path`, or a builtin when `path` names one and no such file exists.
[[nodiscard]] ScenarioConfig parse_scenario(const std::string& path, const std::vector<std::string>& overrides = {});
/// Canonical JSON text; every time is written in steps.
[[nodiscard]] std::string serialize_scenario(const ScenarioConfig& config);

/// Throws unless every invariant of a loaded scenario holds.
void validate_scenario(const ScenarioConfig& config);

[[nodiscard]] std::vector<std::string> builtin_names();
[[nodiscard]] std::string builtin_scenario_text(const std::string& name);
[[nodiscard]] ScenarioConfig builtin_scenario(const std::string& name);

/// Seed precedence: explicit value, then the DDCTL_SEED environment variable.
[[nodiscard]] std::optional<std::uint64_t> seed_from_env();

[[nodiscard]] SwitchingSchedule materialize_schedule(const ScenarioConfig& config);
[[nodiscard]] SwitchedPlant make_plant(const ScenarioConfig& config);

struct TraceSummary {
    std::int64_t steps = 0;
    double max_norm_x = 0.0;
    double max_norm_gain = 0.0;
    double max_abs_input = 0.0;
    int non_optimal = 0;
    int pe_violations = 0;
    int rank_violations = 0;

    friend bool operator==(const TraceSummary&, const TraceSummary&) = default;
};

[[nodiscard]] TraceSummary summarize(const std::vector<TraceRecord>& trace);

/// Runtime checks against the model-based constants.
struct InvariantReport {
    bool bounds_available = false;
    std::string bounds_error;
    double kappa = 0.0;
    double growth_constant = 0.0; ///< C
    int gain_bound_violations = 0;  ///< |K(k)| > kappa + 1e-6
    int growth_violations = 0;      ///< |x(k+1)| > C |x(k)| + 1e-9
    double worst_growth_ratio = 0.0;
};

struct RunReport {
    std::string id;
    std::uint64_t seed = 0;
    std::string trace_path;
    SwitchingSchedule schedule;
    std::vector<FaultEvent> faults;
    TraceSummary summary;
    InvariantReport invariants;
    std::optional<StabilityConstants> bounds;
    bool aborted = false;
    std::string diagnostic;

    /// True when the run completed and no runtime invariant was violated.
    [[nodiscard]] bool clean() const;
};

struct ScenarioRun {
    SwitchedPlant plant;
    RegimeMap regimes;     ///< from k = -T
    DataWindow initial_window;
    LoopResult loop;
    RunReport report;
};

/// Open-loop seeding, then the online loop, then the invariant checks. Does
/// not touch the filesystem.
[[nodiscard]] ScenarioRun run_scenario(const ScenarioConfig& config);

enum class TraceFormat { Csv, Json };

/// Column order: k, mode, x_*, u_*, eps_*, norm_x, norm_K, solver_status,
/// pe_ok, rank_ok. Reals are written with 17 significant digits.
void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& trace);
void write_trace_json(std::ostream& os, const std::string& id, const std::vector<TraceRecord>& trace);
/// Reads back the columns needed by `summarize`; gains are left empty.
[[nodiscard]] std::vector<TraceRecord> read_trace_csv(std::istream& is);

[[nodiscard]] std::string report_json(const RunReport& report);

/// Per-regime constants; a regime whose Riccati oracle fails carries the error.
struct BoundsRow {
    std::string label;
    std::optional<ModeGainBound> gain;
    double delta = 0.0;
    double lambda_max_p = 0.0;
    std::string error;
};

struct BoundsReport {
    std::string id;
    std::vector<BoundsRow> rows;
    std::optional<StabilityConstants> constants;
    std::string error;
};

/// Constants for every regime the scenario visits. Throws Error(Parameter)
/// when the requested lambda does not exceed alpha.
[[nodiscard]] BoundsReport bounds_command(const ScenarioConfig& config);
[[nodiscard]] std::string bounds_json(const BoundsReport& report);
[[nodiscard]] std::string bounds_table(const BoundsReport& report);

struct LqrCheckReport {
    std::string id;
    Matrix gain_sdp;
    Matrix gain_dare;
    double gamma = 0.0;
    double h2_cost = 0.0;
    double gain_error = 0.0; ///< |K_sdp - K_dare| / |K_dare| (absolute when K_dare = 0)
    double cost_error = 0.0; ///< |gamma - H2(K_dare)| / gamma
    SolverStatus status = SolverStatus::NumericalTrouble;
    double tolerance = 1e-4;

    [[nodiscard]] bool passed() const;
};

/// Single-mode check of the data-driven program against the Riccati oracle.
[[nodiscard]] LqrCheckReport lqr_check_command(const ScenarioConfig& config, double tolerance = 1e-4);
[[nodiscard]] std::string lqr_check_json(const LqrCheckReport& report);

} // namespace ddctl
