#include "ddctl/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ddctl/error.hpp"

namespace ddctl {

using json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------- builtins

constexpr const char* kF18 = R"({
  "id": "f18",
  "sampling_time": 0.1,
  "window_length": 15,
  "delta": 0.001,
  "excitation": {"policy": "random_then_guarded", "seed": 1},
  "modes": [
    {"label": "flight_mode_1",
     "A": [[0.977, 0.097], [0.002, 0.981]],
     "B": [[-0.013, -0.004], [-0.171, -0.051]]},
    {"label": "flight_mode_2",
     "A": [[0.852, 0.088], [-0.753, 0.878]],
     "B": [[-0.106, -0.021], [-1.8143, -0.358]]}
  ],
  "initial_state": [1.0, 0.5],
  "open_loop": {"input_range": [-0.3, 0.3]},
  "schedule": {"horizon": 150, "random": {"dwell": 15, "seed": 1}, "allow_short_dwell": true}
})";

constexpr const char* kF404 = R"({
  "id": "f404",
  "sampling_time": 0.1,
  "window_length": 21,
  "delta": 0.001,
  "excitation": {"policy": "random_then_guarded", "seed": 1},
  "modes": [
    {"label": "nominal",
     "A": [[0.867, 0.0, 0.202], [0.015, 0.961, -0.032], [0.026, 0.0, 0.803]],
     "B": [[0.011, 0.0], [0.014, -0.039], [0.009, 0.0]]}
  ],
  "initial_state": [1.0, 1.0, 1.0],
  "open_loop": {"input_range": [-3.5, 3.5]},
  "schedule": {"horizon": 150, "segments": [{"start": 0, "mode": 0}]},
  "faults": [
    {"kind": "additive", "beta": 0.1, "D": [[0.075, 0.0, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, -0.75]],
     "start_s": 0.0, "end_s": 2.7},
    {"kind": "additive", "beta": 0.05, "D": [[0.075, 0.0, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, -0.75]],
     "start_s": 2.7, "end_s": 5.2},
    {"kind": "additive", "beta": -0.5, "D": [[0.075, 0.0, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, -0.75]],
     "start_s": 5.2, "end_s": 9.5},
    {"kind": "outage", "column": 0, "start_s": 2.7, "end_s": 5.2},
    {"kind": "outage", "column": 1, "start_s": 5.2}
  ]
})";

constexpr const char* kScalar = R"({
  "id": "scalar",
  "sampling_time": 1.0,
  "window_length": 5,
  "delta": 0.001,
  "modes": [{"label": "unstable_scalar", "A": [[2.0]], "B": [[1.0]]}],
  "initial_state": [1.0],
  "open_loop": {"input_range": [-1.0, 1.0]},
  "schedule": {"horizon": 30, "segments": [{"start": 0, "mode": 0}]}
})";

constexpr const char* kDeadbeat = R"({
  "id": "deadbeat",
  "sampling_time": 1.0,
  "window_length": 15,
  "delta": 0.001,
  "modes": [{"label": "deadbeat", "A": [[0.0, 0.0], [0.0, 0.0]], "B": [[1.0, 0.0], [0.0, 1.0]]}],
  "initial_state": [1.0, -1.0],
  "open_loop": {"input_range": [-1.0, 1.0]},
  "schedule": {"horizon": 30, "segments": [{"start": 0, "mode": 0}]}
})";

const std::map<std::string, const char*>& builtins() {
    static const std::map<std::string, const char*> table{
        {"deadbeat", kDeadbeat}, {"f18", kF18}, {"f404", kF404}, {"scalar", kScalar}};
    return table;
}

// ---------------------------------------------------------------- parsing

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
    throw Error(ErrorCode::Schema, where + ": " + what);
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) schema_error(where, "expected an object");
    for (const auto& item : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return item.key() == a; })) {
            schema_error(where, "unknown key '" + item.key() + "'");
        }
    }
}

double get_number(const json& j, const std::string& where) {
    if (!j.is_number()) schema_error(where, "expected a number");
    return j.get<double>();
}

std::int64_t get_integer(const json& j, const std::string& where) {
    if (!j.is_number_integer()) schema_error(where, "expected an integer");
    return j.get<std::int64_t>();
}

Matrix get_matrix(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) schema_error(where, "expected a non-empty array of rows");
    const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
    Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < j.size(); ++r) {
        const auto& row = j[r];
        const std::string rw = where + "[" + std::to_string(r) + "]";
        if (!row.is_array()) schema_error(rw, "expected an array of numbers");
        if (row.size() != cols) {
            throw Error(ErrorCode::DimensionMismatch, rw + ": ragged matrix row (" + std::to_string(row.size()) +
                                                          " entries, expected " + std::to_string(cols) + ")");
        }
        for (std::size_t c = 0; c < cols; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                get_number(row[c], rw + "[" + std::to_string(c) + "]");
        }
    }
    if (cols == 0) schema_error(where, "matrix rows must be non-empty");
    return m;
}

Vector get_vector(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) schema_error(where, "expected a non-empty array of numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = get_number(j[i], where);
    return v;
}

std::int64_t seconds_to_steps(double seconds, double h) {
    return static_cast<std::int64_t>(std::floor(seconds / h + 1e-9));
}

// Reads `key` (steps) or `key_s` (seconds); exactly one may be present.
std::optional<std::int64_t> get_time(const json& obj, const std::string& key, double h, const std::string& where) {
    const bool steps = obj.contains(key);
    const bool secs = obj.contains(key + "_s");
    if (steps && secs) schema_error(where, "give either '" + key + "' or '" + key + "_s', not both");
    if (steps) return get_integer(obj.at(key), where + "." + key);
    if (secs) return seconds_to_steps(get_number(obj.at(key + "_s"), where + "." + key + "_s"), h);
    return std::nullopt;
}

json to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

json to_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

void apply_override(json& root, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw Error(ErrorCode::Parameter, "override '" + assignment + "' is not of the form key=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json* node = &root;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const std::string& p = parts[i];
        const bool last = i + 1 == parts.size();
        if (node->is_array()) {
            char* end = nullptr;
            const unsigned long idx = std::strtoul(p.c_str(), &end, 10);
            if (p.empty() || *end != '\0' || idx >= node->size()) {
                throw Error(ErrorCode::Parameter, "override path '" + path + "': bad array index '" + p + "'");
            }
            node = &(*node)[idx];
        } else {
            if (node->is_null()) *node = json::object();
            if (!node->is_object()) throw Error(ErrorCode::Parameter, "override path '" + path + "' is not an object");
            node = &(*node)[p];
        }
        if (last) *node = value;
    }
}

ExcitationMode parse_policy(const json& j, const std::string& where) {
    if (!j.is_string()) schema_error(where, "expected a string");
    const auto s = j.get<std::string>();
    if (s == "random_then_guarded") return ExcitationMode::RandomThenGuarded;
    if (s == "guarded") return ExcitationMode::Guarded;
    schema_error(where, "unknown policy '" + s + "' (random_then_guarded | guarded)");
}

const char* policy_name(ExcitationMode m) {
    return m == ExcitationMode::Guarded ? "guarded" : "random_then_guarded";
}

ScenarioConfig from_json(const json& root) {
    check_keys(root, "scenario",
               {"id", "sampling_time", "window_length", "delta", "excitation", "modes", "initial_state", "open_loop",
                "schedule", "faults", "solver", "lambda", "output"});
    ScenarioConfig cfg;
    if (!root.contains("id") || !root.at("id").is_string()) schema_error("id", "required string");
    cfg.id = root.at("id").get<std::string>();
    if (root.contains("sampling_time")) cfg.sampling_time = get_number(root.at("sampling_time"), "sampling_time");
    if (!(cfg.sampling_time > 0.0)) throw Error(ErrorCode::Parameter, "sampling_time must be positive");
    if (!root.contains("window_length")) schema_error("window_length", "required");
    cfg.window_length = static_cast<int>(get_integer(root.at("window_length"), "window_length"));
    if (root.contains("delta")) cfg.delta = get_number(root.at("delta"), "delta");

    if (root.contains("excitation")) {
        const auto& ex = root.at("excitation");
        check_keys(ex, "excitation", {"policy", "seed", "rank_tol"});
        if (ex.contains("policy")) cfg.excitation_mode = parse_policy(ex.at("policy"), "excitation.policy");
        if (ex.contains("seed")) {
            const auto s = get_integer(ex.at("seed"), "excitation.seed");
            if (s < 0) throw Error(ErrorCode::Parameter, "excitation.seed must be non-negative");
            cfg.seed = static_cast<std::uint64_t>(s);
        }
        if (ex.contains("rank_tol") && !ex.at("rank_tol").is_null()) {
            cfg.rank_tol = get_number(ex.at("rank_tol"), "excitation.rank_tol");
        }
    }

    if (!root.contains("modes") || !root.at("modes").is_array() || root.at("modes").empty()) {
        schema_error("modes", "required non-empty array");
    }
    for (std::size_t i = 0; i < root.at("modes").size(); ++i) {
        const std::string where = "modes[" + std::to_string(i) + "]";
        const auto& jm = root.at("modes")[i];
        check_keys(jm, where, {"label", "A", "B"});
        if (!jm.contains("A") || !jm.contains("B")) schema_error(where, "needs A and B");
        LinearMode mode;
        mode.a = get_matrix(jm.at("A"), where + ".A");
        mode.b = get_matrix(jm.at("B"), where + ".B");
        mode.label = jm.contains("label") ? jm.at("label").get<std::string>() : "mode" + std::to_string(i);
        cfg.modes.push_back(std::move(mode));
    }

    if (!root.contains("initial_state")) schema_error("initial_state", "required");
    cfg.initial_state = get_vector(root.at("initial_state"), "initial_state");

    if (root.contains("open_loop")) {
        const auto& ol = root.at("open_loop");
        check_keys(ol, "open_loop", {"input_range", "max_attempts"});
        if (ol.contains("input_range")) {
            const Vector r = get_vector(ol.at("input_range"), "open_loop.input_range");
            if (r.size() != 2) schema_error("open_loop.input_range", "expected [low, high]");
            cfg.input_low = r(0);
            cfg.input_high = r(1);
        }
        if (ol.contains("max_attempts")) {
            cfg.max_open_loop_attempts = static_cast<int>(get_integer(ol.at("max_attempts"), "open_loop.max_attempts"));
        }
    }

    const double h = cfg.sampling_time;
    if (!root.contains("schedule")) schema_error("schedule", "required");
    {
        const auto& js = root.at("schedule");
        check_keys(js, "schedule", {"horizon", "horizon_s", "segments", "random", "allow_short_dwell"});
        const auto horizon = get_time(js, "horizon", h, "schedule");
        if (!horizon) schema_error("schedule", "needs 'horizon' or 'horizon_s'");
        cfg.schedule.horizon = *horizon;
        if (js.contains("allow_short_dwell")) {
            if (!js.at("allow_short_dwell").is_boolean()) schema_error("schedule.allow_short_dwell", "expected bool");
            cfg.schedule.allow_short_dwell = js.at("allow_short_dwell").get<bool>();
        }
        if (js.contains("segments") == js.contains("random")) {
            schema_error("schedule", "give exactly one of 'segments' or 'random'");
        }
        if (js.contains("segments")) {
            const auto& segs = js.at("segments");
            if (!segs.is_array() || segs.empty()) schema_error("schedule.segments", "expected a non-empty array");
            for (std::size_t i = 0; i < segs.size(); ++i) {
                const std::string where = "schedule.segments[" + std::to_string(i) + "]";
                check_keys(segs[i], where, {"start", "start_s", "mode"});
                const auto start = get_time(segs[i], "start", h, where);
                if (!start || !segs[i].contains("mode")) schema_error(where, "needs a start and a mode");
                cfg.schedule.segments.push_back(
                    {*start, static_cast<int>(get_integer(segs[i].at("mode"), where + ".mode"))});
            }
        } else {
            const auto& jr = js.at("random");
            check_keys(jr, "schedule.random", {"dwell", "dwell_s", "seed"});
            RandomScheduleSpec rs;
            const auto dwell = get_time(jr, "dwell", h, "schedule.random");
            if (!dwell) schema_error("schedule.random", "needs 'dwell' or 'dwell_s'");
            rs.dwell = *dwell;
            if (jr.contains("seed")) rs.seed = static_cast<std::uint64_t>(get_integer(jr.at("seed"), "schedule.random.seed"));
            cfg.schedule.random = rs;
        }
    }

    if (root.contains("faults")) {
        const auto& jf = root.at("faults");
        if (!jf.is_array()) schema_error("faults", "expected an array");
        for (std::size_t i = 0; i < jf.size(); ++i) {
            const std::string where = "faults[" + std::to_string(i) + "]";
            const auto& f = jf[i];
            check_keys(f, where, {"kind", "beta", "D", "column", "start", "start_s", "end", "end_s"});
            if (!f.contains("kind") || !f.at("kind").is_string()) schema_error(where, "needs a kind");
            FaultEvent ev;
            const auto kind = f.at("kind").get<std::string>();
            if (kind == "additive") {
                if (!f.contains("beta") || !f.contains("D")) schema_error(where, "additive fault needs beta and D");
                ev.kind = AdditiveStateFault{get_number(f.at("beta"), where + ".beta"), get_matrix(f.at("D"), where + ".D")};
            } else if (kind == "outage") {
                if (!f.contains("column")) schema_error(where, "outage needs a column");
                ev.kind = ActuatorOutage{static_cast<int>(get_integer(f.at("column"), where + ".column"))};
            } else {
                schema_error(where + ".kind", "unknown fault kind '" + kind + "' (additive | outage)");
            }
            const auto start = get_time(f, "start", h, where);
            if (!start) schema_error(where, "needs 'start' or 'start_s'");
            ev.start = *start;
            ev.end = get_time(f, "end", h, where);
            cfg.faults.push_back(std::move(ev));
        }
    }

    if (root.contains("solver")) {
        const auto& js = root.at("solver");
        check_keys(js, "solver",
                   {"feasibility_tol", "optimality_tol", "max_iterations", "equality", "max_consecutive_failures"});
        if (js.contains("feasibility_tol")) cfg.solver.feasibility_tol = get_number(js.at("feasibility_tol"), "solver.feasibility_tol");
        if (js.contains("optimality_tol")) cfg.solver.optimality_tol = get_number(js.at("optimality_tol"), "solver.optimality_tol");
        if (js.contains("max_iterations")) {
            cfg.solver.max_iterations = static_cast<int>(get_integer(js.at("max_iterations"), "solver.max_iterations"));
        }
        if (js.contains("equality")) {
            const auto e = js.at("equality").get<std::string>();
            if (e == "linear") cfg.solver.equality = EqualityHandling::LinearEquality;
            else if (e == "two_sided") cfg.solver.equality = EqualityHandling::TwoSidedInequality;
            else schema_error("solver.equality", "expected 'linear' or 'two_sided'");
        }
        if (js.contains("max_consecutive_failures")) {
            cfg.max_consecutive_failures =
                static_cast<int>(get_integer(js.at("max_consecutive_failures"), "solver.max_consecutive_failures"));
        }
    }
    if (root.contains("lambda") && !root.at("lambda").is_null()) cfg.lambda = get_number(root.at("lambda"), "lambda");
    if (root.contains("output")) {
        const auto& jo = root.at("output");
        check_keys(jo, "output", {"trace", "report"});
        if (jo.contains("trace")) cfg.trace_path = jo.at("trace").get<std::string>();
        if (jo.contains("report")) cfg.report_path = jo.at("report").get<std::string>();
    }
    return cfg;
}

json config_json(const ScenarioConfig& cfg) {
    json root;
    root["id"] = cfg.id;
    root["sampling_time"] = cfg.sampling_time;
    root["window_length"] = cfg.window_length;
    root["delta"] = cfg.delta;
    json ex;
    ex["policy"] = policy_name(cfg.excitation_mode);
    ex["seed"] = cfg.seed;
    if (cfg.rank_tol) ex["rank_tol"] = *cfg.rank_tol;
    root["excitation"] = ex;
    json modes = json::array();
    for (const auto& m : cfg.modes) modes.push_back({{"label", m.label}, {"A", to_json(m.a)}, {"B", to_json(m.b)}});
    root["modes"] = modes;
    root["initial_state"] = to_json(cfg.initial_state);
    root["open_loop"] = {{"input_range", {cfg.input_low, cfg.input_high}}, {"max_attempts", cfg.max_open_loop_attempts}};
    json sched;
    sched["horizon"] = cfg.schedule.horizon;
    if (cfg.schedule.random) {
        sched["random"] = {{"dwell", cfg.schedule.random->dwell}, {"seed", cfg.schedule.random->seed}};
    } else {
        json segs = json::array();
        for (const auto& s : cfg.schedule.segments) segs.push_back({{"start", s.start}, {"mode", s.mode}});
        sched["segments"] = segs;
    }
    sched["allow_short_dwell"] = cfg.schedule.allow_short_dwell;
    root["schedule"] = sched;
    json faults = json::array();
    for (const auto& f : cfg.faults) {
        json jf;
        if (const auto* add = std::get_if<AdditiveStateFault>(&f.kind)) {
            jf["kind"] = "additive";
            jf["beta"] = add->beta;
            jf["D"] = to_json(add->d);
        } else {
            jf["kind"] = "outage";
            jf["column"] = std::get<ActuatorOutage>(f.kind).column;
        }
        jf["start"] = f.start;
        if (f.end) jf["end"] = *f.end;
        faults.push_back(std::move(jf));
    }
    root["faults"] = faults;
    root["solver"] = {{"feasibility_tol", cfg.solver.feasibility_tol},
                      {"optimality_tol", cfg.solver.optimality_tol},
                      {"max_iterations", cfg.solver.max_iterations},
                      {"equality", cfg.solver.equality == EqualityHandling::LinearEquality ? "linear" : "two_sided"},
                      {"max_consecutive_failures", cfg.max_consecutive_failures}};
    if (cfg.lambda) root["lambda"] = *cfg.lambda;
    json out = json::object();
    if (!cfg.trace_path.empty()) out["trace"] = cfg.trace_path;
    if (!cfg.report_path.empty()) out["report"] = cfg.report_path;
    if (!out.empty()) root["output"] = out;
    return root;
}

bool same_matrix(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

bool same_fault(const FaultEvent& a, const FaultEvent& b) {
    if (a.start != b.start || a.end != b.end || a.kind.index() != b.kind.index()) return false;
    if (const auto* x = std::get_if<AdditiveStateFault>(&a.kind)) {
        const auto& y = std::get<AdditiveStateFault>(b.kind);
        return x->beta == y.beta && same_matrix(x->d, y.d);
    }
    return std::get<ActuatorOutage>(a.kind).column == std::get<ActuatorOutage>(b.kind).column;
}

SolverStatus parse_status(const std::string& s) {
    for (auto st : {SolverStatus::Optimal, SolverStatus::Infeasible, SolverStatus::NumericalTrouble}) {
        if (s == to_string(st)) return st;
    }
    throw Error(ErrorCode::Schema, "unknown solver status '" + s + "' in trace");
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<LinearMode> regime_modes(const RegimeMap& map) { return map.regimes; }

} // namespace

// ---------------------------------------------------------------- config API

bool same_config(const ScenarioConfig& a, const ScenarioConfig& b) {
    if (a.id != b.id || a.sampling_time != b.sampling_time || a.window_length != b.window_length ||
        a.delta != b.delta || a.excitation_mode != b.excitation_mode || a.seed != b.seed || a.rank_tol != b.rank_tol ||
        a.input_low != b.input_low || a.input_high != b.input_high ||
        a.max_open_loop_attempts != b.max_open_loop_attempts || !(a.schedule == b.schedule) ||
        a.max_consecutive_failures != b.max_consecutive_failures || a.lambda != b.lambda ||
        a.trace_path != b.trace_path || a.report_path != b.report_path || a.modes.size() != b.modes.size() ||
        a.faults.size() != b.faults.size() || !same_matrix(a.initial_state, b.initial_state)) {
        return false;
    }
    const auto& sa = a.solver;
    const auto& sb = b.solver;
    if (sa.feasibility_tol != sb.feasibility_tol || sa.optimality_tol != sb.optimality_tol ||
        sa.equality != sb.equality || sa.max_iterations != sb.max_iterations) {
        return false;
    }
    for (std::size_t i = 0; i < a.modes.size(); ++i) {
        if (a.modes[i].label != b.modes[i].label || !same_matrix(a.modes[i].a, b.modes[i].a) ||
            !same_matrix(a.modes[i].b, b.modes[i].b)) {
            return false;
        }
    }
    for (std::size_t i = 0; i < a.faults.size(); ++i) {
        if (!same_fault(a.faults[i], b.faults[i])) return false;
    }
    return true;
}

void validate_scenario(const ScenarioConfig& cfg) {
    const int n = static_cast<int>(cfg.modes.front().a.rows());
    const int m = static_cast<int>(cfg.modes.front().b.cols());
    for (std::size_t i = 0; i < cfg.modes.size(); ++i) {
        const auto& mode = cfg.modes[i];
        if (mode.a.rows() != n || mode.a.cols() != n || mode.b.rows() != n || mode.b.cols() != m) {
            throw Error(ErrorCode::DimensionMismatch, "mode " + std::to_string(i) + " ('" + mode.label +
                                                          "') does not share the shape n=" + std::to_string(n) +
                                                          ", m=" + std::to_string(m) + " of mode 0");
        }
    }
    if (cfg.initial_state.size() != n) {
        throw Error(ErrorCode::DimensionMismatch, "initial_state has " + std::to_string(cfg.initial_state.size()) +
                                                      " entries, the modes have n=" + std::to_string(n));
    }
    const int needed = min_window_length(n, m);
    if (cfg.window_length < needed) {
        throw Error(ErrorCode::WindowTooShort, "window_length " + std::to_string(cfg.window_length) +
                                                   " is below 2N-1 = " + std::to_string(needed) +
                                                   " for n=" + std::to_string(n) + ", m=" + std::to_string(m));
    }
    for (std::size_t i = 0; i < cfg.modes.size(); ++i) {
        if (!is_controllable(cfg.modes[i].a, cfg.modes[i].b)) {
            throw Error(ErrorCode::Uncontrollable, "mode " + std::to_string(i) + " ('" + cfg.modes[i].label +
                                                       "') is not controllable");
        }
    }
    if (!(cfg.delta > 0.0)) throw Error(ErrorCode::Parameter, "delta must be positive");
    if (!(cfg.input_low < cfg.input_high)) throw Error(ErrorCode::Parameter, "open_loop.input_range must be increasing");
    if (cfg.max_open_loop_attempts < 1) throw Error(ErrorCode::Parameter, "open_loop.max_attempts must be positive");
    if (!(cfg.solver.feasibility_tol > 0.0) || !(cfg.solver.optimality_tol > 0.0)) {
        throw Error(ErrorCode::Parameter, "solver tolerances must be positive");
    }
    if (cfg.solver.max_iterations < 1 || cfg.max_consecutive_failures < 1) {
        throw Error(ErrorCode::Parameter, "solver iteration limits must be positive");
    }
    if (cfg.lambda && !(*cfg.lambda > 0.0 && *cfg.lambda < 1.0)) {
        throw Error(ErrorCode::Parameter, "lambda must lie in (0, 1)");
    }
    const auto& sched = cfg.schedule;
    if (sched.horizon < 1) throw Error(ErrorCode::Parameter, "schedule horizon must be positive");
    if (sched.random) {
        if (sched.random->dwell < 1) throw Error(ErrorCode::Parameter, "schedule.random.dwell must be positive");
        if (!sched.allow_short_dwell && cfg.modes.size() > 1 && sched.random->dwell <= cfg.window_length) {
            throw Error(ErrorCode::Parameter, "dwell time " + std::to_string(sched.random->dwell) +
                                                  " does not exceed the window length; set "
                                                  "schedule.allow_short_dwell to run it anyway");
        }
    } else {
        SwitchingSchedule s{sched.segments, sched.horizon};
        s.validate(static_cast<int>(cfg.modes.size()));
        if (!sched.allow_short_dwell && s.segments.size() > 1 && s.dwell() <= cfg.window_length) {
            throw Error(ErrorCode::Parameter, "dwell time " + std::to_string(s.dwell()) +
                                                  " does not exceed the window length; set "
                                                  "schedule.allow_short_dwell to run it anyway");
        }
    }
    for (std::size_t i = 0; i < cfg.faults.size(); ++i) {
        const auto& f = cfg.faults[i];
        const std::string where = "fault " + std::to_string(i);
        if (f.start < 0 || f.start >= sched.horizon || (f.end && (*f.end <= f.start || *f.end > sched.horizon))) {
            throw Error(ErrorCode::Parameter, where + ": active interval must be a non-empty part of [0, horizon)");
        }
        if (const auto* add = std::get_if<AdditiveStateFault>(&f.kind)) {
            if (add->d.rows() != n || add->d.cols() != n) {
                throw Error(ErrorCode::DimensionMismatch, where + ": D must be " + std::to_string(n) + "x" +
                                                              std::to_string(n));
            }
        } else if (const int c = std::get<ActuatorOutage>(f.kind).column; c < 0 || c >= m) {
            throw Error(ErrorCode::DimensionMismatch, where + ": outage column " + std::to_string(c) +
                                                          " out of range for m=" + std::to_string(m));
        }
    }
}

ScenarioConfig parse_scenario_text(const std::string& text, const std::vector<std::string>& overrides) {
    json root = json::parse(text, nullptr, false);
    if (root.is_discarded()) throw Error(ErrorCode::Schema, "scenario is not valid JSON");
    for (const auto& o : overrides) apply_override(root, o);
    ScenarioConfig cfg = from_json(root);
    validate_scenario(cfg);
    return cfg;
}

ScenarioConfig parse_scenario(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) {
        if (builtins().count(path) && !std::filesystem::exists(path)) {
            return parse_scenario_text(builtins().at(path), overrides);
        }
        throw Error(ErrorCode::Io, "cannot open scenario '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario_text(ss.str(), overrides);
}

std::string serialize_scenario(const ScenarioConfig& config) { return config_json(config).dump(2) + "\n"; }

std::vector<std::string> builtin_names() {
    std::vector<std::string> out;
    for (const auto& [name, text] : builtins()) out.push_back(name);
    return out;
}

std::string builtin_scenario_text(const std::string& name) {
    const auto it = builtins().find(name);
    if (it == builtins().end()) throw Error(ErrorCode::Parameter, "no builtin scenario named '" + name + "'");
    return it->second;
}

ScenarioConfig builtin_scenario(const std::string& name) { return parse_scenario_text(builtin_scenario_text(name)); }

std::optional<std::uint64_t> seed_from_env() {
    const char* v = std::getenv("DDCTL_SEED");
    if (!v || !*v) return std::nullopt;
    char* end = nullptr;
    const unsigned long long s = std::strtoull(v, &end, 10);
    if (*end != '\0') throw Error(ErrorCode::Parameter, "DDCTL_SEED must be a non-negative integer");
    return static_cast<std::uint64_t>(s);
}

SwitchingSchedule materialize_schedule(const ScenarioConfig& config) {
    if (config.schedule.random) {
        std::mt19937_64 rng(config.schedule.random->seed);
        return generate_dwell_schedule(static_cast<int>(config.modes.size()), config.schedule.random->dwell,
                                       config.schedule.horizon, rng);
    }
    return SwitchingSchedule{config.schedule.segments, config.schedule.horizon};
}

SwitchedPlant make_plant(const ScenarioConfig& config) {
    return SwitchedPlant{config.modes, materialize_schedule(config), config.faults};
}

// ---------------------------------------------------------------- running

TraceSummary summarize(const std::vector<TraceRecord>& trace) {
    TraceSummary s;
    s.steps = static_cast<std::int64_t>(trace.size());
    for (const auto& r : trace) {
        s.max_norm_x = std::max(s.max_norm_x, r.norm_x);
        s.max_norm_gain = std::max(s.max_norm_gain, r.norm_gain);
        if (r.u.size()) s.max_abs_input = std::max(s.max_abs_input, r.u.cwiseAbs().maxCoeff());
        s.non_optimal += r.solver_status != SolverStatus::Optimal;
        s.pe_violations += !r.pe_ok;
        s.rank_violations += !r.rank_ok;
    }
    return s;
}

bool RunReport::clean() const {
    return !aborted && summary.non_optimal == 0 && summary.pe_violations == 0 && summary.rank_violations == 0 &&
           invariants.bounds_available && invariants.gain_bound_violations == 0 &&
           invariants.growth_violations == 0;
}

ScenarioRun run_scenario(const ScenarioConfig& config) {
    validate_scenario(config);
    const SwitchedPlant plant = make_plant(config);
    std::mt19937_64 rng(config.seed);
    const OpenLoopOptions ol{config.input_low, config.input_high, config.max_open_loop_attempts};
    DataWindow window = seed_window(plant, config.initial_state, config.window_length, ol, rng, config.rank_tol);

    ExcitationPolicy policy;
    policy.delta = config.delta;
    policy.mode = config.excitation_mode;
    policy.rng_seed = config.seed;
    policy.rank_tol = config.rank_tol;

    ScenarioRun run{plant, regime_map(plant, -config.window_length), window,
                    run_online_loop(plant, window, policy, config.solver, config.schedule.horizon, rng,
                                    config.max_consecutive_failures),
                    {}};

    RunReport& rep = run.report;
    rep.id = config.id;
    rep.seed = config.seed;
    rep.schedule = plant.schedule;
    rep.faults = plant.faults;
    rep.summary = summarize(run.loop.trace);
    rep.aborted = run.loop.aborted;
    rep.diagnostic = run.loop.diagnostic;

    try {
        rep.bounds = stability_constants(regime_modes(run.regimes), config.delta, config.window_length, config.lambda);
        rep.invariants.bounds_available = true;
        rep.invariants.kappa = rep.bounds->gains.kappa;
        rep.invariants.growth_constant = rep.bounds->dwell.c;
    } catch (const Error& e) {
        rep.invariants.bounds_error = e.what();
    }
    if (rep.invariants.bounds_available) {
        const auto& tr = run.loop.trace;
        for (std::size_t i = 0; i < tr.size(); ++i) {
            if (tr[i].norm_gain > rep.invariants.kappa + 1e-6) ++rep.invariants.gain_bound_violations;
            const double next = i + 1 < tr.size() ? tr[i + 1].norm_x : run.loop.final_state.norm();
            if (next > rep.invariants.growth_constant * tr[i].norm_x + 1e-9) ++rep.invariants.growth_violations;
            if (tr[i].norm_x > 0.0) rep.invariants.worst_growth_ratio = std::max(rep.invariants.worst_growth_ratio, next / tr[i].norm_x);
        }
    }
    return run;
}

// ---------------------------------------------------------------- traces

void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& trace) {
    const Eigen::Index n = trace.empty() ? 0 : trace.front().x.size();
    const Eigen::Index m = trace.empty() ? 0 : trace.front().u.size();
    os << "k,mode";
    for (Eigen::Index i = 0; i < n; ++i) os << ",x_" << i;
    for (Eigen::Index i = 0; i < m; ++i) os << ",u_" << i;
    for (Eigen::Index i = 0; i < m; ++i) os << ",eps_" << i;
    os << ",norm_x,norm_K,solver_status,pe_ok,rank_ok\n";
    for (const auto& r : trace) {
        os << r.k << ',' << r.mode;
        for (Eigen::Index i = 0; i < n; ++i) os << ',' << fmt(r.x(i));
        for (Eigen::Index i = 0; i < m; ++i) os << ',' << fmt(r.u(i));
        for (Eigen::Index i = 0; i < m; ++i) os << ',' << fmt(r.epsilon(i));
        os << ',' << fmt(r.norm_x) << ',' << fmt(r.norm_gain) << ',' << to_string(r.solver_status) << ','
           << (r.pe_ok ? 1 : 0) << ',' << (r.rank_ok ? 1 : 0) << '\n';
    }
}

void write_trace_json(std::ostream& os, const std::string& id, const std::vector<TraceRecord>& trace) {
    json records = json::array();
    for (const auto& r : trace) {
        records.push_back({{"k", r.k},
                           {"mode", r.mode},
                           {"x", to_json(r.x)},
                           {"u", to_json(r.u)},
                           {"eps", to_json(r.epsilon)},
                           {"K", to_json(r.gain)},
                           {"norm_x", r.norm_x},
                           {"norm_K", r.norm_gain},
                           {"solver_status", to_string(r.solver_status)},
                           {"pe_ok", r.pe_ok},
                           {"rank_ok", r.rank_ok},
                           {"gain_held", r.gain_held}});
    }
    os << json{{"scenario", id}, {"records", records}}.dump(1) << '\n';
}

std::vector<TraceRecord> read_trace_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw Error(ErrorCode::Schema, "empty trace file");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    const auto count = [&](const std::string& prefix) {
        return static_cast<int>(std::count_if(header.begin(), header.end(),
                                              [&](const std::string& h) { return h.rfind(prefix, 0) == 0; }));
    };
    const int n = count("x_");
    const int m = count("u_");
    const std::size_t expected = static_cast<std::size_t>(2 + n + 2 * m + 5);
    if (header.size() != expected || header[0] != "k" || header[1] != "mode") {
        throw Error(ErrorCode::Schema, "unexpected trace header");
    }
    std::vector<TraceRecord> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != expected) throw Error(ErrorCode::Schema, "trace row has the wrong number of fields");
        TraceRecord r;
        std::size_t c = 0;
        r.k = std::stoll(cells[c++]);
        r.mode = std::stoi(cells[c++]);
        r.x.resize(n);
        r.u.resize(m);
        r.epsilon.resize(m);
        for (int i = 0; i < n; ++i) r.x(i) = std::strtod(cells[c++].c_str(), nullptr);
        for (int i = 0; i < m; ++i) r.u(i) = std::strtod(cells[c++].c_str(), nullptr);
        for (int i = 0; i < m; ++i) r.epsilon(i) = std::strtod(cells[c++].c_str(), nullptr);
        r.norm_x = std::strtod(cells[c++].c_str(), nullptr);
        r.norm_gain = std::strtod(cells[c++].c_str(), nullptr);
        r.solver_status = parse_status(cells[c++]);
        r.pe_ok = cells[c++] == "1";
        r.rank_ok = cells[c++] == "1";
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

json constants_json(const StabilityConstants& sc) {
    return {{"kappa", sc.gains.kappa},
            {"delta_bar", sc.excitation.delta_bar},
            {"lambda_max_P", sc.excitation.lambda_max_p},
            {"lambda_min_P", sc.excitation.lambda_min_p},
            {"alpha", sc.dwell.alpha},
            {"lambda", sc.dwell.lambda},
            {"phi", sc.dwell.phi},
            {"C0", sc.dwell.c0},
            {"C", sc.dwell.c},
            {"mu", sc.dwell.mu},
            {"tau_bar", sc.dwell.tau_bar},
            {"delta", sc.delta},
            {"window_length", sc.window_length}};
}

json schedule_json(const SwitchingSchedule& s) {
    json segs = json::array();
    for (const auto& seg : s.segments) segs.push_back({{"start", seg.start}, {"mode", seg.mode}});
    return {{"horizon", s.horizon}, {"segments", segs}};
}

} // namespace

std::string report_json(const RunReport& rep) {
    json root;
    root["id"] = rep.id;
    root["seed"] = rep.seed;
    root["trace"] = rep.trace_path;
    root["schedule_steps"] = schedule_json(rep.schedule);
    json faults = json::array();
    for (const auto& f : rep.faults) {
        json jf{{"kind", std::holds_alternative<AdditiveStateFault>(f.kind) ? "additive" : "outage"},
                {"start", f.start}};
        jf["end"] = f.end ? json(*f.end) : json(nullptr);
        faults.push_back(std::move(jf));
    }
    root["fault_steps"] = faults;
    root["summary"] = {{"steps", rep.summary.steps},
                       {"max_norm_x", rep.summary.max_norm_x},
                       {"max_norm_K", rep.summary.max_norm_gain},
                       {"max_abs_u", rep.summary.max_abs_input},
                       {"non_optimal_solves", rep.summary.non_optimal},
                       {"pe_violations", rep.summary.pe_violations},
                       {"rank_violations", rep.summary.rank_violations}};
    json inv{{"bounds_available", rep.invariants.bounds_available},
             {"gain_bound_violations", rep.invariants.gain_bound_violations},
             {"growth_violations", rep.invariants.growth_violations},
             {"worst_growth_ratio", rep.invariants.worst_growth_ratio}};
    if (!rep.invariants.bounds_error.empty()) inv["bounds_error"] = rep.invariants.bounds_error;
    root["invariants"] = inv;
    root["bounds"] = rep.bounds ? constants_json(*rep.bounds) : json(nullptr);
    root["aborted"] = rep.aborted;
    root["diagnostic"] = rep.diagnostic;
    root["clean"] = rep.clean();
    return root.dump(2) + "\n";
}

// ---------------------------------------------------------------- bounds

BoundsReport bounds_command(const ScenarioConfig& config) {
    validate_scenario(config);
    const SwitchedPlant plant = make_plant(config);
    const RegimeMap map = regime_map(plant, -config.window_length);
    BoundsReport out;
    out.id = config.id;
    bool all_ok = true;
    for (const auto& regime : map.regimes) {
        BoundsRow row;
        row.label = regime.label;
        try {
            row.gain = kappa_bound({regime}).modes.front();
        } catch (const Error& e) {
            row.error = e.what();
            all_ok = false;
        }
        out.rows.push_back(std::move(row));
    }
    if (!all_ok) {
        out.error = "some regime has no stabilizing optimal gain; aggregate constants unavailable";
        return out;
    }
    out.constants = stability_constants(map.regimes, config.delta, config.window_length, config.lambda);
    for (std::size_t i = 0; i < out.rows.size(); ++i) out.rows[i].delta = out.constants->excitation.delta[i];
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
        out.rows[i].lambda_max_p = max_eigenvalue(out.constants->excitation.lyapunov[i]);
    }
    return out;
}

std::string bounds_json(const BoundsReport& rep) {
    json rows = json::array();
    for (const auto& r : rep.rows) {
        json jr{{"label", r.label}};
        if (r.gain) {
            jr["K_opt"] = to_json(r.gain->gain);
            jr["norm_K_opt"] = spectral_norm(r.gain->gain);
            jr["gamma"] = r.gain->gamma;
            jr["c"] = r.gain->c;
            jr["delta_i"] = std::isfinite(r.delta) ? json(r.delta) : json("inf");
            jr["lambda_max_P"] = r.lambda_max_p;
        } else {
            jr["error"] = r.error;
        }
        rows.push_back(std::move(jr));
    }
    json root{{"id", rep.id}, {"modes", rows}};
    if (rep.constants) {
        root["constants"] = constants_json(*rep.constants);
        if (!std::isfinite(rep.constants->excitation.delta_bar)) root["constants"]["delta_bar"] = "inf";
        root["formulas"] = {
            {"gamma_i", "tr P_i + tr K_i P_i K_i', (A_i+B_i K_i) P_i (A_i+B_i K_i)' - P_i + I = 0"},
            {"kappa", "max_i sqrt(gamma_i - n)"},
            {"delta_i", "(-l ||Acl_i|| + sqrt(l^2 ||Acl_i||^2 + l/2)) / (l ||B_i||), l = lambda_max_P"},
            {"lambda_max_P", "max_i lambda_max(P_i), Acl_i' P_i Acl_i - P_i + I = 0"},
            {"alpha", "sqrt((lambda_max_P - 1/2) / lambda_max_P)"},
            {"phi", "sqrt(lambda_max_P / lambda_min_P)"},
            {"C0", "max_i ||A_i|| + ||B_i|| (kappa + delta)"},
            {"C", "max(C0, 1)"},
            {"mu", "phi (C / alpha)^T"},
            {"tau_bar", "ln(mu) / ln(lambda / alpha)"}};
    } else {
        root["error"] = rep.error;
    }
    return root.dump(2) + "\n";
}

std::string bounds_table(const BoundsReport& rep) {
    std::ostringstream os;
    os << std::setprecision(6);
    os << "scenario " << rep.id << "\n\n";
    os << std::left << std::setw(34) << "regime" << std::setw(14) << "|K_opt|" << std::setw(14) << "gamma"
       << std::setw(14) << "c" << "delta_i\n";
    for (const auto& r : rep.rows) {
        os << std::setw(34) << r.label;
        if (r.gain) {
            os << std::setw(14) << spectral_norm(r.gain->gain) << std::setw(14) << r.gain->gamma << std::setw(14)
               << r.gain->c << r.delta << "\n";
        } else {
            os << "error: " << r.error << "\n";
        }
    }
    if (!rep.constants) {
        os << "\n" << rep.error << "\n";
        return os.str();
    }
    const auto& c = *rep.constants;
    auto line = [&](const char* name, double v, const char* formula) {
        os << std::setw(14) << name << std::setw(16) << v << formula << "\n";
    };
    os << "\n";
    line("kappa", c.gains.kappa, "max_i sqrt(gamma_i - n)");
    line("lambda_max_P", c.excitation.lambda_max_p, "max_i lambda_max(P_i), Acl' P Acl - P + I = 0");
    line("lambda_min_P", c.excitation.lambda_min_p, "min_i lambda_min(P_i)");
    line("delta_bar", c.excitation.delta_bar, "min_i delta_i");
    line("alpha", c.dwell.alpha, "sqrt((lambda_max_P - 1/2) / lambda_max_P)");
    line("lambda", c.dwell.lambda, "decay rate, alpha < lambda < 1");
    line("phi", c.dwell.phi, "sqrt(lambda_max_P / lambda_min_P)");
    line("C0", c.dwell.c0, "max_i ||A_i|| + ||B_i|| (kappa + delta)");
    line("C", c.dwell.c, "max(C0, 1)");
    line("mu", c.dwell.mu, "phi (C / alpha)^T");
    line("tau_bar", c.dwell.tau_bar, "ln(mu) / ln(lambda / alpha)");
    return os.str();
}

// ---------------------------------------------------------------- lqr-check

bool LqrCheckReport::passed() const {
    return status == SolverStatus::Optimal && gain_error <= tolerance && cost_error <= tolerance;
}

LqrCheckReport lqr_check_command(const ScenarioConfig& config, double tolerance) {
    validate_scenario(config);
    if (config.modes.size() != 1) {
        throw Error(ErrorCode::Parameter, "lqr-check needs a single-mode scenario (select one with --mode)");
    }
    const LinearMode& mode = config.modes.front();
    SwitchedPlant plant{{mode}, SwitchingSchedule{{{0, 0}}, 1}, {}};
    std::mt19937_64 rng(config.seed);
    const DataWindow window =
        seed_window(plant, config.initial_state, config.window_length,
                    OpenLoopOptions{config.input_low, config.input_high, config.max_open_loop_attempts}, rng,
                    config.rank_tol);

    LqrCheckReport out;
    out.id = config.id;
    out.tolerance = tolerance;
    const SdpSolution sol = solve_dd_lqr(window, config.solver);
    const LqrSolution dare = dare_lqr(mode.a, mode.b);
    out.status = sol.status;
    out.gain_sdp = sol.gain;
    out.gain_dare = dare.gain;
    out.gamma = sol.gamma;
    out.h2_cost = closed_loop_h2_cost(mode.a, mode.b, dare.gain);
    const double ref = dare.gain.norm();
    out.gain_error = (sol.gain - dare.gain).norm() / (ref > 0.0 ? ref : 1.0);
    out.cost_error = std::abs(sol.gamma - out.h2_cost) / std::max(std::abs(sol.gamma), 1e-300);
    return out;
}

std::string lqr_check_json(const LqrCheckReport& rep) {
    const json root{{"id", rep.id},
                    {"solver_status", to_string(rep.status)},
                    {"K_sdp", to_json(rep.gain_sdp)},
                    {"K_dare", to_json(rep.gain_dare)},
                    {"gamma", rep.gamma},
                    {"h2_cost_dare", rep.h2_cost},
                    {"relative_gain_error", rep.gain_error},
                    {"relative_cost_error", rep.cost_error},
                    {"tolerance", rep.tolerance},
                    {"passed", rep.passed()}};
    return root.dump(2) + "\n";
}

} // namespace ddctl
