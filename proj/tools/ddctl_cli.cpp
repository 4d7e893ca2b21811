// Command-line front end: simulate, bounds, lqr-check, list-builtin.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "ddctl/error.hpp"
#include "ddctl/scenario.hpp"

namespace fs = std::filesystem;
using namespace ddctl;

namespace {

enum Exit : int {
    kOk = 0,
    kInternal = 1,
    kUsage = 2,
    kSchema = 3,
    kDimension = 4,
    kWindowTooShort = 5,
    kUncontrollable = 6,
    kParameter = 7,
    kSimulation = 8,
    kInvariant = 9,
    kLqrMismatch = 10,
    kIo = 11,
    kInstability = 12,
};

int exit_code(ErrorCode code) {
    switch (code) {
    case ErrorCode::Schema: return kSchema;
    case ErrorCode::DimensionMismatch: return kDimension;
    case ErrorCode::WindowTooShort: return kWindowTooShort;
    case ErrorCode::Uncontrollable: return kUncontrollable;
    case ErrorCode::Parameter: return kParameter;
    case ErrorCode::Io: return kIo;
    case ErrorCode::Instability: return kInstability;
    case ErrorCode::Length:
    case ErrorCode::RankDeficient:
    case ErrorCode::ExcitationFailure:
    case ErrorCode::ConvergenceFailure:
    case ErrorCode::Construction: return kSimulation;
    }
    return kInternal;
}

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string output;
    std::string format = "csv";
    std::vector<std::string> overrides;
};

ScenarioConfig load(const std::string& source, const Globals& g) {
    ScenarioConfig cfg = parse_scenario(source, g.overrides);
    if (g.seed) {
        cfg.seed = *g.seed;
    } else if (const auto env = seed_from_env()) {
        cfg.seed = *env;
    }
    return cfg;
}

fs::path output_dir(const Globals& g) {
    fs::path dir = g.output.empty() ? fs::path(".") : fs::path(g.output);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create output directory '" + dir.string() + "'");
    return dir;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    out << text;
}

struct SimOutcome {
    int code = kOk;
    std::string line;
};

SimOutcome simulate_one(const std::string& source, const Globals& g, const fs::path& dir) {
    SimOutcome out;
    try {
        const ScenarioConfig cfg = load(source, g);
        ScenarioRun run = run_scenario(cfg);
        const bool json = g.format == "json";
        const fs::path trace = dir / (cfg.trace_path.empty() ? cfg.id + (json ? "_trace.json" : "_trace.csv")
                                                             : cfg.trace_path);
        const fs::path report = dir / (cfg.report_path.empty() ? cfg.id + "_report.json" : cfg.report_path);
        {
            std::ofstream os(trace);
            if (!os) throw Error(ErrorCode::Io, "cannot write '" + trace.string() + "'");
            if (json) write_trace_json(os, cfg.id, run.loop.trace);
            else write_trace_csv(os, run.loop.trace);
        }
        run.report.trace_path = trace.string();
        write_file(report, report_json(run.report));

        const auto& s = run.report.summary;
        out.line = cfg.id + ": " + std::to_string(s.steps) + " steps, max|x| " + std::to_string(s.max_norm_x) +
                   ", max|K| " + std::to_string(s.max_norm_gain) + ", non-optimal " +
                   std::to_string(s.non_optimal) + ", PE violations " + std::to_string(s.pe_violations) +
                   " -> " + trace.string();
        if (run.report.aborted) {
            out.code = kSimulation;
            out.line += "\n  aborted: " + run.report.diagnostic;
        } else if (!run.report.clean()) {
            out.code = kInvariant;
            out.line += "\n  runtime invariant violated (see " + report.string() + ")";
        }
    } catch (const Error& e) {
        out.code = exit_code(e.code());
        out.line = source + ": error [" + to_string(e.code()) + "]: " + e.what();
    } catch (const std::exception& e) {
        out.code = kInternal;
        out.line = source + ": internal error: " + e.what();
    }
    return out;
}

int run_simulate(const std::vector<std::string>& sources, const Globals& g) {
    const fs::path dir = output_dir(g);
    std::vector<SimOutcome> outcomes(sources.size());
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        workers.emplace_back([&, i] { outcomes[i] = simulate_one(sources[i], g, dir); });
    }
    for (auto& w : workers) w.join();
    int code = kOk;
    for (const auto& o : outcomes) {
        (o.code == kOk ? std::cout : std::cerr) << o.line << '\n';
        if (code == kOk) code = o.code;
    }
    return code;
}

int run_bounds(const std::string& source, const Globals& g) {
    const ScenarioConfig cfg = load(source, g);
    const BoundsReport rep = bounds_command(cfg);
    const std::string json = bounds_json(rep);
    std::cout << (g.format == "json" ? json : bounds_table(rep));
    if (!g.output.empty()) write_file(output_dir(g) / (cfg.id + "_bounds.json"), json);
    return rep.constants ? kOk : kInstability;
}

int run_lqr_check(const std::string& source, std::optional<int> mode, double tolerance, const Globals& g) {
    ScenarioConfig cfg = load(source, g);
    if (mode) {
        if (*mode < 0 || *mode >= static_cast<int>(cfg.modes.size())) {
            throw Error(ErrorCode::Parameter, "--mode " + std::to_string(*mode) + " out of range");
        }
        cfg.modes = {cfg.modes[static_cast<std::size_t>(*mode)]};
        cfg.schedule.segments = {{0, 0}};
        cfg.schedule.random.reset();
        cfg.faults.clear();
    }
    const LqrCheckReport rep = lqr_check_command(cfg, tolerance);
    const std::string json = lqr_check_json(rep);
    if (g.format == "json") {
        std::cout << json;
    } else {
        std::cout << cfg.id << ": solver " << to_string(rep.status) << ", relative gain error " << rep.gain_error
                  << ", relative cost error " << rep.cost_error << " (tolerance " << rep.tolerance << ") -> "
                  << (rep.passed() ? "ok" : "MISMATCH") << '\n';
    }
    if (!g.output.empty()) write_file(output_dir(g) / (cfg.id + "_lqr_check.json"), json);
    return rep.passed() ? kOk : kLqrMismatch;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online data-driven stabilization of switched linear systems"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "RNG seed (default: scenario value, or DDCTL_SEED)");
    app.add_option("--output", g.output, "Output directory for traces and reports");
    app.add_option("--format", g.format, "Trace / report format")->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--override", g.overrides, "Scenario override key.path=value (repeatable)");

    std::vector<std::string> sim_sources;
    auto* sim = app.add_subcommand("simulate", "Run one or more scenarios (files or builtin names) in parallel");
    sim->add_option("scenarios", sim_sources, "Scenario files or builtin names")->required();

    std::string bounds_source;
    auto* bounds = app.add_subcommand("bounds", "Report the model-based stability constants");
    bounds->add_option("scenario", bounds_source, "Scenario file or builtin name")->required();

    std::string lqr_source;
    std::optional<int> lqr_mode;
    double lqr_tol = 1e-4;
    auto* lqr = app.add_subcommand("lqr-check", "Compare the data-driven gain with the Riccati solution");
    lqr->add_option("scenario", lqr_source, "Scenario file or builtin name")->required();
    lqr->add_option("--mode", lqr_mode, "Mode index to check in a multi-mode scenario");
    lqr->add_option("--tolerance", lqr_tol, "Relative error tolerance");

    auto* list = app.add_subcommand("list-builtin", "List builtin scenario names");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }
    if (*seed_opt) g.seed = seed_value;

    try {
        if (*sim) return run_simulate(sim_sources, g);
        if (*bounds) return run_bounds(bounds_source, g);
        if (*lqr) return run_lqr_check(lqr_source, lqr_mode, lqr_tol, g);
        if (*list) {
            for (const auto& name : builtin_names()) std::cout << name << '\n';
            return kOk;
        }
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kInternal;
    }
    return kUsage;
}
