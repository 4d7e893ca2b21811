#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "ddctl/error.hpp"
#include "ddctl/scenario.hpp"
#include "support/oracles.hpp"

using namespace ddctl;

namespace {

ErrorCode parse_error(const std::string& text, const std::vector<std::string>& overrides = {}) {
    try {
        (void)parse_scenario_text(text, overrides);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected a parse error";
    return ErrorCode::Io;
}

ErrorCode f18_error(const std::vector<std::string>& overrides) {
    return parse_error(builtin_scenario_text("f18"), overrides);
}

std::string csv_of(const std::vector<TraceRecord>& trace) {
    std::ostringstream os;
    write_trace_csv(os, trace);
    return os.str();
}

} // namespace

TEST(Parse, F18Builtin) {
    const ScenarioConfig c = builtin_scenario("f18");
    EXPECT_EQ(c.state_dim(), 2);
    EXPECT_EQ(c.input_dim(), 2);
    EXPECT_EQ(min_excitation_length(c.state_dim(), c.input_dim()), 8);
    EXPECT_EQ(c.window_length, 15);
    EXPECT_EQ(c.delta, 0.001);
    EXPECT_EQ(c.input_low, -0.3);
    EXPECT_EQ(c.input_high, 0.3);
    ASSERT_EQ(c.modes.size(), 2u);
    EXPECT_EQ(c.modes[0].a, oracle::f18_mode1().a);
    EXPECT_EQ(c.modes[1].b, oracle::f18_mode2().b);
    ASSERT_TRUE(c.schedule.random.has_value());
    EXPECT_EQ(c.schedule.random->dwell, 15);
}

TEST(Parse, F404Builtin) {
    const ScenarioConfig c = builtin_scenario("f404");
    EXPECT_EQ(c.state_dim(), 3);
    EXPECT_EQ(c.input_dim(), 2);
    EXPECT_EQ(min_excitation_length(3, 2), 11);
    EXPECT_EQ(c.window_length, 21);
    EXPECT_EQ(c.delta, 0.001);
    EXPECT_EQ(c.input_low, -3.5);
    EXPECT_EQ(c.input_high, 3.5);
    ASSERT_EQ(c.faults.size(), 5u);
    const std::vector<double> betas{0.1, 0.05, -0.5};
    const std::vector<std::int64_t> starts{0, 27, 52};
    const std::vector<std::int64_t> ends{27, 52, 95};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& f = std::get<AdditiveStateFault>(c.faults[i].kind);
        EXPECT_EQ(f.beta, betas[i]);
        EXPECT_EQ(f.d, oracle::f404_fault_direction());
        EXPECT_EQ(c.faults[i].start, starts[i]);
        EXPECT_EQ(c.faults[i].end, ends[i]);
    }
    EXPECT_EQ(std::get<ActuatorOutage>(c.faults[3].kind).column, 0);
    EXPECT_EQ(c.faults[3].start, 27);
    EXPECT_EQ(c.faults[3].end, 52);
    EXPECT_EQ(std::get<ActuatorOutage>(c.faults[4].kind).column, 1);
    EXPECT_EQ(c.faults[4].start, 52);
    EXPECT_FALSE(c.faults[4].end.has_value());
    // No additive fault after 9.5 s: beta returns to 0.
    EXPECT_EQ(effective_mode(c.modes[0], c.faults, 100).a, c.modes[0].a);
}

TEST(Parse, ShippedScenarioFilesMatchBuiltins) {
    for (const std::string name : {"f18", "f404"}) {
        const ScenarioConfig file = parse_scenario(std::string(DDCTL_SOURCE_DIR) + "/scenarios/" + name + ".json");
        EXPECT_TRUE(same_config(file, builtin_scenario(name))) << name;
    }
}

TEST(Parse, ErrorCodes) {
    EXPECT_EQ(f18_error({"window_length=10"}), ErrorCode::WindowTooShort);
    EXPECT_EQ(f18_error({"modes.1.B=[[1.0], [0.0]]"}), ErrorCode::DimensionMismatch);
    EXPECT_EQ(f18_error({"modes.0.B=[[0.0, 0.0], [0.0, 0.0]]"}), ErrorCode::Uncontrollable);
    EXPECT_EQ(f18_error({"delta=-1"}), ErrorCode::Parameter);
    EXPECT_EQ(f18_error({"colour=\"blue\""}), ErrorCode::Schema);
    EXPECT_EQ(f18_error({"initial_state=[1.0]"}), ErrorCode::DimensionMismatch);
    EXPECT_EQ(parse_error("{not json"), ErrorCode::Schema);
    EXPECT_EQ(parse_error(builtin_scenario_text("f404"), {"faults.3.column=2"}), ErrorCode::DimensionMismatch);
    EXPECT_EQ(parse_error(builtin_scenario_text("f404"), {"faults.4.start_s=20.0"}), ErrorCode::Parameter);
    try {
        (void)parse_scenario("/nonexistent/scenario.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Io);
    }
}

TEST(Parse, ShortDwellNeedsExplicitOptIn) {
    EXPECT_EQ(f18_error({"schedule.allow_short_dwell=false"}), ErrorCode::Parameter);
    EXPECT_NO_THROW((void)parse_scenario_text(builtin_scenario_text("f18"),
                                              {"schedule.allow_short_dwell=false", "schedule.random.dwell=16"}));
}

TEST(Parse, SecondsAreFlooredToSteps) {
    const ScenarioConfig c =
        parse_scenario_text(builtin_scenario_text("f404"), {"faults.0.end_s=2.79", "faults.1.start_s=2.79"});
    EXPECT_EQ(c.faults[0].end, 27);
    EXPECT_EQ(c.faults[1].start, 27);
}

TEST(Parse, OverridesApply) {
    const ScenarioConfig c = parse_scenario_text(builtin_scenario_text("f18"),
                                                 {"delta=0.002", "schedule.horizon=40", "modes.0.label=cruise", "id=x"});
    EXPECT_EQ(c.delta, 0.002);
    EXPECT_EQ(c.schedule.horizon, 40);
    EXPECT_EQ(c.modes[0].label, "cruise");
    EXPECT_EQ(c.id, "x");
    EXPECT_EQ(parse_error(builtin_scenario_text("f18"), {"modes.7.label=x"}), ErrorCode::Parameter);
    EXPECT_EQ(parse_error(builtin_scenario_text("f18"), {"novalue"}), ErrorCode::Parameter);
}

TEST(Parse, RoundTripReproducesConfig) {
    for (const auto& name : builtin_names()) {
        const ScenarioConfig a = builtin_scenario(name);
        const std::string text = serialize_scenario(a);
        const ScenarioConfig b = parse_scenario_text(text);
        EXPECT_TRUE(same_config(a, b)) << name;
        EXPECT_EQ(serialize_scenario(b), text) << name;
    }
    // Non-default fields survive too.
    const ScenarioConfig c = parse_scenario_text(
        builtin_scenario_text("f18"),
        {"lambda=0.99", "solver.equality=\"two_sided\"", "excitation.rank_tol=1e-9", "output.trace=t.csv"});
    EXPECT_TRUE(same_config(c, parse_scenario_text(serialize_scenario(c))));
}

TEST(Seed, EnvironmentFallback) {
    ::setenv("DDCTL_SEED", "1234", 1);
    EXPECT_EQ(seed_from_env(), 1234u);
    ::setenv("DDCTL_SEED", "abc", 1);
    EXPECT_THROW((void)seed_from_env(), Error);
    ::unsetenv("DDCTL_SEED");
    EXPECT_FALSE(seed_from_env().has_value());
}

TEST(Run, ShortF18IsDeterministicAndClean) {
    const ScenarioConfig c = parse_scenario_text(builtin_scenario_text("f18"), {"schedule.horizon=45"});
    const ScenarioRun a = run_scenario(c);
    const ScenarioRun b = run_scenario(c);
    ASSERT_FALSE(a.report.aborted) << a.report.diagnostic;
    EXPECT_EQ(csv_of(a.loop.trace), csv_of(b.loop.trace));
    EXPECT_EQ(a.report.summary.steps, 45);
    EXPECT_EQ(a.report.summary.non_optimal, 0);
    EXPECT_EQ(a.report.summary.pe_violations, 0);
    EXPECT_EQ(a.report.summary.rank_violations, 0);
    EXPECT_TRUE(a.report.invariants.bounds_available);
    EXPECT_EQ(a.report.invariants.gain_bound_violations, 0);
    EXPECT_EQ(a.report.invariants.growth_violations, 0);
    EXPECT_TRUE(a.report.clean());
}

TEST(Run, SeedChangesTheTrace) {
    const ScenarioConfig c = parse_scenario_text(builtin_scenario_text("scalar"), {"schedule.horizon=10"});
    ScenarioConfig d = c;
    d.seed = 2;
    EXPECT_NE(csv_of(run_scenario(c).loop.trace), csv_of(run_scenario(d).loop.trace));
}

TEST(Trace, SummaryRecomputedFromCsvIsExact) {
    const ScenarioConfig c = parse_scenario_text(builtin_scenario_text("f18"), {"schedule.horizon=40"});
    const ScenarioRun r = run_scenario(c);
    std::istringstream is(csv_of(r.loop.trace));
    const auto back = read_trace_csv(is);
    ASSERT_EQ(back.size(), r.loop.trace.size());
    EXPECT_EQ(summarize(back), r.report.summary);
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back[i].x, r.loop.trace[i].x);
        EXPECT_EQ(back[i].u, r.loop.trace[i].u);
    }
}

TEST(Trace, CsvHeaderOrder) {
    const ScenarioConfig c = parse_scenario_text(builtin_scenario_text("f18"), {"schedule.horizon=2"});
    const std::string csv = csv_of(run_scenario(c).loop.trace);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "k,mode,x_0,x_1,u_0,u_1,eps_0,eps_1,norm_x,norm_K,solver_status,pe_ok,rank_ok");
    std::ostringstream js;
    write_trace_json(js, "f18", run_scenario(c).loop.trace);
    EXPECT_NE(js.str().find("\"records\""), std::string::npos);
}

TEST(Bounds, DeadbeatRowAndLambdaError) {
    const BoundsReport r = bounds_command(builtin_scenario("deadbeat"));
    ASSERT_TRUE(r.constants.has_value());
    EXPECT_EQ(r.constants->gains.kappa, 0.0);
    EXPECT_NE(bounds_table(r).find("deadbeat"), std::string::npos);
    EXPECT_NE(bounds_json(r).find("\"kappa\""), std::string::npos);

    const ScenarioConfig low = parse_scenario_text(builtin_scenario_text("f18"), {"lambda=0.5"});
    try {
        (void)bounds_command(low);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Parameter);
    }
}

TEST(LqrCheck, Examples) {
    const LqrCheckReport s = lqr_check_command(builtin_scenario("scalar"));
    EXPECT_TRUE(s.passed());
    EXPECT_NEAR(s.gain_sdp(0, 0), -1.6180, 1e-4);
    EXPECT_NEAR(s.gain_dare(0, 0), -1.6180, 1e-4);

    const LqrCheckReport d = lqr_check_command(builtin_scenario("deadbeat"));
    EXPECT_TRUE(d.passed());
    EXPECT_LT(d.gain_sdp.norm(), 1e-4);
    EXPECT_LT(d.gain_dare.norm(), 1e-12);

    ScenarioConfig f = builtin_scenario("f18");
    f.modes = {f.modes[0]};
    f.schedule.random.reset();
    f.schedule.segments = {{0, 0}};
    const LqrCheckReport m1 = lqr_check_command(f);
    EXPECT_LE(m1.gain_error, 1e-4);
    EXPECT_TRUE(m1.passed());

    try {
        (void)lqr_check_command(builtin_scenario("f18"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Parameter);
    }
}
