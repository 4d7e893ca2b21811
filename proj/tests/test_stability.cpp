#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ddctl/error.hpp"
#include "ddctl/scenario.hpp"
#include "ddctl/stability.hpp"
#include "support/oracles.hpp"

using namespace ddctl;
using oracle::mat;
using oracle::vec;

namespace {

const LinearMode kScalar{mat(1, 1, {2}), mat(1, 1, {1}), "scalar"};
const LinearMode kDeadbeat{Matrix::Zero(2, 2), Matrix::Identity(2, 2), "deadbeat"};

std::vector<Matrix> riccati_gains(const std::vector<LinearMode>& modes) {
    std::vector<Matrix> out;
    for (const auto& m : modes) out.push_back(dare_lqr(m.a, m.b).gain);
    return out;
}

// Window with newest state x(t): T samples of `old_mode` up to x(0), then t
// samples of `new_mode`.
DataWindow switched_window(const LinearMode& old_mode, const LinearMode& new_mode, int t, std::uint64_t seed,
                           bool silent_old = false) {
    std::mt19937_64 rng(seed);
    const int n = old_mode.state_dim();
    const int m = old_mode.input_dim();
    DataWindow w = oracle::open_loop_window(old_mode.a, old_mode.b, oracle::gaussian(n, 1, rng).col(0),
                                            min_window_length(n, m), rng, 0.3);
    if (silent_old) {
        const Signal u(static_cast<std::size_t>(w.length()), Vector::Zero(m));
        const Signal x(static_cast<std::size_t>(w.length() + 1), Vector::Zero(n));
        w = DataWindow(u, x, 0);
    }
    for (int i = 0; i < t; ++i) {
        Vector u(m);
        for (int j = 0; j < m; ++j) u(j) = oracle::uniform(-0.3, 0.3, rng);
        if (silent_old && i == 0) u.setConstant(0.2);
        w.push(u, new_mode.a * w.latest_state() + new_mode.b * u);
    }
    return w;
}

} // namespace

TEST(Lyapunov, Examples) {
    EXPECT_LT((discrete_lyapunov(Matrix::Zero(3, 3)) - Matrix::Identity(3, 3)).norm(), 1e-15);
    EXPECT_NEAR(discrete_lyapunov(mat(1, 1, {0.382}))(0, 0), 1.0 / (1.0 - 0.382 * 0.382), 1e-14);
    EXPECT_NEAR(discrete_lyapunov(mat(1, 1, {0.382}))(0, 0), 1.1708, 1e-4);
    try {
        (void)discrete_lyapunov(mat(1, 1, {1.2}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Instability);
    }
}

TEST(Lyapunov, RandomStableMatricesAgreeWithSeries) {
    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = oracle::uniform_int(1, 4, rng);
        const Matrix a = oracle::with_radius(n, oracle::uniform(0.0, 0.95, rng), rng);
        const Matrix p = discrete_lyapunov(a);
        const Matrix r = a.transpose() * p * a - p + Matrix::Identity(n, n);
        EXPECT_LE(r.cwiseAbs().maxCoeff(), 1e-12);
        const Matrix s = oracle::stein_series(a);
        EXPECT_LE((p - s).cwiseAbs().maxCoeff(), 1e-9 * s.cwiseAbs().maxCoeff());
    }
}

TEST(Kappa, ScalarAndDeadbeat) {
    const KappaReport s = kappa_bound({kScalar});
    EXPECT_NEAR(s.modes[0].gamma, 2.0 + std::sqrt(5.0), 1e-9);
    EXPECT_NEAR(s.kappa, std::sqrt(1.0 + std::sqrt(5.0)), 1e-9);
    EXPECT_NEAR(s.kappa, 1.7989, 1e-4);
    EXPECT_GE(s.kappa, std::abs(s.modes[0].gain(0, 0)));

    const KappaReport d = kappa_bound({kDeadbeat});
    EXPECT_LT(d.modes[0].gain.norm(), 1e-12);
    EXPECT_NEAR(d.modes[0].gamma, 2.0, 1e-12);
    EXPECT_EQ(d.kappa, 0.0);
}

TEST(Kappa, GammaIsTheClosedLoopH2Cost) {
    const std::vector<LinearMode> modes{oracle::f18_mode1(), oracle::f18_mode2(), oracle::f404_nominal(), kScalar};
    for (const auto& m : modes) {
        const KappaReport r = kappa_bound({m});
        const double h2 = closed_loop_h2_cost(m.a, m.b, r.modes[0].gain);
        EXPECT_LE(std::abs(r.modes[0].gamma - h2), 1e-10 * h2) << m.label;
        EXPECT_LE(std::abs(r.modes[0].gamma - oracle::h2_series(m.a, m.b, r.modes[0].gain)), 1e-8 * h2);
    }
    const KappaReport f18 = kappa_bound({oracle::f18_mode1(), oracle::f18_mode2()});
    for (const auto& row : f18.modes) EXPECT_GE(f18.kappa, spectral_norm(row.gain));
}

TEST(DeltaBar, DeadbeatAndRoot) {
    const DeltaReport d = delta_bar({kDeadbeat}, {Matrix::Zero(2, 2)});
    EXPECT_NEAR(d.lambda_max_p, 1.0, 1e-14);
    EXPECT_NEAR(d.delta[0], std::sqrt(0.5), 1e-12);

    const std::vector<LinearMode> modes{oracle::f18_mode1(), oracle::f18_mode2()};
    const auto gains = riccati_gains(modes);
    const DeltaReport f = delta_bar(modes, gains);
    for (std::size_t i = 0; i < modes.size(); ++i) {
        const double a_norm = spectral_norm(modes[i].a + modes[i].b * gains[i]);
        const double b_norm = spectral_norm(modes[i].b);
        EXPECT_NEAR(lyapunov_margin(f.lambda_max_p, a_norm, b_norm, f.delta[i]), 0.0, 1e-10);
        EXPECT_LT(lyapunov_margin(f.lambda_max_p, a_norm, b_norm, 0.5 * f.delta[i]), 0.0);
    }
    EXPECT_GT(f.delta_bar, 0.001);
}

TEST(DeltaBar, ZeroInputMatrixIsUnbounded) {
    const LinearMode stable{mat(1, 1, {0.5}), mat(1, 1, {0}), "no_input"};
    const DeltaReport d = delta_bar({stable}, {mat(1, 1, {0})});
    EXPECT_TRUE(std::isinf(d.delta[0]));
}

TEST(Dwell, Examples) {
    // Deadbeat: every P_i = I, so alpha = sqrt(1/2) and phi = 1.
    const DwellReport d = tau_bar({kDeadbeat}, {Matrix::Zero(2, 2)}, 0.001, 15);
    EXPECT_NEAR(d.alpha, std::sqrt(0.5), 1e-12);
    EXPECT_NEAR(d.alpha, 0.70711, 1e-5);
    EXPECT_NEAR(d.phi, 1.0, 1e-12);
    EXPECT_NEAR(d.lambda, 0.5 * (1 + d.alpha), 1e-15);

    try {
        (void)tau_bar({kDeadbeat}, {Matrix::Zero(2, 2)}, 0.001, 15, 0.5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Parameter);
    }
}

TEST(Dwell, F18BoundIsFiniteAndLongerThanWindow) {
    const std::vector<LinearMode> modes{oracle::f18_mode1(), oracle::f18_mode2()};
    const DwellReport d = tau_bar(modes, riccati_gains(modes), 0.001, 15, 0.99);
    EXPECT_TRUE(std::isfinite(d.tau_bar));
    EXPECT_GT(d.tau_bar, 15.0);
    EXPECT_GE(d.c, 1.0);
    EXPECT_NEAR(std::log(d.mu), std::log(d.phi) + 15 * std::log(d.c / d.alpha), 1e-9);
}

TEST(Dwell, MonotoneInWindowAndRate) {
    const std::vector<LinearMode> modes{oracle::f18_mode1(), oracle::f18_mode2()};
    const auto gains = riccati_gains(modes);
    const DwellReport base = tau_bar(modes, gains, 0.001, 15);
    EXPECT_GT(tau_bar(modes, gains, 0.001, 25).tau_bar, base.tau_bar);
    EXPECT_GT(tau_bar(modes, gains, 0.01, 15).c0, base.c0);
    // A slower guaranteed rate needs a shorter dwell time.
    EXPECT_LT(tau_bar(modes, gains, 0.001, 15, 0.995).tau_bar, tau_bar(modes, gains, 0.001, 15, 0.98).tau_bar);
}

TEST(Constants, InvariantsOnEveryBuiltin) {
    for (const auto& name : builtin_names()) {
        const BoundsReport r = bounds_command(builtin_scenario(name));
        ASSERT_TRUE(r.constants.has_value()) << name << ": " << r.error;
        const StabilityConstants& c = *r.constants;
        EXPECT_GE(c.excitation.lambda_max_p, 1.0 - 1e-12) << name;
        EXPECT_GT(c.dwell.alpha, 0.0) << name;
        EXPECT_LT(c.dwell.alpha, 1.0) << name;
        EXPECT_GE(c.dwell.phi, 1.0 - 1e-12) << name;
        for (const auto& row : c.gains.modes) EXPECT_GE(c.gains.kappa + 1e-12, spectral_norm(row.gain)) << name;
    }
}

TEST(FeasibilityTuple, FirstTransientStep) {
    const auto m1 = oracle::f18_mode1();
    const auto m2 = oracle::f18_mode2();
    const DataWindow w = switched_window(m1, m2, 1, 3);
    const FeasibilityTuple f = build_feasibility_tuple(w, m1, m2, 1, 0);
    EXPECT_FALSE(f.uses_new_mode);
    EXPECT_EQ(f.t, 1);
    EXPECT_EQ(f.split, min_excitation_length(2, 2) - 1);
    EXPECT_EQ(f.selection.trace(), 1.0);
    EXPECT_EQ(f.selection(14, 14), 1.0);
    // S2 = -Q2 zeroes the row that meets the new mode.
    EXPECT_LT(f.y.bottomRows(1).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((f.w * f.kernel).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(f.mismatch.cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(f.gamma, kappa_bound({m1}).modes[0].gamma, 1e-6 * f.gamma);
    EXPECT_LE(evaluate_sdp_residuals(w.matrices(), f.gamma, f.y, f.p, f.l).max(), 1e-6);
}

TEST(FeasibilityTuple, LastTransientStepUsesNewMode) {
    const auto m1 = oracle::f18_mode1();
    const auto m2 = oracle::f18_mode2();
    const DataWindow w = switched_window(m1, m2, 14, 4);
    const FeasibilityTuple f = build_feasibility_tuple(w, m1, m2, 14, 0);
    EXPECT_TRUE(f.uses_new_mode);
    // S1 = -Q1 zeroes the row that meets the old mode.
    EXPECT_LT(f.y.topRows(1).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(f.mismatch.cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(f.gamma, kappa_bound({m2}).modes[0].gamma, 1e-6 * f.gamma);
    EXPECT_LE(evaluate_sdp_residuals(w.matrices(), f.gamma, f.y, f.p, f.l).max(), 1e-6);
}

TEST(FeasibilityTuple, EveryTransientStepIsFeasible) {
    for (const bool forward : {true, false}) {
        const auto a = forward ? oracle::f18_mode1() : oracle::f18_mode2();
        const auto b = forward ? oracle::f18_mode2() : oracle::f18_mode1();
        for (int t = 1; t < 15; ++t) {
            const DataWindow w = switched_window(a, b, t, 10 + t);
            const FeasibilityTuple f = build_feasibility_tuple(w, a, b, t, 0);
            EXPECT_LE(evaluate_sdp_residuals(w.matrices(), f.gamma, f.y, f.p, f.l).max(), 1e-6) << "t=" << t;
            // The data-driven optimum can only be cheaper than this point.
            const SdpSolution s = solve_dd_lqr(w);
            ASSERT_EQ(s.status, SolverStatus::Optimal) << "t=" << t;
            EXPECT_LE(s.gamma, f.gamma * (1 + 1e-6)) << "t=" << t;
        }
    }
}

TEST(FeasibilityTuple, CustomSplit) {
    const auto m1 = oracle::f18_mode1();
    const auto m2 = oracle::f18_mode2();
    const DataWindow w = switched_window(m1, m2, 8, 5);
    EXPECT_TRUE(build_feasibility_tuple(w, m1, m2, 8, 0).uses_new_mode);
    EXPECT_FALSE(build_feasibility_tuple(w, m1, m2, 8, 0, 8).uses_new_mode);
    EXPECT_THROW((void)build_feasibility_tuple(w, m1, m2, 8, 0, 6), Error);
    EXPECT_THROW((void)build_feasibility_tuple(w, m1, m2, 8, 0, 9), Error);
}

TEST(FeasibilityTuple, Errors) {
    const auto m1 = oracle::f18_mode1();
    const auto m2 = oracle::f18_mode2();
    const DataWindow w = switched_window(m1, m2, 3, 6);
    auto code_of = [](auto&& f) {
        try {
            f();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::Io;
    };
    EXPECT_EQ(code_of([&] { (void)build_feasibility_tuple(w, m1, m2, 4, 0); }), ErrorCode::Parameter);
    EXPECT_EQ(code_of([&] { (void)build_feasibility_tuple(w, m1, m2, 3, 3); }), ErrorCode::Parameter);
    const DataWindow silent = switched_window(m1, m2, 1, 6, true);
    EXPECT_EQ(code_of([&] { (void)build_feasibility_tuple(silent, m1, m2, 1, 0); }), ErrorCode::Construction);
}
