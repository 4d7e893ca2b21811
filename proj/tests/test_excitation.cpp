#include <random>

#include <gtest/gtest.h>

#include "ddctl/error.hpp"
#include "ddctl/excitation.hpp"
#include "support/oracles.hpp"

using namespace ddctl;
using oracle::vec;

namespace {

Signal scalars(std::initializer_list<double> v) {
    Signal s;
    for (double x : v) s.push_back(vec({x}));
    return s;
}

// n = m = 1 window whose last three inputs are (a, b, c). States are arbitrary.
DataWindow scalar_window(double a, double b, double c) {
    const Signal u = scalars({0.3, -0.8, a, b, c});
    const Signal x = scalars({1, 0.4, -0.2, 0.9, 0.1, 1.0});
    return DataWindow(u, x, 0);
}

ExcitationPolicy guarded(double delta) {
    ExcitationPolicy p;
    p.delta = delta;
    p.mode = ExcitationMode::Guarded;
    return p;
}

} // namespace

TEST(Persistency, Examples) {
    EXPECT_FALSE(is_persistently_exciting(Signal(8, vec({0.0})), 2));
    const Signal c(8, vec({1.5}));
    EXPECT_TRUE(is_persistently_exciting(c, 1));
    EXPECT_FALSE(is_persistently_exciting(c, 2));
}

TEST(Persistency, UniformVectorSequenceIsExciting) {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        Signal u;
        for (int i = 0; i < 15; ++i) u.push_back(vec({oracle::uniform(-0.3, 0.3, rng), oracle::uniform(-0.3, 0.3, rng)}));
        EXPECT_TRUE(is_persistently_exciting(u, 3));
        EXPECT_EQ(oracle::gram_rank(build_hankel(u, 3).entries()), 6);
    }
}

TEST(Persistency, ShortSignalIsLengthError) {
    try {
        (void)is_persistently_exciting(Signal(4, vec({1.0, 2.0})), 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Length);
    }
}

TEST(Candidates, Examples) {
    const auto a = epsilon_candidates(0.5, 1);
    ASSERT_EQ(a.size(), 3u);
    EXPECT_EQ(a[0], vec({0.0}));
    EXPECT_EQ(a[1], vec({0.5}));
    EXPECT_EQ(a[2], vec({-0.5}));

    const auto b = epsilon_candidates(1.0, 2);
    const std::vector<Vector> want{vec({0, 0}), vec({1, 0}), vec({0, 1}), vec({-1, 0}), vec({0, -1})};
    ASSERT_EQ(b.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_EQ(b[i], want[i]);
}

TEST(SelectInput, ZeroPerturbationPreferred) {
    const DataWindow w = scalar_window(1.0, -1.0, 0.5);
    std::mt19937_64 rng(1);
    const InputSelection s = select_input(w, vec({0.3}).transpose(), vec({2.0}), guarded(1e-3), rng);
    EXPECT_EQ(s.report.source, CandidateSource::Sweep);
    EXPECT_EQ(s.report.candidate_index, 0);
    EXPECT_EQ(s.epsilon, vec({0.0}));
    EXPECT_DOUBLE_EQ(s.u(0), 0.6);
}

TEST(SelectInput, ZeroStateGivesZeroInput) {
    const DataWindow w = scalar_window(1.0, -1.0, 0.5);
    std::mt19937_64 rng(1);
    const InputSelection s = select_input(w, vec({0.3}).transpose(), vec({0.0}), ExcitationPolicy{}, rng);
    EXPECT_EQ(s.report.source, CandidateSource::ZeroState);
    EXPECT_EQ(s.u, vec({0.0}));
    EXPECT_EQ(s.epsilon, vec({0.0}));
}

TEST(SelectInput, AdversarialGainSweepMatchesBruteForce) {
    // Suffix (a, b, c) = (3, 1, 2). The shifted Hankel [[1, 2], [2, u]] is
    // singular exactly when u = 4, so K = 4 at x = 1 defeats eps = 0.
    const DataWindow w = scalar_window(3.0, 1.0, 2.0);
    const Matrix k = vec({4.0}).transpose();
    const Vector x = vec({1.0});
    const double delta = 1e-3;

    const auto candidates = epsilon_candidates(delta, 1);
    std::vector<bool> brute;
    for (const auto& eps : candidates) {
        const double u = 4.0 + eps(0) * x.norm();
        const Matrix h = oracle::mat(2, 2, {1.0, 2.0, 2.0, u});
        brute.push_back(std::abs(h.determinant()) > 1e-12 * h.squaredNorm());
    }
    EXPECT_FALSE(brute[0]);
    EXPECT_TRUE(brute[1]);
    EXPECT_TRUE(brute[2]);

    std::mt19937_64 rng(5);
    const InputSelection s = select_input(w, k, x, guarded(delta), rng);
    ASSERT_EQ(s.report.source, CandidateSource::Sweep);
    EXPECT_EQ(s.report.candidate_index, 1); // first brute-force success in sweep order
    EXPECT_DOUBLE_EQ(s.u(0), 4.0 + delta);
    EXPECT_EQ(s.report.suffix_rank, 2);

    // The random draw must also land on a valid input.
    ExcitationPolicy rnd;
    rnd.delta = delta;
    for (int i = 0; i < 50; ++i) {
        const InputSelection r = select_input(w, k, x, rnd, rng);
        EXPECT_LE(r.epsilon.norm(), delta);
        // [[1, 2], [2, u]] is singular only at u = 4.
        EXPECT_NE(r.u(0), 4.0);
    }
}

TEST(SelectInput, NonExcitingSuffixIsExcitationFailure) {
    const DataWindow w = scalar_window(1.0, 1.0, 1.0);
    std::mt19937_64 rng(1);
    try {
        (void)select_input(w, vec({0.1}).transpose(), vec({1.0}), ExcitationPolicy{}, rng);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ExcitationFailure);
    }
}

TEST(SelectInput, PropertiesOnRandomSystems) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = oracle::uniform_int(1, 3, rng);
        const int m = oracle::uniform_int(1, 2, rng);
        const auto p = oracle::random_controllable(n, m, rng);
        DataWindow w = oracle::open_loop_window(p.a, p.b, oracle::gaussian(n, 1, rng).col(0),
                                                min_window_length(n, m), rng);
        ExcitationPolicy pol;
        pol.delta = oracle::uniform(1e-4, 0.1, rng);
        pol.mode = trial % 2 ? ExcitationMode::Guarded : ExcitationMode::RandomThenGuarded;
        const Matrix k = oracle::gaussian(m, n, rng);
        for (int step = 0; step < 10; ++step) {
            const Vector x = w.latest_state();
            if (suffix_hankel_rank(w) != m * (n + 1)) break;
            const InputSelection s = select_input(w, k, x, pol, rng);
            EXPECT_LE(s.epsilon.norm(), pol.delta * (1 + 1e-15));
            EXPECT_LT((s.u - (k * x + s.epsilon * x.norm())).cwiseAbs().maxCoeff(), 1e-14);
            w.push(s.u, p.a * x + p.b * s.u);
            EXPECT_EQ(suffix_hankel_rank(w), m * (n + 1));
            // A PE suffix makes the whole window PE too.
            EXPECT_TRUE(is_persistently_exciting(w.inputs(), n + 1));
        }
    }
}

TEST(SelectInput, ZeroCandidateInvariantUnderStateScaling) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = oracle::uniform_int(1, 3, rng);
        const int m = oracle::uniform_int(1, 2, rng);
        const auto p = oracle::random_controllable(n, m, rng);
        const DataWindow w = oracle::open_loop_window(p.a, p.b, oracle::gaussian(n, 1, rng).col(0),
                                                      min_window_length(n, m), rng);
        if (suffix_hankel_rank(w) != m * (n + 1)) continue;
        const Matrix k = oracle::gaussian(m, n, rng);
        const Vector x = oracle::gaussian(n, 1, rng).col(0);
        const double scale = std::exp(oracle::uniform(-5, 5, rng));
        const auto a = select_input(w, k, x, guarded(1e-3), rng);
        const auto b = select_input(w, k, Vector(scale * x), guarded(1e-3), rng);
        EXPECT_EQ(a.report.candidate_index == 0, b.report.candidate_index == 0);
    }
}
