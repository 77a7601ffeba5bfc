#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "gapsandwich/analytic_dists.hpp"
#include "gapsandwich/bounds.hpp"
#include "gapsandwich/mc_harness.hpp"
#include "oracles.hpp"

using namespace gapsandwich;

namespace {

// psi(2) = 1 - Euler's gamma, frozen from oracle::gamma_mean_log(2.0).
constexpr double kPsi2 = 0.42278433509846713;

PairedSamples draw_pairs(const AnalyticDist& d, std::size_t n, std::size_t k, std::uint64_t seed) {
    const auto raw = sample(d, 2 * n * k, seed);
    return pair_up(raw, k, false);
}

PairedSamples constant_pairs(double c, std::size_t n) {
    return PairedSamples::linear(std::vector<double>(n, c), std::vector<double>(n, c));
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

TEST(Oracle, GammaMeanLogQuadratureMatchesFrozenValue) {
    EXPECT_NEAR(oracle::gamma_mean_log(2.0), kPsi2, 1e-9);
    EXPECT_NEAR(oracle::gamma_mean_log(1.0), -0.57721566490153286, 1e-9);
}

TEST(PairedSamples, RejectsInvalidInput) {
    EXPECT_THROW(PairedSamples::linear({}, {}), Error);
    try {
        PairedSamples::linear({1.0, 0.0}, {1.0, 1.0});
        FAIL() << "expected NonPositiveSample";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonPositiveSample);
    }
    try {
        PairedSamples::linear({1.0, 2.0}, {1.0});
        FAIL() << "expected LengthMismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
    }
    try {
        PairedSamples::linear({1.0}, {1.0}, 0);
        FAIL() << "expected InvalidK";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidK);
    }
    EXPECT_THROW(PairedSamples::linear({INFINITY}, {1.0}), Error);
    EXPECT_THROW(PairedSamples::logs({-INFINITY}, {0.0}), Error);
    EXPECT_THROW(PairedSamples::logs({NAN}, {0.0}), Error);
    EXPECT_NO_THROW(PairedSamples::logs({-800.0}, {800.0}));
}

TEST(JensenLower, ConstantSamples) {
    const auto s = constant_pairs(std::numbers::e, 3);
    const auto est = jensen_lower(s);
    EXPECT_DOUBLE_EQ(est.mean, 1.0);
    EXPECT_DOUBLE_EQ(est.std_error, 0.0);
}

TEST(JensenLower, SinglePairHasInfiniteStderr) {
    const auto est = jensen_lower(constant_pairs(2.0, 1));
    EXPECT_TRUE(std::isinf(est.std_error));
}

TEST(JensenLower, LogNormalAndGammaLimits) {
    const auto ln = jensen_lower(draw_pairs(dist::LogNormal{0.0, 1.0}, 1'000'000, 1, 11));
    EXPECT_NEAR(ln.mean, 0.0, 3.0 / 1000.0);

    const auto g = jensen_lower(draw_pairs(dist::Gamma{2.0, 1.0}, 1'000'000, 1, 12));
    EXPECT_NEAR(g.mean, kPsi2, 4.0 * g.std_error);
}

TEST(JensenLower, LogDomainInputUsedDirectly) {
    const auto s = PairedSamples::logs({1.0, 2.0, 3.0}, {0.0, 0.0, 0.0});
    EXPECT_DOUBLE_EQ(jensen_lower(s).mean, 2.0);
}

TEST(GapUpperFirstOrder, ConstantIsZero) {
    const auto est = gap_upper_first_order(constant_pairs(7.0, 5));
    EXPECT_DOUBLE_EQ(est.mean, 0.0);
    EXPECT_EQ(est.saturated, 0u);
}

TEST(GapUpperFirstOrder, GammaAndLogNormalLimits) {
    const auto g = gap_upper_first_order(draw_pairs(dist::Gamma{2.0, 1.0}, 1'000'000, 1, 21));
    EXPECT_NEAR(g.mean, 1.0, 3.0 * g.std_error);

    const auto ln = gap_upper_first_order(draw_pairs(dist::LogNormal{0.0, 1.0}, 1'000'000, 1, 22));
    EXPECT_NEAR(ln.mean, std::numbers::e - 1.0, 3.0 * ln.std_error);
}

TEST(GapUpperFirstOrder, SaturatesInsteadOfOverflowing) {
    const auto s = PairedSamples::logs({0.0, 0.0, -900.0}, {0.0, 0.0, 0.0});
    const auto est = gap_upper_first_order(s);
    EXPECT_EQ(est.saturated, 1u);
    EXPECT_TRUE(std::isfinite(est.mean));
    EXPECT_NEAR(est.mean, std::exp(700.0) / 3.0, std::exp(700.0) * 1e-12);
}

TEST(KSamplePairs, BlockAverages) {
    const std::vector<double> raw{1, 3, 2, 4};
    const auto s = k_sample_pairs(raw, raw, 2);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.k(), 2u);
    EXPECT_DOUBLE_EQ(s.xs()[0], 2.0);
    EXPECT_DOUBLE_EQ(s.xs()[1], 3.0);

    const std::vector<double> one{5};
    const auto id = k_sample_pairs(one, one, 1);
    EXPECT_DOUBLE_EQ(id.xs()[0], 5.0);
}

TEST(KSamplePairs, LogDomainBlocks) {
    const std::vector<double> raw{std::log(1.0), std::log(3.0)};
    const auto s = k_sample_pairs(raw, raw, 2, true);
    ASSERT_TRUE(s.log_domain());
    EXPECT_NEAR(s.xs()[0], std::log((1.0 + 3.0) / 2.0), 1e-15);
}

TEST(KSamplePairs, Errors) {
    const std::vector<double> raw{1, 2, 3};
    try {
        k_sample_pairs(raw, raw, 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::LengthNotDivisible);
    }
    try {
        k_sample_pairs(raw, raw, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidK);
    }
}

TEST(ImprovedUpper, ZeroCReducesToFirstOrderBound) {
    const auto s = draw_pairs(dist::Gamma{3.0, 2.0}, 10000, 1, 31);
    const double lhs = improved_upper(s, 0.0).mean;
    const double rhs = jensen_lower(s).mean + gap_upper_first_order(s).mean;
    EXPECT_LE(rel_diff(lhs, rhs), 1e-12);
}

TEST(ImprovedUpper, ConstantAndLogNormal) {
    EXPECT_NEAR(improved_upper(constant_pairs(4.0, 10), 0.0).mean, std::log(4.0), 1e-15);
    const auto est = improved_upper(draw_pairs(dist::LogNormal{0.0, 1.0}, 1'000'000, 1, 32), 1.0);
    EXPECT_NEAR(est.mean, 1.0, 3.0 * est.std_error);
}

TEST(ImprovedUpper, RejectsNonFiniteC) {
    EXPECT_THROW(improved_upper(constant_pairs(1.0, 2), NAN), Error);
}

TEST(OptimalC, Examples) {
    EXPECT_DOUBLE_EQ(optimal_c(constant_pairs(3.0, 8)), 0.0);

    const auto ln = optimal_c_estimate(draw_pairs(dist::LogNormal{0.0, 1.0}, 1'000'000, 1, 41));
    EXPECT_NEAR(ln.mean, 1.0, 3.0 * ln.std_error);

    const auto g = optimal_c_estimate(draw_pairs(dist::Gamma{2.0, 1.0}, 1'000'000, 1, 42));
    EXPECT_NEAR(g.mean, std::log(2.0), 3.0 * g.std_error);
}

TEST(OptimalUpper, Examples) {
    EXPECT_NEAR(optimal_upper(constant_pairs(5.0, 4)), std::log(5.0), 1e-15);

    const auto ln = draw_pairs(dist::LogNormal{0.0, 1.0}, 1'000'000, 1, 51);
    const double ub = optimal_upper(ln);
    EXPECT_NEAR(ub, 1.0, 0.02);
    EXPECT_GE(ub, 0.5);

    const auto g = draw_pairs(dist::Gamma{2.0, 1.0}, 1'000'000, 1, 52);
    const double gub = optimal_upper(g);
    EXPECT_NEAR(gub, kPsi2 + std::log(2.0), 0.01);
    EXPECT_GE(gub, std::log(2.0));
}

TEST(MidpointEvidence, Examples) {
    EXPECT_NEAR(midpoint_evidence(constant_pairs(5.0, 4)), std::log(5.0), 1e-15);

    const auto mid = midpoint_estimate(draw_pairs(dist::LogNormal{0.0, 1.0}, 1'000'000, 1, 61));
    EXPECT_NEAR(mid.mean, 0.5, 3.0 * mid.std_error);

    const auto g = draw_pairs(dist::Gamma{2.0, 1.0}, 1'000'000, 1, 62);
    const double gm = midpoint_evidence(g);
    EXPECT_NEAR(gm, kPsi2 + 0.5 * std::log(2.0), 0.01);
    EXPECT_GT(gm, kPsi2);
    EXPECT_LT(gm, kPsi2 + std::log(2.0));
    EXPECT_LT(std::abs(gm - std::log(2.0)), 0.5 * std::log(2.0));
}

TEST(Sandwich, ConstantIsDegenerate) {
    const auto r = sandwich(constant_pairs(1.0, 16), 0.0);
    EXPECT_DOUBLE_EQ(r.lower_mean, 0.0);
    EXPECT_DOUBLE_EQ(r.upper_mean, 0.0);
    EXPECT_DOUBLE_EQ(r.midpoint, 0.0);
    EXPECT_EQ(r.n, 16u);
    EXPECT_EQ(r.c_used, 0.0);
}

TEST(Sandwich, LogNormalAndGamma) {
    const auto r = sandwich(draw_pairs(dist::LogNormal{0.0, 1.0}, 1'000'000, 1, 71), 1.0);
    EXPECT_NEAR(r.lower_mean, 0.0, 3.0 * r.lower_stderr);
    EXPECT_NEAR(r.upper_mean, 1.0, 3.0 * r.upper_stderr);
    EXPECT_NEAR(r.midpoint, 0.5, 3.0 * r.midpoint_stderr);
    EXPECT_NEAR(r.midpoint, r.lower_mean + 0.5 * r.c_star, 1e-15);

    const auto g = sandwich(draw_pairs(dist::Gamma{2.0, 1.0}, 1'000'000, 1, 72), std::log(2.0));
    EXPECT_NEAR(g.lower_mean, kPsi2, 3.0 * g.lower_stderr);
    EXPECT_NEAR(g.upper_mean, kPsi2 + std::log(2.0), 3.0 * g.upper_stderr);
}

TEST(Sandwich, PilotPolicyFreezesCFromLeadingPairs) {
    const auto s = draw_pairs(dist::LogNormal{0.0, 1.0}, 10000, 1, 73);
    const auto r = sandwich_pilot_optimal(s);
    EXPECT_EQ(r.n, 9000u);
    EXPECT_DOUBLE_EQ(r.c_used, optimal_c(s.slice(0, 1000)));
    EXPECT_EQ(pilot_size(100), 50u);
    EXPECT_EQ(pilot_size(1000), 100u);
    EXPECT_EQ(pilot_size(300), 64u);
}

TEST(OptimalHCheck, TangentOfLogAtOne) {
    const std::vector<double> g{-1.0};
    const std::vector<double> a{0.5, 1.0, 2.0};
    EXPECT_TRUE(optimal_h_check(g, a));
}

TEST(OptimalHCheck, GcFamilyAndPerturbation) {
    std::vector<double> grid;
    for (int i = 0; i <= 20000; ++i) grid.push_back(std::pow(10.0, -3.0 + 6.0 * i / 20000.0));
    const double x = 1.0;
    const std::vector<double> g{std::log(x) - 1.0 + 0.0};
    EXPECT_TRUE(optimal_h_check(g, grid));

    // Grid containing exp(1 + g) exactly; h lowered by 0.1% must fail.
    const std::vector<double> tangent{std::exp(1.0 + g[0])};
    EXPECT_FALSE(optimal_h_check(g, tangent, 0.999));
    EXPECT_FALSE(optimal_h_check(g, grid, 0.999));
}

TEST(OptimalHCheck, CoarseGridCannotConfirmMinimality) {
    const std::vector<double> g{0.3};
    const std::vector<double> coarse{1e-3, 1e-1, 10.0, 1e3};
    EXPECT_FALSE(optimal_h_check(g, coarse));
}

TEST(OptimalHCheck, Errors) {
    const std::vector<double> empty;
    const std::vector<double> one{1.0};
    try {
        optimal_h_check(empty, one);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyGrid);
    }
    EXPECT_THROW(optimal_h_check(one, empty), Error);
    const std::vector<double> bad{-1.0};
    EXPECT_THROW(optimal_h_check(one, bad), Error);
}

// ---------------------------------------------------------------------------
// Properties

namespace {

const std::vector<AnalyticDist>& suite() {
    static const std::vector<AnalyticDist> dists{
        dist::Constant{2.5},        dist::Gamma{2.0, 1.0},   dist::Gamma{0.5, 3.0},
        dist::LogNormal{0.0, 1.0},  dist::LogNormal{-1.0, 0.5}, dist::UniformPos{0.5, 1.5},
        dist::UniformPos{0.1, 10.0},
    };
    return dists;
}

}  // namespace

TEST(BoundProperties, SandwichOrderingAcrossSuite) {
    std::uint64_t seed = 100;
    for (const auto& d : suite()) {
        for (std::size_t k : {1u, 4u}) {
            const auto s = draw_pairs(d, 20000, k, ++seed);
            for (double c : {-1.0, 0.0, 1.0, 3.0}) {
                const auto r = sandwich(s, c);
                const double slack = std::isfinite(r.lower_stderr + r.upper_stderr)
                                         ? 3.0 * (r.lower_stderr + r.upper_stderr)
                                         : 0.0;
                EXPECT_LE(r.lower_mean, r.upper_mean + slack) << to_string(d) << " k=" << k << " c=" << c;
            }
        }
    }
}

TEST(BoundProperties, ZeroCIdentityOnRandomSamples) {
    Rng gen(7);
    for (int trial = 0; trial < 50; ++trial) {
        const AnalyticDist d = dist::LogNormal{gen.uniform(-3.0, 3.0), gen.uniform(0.1, 2.0)};
        const auto s = draw_pairs(d, 2000, 1 + gen.index(4), 200 + trial);
        const double lhs = improved_upper(s, 0.0).mean;
        const double rhs = jensen_lower(s).mean + gap_upper_first_order(s).mean;
        EXPECT_LE(rel_diff(lhs, rhs), 1e-12) << trial;
    }
}

TEST(BoundProperties, OptimalCIsStationary) {
    for (const auto& d : suite()) {
        const auto s = draw_pairs(d, 20000, 2, 300);
        const double c = optimal_c(s);
        const double at = improved_upper(s, c).mean;
        EXPECT_LE(at, improved_upper(s, c + 0.1).mean + 1e-12) << to_string(d);
        EXPECT_LE(at, improved_upper(s, c - 0.1).mean + 1e-12) << to_string(d);
        EXPECT_NEAR(at, optimal_upper(s), 1e-12 * std::max(1.0, std::abs(at)));
    }
}

TEST(BoundProperties, LowerBoundIncreasesWithK) {
    const AnalyticDist u = dist::UniformPos{0.5, 1.5};
    for (std::size_t k : {1u, 2u, 4u, 8u}) {
        const auto a = jensen_lower(draw_pairs(u, 100000, k, 400 + k));
        const auto b = jensen_lower(draw_pairs(u, 100000, k + 1, 500 + k));
        EXPECT_GT(b.mean, a.mean - 3.0 * std::hypot(a.std_error, b.std_error)) << "k=" << k;
    }
}

TEST(BoundProperties, GapShrinksWithK) {
    const AnalyticDist u = dist::UniformPos{0.5, 1.5};
    double prev_mean = 0.0;
    for (std::size_t k : {1u, 2u, 4u, 8u, 16u}) {
        const auto g = gap_upper_first_order(draw_pairs(u, 100000, k, 600 + k));
        const auto h = gap_upper_first_order(draw_pairs(u, 100000, 2 * k, 700 + k));
        EXPECT_LE(h.mean, g.mean + 3.0 * std::hypot(g.std_error, h.std_error)) << "k=" << k;
        prev_mean = h.mean;
    }
    EXPECT_LT(prev_mean, 0.01);
}

TEST(BoundProperties, GammaGapClosedForm) {
    struct Case {
        double a, theta;
        std::size_t k;
    };
    for (const Case c : {Case{2, 1, 1}, Case{2, 1, 4}, Case{0.5, 1, 4}}) {
        const auto g = gap_upper_first_order(draw_pairs(dist::Gamma{c.a, c.theta}, 100000, c.k, 800 + c.k));
        const double expected = 1.0 / (static_cast<double>(c.k) * c.a - 1.0);
        EXPECT_NEAR(g.mean, expected, 3.0 * g.std_error) << c.a << "," << c.k;
    }
}

TEST(BoundProperties, LogNormalMidpointIsExact) {
    struct Case {
        double m, sigma;
    };
    std::uint64_t seed = 900;
    for (const Case c : {Case{0, 1}, Case{-1, 0.5}, Case{2, 2}}) {
        const auto mid = midpoint_estimate(draw_pairs(dist::LogNormal{c.m, c.sigma}, 100000, 1, ++seed));
        EXPECT_NEAR(mid.mean, c.m + 0.5 * c.sigma * c.sigma, 3.0 * mid.std_error) << c.m << "," << c.sigma;
    }
}

TEST(BoundProperties, ScaleEquivariance) {
    Rng gen(99);
    for (int trial = 0; trial < 20; ++trial) {
        const auto& d = suite()[gen.index(suite().size())];
        const auto s = draw_pairs(d, 500, 1, 1000 + trial);
        const double lambda = std::exp(gen.uniform(-5.0, 5.0));
        std::vector<double> xs(s.xs().begin(), s.xs().end());
        std::vector<double> ys(s.ys().begin(), s.ys().end());
        for (auto& v : xs) v *= lambda;
        for (auto& v : ys) v *= lambda;
        const auto t = PairedSamples::linear(xs, ys);
        const double shift = std::log(lambda);
        auto near = [](double a, double b) { return rel_diff(a, b) <= 1e-12; };
        EXPECT_TRUE(near(jensen_lower(t).mean, jensen_lower(s).mean + shift));
        EXPECT_TRUE(near(improved_upper(t, 0.7).mean, improved_upper(s, 0.7).mean + shift));
        EXPECT_TRUE(near(optimal_upper(t), optimal_upper(s) + shift));
        EXPECT_TRUE(near(midpoint_evidence(t), midpoint_evidence(s) + shift));
        EXPECT_TRUE(near(optimal_c(t), optimal_c(s)));
        EXPECT_TRUE(near(gap_upper_first_order(t).mean, gap_upper_first_order(s).mean));
    }
}

TEST(BoundProperties, ChunkingDoesNotChangeResults) {
    const auto s = draw_pairs(dist::Gamma{1.5, 2.0}, 30000, 3, 1100);
    const auto ref = sandwich(s, 0.4);
    for (std::size_t chunk : {1u, 7u, 1000u, 4096u, 29999u}) {
        const auto r = sandwich(s, 0.4, chunk);
        EXPECT_LE(rel_diff(r.lower_mean, ref.lower_mean), 1e-9);
        EXPECT_LE(rel_diff(r.upper_mean, ref.upper_mean), 1e-9);
        EXPECT_LE(rel_diff(r.upper_stderr, ref.upper_stderr), 1e-9);
        EXPECT_LE(rel_diff(r.c_star, ref.c_star), 1e-9);
        EXPECT_LE(rel_diff(r.midpoint, ref.midpoint), 1e-9);
    }
}
