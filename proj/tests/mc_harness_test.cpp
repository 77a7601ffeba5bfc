#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gapsandwich/mc_harness.hpp"

using namespace gapsandwich;

namespace {

SweepConfig small_config(std::vector<std::size_t> ks, std::size_t n, std::size_t reps, CPolicy policy) {
    SweepConfig cfg;
    cfg.k_values = std::move(ks);
    cfg.n_pairs = n;
    cfg.replications = reps;
    cfg.base_seed = 2024;
    cfg.c_policy = policy;
    return cfg;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST(SweepConfig, Validation) {
    EXPECT_NO_THROW(SweepConfig{}.validate());
    EXPECT_THROW(small_config({}, 10, 1, CPolicy::zero()).validate(), Error);
    EXPECT_THROW(small_config({2, 2}, 10, 1, CPolicy::zero()).validate(), Error);
    EXPECT_THROW(small_config({4, 2}, 10, 1, CPolicy::zero()).validate(), Error);
    EXPECT_THROW(small_config({0, 2}, 10, 1, CPolicy::zero()).validate(), Error);
    EXPECT_THROW(small_config({1}, 1, 1, CPolicy::zero()).validate(), Error);
    EXPECT_THROW(small_config({1}, 10, 0, CPolicy::zero()).validate(), Error);
}

TEST(CPolicy, ParseAndFormat) {
    EXPECT_EQ(parse_c_policy("zero").kind, CPolicy::Kind::Zero);
    EXPECT_EQ(parse_c_policy("pilot-optimal").kind, CPolicy::Kind::PilotOptimal);
    const auto f = parse_c_policy("fixed:-0.25");
    EXPECT_EQ(f.kind, CPolicy::Kind::Fixed);
    EXPECT_DOUBLE_EQ(f.value, -0.25);
    EXPECT_EQ(to_string(f), "fixed:-0.25");
    EXPECT_THROW(parse_c_policy("optimal"), Error);
    EXPECT_THROW(parse_c_policy("fixed:abc"), Error);
}

TEST(RunSweep, ConstantSourceGivesZeroBounds) {
    for (const auto& policy : {CPolicy::zero(), CPolicy::pilot_optimal(), CPolicy::fixed(0.0)}) {
        const auto res = run_sweep(analytic_source(dist::Constant{1.0}), small_config({1, 3}, 50, 2, policy));
        ASSERT_EQ(res.rows.size(), 4u);
        for (const auto& row : res.rows) {
            EXPECT_EQ(row.report.lower_mean, 0.0);
            EXPECT_EQ(row.report.upper_mean, 0.0);
        }
    }
}

TEST(RunSweep, RowLayoutAndSeeds) {
    const auto cfg = small_config({1, 2, 8}, 20, 3, CPolicy::zero());
    const auto res = run_sweep(analytic_source(dist::Gamma{2.0, 1.0}), cfg);
    ASSERT_EQ(res.rows.size(), cfg.k_values.size() * cfg.replications);
    ASSERT_EQ(res.aggregates.size(), cfg.k_values.size());
    for (std::size_t i = 0; i < res.rows.size(); ++i) {
        const auto& row = res.rows[i];
        EXPECT_EQ(row.k, cfg.k_values[i / 3]);
        EXPECT_EQ(row.replication, i % 3);
        EXPECT_EQ(row.seed, cell_seed(cfg.base_seed, row.replication, row.k));
        EXPECT_EQ(row.report.n, cfg.n_pairs);
        EXPECT_EQ(row.report.k, row.k);
    }
}

TEST(RunSweep, LogNormalPilotOptimal) {
    const auto res =
        run_sweep(analytic_source(dist::LogNormal{0.0, 1.0}), small_config({1}, 100000, 5, CPolicy::pilot_optimal()));
    const auto& agg = res.aggregates.front();
    EXPECT_NEAR(agg.lower_mean, 0.0, 0.02);
    EXPECT_NEAR(agg.upper_mean, 1.0, 0.05);
    for (const auto& row : res.rows) {
        EXPECT_NEAR(row.report.lower_mean, 0.0, 4.0 * row.report.lower_stderr);
        EXPECT_NEAR(row.report.midpoint, 0.5, 4.0 * row.report.midpoint_stderr);
    }
}

TEST(RunSweep, GammaZeroPolicyWidths) {
    const auto res =
        run_sweep(analytic_source(dist::Gamma{2.0, 1.0}), small_config({1, 2, 4}, 100000, 4, CPolicy::zero()));
    const double expected[] = {1.0, 1.0 / 3.0, 1.0 / 7.0};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& agg = res.aggregates[i];
        EXPECT_NEAR(agg.width_mean, expected[i], 3.0 * agg.width_stdev + 0.02 * expected[i]) << "k=" << agg.k;
    }
}

TEST(RunSweep, BitIdenticalAcrossThreadCounts) {
    const auto cfg = small_config({1, 2, 4, 8}, 500, 6, CPolicy::pilot_optimal());
    const auto src = analytic_source(dist::LogNormal{0.5, 0.8});
    const auto one = run_sweep(src, cfg, 1);
    const auto eight = run_sweep(src, cfg, 8);
    ASSERT_EQ(one.rows.size(), eight.rows.size());
    for (std::size_t i = 0; i < one.rows.size(); ++i) {
        const auto& a = one.rows[i].report;
        const auto& b = eight.rows[i].report;
        EXPECT_TRUE(same_bits(a.lower_mean, b.lower_mean));
        EXPECT_TRUE(same_bits(a.upper_mean, b.upper_mean));
        EXPECT_TRUE(same_bits(a.c_used, b.c_used));
        EXPECT_TRUE(same_bits(a.upper_stderr, b.upper_stderr));
    }
    std::ostringstream s1, s8;
    write_sweep_csv(s1, one, "d", "m");
    write_sweep_csv(s8, eight, "d", "m");
    EXPECT_EQ(s1.str(), s8.str());
}

TEST(RunSweep, IntervalShrinksOnBoundedSupport) {
    for (const AnalyticDist& d : std::vector<AnalyticDist>{dist::UniformPos{0.5, 1.5}, dist::UniformPos{0.1, 3.0}}) {
        const auto res = run_sweep(analytic_source(d), small_config({1, 2, 4, 8, 16}, 20000, 5, CPolicy::zero()));
        for (std::size_t i = 1; i < res.aggregates.size(); ++i) {
            const auto& prev = res.aggregates[i - 1];
            const auto& cur = res.aggregates[i];
            EXPECT_LE(cur.width_mean, prev.width_mean + 3.0 * std::hypot(prev.width_stdev, cur.width_stdev))
                << to_string(d) << " k=" << cur.k;
        }
    }
}

TEST(RunSweep, SingleReplicationHasInfiniteStdev) {
    const auto res = run_sweep(analytic_source(dist::Gamma{3.0, 1.0}), small_config({1}, 100, 1, CPolicy::zero()));
    EXPECT_TRUE(std::isinf(res.aggregates.front().lower_stdev));
}

TEST(RunSweep, SourceFailures) {
    const auto cfg = small_config({1, 2}, 10, 2, CPolicy::zero());
    Source short_source{"short", false, [](std::size_t n, std::uint64_t) { return std::vector<double>(n - 1, 1.0); }};
    Source throwing{"boom", false, [](std::size_t, std::uint64_t) -> std::vector<double> {
                        throw std::runtime_error("sampler exploded");
                    }};
    Source empty{"empty", false, {}};
    for (const auto* src : {&short_source, &throwing, &empty}) {
        try {
            run_sweep(*src, cfg);
            ADD_FAILURE() << src->name;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::SourceFailure) << src->name;
        }
    }
    Source negative{"neg", false, [](std::size_t n, std::uint64_t) { return std::vector<double>(n, -1.0); }};
    try {
        run_sweep(negative, cfg);
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonPositiveSample);
    }
}

TEST(RunSweep, LogDomainSourceMatchesLinear) {
    const auto cfg = small_config({1, 4}, 300, 2, CPolicy::pilot_optimal());
    const AnalyticDist d = dist::Gamma{2.5, 1.5};
    Source logs{"log", true, [d](std::size_t n, std::uint64_t seed) {
                    auto v = sample(d, n, seed);
                    for (auto& x : v) x = std::log(x);
                    return v;
                }};
    const auto lin = run_sweep(analytic_source(d), cfg);
    const auto lg = run_sweep(logs, cfg);
    for (std::size_t i = 0; i < lin.rows.size(); ++i) {
        EXPECT_NEAR(lin.rows[i].report.lower_mean, lg.rows[i].report.lower_mean, 1e-10);
        EXPECT_NEAR(lin.rows[i].report.upper_mean, lg.rows[i].report.upper_mean, 1e-10);
    }
}

TEST(SweepCsv, HeaderAndRows) {
    const auto res = run_sweep(analytic_source(dist::Constant{2.0}), small_config({1, 2}, 4, 2, CPolicy::fixed(0.5)));
    std::ostringstream out;
    write_sweep_csv(out, res, "constant:c=2", "analytic");
    const std::string text = out.str();
    EXPECT_EQ(text.find('\r'), std::string::npos);
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line,
              "dataset,model,k,replication,n_pairs,seed,lower_mean,lower_stderr,upper_mean,upper_stderr,ratio_mean,"
              "c_used,midpoint,saturated_pairs");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 13) << line;
        EXPECT_TRUE(line.starts_with("constant:c=2,analytic,")) << line;
    }
    EXPECT_EQ(rows, 4u);
    // lower = log 2 with zero stderr, upper = log 2 + 0.5 - 1 + exp(-0.5)
    std::istringstream again(text);
    std::getline(again, line);
    std::getline(again, line);
    std::vector<std::string> fields;
    std::istringstream cells(line);
    for (std::string f; std::getline(cells, f, ',');) fields.push_back(f);
    ASSERT_EQ(fields.size(), 14u);
    EXPECT_EQ(fields[6], csv::number(std::log(2.0)));
    EXPECT_EQ(fields[7], "0");
    EXPECT_NEAR(std::stod(fields[8]), std::log(2.0) + 0.5 - 1.0 + std::exp(-0.5), 1e-15);
    EXPECT_EQ(fields[11], "0.5");
}

TEST(Csv, NumbersRoundTrip) {
    for (double v : {0.1, -1.0 / 3.0, 1e-300, 12345.678, 0.0}) {
        EXPECT_EQ(std::stod(csv::number(v)), v);
    }
    EXPECT_EQ(csv::number(kInf), "inf");
    EXPECT_EQ(csv::number(-kInf), "-inf");
    EXPECT_EQ(csv::number(std::uint64_t{18446744073709551615ull}), "18446744073709551615");
}

TEST(Csv, QuotesFieldsThatNeedIt) {
    std::ostringstream out;
    csv::write_row(out, {"gamma:a=2,theta=1", "plain", "say \"hi\""});
    EXPECT_EQ(out.str(), "\"gamma:a=2,theta=1\",plain,\"say \"\"hi\"\"\"\n");
}
