#pragma once

// Paired sampling, k-sweeps and seeded replications on top of the bound
// estimators. Each (k, replication) cell draws 2 * n_pairs * k fresh values:
// the first half feeds the X blocks, the second half the Y blocks, so X and Y
// never share draws and no draw is reused across cells.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "gapsandwich/analytic_dists.hpp"
#include "gapsandwich/bounds.hpp"
#include "gapsandwich/csv.hpp"
#include "gapsandwich/error.hpp"
#include "gapsandwich/parallel.hpp"
#include "gapsandwich/rng.hpp"

namespace gapsandwich {

struct CPolicy {
    enum class Kind { Fixed, PilotOptimal, Zero };
    Kind kind = Kind::Zero;
    double value = 0.0;  // only for Fixed

    static CPolicy zero() { return {Kind::Zero, 0.0}; }
    static CPolicy pilot_optimal() { return {Kind::PilotOptimal, 0.0}; }
    static CPolicy fixed(double c) { return {Kind::Fixed, c}; }
};

/// "zero", "pilot-optimal" or "fixed:<c>".
inline CPolicy parse_c_policy(std::string_view text) {
    if (text == "zero") return CPolicy::zero();
    if (text == "pilot-optimal") return CPolicy::pilot_optimal();
    if (text.starts_with("fixed:")) return CPolicy::fixed(detail::parse_decimal("c", text.substr(6)));
    throw Error(ErrorCode::ParseError, "c-policy '" + std::string(text) + "' is not zero|pilot-optimal|fixed:<c>");
}

inline std::string to_string(const CPolicy& p) {
    switch (p.kind) {
    case CPolicy::Kind::Zero: return "zero";
    case CPolicy::Kind::PilotOptimal: return "pilot-optimal";
    case CPolicy::Kind::Fixed: return "fixed:" + csv::number(p.value);
    }
    return "zero";
}

struct SweepConfig {
    std::vector<std::size_t> k_values{1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024};
    std::size_t n_pairs = 10000;
    std::size_t replications = 10;
    std::uint64_t base_seed = 0;
    CPolicy c_policy = CPolicy::zero();

    void validate() const {
        if (k_values.empty()) throw Error(ErrorCode::InvalidParams, "k_values is empty");
        for (std::size_t i = 0; i < k_values.size(); ++i) {
            if (k_values[i] == 0) throw Error(ErrorCode::InvalidK, "k values must be positive");
            if (i > 0 && k_values[i] <= k_values[i - 1]) {
                throw Error(ErrorCode::InvalidParams, "k values must be strictly increasing");
            }
        }
        if (n_pairs < 2) throw Error(ErrorCode::InvalidParams, "n_pairs must be at least 2");
        if (replications < 1) throw Error(ErrorCode::InvalidParams, "replications must be at least 1");
    }
};

/// Produces n raw draws of X (logs when log_domain) for a given seed.
struct Source {
    std::string name;
    bool log_domain = false;
    std::function<std::vector<double>(std::size_t n, std::uint64_t seed)> draw;
};

inline Source analytic_source(const AnalyticDist& d) {
    validate(d);
    return {to_string(d), false, [d](std::size_t n, std::uint64_t seed) { return sample(d, n, seed); }};
}

struct SweepRow {
    std::size_t k = 1;
    std::size_t replication = 0;
    std::uint64_t seed = 0;
    BoundReport report;
};

/// Across-replication summary for one k. Stdevs use the n-1 denominator and
/// are +inf with a single replication.
struct KAggregate {
    std::size_t k = 1;
    double lower_mean = 0.0;
    double lower_stdev = kInf;
    double upper_mean = 0.0;
    double upper_stdev = kInf;
    double width_mean = 0.0;
    double width_stdev = kInf;
};

struct SweepResult {
    std::vector<SweepRow> rows;  // k-major, then replication
    std::vector<KAggregate> aggregates;
};

inline std::uint64_t replication_seed(std::uint64_t base_seed, std::size_t replication) noexcept {
    return derive_seed(base_seed, replication);
}

inline std::uint64_t cell_seed(std::uint64_t base_seed, std::size_t replication, std::size_t k) noexcept {
    return derive_seed(replication_seed(base_seed, replication), k);
}

/// Splits 2 * n * k raw draws into k-averaged X/Y halves.
inline PairedSamples pair_up(std::span<const double> raw, std::size_t k, bool log_domain) {
    const std::size_t half = raw.size() / 2;
    return k_sample_pairs(raw.subspan(0, half), raw.subspan(half, half), k, log_domain);
}

inline BoundReport apply_policy(const PairedSamples& s, const CPolicy& policy) {
    switch (policy.kind) {
    case CPolicy::Kind::Zero: return sandwich(s, 0.0);
    case CPolicy::Kind::Fixed: return sandwich(s, policy.value);
    case CPolicy::Kind::PilotOptimal: return sandwich_pilot_optimal(s);
    }
    return sandwich(s, 0.0);
}

inline std::vector<KAggregate> aggregate(const std::vector<SweepRow>& rows, const std::vector<std::size_t>& k_values) {
    std::vector<KAggregate> out;
    for (std::size_t k : k_values) {
        RunningStats lower, upper, width;
        for (const auto& row : rows) {
            if (row.k != k) continue;
            lower.push(row.report.lower_mean);
            upper.push(row.report.upper_mean);
            width.push(row.report.width());
        }
        auto sd = [](const RunningStats& s) { return s.count() < 2 ? kInf : s.stddev(); };
        out.push_back({k, lower.mean(), sd(lower), upper.mean(), sd(upper), width.mean(), sd(width)});
    }
    return out;
}

/// Runs every (k, replication) cell, possibly in parallel; the result is
/// bit-identical for any thread count.
inline SweepResult run_sweep(const Source& source, const SweepConfig& cfg, unsigned threads = 1) {
    cfg.validate();
    if (!source.draw) throw Error(ErrorCode::SourceFailure, "source has no sampler");
    const std::size_t reps = cfg.replications;
    SweepResult result;
    result.rows.resize(cfg.k_values.size() * reps);

    parallel_for(result.rows.size(), threads, [&](std::size_t cell) {
        const std::size_t k = cfg.k_values[cell / reps];
        const std::size_t rep = cell % reps;
        const std::uint64_t seed = cell_seed(cfg.base_seed, rep, k);
        const std::size_t want = 2 * cfg.n_pairs * k;
        std::vector<double> raw;
        try {
            raw = source.draw(want, seed);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw Error(ErrorCode::SourceFailure, source.name + ": " + e.what());
        }
        if (raw.size() != want) {
            throw Error(ErrorCode::SourceFailure, source.name + " returned " + std::to_string(raw.size()) +
                                                      " values, expected " + std::to_string(want));
        }
        const PairedSamples s = pair_up(raw, k, source.log_domain);
        result.rows[cell] = {k, rep, seed, apply_policy(s, cfg.c_policy)};
    });

    result.aggregates = aggregate(result.rows, cfg.k_values);
    return result;
}

inline constexpr std::string_view kSweepCsvHeader =
    "dataset,model,k,replication,n_pairs,seed,lower_mean,lower_stderr,upper_mean,upper_stderr,ratio_mean,c_used,"
    "midpoint,saturated_pairs";

inline void write_sweep_csv(std::ostream& out, const SweepResult& result, std::string_view dataset,
                            std::string_view model) {
    out << kSweepCsvHeader << '\n';
    for (const auto& row : result.rows) {
        const auto& r = row.report;
        csv::write_row(out, {std::string(dataset), std::string(model), csv::number(std::uint64_t{row.k}),
                             csv::number(std::uint64_t{row.replication}), csv::number(std::uint64_t{r.n}),
                             csv::number(row.seed), csv::number(r.lower_mean), csv::number(r.lower_stderr),
                             csv::number(r.upper_mean), csv::number(r.upper_stderr), csv::number(r.ratio_mean),
                             csv::number(r.c_used), csv::number(r.midpoint),
                             csv::number(std::uint64_t{r.saturated_pairs})});
    }
}

}  // namespace gapsandwich
