#pragma once

// Lower/upper estimates of log E X from paired samples (X, Y) of a positive
// variable, Y an independent copy of X:
//
//   E log X  <=  log E X  <=  E log X - 1 + C + e^{-C} E[Y/X]     (any real C)
//
// C = 0 gives the first-order bound E log X + (E[Y/X] - 1); C = log E[Y/X]
// gives the tightest member, E log X + log E[Y/X]. Every per-pair term is
// evaluated from log y - log x so heavy-tailed ratios do not overflow.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "gapsandwich/error.hpp"
#include "gapsandwich/numeric.hpp"
#include "gapsandwich/paired_samples.hpp"

namespace gapsandwich {

struct BoundReport {
    double lower_mean = 0.0;
    double lower_stderr = kInf;
    double upper_mean = 0.0;
    double upper_stderr = kInf;
    double ratio_mean = 1.0;  // estimate of E[Y/X]
    double c_used = 0.0;
    std::size_t n = 0;
    std::size_t k = 1;
    double midpoint = 0.0;
    double midpoint_stderr = kInf;
    double c_star = 0.0;  // optimal_c on the same pairs
    double c_star_stderr = kInf;
    std::size_t saturated_pairs = 0;

    [[nodiscard]] double width() const noexcept { return upper_mean - lower_mean; }
};

namespace detail {

// Reduces f(i) over all pairs. chunk == 0 is a single pass; otherwise each
// chunk gets its own accumulator and the partials are merged left to right.
template <typename Term>
RunningStats reduce_pairs(std::size_t n, std::size_t chunk, Term&& term) {
    if (chunk == 0 || chunk >= n) {
        RunningStats acc;
        for (std::size_t i = 0; i < n; ++i) acc.push(term(i));
        return acc;
    }
    RunningStats total;
    for (std::size_t first = 0; first < n; first += chunk) {
        RunningStats part;
        const std::size_t last = std::min(n, first + chunk);
        for (std::size_t i = first; i < last; ++i) part.push(term(i));
        total.merge(part);
    }
    return total;
}

inline double log_ratio_lse(const PairedSamples& s, std::size_t chunk) {
    const auto lx = s.log_xs();
    const auto ly = s.log_ys();
    const std::size_t n = s.size();
    const std::size_t step = (chunk == 0 || chunk >= n) ? n : chunk;
    LogSumExp total;
    for (std::size_t first = 0; first < n; first += step) {
        LogSumExp part;
        const std::size_t last = std::min(n, first + step);
        for (std::size_t i = first; i < last; ++i) part.push(ly[i] - lx[i]);
        total.merge(part);
    }
    return total.value();
}

}  // namespace detail

/// Mean and stderr of log x_i: the Jensen lower bound on log E X.
inline Estimate jensen_lower(const PairedSamples& s, std::size_t chunk = 0) {
    const auto lx = s.log_xs();
    return detail::reduce_pairs(s.size(), chunk, [&](std::size_t i) { return lx[i]; }).estimate();
}

/// Mean and stderr of y_i / x_i - 1, the first-order gap term. Ratios with
/// log y - log x above kMaxExponent are clamped and counted in `saturated`.
inline Estimate gap_upper_first_order(const PairedSamples& s, std::size_t chunk = 0) {
    const auto lx = s.log_xs();
    const auto ly = s.log_ys();
    std::size_t saturated = 0;
    const auto acc = detail::reduce_pairs(s.size(), chunk, [&](std::size_t i) {
        return clamped_exp(ly[i] - lx[i], saturated) - 1.0;
    });
    return acc.estimate(saturated);
}

/// Averages consecutive, non-overlapping blocks of k raw draws. With
/// log_domain the inputs are logs and each block becomes lse - log k.
inline PairedSamples k_sample_pairs(std::span<const double> raw_x, std::span<const double> raw_y, std::size_t k,
                                    bool log_domain = false) {
    if (k == 0) throw Error(ErrorCode::InvalidK, "k must be at least 1");
    if (raw_x.size() % k != 0 || raw_y.size() % k != 0) {
        throw Error(ErrorCode::LengthNotDivisible, "raw lengths " + std::to_string(raw_x.size()) + "/" +
                                                       std::to_string(raw_y.size()) + " not divisible by k=" +
                                                       std::to_string(k));
    }
    auto reduce = [&](std::span<const double> raw) {
        std::vector<double> out(raw.size() / k);
        for (std::size_t b = 0; b < out.size(); ++b) {
            const auto block = raw.subspan(b * k, k);
            if (log_domain) {
                out[b] = log_mean_exp(block);
            } else {
                double sum = 0.0;
                for (double v : block) sum += v;
                out[b] = sum / static_cast<double>(k);
            }
        }
        return out;
    };
    if (log_domain) return PairedSamples::logs(reduce(raw_x), reduce(raw_y), k);
    return PairedSamples::linear(reduce(raw_x), reduce(raw_y), k);
}

/// Monte Carlo estimate of E log X - 1 + c + e^{-c} E[Y/X], one term per pair.
inline Estimate improved_upper(const PairedSamples& s, double c, std::size_t chunk = 0) {
    if (!std::isfinite(c)) throw Error(ErrorCode::InvalidParams, "c must be finite");
    const auto lx = s.log_xs();
    const auto ly = s.log_ys();
    std::size_t saturated = 0;
    const auto acc = detail::reduce_pairs(s.size(), chunk, [&](std::size_t i) {
        return lx[i] - 1.0 + c + clamped_exp(-c + ly[i] - lx[i], saturated);
    });
    return acc.estimate(saturated);
}

/// log of the sample mean of y_i / x_i; the C minimizing C + e^{-C} E[Y/X].
inline double optimal_c(const PairedSamples& s, std::size_t chunk = 0) {
    return detail::log_ratio_lse(s, chunk) - std::log(static_cast<double>(s.size()));
}

/// optimal_c with a delta-method stderr: sd(r_i / rbar) / sqrt(n).
inline Estimate optimal_c_estimate(const PairedSamples& s, std::size_t chunk = 0) {
    const double c = optimal_c(s, chunk);
    const auto lx = s.log_xs();
    const auto ly = s.log_ys();
    std::size_t saturated = 0;
    const auto acc = detail::reduce_pairs(s.size(), chunk, [&](std::size_t i) {
        return clamped_exp(ly[i] - lx[i] - c, saturated);
    });
    return {c, acc.stderr_of_mean(), s.size(), saturated};
}

/// E log X + log E[Y/X]. Not additive over datapoints, so it serves for
/// reporting and as the seed for C rather than as a training objective.
inline double optimal_upper(const PairedSamples& s, std::size_t chunk = 0) {
    return jensen_lower(s, chunk).mean + optimal_c(s, chunk);
}

/// E log X + 0.5 log E[Y/X]: the centre of the optimal interval, exact when X
/// is log-normal and a heuristic point estimate otherwise.
inline double midpoint_evidence(const PairedSamples& s, std::size_t chunk = 0) {
    return jensen_lower(s, chunk).mean + 0.5 * optimal_c(s, chunk);
}

/// midpoint_evidence with a delta-method stderr from the per-pair influence
/// values log x_i + r_i / (2 rbar).
inline Estimate midpoint_estimate(const PairedSamples& s, std::size_t chunk = 0) {
    const double c = optimal_c(s, chunk);
    const auto lx = s.log_xs();
    const auto ly = s.log_ys();
    std::size_t saturated = 0;
    const auto acc = detail::reduce_pairs(s.size(), chunk, [&](std::size_t i) {
        return lx[i] + 0.5 * clamped_exp(ly[i] - lx[i] - c, saturated);
    });
    return {jensen_lower(s, chunk).mean + 0.5 * c, acc.stderr_of_mean(), s.size(), saturated};
}

/// Lower bound, C-bound at `c`, and the midpoint on one set of pairs.
inline BoundReport sandwich(const PairedSamples& s, double c, std::size_t chunk = 0) {
    const Estimate lower = jensen_lower(s, chunk);
    const Estimate upper = improved_upper(s, c, chunk);
    const Estimate cstar = optimal_c_estimate(s, chunk);
    const Estimate mid = midpoint_estimate(s, chunk);

    BoundReport r;
    r.lower_mean = lower.mean;
    r.lower_stderr = lower.std_error;
    r.upper_mean = upper.mean;
    r.upper_stderr = upper.std_error;
    std::size_t ratio_saturated = 0;
    r.ratio_mean = clamped_exp(cstar.mean, ratio_saturated);
    r.c_used = c;
    r.n = s.size();
    r.k = s.k();
    r.midpoint = lower.mean + 0.5 * (cstar.mean);
    r.midpoint_stderr = mid.std_error;
    r.c_star = cstar.mean;
    r.c_star_stderr = cstar.std_error;
    r.saturated_pairs = upper.saturated;
    return r;
}

/// Number of leading pairs used to pick C under the pilot policy:
/// max(64, n/10), never more than half the pairs.
inline std::size_t pilot_size(std::size_t n) noexcept {
    return std::max<std::size_t>(1, std::min(std::max<std::size_t>(64, n / 10), n / 2));
}

/// C = optimal_c on the pilot pairs, then the sandwich on the remaining pairs
/// with that C frozen. Needs at least two pairs.
inline BoundReport sandwich_pilot_optimal(const PairedSamples& s, std::size_t chunk = 0) {
    if (s.size() < 2) throw Error(ErrorCode::EmptySamples, "pilot policy needs at least 2 pairs");
    const std::size_t pilot = pilot_size(s.size());
    const double c = optimal_c(s.slice(0, pilot), chunk);
    return sandwich(s.slice(pilot, s.size()), c, chunk);
}

/// Checks that h(x) = h_scale * exp(-g(x) - 1) satisfies
///   log a <= g + a h   for every g in g_values and a in a_grid,
/// and that h cannot be lowered: with h * (1 - 1e-6) some grid point (near
/// a = exp(1 + g)) violates the inequality. Returns true only if both hold.
inline bool optimal_h_check(std::span<const double> g_values, std::span<const double> a_grid,
                            double h_scale = 1.0) {
    if (g_values.empty() || a_grid.empty()) throw Error(ErrorCode::EmptyGrid, "g values and a grid must be nonempty");
    for (double a : a_grid) {
        if (!(a > 0.0) || !std::isfinite(a)) throw Error(ErrorCode::InvalidParams, "a grid must be positive");
    }
    constexpr double kDelta = 1e-6;
    for (double g : g_values) {
        if (!std::isfinite(g)) throw Error(ErrorCode::InvalidParams, "g values must be finite");
        const double h = h_scale * std::exp(-g - 1.0);
        bool lowered_fails = false;
        for (double a : a_grid) {
            const double lhs = std::log(a);
            const double tol = 1e-12 * std::max({1.0, std::abs(lhs), std::abs(g)});
            if (lhs > g + a * h + tol) return false;
            if (lhs > g + a * h * (1.0 - kDelta)) lowered_fails = true;
        }
        if (!lowered_fails) return false;
    }
    return true;
}

}  // namespace gapsandwich
