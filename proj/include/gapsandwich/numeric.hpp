#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

#include "gapsandwich/error.hpp"

namespace gapsandwich {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Exponents above this are clamped before exp() so a single extreme pair
// cannot turn a whole report into inf.
inline constexpr double kMaxExponent = 700.0;

/// Mean with its Monte Carlo standard error (sample stdev / sqrt(n), n-1
/// denominator). n == 1 reports an infinite stderr.
struct Estimate {
    double mean = 0.0;
    double std_error = kInf;
    std::size_t n = 0;
    std::size_t saturated = 0;
};

/// Welford accumulator. merge() lets chunks be reduced in any grouping.
class RunningStats {
public:
    constexpr void push(double x) noexcept {
        ++n_;
        const double delta = x - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (x - mean_);
    }

    constexpr void merge(const RunningStats& other) noexcept {
        if (other.n_ == 0) return;
        if (n_ == 0) {
            *this = other;
            return;
        }
        const double na = static_cast<double>(n_);
        const double nb = static_cast<double>(other.n_);
        const double total = na + nb;
        const double delta = other.mean_ - mean_;
        mean_ += delta * (nb / total);
        m2_ += other.m2_ + delta * delta * (na * nb / total);
        n_ += other.n_;
    }

    [[nodiscard]] constexpr std::size_t count() const noexcept { return n_; }
    [[nodiscard]] constexpr double mean() const noexcept { return mean_; }

    [[nodiscard]] double variance() const noexcept {
        if (n_ < 2) return std::numeric_limits<double>::quiet_NaN();
        return m2_ / static_cast<double>(n_ - 1);
    }

    [[nodiscard]] double stddev() const noexcept { return std::sqrt(variance()); }

    [[nodiscard]] double stderr_of_mean() const noexcept {
        if (n_ < 2) return kInf;
        return std::sqrt(variance() / static_cast<double>(n_));
    }

    [[nodiscard]] Estimate estimate(std::size_t saturated = 0) const noexcept {
        return {mean_, stderr_of_mean(), n_, saturated};
    }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

/// Streaming log-sum-exp: keeps a running max and a sum scaled by it.
class LogSumExp {
public:
    void push(double v) noexcept {
        if (v == -kInf) return;
        if (v <= max_) {
            sum_ += std::exp(v - max_);
        } else {
            sum_ = sum_ * std::exp(max_ - v) + 1.0;
            max_ = v;
        }
        ++n_;
    }

    void merge(const LogSumExp& other) noexcept {
        if (other.n_ == 0) return;
        if (n_ == 0) {
            *this = other;
            return;
        }
        if (other.max_ <= max_) {
            sum_ += other.sum_ * std::exp(other.max_ - max_);
        } else {
            sum_ = sum_ * std::exp(max_ - other.max_) + other.sum_;
            max_ = other.max_;
        }
        n_ += other.n_;
    }

    [[nodiscard]] double value() const noexcept {
        if (sum_ == 0.0) return -kInf;
        return max_ + std::log(sum_);
    }

    [[nodiscard]] std::size_t count() const noexcept { return n_; }

private:
    double max_ = -kInf;
    double sum_ = 0.0;
    std::size_t n_ = 0;
};

inline double log_sum_exp(std::span<const double> values) {
    if (values.empty()) throw Error(ErrorCode::EmptySamples, "log_sum_exp of an empty range");
    const double m = *std::max_element(values.begin(), values.end());
    if (m == -kInf) return -kInf;
    if (std::isinf(m)) return m;
    double sum = 0.0;
    for (double v : values) sum += std::exp(v - m);
    return m + std::log(sum);
}

/// log((1/n) * sum exp(v_i))
inline double log_mean_exp(std::span<const double> values) {
    return log_sum_exp(values) - std::log(static_cast<double>(values.size()));
}

/// exp(v) with the exponent clamped at kMaxExponent; `saturated` is bumped
/// whenever the clamp fires.
inline double clamped_exp(double v, std::size_t& saturated) noexcept {
    if (v > kMaxExponent) {
        ++saturated;
        return std::exp(kMaxExponent);
    }
    return std::exp(v);
}

}  // namespace gapsandwich
