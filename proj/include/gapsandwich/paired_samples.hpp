#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gapsandwich/error.hpp"

namespace gapsandwich {

/// Draws of a positive variable X (or of its k-sample mean) together with an
/// independent copy Y from the same law. Values are kept as given; the
/// natural logs are cached because every estimator works on them.
class PairedSamples {
public:
    /// Linear-domain values; every element must be positive and finite.
    static PairedSamples linear(std::vector<double> xs, std::vector<double> ys, std::size_t k = 1) {
        return PairedSamples(std::move(xs), std::move(ys), k, false);
    }

    /// Values that are already natural logs of the underlying samples.
    static PairedSamples logs(std::vector<double> log_xs, std::vector<double> log_ys, std::size_t k = 1) {
        return PairedSamples(std::move(log_xs), std::move(log_ys), k, true);
    }

    [[nodiscard]] std::size_t size() const noexcept { return xs_.size(); }
    [[nodiscard]] std::size_t k() const noexcept { return k_; }
    [[nodiscard]] bool log_domain() const noexcept { return log_domain_; }

    [[nodiscard]] std::span<const double> xs() const noexcept { return xs_; }
    [[nodiscard]] std::span<const double> ys() const noexcept { return ys_; }
    [[nodiscard]] std::span<const double> log_xs() const noexcept { return log_domain_ ? xs_ : log_xs_; }
    [[nodiscard]] std::span<const double> log_ys() const noexcept { return log_domain_ ? ys_ : log_ys_; }

    /// Pairs [first, last) as a new sample set with the same k and domain.
    [[nodiscard]] PairedSamples slice(std::size_t first, std::size_t last) const {
        if (first >= last || last > size()) {
            throw Error(ErrorCode::InvalidParams, "slice [" + std::to_string(first) + ", " +
                                                      std::to_string(last) + ") out of range");
        }
        return PairedSamples(std::vector<double>(xs_.begin() + first, xs_.begin() + last),
                             std::vector<double>(ys_.begin() + first, ys_.begin() + last), k_, log_domain_);
    }

private:
    PairedSamples(std::vector<double> xs, std::vector<double> ys, std::size_t k, bool log_domain)
        : xs_(std::move(xs)), ys_(std::move(ys)), k_(k), log_domain_(log_domain) {
        if (k_ == 0) throw Error(ErrorCode::InvalidK, "k must be at least 1");
        if (xs_.empty() || ys_.empty()) throw Error(ErrorCode::EmptySamples, "paired samples are empty");
        if (xs_.size() != ys_.size()) {
            throw Error(ErrorCode::LengthMismatch, "xs has " + std::to_string(xs_.size()) + " values, ys has " +
                                                       std::to_string(ys_.size()));
        }
        if (log_domain_) {
            check_logs(xs_, "xs");
            check_logs(ys_, "ys");
        } else {
            log_xs_ = take_logs(xs_, "xs");
            log_ys_ = take_logs(ys_, "ys");
        }
    }

    static void check_logs(const std::vector<double>& v, const char* name) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i] == -INFINITY) {
                throw Error(ErrorCode::NonPositiveSample, std::string(name) + "[" + std::to_string(i) + "] is log(0)");
            }
            if (!std::isfinite(v[i])) {
                throw Error(ErrorCode::InvalidParams,
                            std::string(name) + "[" + std::to_string(i) + "] is not a finite log value");
            }
        }
    }

    static std::vector<double> take_logs(const std::vector<double>& v, const char* name) {
        std::vector<double> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!(v[i] > 0.0) || !std::isfinite(v[i])) {
                throw Error(ErrorCode::NonPositiveSample,
                            std::string(name) + "[" + std::to_string(i) + "] = " + std::to_string(v[i]) +
                                " is not positive and finite");
            }
            out[i] = std::log(v[i]);
        }
        return out;
    }

    std::vector<double> xs_;
    std::vector<double> ys_;
    std::vector<double> log_xs_;
    std::vector<double> log_ys_;
    std::size_t k_;
    bool log_domain_;
};

}  // namespace gapsandwich
