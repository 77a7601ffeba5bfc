#pragma once

// Distributions with closed-form answers for the quantities the bounds
// estimate (E X, E log X, log E[Y/X]), plus deterministic samplers and the
// `kind:key=val,...` descriptor grammar used on the command line.

#include <boost/math/special_functions/digamma.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "gapsandwich/error.hpp"
#include "gapsandwich/rng.hpp"

namespace gapsandwich {

namespace dist {

struct Constant {
    double c = 1.0;
};

struct Gamma {
    double shape = 1.0;
    double scale = 1.0;
};

struct LogNormal {
    double m = 0.0;
    double sigma = 1.0;
};

struct UniformPos {
    double lo = 0.5;
    double hi = 1.5;
};

// A data law for the VAE case study, not a positive X.
struct Laplace {
    double loc = 0.0;
    double b = 1.0;
};

}  // namespace dist

using AnalyticDist = std::variant<dist::Constant, dist::Gamma, dist::LogNormal, dist::UniformPos, dist::Laplace>;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline void validate(const AnalyticDist& d) {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidParams, what); };
    std::visit(overloaded{
                   [&](const dist::Constant& c) {
                       if (!(c.c > 0.0) || !std::isfinite(c.c)) fail("constant requires c > 0");
                   },
                   [&](const dist::Gamma& g) {
                       if (!(g.shape > 0.0) || !std::isfinite(g.shape)) fail("gamma requires a > 0");
                       if (!(g.scale > 0.0) || !std::isfinite(g.scale)) fail("gamma requires theta > 0");
                   },
                   [&](const dist::LogNormal& l) {
                       if (!std::isfinite(l.m)) fail("lognormal requires finite m");
                       if (!(l.sigma > 0.0) || !std::isfinite(l.sigma)) fail("lognormal requires sigma > 0");
                   },
                   [&](const dist::UniformPos& u) {
                       if (!(u.lo > 0.0) || !std::isfinite(u.hi) || !(u.hi > u.lo)) {
                           fail("uniform requires 0 < lo < hi");
                       }
                   },
                   [&](const dist::Laplace& l) {
                       if (!std::isfinite(l.loc)) fail("laplace requires finite loc");
                       if (!(l.b > 0.0) || !std::isfinite(l.b)) fail("laplace requires b > 0");
                   },
               },
               d);
}

inline double mean(const AnalyticDist& d) {
    return std::visit(overloaded{
                          [](const dist::Constant& c) { return c.c; },
                          [](const dist::Gamma& g) { return g.shape * g.scale; },
                          [](const dist::LogNormal& l) { return std::exp(l.m + 0.5 * l.sigma * l.sigma); },
                          [](const dist::UniformPos& u) { return 0.5 * (u.lo + u.hi); },
                          [](const dist::Laplace& l) { return l.loc; },
                      },
                      d);
}

/// log E X; unavailable for Laplace.
inline std::optional<double> log_mean(const AnalyticDist& d) {
    if (std::holds_alternative<dist::Laplace>(d)) return std::nullopt;
    if (const auto* l = std::get_if<dist::LogNormal>(&d)) return l->m + 0.5 * l->sigma * l->sigma;
    return std::log(mean(d));
}

/// E log X; unavailable for Laplace.
inline std::optional<double> mean_log(const AnalyticDist& d) {
    return std::visit(overloaded{
                          [](const dist::Constant& c) -> std::optional<double> { return std::log(c.c); },
                          [](const dist::Gamma& g) -> std::optional<double> {
                              return boost::math::digamma(g.shape) + std::log(g.scale);
                          },
                          [](const dist::LogNormal& l) -> std::optional<double> { return l.m; },
                          [](const dist::UniformPos& u) -> std::optional<double> {
                              auto xlogx = [](double x) { return x * std::log(x) - x; };
                              return (xlogx(u.hi) - xlogx(u.lo)) / (u.hi - u.lo);
                          },
                          [](const dist::Laplace&) -> std::optional<double> { return std::nullopt; },
                      },
                      d);
}

/// log E[Y/X] for independent X, Y from d. Gamma needs shape > 1
/// (E[1/X] diverges otherwise).
inline std::optional<double> log_ratio_mean(const AnalyticDist& d) {
    return std::visit(overloaded{
                          [](const dist::Constant&) -> std::optional<double> { return 0.0; },
                          [](const dist::Gamma& g) -> std::optional<double> {
                              if (g.shape <= 1.0) return std::nullopt;
                              return std::log(g.shape / (g.shape - 1.0));
                          },
                          [](const dist::LogNormal& l) -> std::optional<double> { return l.sigma * l.sigma; },
                          [](const dist::UniformPos& u) -> std::optional<double> {
                              const double inv_mean = (std::log(u.hi) - std::log(u.lo)) / (u.hi - u.lo);
                              return std::log(0.5 * (u.lo + u.hi) * inv_mean);
                          },
                          [](const dist::Laplace&) -> std::optional<double> { return std::nullopt; },
                      },
                      d);
}

inline std::optional<double> differential_entropy(const AnalyticDist& d) {
    return std::visit(overloaded{
                          [](const dist::Constant&) -> std::optional<double> { return std::nullopt; },
                          [](const dist::Gamma& g) -> std::optional<double> {
                              return g.shape + std::log(g.scale) + std::lgamma(g.shape) +
                                     (1.0 - g.shape) * boost::math::digamma(g.shape);
                          },
                          [](const dist::LogNormal& l) -> std::optional<double> {
                              return l.m + 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * l.sigma * l.sigma);
                          },
                          [](const dist::UniformPos& u) -> std::optional<double> { return std::log(u.hi - u.lo); },
                          [](const dist::Laplace& l) -> std::optional<double> { return 1.0 + std::log(2.0 * l.b); },
                      },
                      d);
}

/// Exact E log f(X) for X ~ Laplace(loc, b): the negative differential entropy.
inline double laplace_loglik(double loc, double b) {
    if (!(b > 0.0) || !std::isfinite(b) || !std::isfinite(loc)) {
        throw Error(ErrorCode::InvalidParams, "laplace_loglik requires b > 0");
    }
    return -(1.0 + std::log(2.0 * b));
}

namespace detail {

// Marsaglia-Tsang for shape >= 1; shape < 1 uses G(a) = G(a + 1) * U^{1/a}.
inline double gamma_unit(double shape, Rng& rng) {
    if (shape < 1.0) {
        const double g = gamma_unit(shape + 1.0, rng);
        return g * std::exp(std::log(rng.uniform()) / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = 0.0;
        double v = 0.0;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        if (u < 1.0 - 0.0331 * (x * x) * (x * x)) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

}  // namespace detail

/// One draw from d using the caller's stream.
inline double draw(const AnalyticDist& d, Rng& rng) {
    return std::visit(overloaded{
                          [](const dist::Constant& c) { return c.c; },
                          [&](const dist::Gamma& g) { return g.scale * detail::gamma_unit(g.shape, rng); },
                          [&](const dist::LogNormal& l) { return std::exp(rng.normal(l.m, l.sigma)); },
                          [&](const dist::UniformPos& u) { return rng.uniform(u.lo, u.hi); },
                          [&](const dist::Laplace& l) {
                              const double u = rng.uniform() - 0.5;
                              const double mag = -l.b * std::log1p(-2.0 * std::abs(u));
                              return u < 0.0 ? l.loc - mag : l.loc + mag;
                          },
                      },
                      d);
}

/// n i.i.d. draws; identical (d, n, seed) gives identical vectors.
inline std::vector<double> sample(const AnalyticDist& d, std::size_t n, std::uint64_t seed) {
    validate(d);
    if (n == 0) throw Error(ErrorCode::InvalidParams, "sample size must be at least 1");
    Rng rng(seed);
    std::vector<double> out(n);
    for (double& v : out) v = draw(d, rng);
    return out;
}

/// Law of the mean of k i.i.d. copies, where it has a closed form:
/// Gamma(a, theta) -> Gamma(k a, theta / k); Constant is unchanged.
inline std::optional<AnalyticDist> k_averaged_law(const AnalyticDist& d, std::size_t k) {
    if (k == 0) return std::nullopt;
    if (const auto* g = std::get_if<dist::Gamma>(&d)) {
        const auto kk = static_cast<double>(k);
        return dist::Gamma{kk * g->shape, g->scale / kk};
    }
    if (std::holds_alternative<dist::Constant>(d)) return d;
    if (k == 1) return d;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Descriptor grammar: kind:key=val{,key=val}

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_decimal(std::string_view key, std::string_view text) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (!text.empty() && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v, std::chars_format::general);
    if (text.empty() || res.ec != std::errc{} || res.ptr != last || !std::isfinite(v)) {
        throw Error(ErrorCode::ParseError, "key '" + std::string(key) + "': '" + std::string(text) +
                                               "' is not a decimal number");
    }
    return v;
}

}  // namespace detail

inline AnalyticDist parse_dist(std::string_view spec) {
    const auto colon = spec.find(':');
    if (colon == std::string_view::npos) {
        throw Error(ErrorCode::ParseError, "expected kind:key=val{,key=val}, got '" + std::string(spec) + "'");
    }
    const std::string kind(spec.substr(0, colon));
    std::map<std::string, double, std::less<>> values;
    std::string_view rest = spec.substr(colon + 1);
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string_view item = rest.substr(0, comma);
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        const auto eq = item.find('=');
        if (eq == std::string_view::npos || eq == 0) {
            throw Error(ErrorCode::ParseError, "malformed key=val item '" + std::string(item) + "'");
        }
        const std::string key(item.substr(0, eq));
        for (char ch : key) {
            if (!(ch >= 'a' && ch <= 'z')) {
                throw Error(ErrorCode::ParseError, "key '" + key + "' must be lowercase letters");
            }
        }
        if (values.contains(key)) throw Error(ErrorCode::ParseError, "key '" + key + "' given twice");
        values.emplace(key, detail::parse_decimal(key, item.substr(eq + 1)));
    }

    auto take = [&](const char* key) {
        const auto it = values.find(key);
        if (it == values.end()) throw Error(ErrorCode::ParseError, "key '" + std::string(key) + "' is missing");
        const double v = it->second;
        values.erase(it);
        return v;
    };
    auto positive = [](const char* key, double v) {
        if (!(v > 0.0)) throw Error(ErrorCode::ParseError, "key '" + std::string(key) + "' must be > 0");
        return v;
    };

    AnalyticDist d;
    if (kind == "constant") {
        d = dist::Constant{positive("c", take("c"))};
    } else if (kind == "gamma") {
        const double a = positive("a", take("a"));
        d = dist::Gamma{a, positive("theta", take("theta"))};
    } else if (kind == "lognormal") {
        const double m = take("m");
        d = dist::LogNormal{m, positive("sigma", take("sigma"))};
    } else if (kind == "uniform") {
        const double lo = positive("lo", take("lo"));
        const double hi = take("hi");
        if (!(hi > lo)) throw Error(ErrorCode::ParseError, "key 'hi' must exceed lo");
        d = dist::UniformPos{lo, hi};
    } else if (kind == "laplace") {
        const double loc = take("loc");
        d = dist::Laplace{loc, positive("b", take("b"))};
    } else {
        throw Error(ErrorCode::ParseError, "unknown distribution kind '" + kind + "'");
    }
    if (!values.empty()) {
        throw Error(ErrorCode::ParseError, "unknown key '" + values.begin()->first + "' for " + kind);
    }
    return d;
}

inline std::string to_string(const AnalyticDist& d) {
    using detail::format_double;
    return std::visit(overloaded{
                          [](const dist::Constant& c) { return "constant:c=" + format_double(c.c); },
                          [](const dist::Gamma& g) {
                              return "gamma:a=" + format_double(g.shape) + ",theta=" + format_double(g.scale);
                          },
                          [](const dist::LogNormal& l) {
                              return "lognormal:m=" + format_double(l.m) + ",sigma=" + format_double(l.sigma);
                          },
                          [](const dist::UniformPos& u) {
                              return "uniform:lo=" + format_double(u.lo) + ",hi=" + format_double(u.hi);
                          },
                          [](const dist::Laplace& l) {
                              return "laplace:loc=" + format_double(l.loc) + ",b=" + format_double(l.b);
                          },
                      },
                      d);
}

}  // namespace gapsandwich
