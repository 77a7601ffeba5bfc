#pragma once

// Self-check suite behind `gapsandwich verify`. Each property reports a
// non-negative deviation statistic and the tolerance it must stay within;
// slack = tolerance - measured. Results depend only on the seed and the
// quick flag, never on the thread count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "gapsandwich/analytic_dists.hpp"
#include "gapsandwich/bounds.hpp"
#include "gapsandwich/checkpoint.hpp"
#include "gapsandwich/csv.hpp"
#include "gapsandwich/mc_harness.hpp"
#include "gapsandwich/parallel.hpp"
#include "gapsandwich/vae_toy.hpp"

namespace gapsandwich::verify {

struct Options {
    std::uint64_t seed = 0;
    bool quick = false;  // 10x fewer samples for the statistical properties
    unsigned threads = 1;
    std::string inject_fault;  // "" or "c0-identity"
};

struct PropertyResult {
    std::string name;
    bool passed = false;
    double measured = 0.0;
    double tolerance = 0.0;
    std::size_t n = 0;

    [[nodiscard]] double slack() const noexcept { return tolerance - measured; }
};

namespace detail {

struct Context {
    const Options& opt;
    std::uint64_t seed;
    [[nodiscard]] std::size_t scaled(std::size_t n) const { return opt.quick ? n / 10 : n; }
};

inline PairedSamples draw_pairs(const AnalyticDist& d, std::size_t n, std::size_t k, std::uint64_t seed) {
    const auto raw = sample(d, 2 * n * k, seed);
    return pair_up(raw, k, false);
}

inline double zscore(double value, double expected, double se) { return std::abs(value - expected) / se; }

inline PropertyResult result(std::string name, double measured, double tolerance, std::size_t n) {
    return {std::move(name), measured <= tolerance, measured, tolerance, n};
}

inline PropertyResult c0_identity(const Context& ctx) {
    const std::size_t n = 10000;
    const auto s = draw_pairs(dist::Gamma{2.0, 1.0}, n, 1, ctx.seed);
    double upper = improved_upper(s, 0.0).mean;
    if (ctx.opt.inject_fault == "c0-identity") upper *= 1.0 + 1e-9;
    const double sum = jensen_lower(s).mean + gap_upper_first_order(s).mean;
    const double rel = std::abs(upper - sum) / std::max({1.0, std::abs(upper), std::abs(sum)});
    return result("c0_identity", rel, 1e-12, n);
}

inline PropertyResult gamma_gap_closed_form(const Context& ctx) {
    const std::size_t n = ctx.scaled(100000);
    double worst = 0.0;
    for (std::size_t k : {1u, 4u, 8u}) {
        const auto gap = gap_upper_first_order(draw_pairs(dist::Gamma{2.0, 1.0}, n, k, derive_seed(ctx.seed, k)));
        worst = std::max(worst, zscore(gap.mean, 1.0 / (2.0 * static_cast<double>(k) - 1.0), gap.std_error));
    }
    return result("gamma_gap_closed_form", worst, 3.0, n);
}

// sigma = 2 gives Y/X = exp(N(0, 8)); its sample stderr is biased low, and
// over 1000 seeds at n = 1e5 the z-score exceeded 3 / 4 / 5 in 4.6% / 1.3% /
// 0.2% of runs. That case gets its own property with a 5 stderr tolerance.
inline std::vector<dist::LogNormal> lognormal_cases(bool heavy) {
    if (heavy) return {{2.0, 2.0}};
    return {{0.0, 1.0}, {-1.0, 0.5}};
}

inline double lognormal_worst(const Context& ctx, bool heavy, bool midpoint) {
    const std::size_t n = ctx.scaled(100000);
    const auto cases = lognormal_cases(heavy);
    double worst = 0.0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto& d = cases[i];
        const auto s = draw_pairs(d, n, 1, derive_seed(ctx.seed, i));
        const double var = d.sigma * d.sigma;
        const Estimate e = midpoint ? midpoint_estimate(s) : optimal_c_estimate(s);
        worst = std::max(worst, zscore(e.mean, midpoint ? d.m + 0.5 * var : var, e.std_error));
    }
    return worst;
}

inline PropertyResult lognormal_midpoint(const Context& ctx) {
    return result("lognormal_midpoint", lognormal_worst(ctx, false, true), 3.0, ctx.scaled(100000));
}

inline PropertyResult lognormal_optimal_c(const Context& ctx) {
    return result("lognormal_optimal_c", lognormal_worst(ctx, false, false), 3.0, ctx.scaled(100000));
}

inline PropertyResult lognormal_heavy_midpoint(const Context& ctx) {
    return result("lognormal_heavy_midpoint", lognormal_worst(ctx, true, true), 5.0, ctx.scaled(100000));
}

inline PropertyResult lognormal_heavy_optimal_c(const Context& ctx) {
    return result("lognormal_heavy_optimal_c", lognormal_worst(ctx, true, false), 5.0, ctx.scaled(100000));
}

// Largest standardized step against the expected direction over k in {1,2,4,8,16}.
inline double uniform_k_trend(const Context& ctx, bool width) {
    const std::size_t n = ctx.scaled(100000);
    const std::vector<std::size_t> ks{1, 2, 4, 8, 16};
    std::vector<Estimate> est;
    for (std::size_t k : ks) {
        const auto s = draw_pairs(dist::UniformPos{0.5, 1.5}, n, k, derive_seed(ctx.seed, k));
        est.push_back(width ? gap_upper_first_order(s) : jensen_lower(s));
    }
    double worst = -kInf;
    for (std::size_t i = 1; i < est.size(); ++i) {
        const double step = width ? est[i].mean - est[i - 1].mean : est[i - 1].mean - est[i].mean;
        worst = std::max(worst, step / std::hypot(est[i].std_error, est[i - 1].std_error));
    }
    return std::max(worst, 0.0);
}

inline PropertyResult uniform_lower_monotone(const Context& ctx) {
    return result("uniform_lower_monotone", uniform_k_trend(ctx, false), 3.0, ctx.scaled(100000));
}

inline PropertyResult uniform_width_shrinks(const Context& ctx) {
    return result("uniform_width_shrinks", uniform_k_trend(ctx, true), 3.0, ctx.scaled(100000));
}

inline const std::vector<AnalyticDist>& suite() {
    static const std::vector<AnalyticDist> dists{
        dist::Constant{2.5},       dist::Gamma{2.0, 1.0},      dist::Gamma{0.5, 3.0},       dist::LogNormal{0.0, 1.0},
        dist::LogNormal{-1.0, 0.5}, dist::UniformPos{0.5, 1.5}, dist::UniformPos{0.1, 10.0}};
    return dists;
}

inline PropertyResult sandwich_ordering(const Context& ctx) {
    const std::size_t n = ctx.scaled(20000);
    double worst = 0.0;
    std::uint64_t stream = 0;
    for (const auto& d : suite()) {
        for (std::size_t k : {1u, 4u}) {
            const auto s = draw_pairs(d, n, k, derive_seed(ctx.seed, stream++));
            for (double c : {-1.0, 0.0, 1.0, optimal_c(s)}) {
                const auto r = sandwich(s, c);
                const double se = std::hypot(r.lower_stderr, r.upper_stderr);
                const double gap = r.lower_mean - r.upper_mean;
                worst = std::max(worst, se > 0.0 ? gap / se : (gap > 1e-12 ? kInf : 0.0));
            }
        }
    }
    return result("sandwich_ordering", worst, 3.0, n);
}

inline PropertyResult optimal_c_stationary(const Context& ctx) {
    const std::size_t n = ctx.scaled(20000);
    double worst = 0.0;
    std::uint64_t stream = 0;
    for (const auto& d : suite()) {
        const auto s = draw_pairs(d, n, 1, derive_seed(ctx.seed, stream++));
        const double c = optimal_c(s);
        const double at = improved_upper(s, c).mean;
        for (double shift : {-0.1, 0.1}) worst = std::max(worst, at - improved_upper(s, c + shift).mean);
    }
    return result("optimal_c_stationary", worst, 1e-12, n);
}

inline PropertyResult lemma_minimality(const Context&) {
    std::vector<double> grid;
    for (int i = 0; i <= 20000; ++i) grid.push_back(std::pow(10.0, -3.0 + 6.0 * i / 20000.0));
    double failures = 0.0;
    for (double c : {-1.0, 0.0, 1.0}) {
        std::vector<double> g;
        for (double x : {0.1, 0.5, 1.0, 2.0, 10.0}) g.push_back(std::log(x) - 1.0 + c);
        if (!optimal_h_check(g, grid)) failures += 1.0;
        if (optimal_h_check(g, grid, 0.999)) failures += 1.0;
    }
    return result("lemma_minimality", failures, 0.0, grid.size());
}

inline PropertyResult chunking_invariance(const Context& ctx) {
    const std::size_t n = ctx.scaled(50000);
    double worst = 0.0;
    std::uint64_t stream = 0;
    for (const auto& d : suite()) {
        const auto s = draw_pairs(d, n, 2, derive_seed(ctx.seed, stream++));
        const auto whole = sandwich(s, 0.3);
        for (std::size_t chunk : {7u, 1000u, 4096u}) {
            const auto part = sandwich(s, 0.3, chunk);
            worst = std::max({worst, std::abs(part.lower_mean - whole.lower_mean),
                              std::abs(part.upper_mean - whole.upper_mean), std::abs(part.c_star - whole.c_star)});
        }
    }
    return result("chunking_invariance", worst, 1e-9, n);
}

inline PropertyResult scale_equivariance(const Context& ctx) {
    const std::size_t n = ctx.scaled(20000);
    const double lambda = 3.7;
    double worst = 0.0;
    std::uint64_t stream = 0;
    for (const auto& d : suite()) {
        const auto s = draw_pairs(d, n, 1, derive_seed(ctx.seed, stream++));
        std::vector<double> xs(s.xs().begin(), s.xs().end());
        std::vector<double> ys(s.ys().begin(), s.ys().end());
        for (auto& v : xs) v *= lambda;
        for (auto& v : ys) v *= lambda;
        const auto t = PairedSamples::linear(xs, ys);
        const double shift = std::log(lambda);
        auto rel = [](double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); };
        worst = std::max({worst, rel(jensen_lower(t).mean, jensen_lower(s).mean + shift),
                          rel(improved_upper(t, 0.7).mean, improved_upper(s, 0.7).mean + shift),
                          rel(optimal_c(t), optimal_c(s))});
    }
    return result("scale_equivariance", worst, 1e-12, n);
}

inline PropertyResult sweep_reproducible(const Context& ctx) {
    SweepConfig cfg;
    cfg.k_values = {1, 2, 4};
    cfg.n_pairs = ctx.scaled(2000);
    cfg.replications = 4;
    cfg.base_seed = ctx.seed;
    cfg.c_policy = CPolicy::pilot_optimal();
    const auto src = analytic_source(dist::LogNormal{0.0, 1.0});
    const auto serial = run_sweep(src, cfg, 1);
    const auto parallel = run_sweep(src, cfg, std::max(2u, ctx.opt.threads));
    double mismatches = 0.0;
    for (std::size_t i = 0; i < serial.rows.size(); ++i) {
        const auto& a = serial.rows[i].report;
        const auto& b = parallel.rows[i].report;
        if (csv::number(a.lower_mean) != csv::number(b.lower_mean) ||
            csv::number(a.upper_mean) != csv::number(b.upper_mean) || csv::number(a.c_used) != csv::number(b.c_used)) {
            mismatches += 1.0;
        }
    }
    return result("sweep_reproducible", mismatches, 0.0, cfg.n_pairs);
}

inline double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

inline PropertyResult vae_gradient(const Context& ctx, vae::Objective objective, std::string name) {
    using vae::ToyVae;
    Rng rng(ctx.seed);
    double worst = 0.0;
    const double h = 1e-5;
    for (int trial = 0; trial < 5; ++trial) {
        const auto m = ToyVae::init(rng());
        std::vector<double> xs{rng.normal(0.0, 0.5)};
        std::vector<double> eps(objective.draws());
        rng.fill_normal(eps);
        auto grad = vae::zero_like(m);
        vae::batch_objective(m, xs, eps, objective.kind, &grad);
        const auto analytic = grad.flat();
        const auto base = m.flat();
        for (int c = 0; c < 10; ++c) {
            const std::size_t i = rng.index(ToyVae::kTrainableParams);
            auto plus = base;
            auto minus = base;
            plus[i] += h;
            minus[i] -= h;
            ToyVae mp = m;
            ToyVae mm = m;
            mp.set_flat(plus);
            mm.set_flat(minus);
            const double fd = (vae::batch_objective(mp, xs, eps, objective.kind) -
                               vae::batch_objective(mm, xs, eps, objective.kind)) /
                              (2.0 * h);
            worst = std::max(worst, relative_error(analytic[i], fd));
        }
    }
    return result(std::move(name), worst, 1e-4, 50);
}

inline PropertyResult cnet_gradient(const Context& ctx) {
    using Net = TinyMlp<1>;
    Rng rng(ctx.seed);
    double worst = 0.0;
    const double h = 1e-5;
    for (int trial = 0; trial < 5; ++trial) {
        const auto c = vae::CNet::init(rng());
        const std::vector<double> xs{rng.normal()};
        const std::vector<double> lr{rng.normal(0.0, 0.3)};
        vae::CNet grad{};
        vae::cnet_objective(c, xs, lr, &grad);
        std::vector<double> analytic(Net::kParams), base(Net::kParams);
        grad.net.write_flat(analytic);
        c.net.write_flat(base);
        for (int k = 0; k < 10; ++k) {
            const std::size_t i = rng.index(Net::kParams);
            auto plus = base;
            auto minus = base;
            plus[i] += h;
            minus[i] -= h;
            vae::CNet cp = c;
            vae::CNet cm = c;
            cp.net.read_flat(plus);
            cm.net.read_flat(minus);
            const double fd = (vae::cnet_objective(cp, xs, lr) - vae::cnet_objective(cm, xs, lr)) / (2.0 * h);
            worst = std::max(worst, relative_error(analytic[i], fd));
        }
    }
    return result("cnet_gradient", worst, 1e-4, 50);
}

inline PropertyResult vae_perfect_constant(const Context& ctx) {
    const double x = 0.25;
    const double v = 0.3;
    vae::ToyVae m;
    m.decoder_var = v;
    m.decoder.b2[0] = x;  // dec(z) = x, q(z|x) = N(0, 1) = p(z)
    const double expected = -0.5 * std::log(2.0 * std::numbers::pi * v);
    const std::vector<double> data(100, x);
    double worst = 0.0;
    for (std::size_t k : {1u, 8u}) {
        const auto res = vae::evaluate(m, vae::FixedC{0.0}, data, k, ctx.seed);
        for (const auto& r : res.records) worst = std::max({worst, std::abs(r.s - expected), std::abs(r.S - r.s)});
    }
    return result("vae_perfect_constant", worst, 1e-12, data.size());
}

inline PropertyResult vae_elbo_chain(const Context& ctx) {
    const auto m = vae::ToyVae::init(ctx.seed);
    double worst = 0.0;
    for (double x : {-0.4, 0.0, 0.3}) {
        for (std::size_t k : {2u, 8u}) {
            const std::size_t outer = 20;
            worst = std::max(worst, vae::elbo(m, x, k * outer, ctx.seed) - vae::iw_elbo(m, x, k, outer, ctx.seed));
        }
    }
    return result("vae_elbo_below_iw_elbo", worst, 1e-12, 20);
}

inline PropertyResult vae_reparameterization(const Context& ctx) {
    const auto m = vae::ToyVae::init(ctx.seed);
    const auto q = m.encode(0.35);
    const double sigma = std::exp(q.log_sigma);
    const std::size_t n = ctx.scaled(100000);
    Rng rng(derive_seed(ctx.seed, 1));
    RunningStats z;
    for (std::size_t i = 0; i < n; ++i) z.push(q.mu + sigma * rng.normal());
    const double nn = static_cast<double>(n);
    const double zm = zscore(z.mean(), q.mu, sigma / std::sqrt(nn));
    const double zv = zscore(z.variance(), sigma * sigma, sigma * sigma * std::sqrt(2.0 / (nn - 1.0)));
    return result("vae_reparameterization", std::max(zm, zv), 4.0, n);
}

inline PropertyResult checkpoint_roundtrip(const Context& ctx) {
    const auto m = vae::ToyVae::init(ctx.seed, 0.07);
    auto params = m.flat();
    params.push_back(m.decoder_var);
    const auto decoded = checkpoint::decode(vae::kVaeMagic, checkpoint::encode(vae::kVaeMagic, params));
    double mismatches = decoded == params ? 0.0 : 1.0;
    try {
        checkpoint::decode(vae::kCNetMagic, checkpoint::encode(vae::kVaeMagic, params));
        mismatches += 1.0;
    } catch (const Error&) {
    }
    return result("checkpoint_roundtrip", mismatches, 0.0, params.size());
}

inline PropertyResult laplace_loglik_mc(const Context& ctx) {
    const double b = 0.2;
    const std::size_t n = ctx.scaled(100000);
    const auto xs = sample(dist::Laplace{0.0, b}, n, ctx.seed);
    RunningStats ll;
    for (double x : xs) ll.push(-std::log(2.0 * b) - std::abs(x) / b);
    return result("laplace_loglik", zscore(ll.mean(), laplace_loglik(0.0, b), ll.stderr_of_mean()), 4.0, n);
}

inline PropertyResult sampler_moments(const Context& ctx) {
    const std::size_t n = ctx.scaled(200000);
    double worst = 0.0;
    std::uint64_t stream = 0;
    for (const auto& d : suite()) {
        const auto xs = sample(d, n, derive_seed(ctx.seed, stream++));
        RunningStats x, lx;
        for (double v : xs) {
            x.push(v);
            lx.push(std::log(v));
        }
        if (x.variance() == 0.0) {
            worst = std::max({worst, std::abs(x.mean() - mean(d)) > 0.0 ? kInf : 0.0});
            continue;
        }
        worst = std::max({worst, zscore(x.mean(), mean(d), x.stderr_of_mean()),
                          zscore(lx.mean(), *mean_log(d), lx.stderr_of_mean())});
    }
    return result("sampler_moments", worst, 4.0, n);
}

}  // namespace detail

/// Property names in report order.
inline std::vector<std::string> property_names() {
    return {"c0_identity",          "gamma_gap_closed_form",  "lognormal_midpoint",   "lognormal_optimal_c",
            "lognormal_heavy_midpoint", "lognormal_heavy_optimal_c",
            "uniform_lower_monotone", "uniform_width_shrinks", "sandwich_ordering",    "optimal_c_stationary",
            "lemma_minimality",      "chunking_invariance",    "scale_equivariance",   "sweep_reproducible",
            "sampler_moments",       "laplace_loglik",         "vae_gradient_elbo",    "vae_gradient_iwae5",
            "cnet_gradient",         "vae_perfect_constant",   "vae_elbo_below_iw_elbo", "vae_reparameterization",
            "checkpoint_roundtrip"};
}

inline std::vector<PropertyResult> run(const Options& opt) {
    using detail::Context;
    using Check = std::function<PropertyResult(const Context&)>;
    const std::vector<Check> checks{
        detail::c0_identity,
        detail::gamma_gap_closed_form,
        detail::lognormal_midpoint,
        detail::lognormal_optimal_c,
        detail::lognormal_heavy_midpoint,
        detail::lognormal_heavy_optimal_c,
        detail::uniform_lower_monotone,
        detail::uniform_width_shrinks,
        detail::sandwich_ordering,
        detail::optimal_c_stationary,
        detail::lemma_minimality,
        detail::chunking_invariance,
        detail::scale_equivariance,
        detail::sweep_reproducible,
        detail::sampler_moments,
        detail::laplace_loglik_mc,
        [](const Context& c) { return detail::vae_gradient(c, vae::Objective::elbo_objective(), "vae_gradient_elbo"); },
        [](const Context& c) { return detail::vae_gradient(c, vae::Objective::iwae(5), "vae_gradient_iwae5"); },
        detail::cnet_gradient,
        detail::vae_perfect_constant,
        detail::vae_elbo_chain,
        detail::vae_reparameterization,
        detail::checkpoint_roundtrip,
    };
    std::vector<PropertyResult> results(checks.size());
    parallel_for(checks.size(), opt.threads, [&](std::size_t i) {
        results[i] = checks[i](Context{opt, derive_seed(opt.seed, i)});
    });
    return results;
}

inline constexpr std::string_view kCsvHeader = "property,passed,measured,tolerance,slack,n";

inline void write_csv(std::ostream& out, const std::vector<PropertyResult>& results) {
    out << kCsvHeader << '\n';
    for (const auto& r : results) {
        csv::write_row(out, {r.name, r.passed ? "1" : "0", csv::number(r.measured), csv::number(r.tolerance),
                             csv::number(r.slack()), csv::number(std::uint64_t{r.n})});
    }
}

}  // namespace gapsandwich::verify
