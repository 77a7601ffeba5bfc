#pragma once

// One-dimensional Gaussian VAE / IWAE with a one-dimensional latent.
//
//   q(z|x) = N(mu_x, sigma_x^2)     encoder 1 -> 4 ReLU -> (mu_x, log sigma_x)
//   p(x|z) = N(dec(z), decoder_var) decoder 1 -> 4 ReLU -> dec(z)
//   p(z)   = N(0, 1)
//
// log R(x, z) = log p(x|z) + log p(z) - log q(z|x). The ELBO averages log R,
// IW-ELBO(k) takes the log of a k-sample mean of R, and the evidence bounds
// pair k draws z with k independent draws z~ for the upper bound term.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gapsandwich/checkpoint.hpp"
#include "gapsandwich/error.hpp"
#include "gapsandwich/mlp.hpp"
#include "gapsandwich/numeric.hpp"
#include "gapsandwich/parallel.hpp"
#include "gapsandwich/rng.hpp"

namespace gapsandwich::vae {

inline constexpr double kDefaultDecoderVar = 0.02;
inline constexpr std::string_view kVaeMagic = "GSVAE001";
inline constexpr std::string_view kCNetMagic = "GSCNET01";

struct Posterior {
    double mu = 0.0;
    double log_sigma = 0.0;
};

struct ToyVae {
    using Encoder = TinyMlp<2>;
    using Decoder = TinyMlp<1>;
    static constexpr std::size_t kTrainableParams = Encoder::kParams + Decoder::kParams;

    Encoder encoder;
    Decoder decoder;
    double decoder_var = kDefaultDecoderVar;

    /// Uniform(-0.5, 0.5) weights with the log-sigma head zeroed (sigma_x = 1).
    static ToyVae init(std::uint64_t seed, double decoder_var = kDefaultDecoderVar) {
        if (!(decoder_var > 0.0)) throw Error(ErrorCode::InvalidParams, "decoder_var must be positive");
        Rng rng(seed);
        ToyVae m;
        m.encoder = Encoder::random(rng);
        m.decoder = Decoder::random(rng);
        m.encoder.w2[1].fill(0.0);
        m.encoder.b2[1] = 0.0;
        m.decoder_var = decoder_var;
        return m;
    }

    [[nodiscard]] Posterior encode(double x) const noexcept {
        const auto out = encoder.forward(x);
        return {out[0], out[1]};
    }

    [[nodiscard]] double decode(double z) const noexcept { return decoder.forward(z)[0]; }

    [[nodiscard]] bool all_finite() const {
        return encoder.all_finite() && decoder.all_finite() && std::isfinite(decoder_var) && decoder_var > 0.0;
    }

    /// Trainable parameters, encoder first.
    [[nodiscard]] std::vector<double> flat() const {
        std::vector<double> out(kTrainableParams);
        encoder.write_flat(std::span(out).first(Encoder::kParams));
        decoder.write_flat(std::span(out).subspan(Encoder::kParams));
        return out;
    }

    void set_flat(std::span<const double> params) {
        if (params.size() != kTrainableParams) throw Error(ErrorCode::InvalidParams, "expected 31 parameters");
        encoder.read_flat(params.first(Encoder::kParams));
        decoder.read_flat(params.subspan(Encoder::kParams));
    }

    bool operator==(const ToyVae&) const = default;
};

/// Network mapping a datapoint to its bound parameter C_x.
struct CNet {
    TinyMlp<1> net;

    static CNet init(std::uint64_t seed) {
        Rng rng(seed);
        return {TinyMlp<1>::random(rng)};
    }

    [[nodiscard]] double operator()(double x) const noexcept { return net.forward(x)[0]; }

    bool operator==(const CNet&) const = default;
};

namespace detail {

inline const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

inline void require_finite(const ToyVae& m) {
    if (!m.all_finite()) throw Error(ErrorCode::NonFiniteParams, "model has non-finite parameters");
}

// log R at z = mu + sigma * eps, with log q written in terms of eps.
inline double log_r_eps(const ToyVae& m, double x, const Posterior& q, double eps) {
    const double z = q.mu + std::exp(q.log_sigma) * eps;
    const double r = x - m.decode(z);
    return -0.5 * std::log(2.0 * std::numbers::pi * m.decoder_var) - r * r / (2.0 * m.decoder_var) - 0.5 * z * z +
           q.log_sigma + 0.5 * eps * eps;
}

}  // namespace detail

/// log p(x|z) + log p(z) - log q(z|x).
inline double log_r(const ToyVae& m, double x, double z) {
    detail::require_finite(m);
    const Posterior q = m.encode(x);
    const double sigma = std::exp(q.log_sigma);
    const double r = x - m.decode(z);
    const double log_px = -0.5 * std::log(2.0 * std::numbers::pi * m.decoder_var) - r * r / (2.0 * m.decoder_var);
    const double log_pz = -detail::kHalfLog2Pi - 0.5 * z * z;
    const double u = (z - q.mu) / sigma;
    const double log_q = -detail::kHalfLog2Pi - q.log_sigma - 0.5 * u * u;
    return log_px + log_pz - log_q;
}

/// Monte Carlo ELBO at x with n_mc reparameterized draws.
inline double elbo(const ToyVae& m, double x, std::size_t n_mc, std::uint64_t seed) {
    if (n_mc == 0) throw Error(ErrorCode::InvalidParams, "n_mc must be at least 1");
    detail::require_finite(m);
    Rng rng(seed);
    const Posterior q = m.encode(x);
    RunningStats acc;
    for (std::size_t i = 0; i < n_mc; ++i) acc.push(detail::log_r_eps(m, x, q, rng.normal()));
    return acc.mean();
}

/// Mean over n_outer groups of log-mean-exp of k log R values. Uses the same
/// noise sequence as elbo() for the same seed.
inline double iw_elbo(const ToyVae& m, double x, std::size_t k, std::size_t n_outer, std::uint64_t seed) {
    if (k == 0 || n_outer == 0) throw Error(ErrorCode::InvalidParams, "k and n_outer must be at least 1");
    detail::require_finite(m);
    Rng rng(seed);
    const Posterior q = m.encode(x);
    std::vector<double> lr(k);
    RunningStats acc;
    for (std::size_t o = 0; o < n_outer; ++o) {
        for (auto& v : lr) v = detail::log_r_eps(m, x, q, rng.normal());
        acc.push(log_mean_exp(lr));
    }
    return acc.mean();
}

// ---------------------------------------------------------------------------
// Training objectives and their gradients

struct Objective {
    enum class Kind { Elbo, Iwae };
    Kind kind = Kind::Elbo;
    std::size_t k = 1;

    static Objective elbo_objective() { return {Kind::Elbo, 1}; }
    static Objective iwae(std::size_t k) { return {Kind::Iwae, k}; }

    [[nodiscard]] std::size_t draws() const noexcept { return kind == Kind::Elbo ? 1 : k; }
};

/// Per-datapoint objective for the given noise: mean of log R_j (ELBO) or
/// log-mean-exp of log R_j (IWAE). When grad is non-null, adds
/// scale * d(objective)/d(params) to it. The IWAE gradient is the exact one,
/// sum_j w_j d log R_j with normalized importance weights w.
inline double objective_and_grad(const ToyVae& m, double x, std::span<const double> eps, Objective::Kind kind,
                                 ToyVae* grad, double scale = 1.0) {
    const std::size_t k = eps.size();
    ToyVae::Encoder::Trace enc_trace;
    const auto enc_out = m.encoder.forward(x, &enc_trace);
    const double mu = enc_out[0];
    const double log_sigma = enc_out[1];
    const double sigma = std::exp(log_sigma);
    const double v = m.decoder_var;
    const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * v);

    thread_local std::vector<double> lr;
    thread_local std::vector<double> zs;
    thread_local std::vector<double> resid;
    thread_local std::vector<ToyVae::Decoder::Trace> traces;
    lr.resize(k);
    zs.resize(k);
    resid.resize(k);
    traces.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        const double z = mu + sigma * eps[j];
        const double r = x - m.decoder.forward(z, &traces[j])[0];
        zs[j] = z;
        resid[j] = r;
        lr[j] = log_norm - r * r / (2.0 * v) - 0.5 * z * z + log_sigma + 0.5 * eps[j] * eps[j];
    }

    double value = 0.0;
    if (kind == Objective::Kind::Elbo) {
        for (double l : lr) value += l;
        value /= static_cast<double>(k);
    } else {
        value = log_mean_exp(lr);
    }
    if (grad == nullptr) return value;

    double dmu = 0.0;
    double dlog_sigma = 0.0;
    const double lse = value + std::log(static_cast<double>(k));
    for (std::size_t j = 0; j < k; ++j) {
        const double w = kind == Objective::Kind::Elbo ? 1.0 / static_cast<double>(k) : std::exp(lr[j] - lse);
        const double g = scale * w;
        // d log R / d dec(z) = (x - dec(z)) / v; backward returns the z-derivative.
        const double dz_dec = m.decoder.backward(traces[j], {g * resid[j] / v}, grad->decoder);
        const double dz = dz_dec - g * zs[j];
        dmu += dz;
        dlog_sigma += dz * sigma * eps[j] + g;
    }
    m.encoder.backward(enc_trace, {dmu, dlog_sigma}, grad->encoder);
    return value;
}

/// Mean objective over a batch, eps laid out as draws-per-point contiguous blocks.
inline double batch_objective(const ToyVae& m, std::span<const double> xs, std::span<const double> eps,
                              Objective::Kind kind, ToyVae* grad = nullptr) {
    const std::size_t k = eps.size() / xs.size();
    const double scale = 1.0 / static_cast<double>(xs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        total += objective_and_grad(m, xs[i], eps.subspan(i * k, k), kind, grad, scale);
    }
    return total * scale;
}

inline ToyVae zero_like(const ToyVae& m) {
    ToyVae g;
    g.decoder_var = m.decoder_var;
    return g;
}

struct TrainConfig {
    Objective objective = Objective::elbo_objective();
    std::size_t epochs = 2000;
    std::size_t batch = 1000;
    double lr = 1e-2;
    std::uint64_t seed = 0;
};

struct TrainResult {
    ToyVae model;
    std::vector<double> loss_history;  // per-epoch mean of the negative objective
};

/// Plain minibatch SGD on the negative objective. Single-threaded; the
/// shuffle order and noise come from one stream seeded by cfg.seed.
inline TrainResult train(ToyVae model, std::span<const double> data, const TrainConfig& cfg) {
    if (data.empty()) throw Error(ErrorCode::EmptySamples, "training data is empty");
    if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) throw Error(ErrorCode::InvalidParams, "lr must be >= 0");
    if (cfg.batch == 0) throw Error(ErrorCode::InvalidParams, "batch must be at least 1");
    if (cfg.objective.draws() == 0) throw Error(ErrorCode::InvalidK, "IWAE k must be at least 1");
    detail::require_finite(model);

    Rng rng(cfg.seed);
    const std::size_t k = cfg.objective.draws();
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> xs;
    std::vector<double> eps;
    TrainResult result;
    result.loss_history.reserve(cfg.epochs);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(std::span(order));
        double epoch_loss = 0.0;
        for (std::size_t first = 0; first < order.size(); first += cfg.batch) {
            const std::size_t last = std::min(order.size(), first + cfg.batch);
            xs.resize(last - first);
            for (std::size_t i = first; i < last; ++i) xs[i - first] = data[order[i]];
            eps.resize(xs.size() * k);
            rng.fill_normal(eps);

            ToyVae grad = zero_like(model);
            const double obj = batch_objective(model, xs, eps, cfg.objective.kind, &grad);
            if (!std::isfinite(obj)) {
                throw Error(ErrorCode::DivergenceDetected,
                            "non-finite loss at epoch " + std::to_string(epoch) + ", batch offset " +
                                std::to_string(first));
            }
            epoch_loss -= obj * static_cast<double>(xs.size());
            if (cfg.lr > 0.0) {
                model.encoder.axpy(cfg.lr, grad.encoder);
                model.decoder.axpy(cfg.lr, grad.decoder);
                if (!model.all_finite()) {
                    throw Error(ErrorCode::DivergenceDetected,
                                "parameters became non-finite at epoch " + std::to_string(epoch));
                }
            }
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(data.size()));
    }
    result.model = model;
    return result;
}

// ---------------------------------------------------------------------------
// Bound-parameter network and the evidence sandwich

/// log of the ratio of sum_j R(x, z~_j) over sum_j R(x, z_j) with 2k fresh
/// posterior draws from `rng` (the k draws for z first, then z~). Also
/// returns s = log-mean-exp of log R(x, z_j).
struct RatioDraw {
    double s = 0.0;
    double log_ratio = 0.0;
};

inline RatioDraw draw_ratio(const ToyVae& m, double x, std::size_t k, Rng& rng) {
    const Posterior q = m.encode(x);
    LogSumExp base;
    LogSumExp tilde;
    for (std::size_t j = 0; j < k; ++j) base.push(detail::log_r_eps(m, x, q, rng.normal()));
    for (std::size_t j = 0; j < k; ++j) tilde.push(detail::log_r_eps(m, x, q, rng.normal()));
    return {base.value() - std::log(static_cast<double>(k)), tilde.value() - base.value()};
}

/// Mean over points of C(x_i) - 1 + exp(-C(x_i) + log_ratio_i), with its
/// gradient added to grad (if non-null). The ratios are constants here.
inline double cnet_objective(const CNet& c, std::span<const double> xs, std::span<const double> log_ratios,
                             CNet* grad = nullptr) {
    const double scale = 1.0 / static_cast<double>(xs.size());
    double total = 0.0;
    std::size_t saturated = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        TinyMlp<1>::Trace t;
        const double cx = c.net.forward(xs[i], grad ? &t : nullptr)[0];
        const double e = clamped_exp(-cx + log_ratios[i], saturated);
        total += cx - 1.0 + e;
        if (grad) c.net.backward(t, {scale * (1.0 - e)}, grad->net);
    }
    return total * scale;
}

struct CNetConfig {
    std::size_t k = 64;
    std::size_t epochs = 100;
    std::size_t batch = 1000;
    double lr = 0.05;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

struct CNetTrainResult {
    CNet cnet;
    std::vector<double> loss_history;
};

/// Minimizes the summed gap bound over the data. Ratios are redrawn every
/// epoch (per-point streams, so the parallel redraw is schedule-independent);
/// the SGD pass itself is sequential.
inline CNetTrainResult train_cnet(CNet cnet, const ToyVae& model, std::span<const double> data,
                                  const CNetConfig& cfg) {
    if (data.empty()) throw Error(ErrorCode::EmptySamples, "training data is empty");
    if (cfg.k == 0) throw Error(ErrorCode::InvalidK, "k must be at least 1");
    if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) throw Error(ErrorCode::InvalidParams, "lr must be >= 0");
    if (cfg.batch == 0) throw Error(ErrorCode::InvalidParams, "batch must be at least 1");
    detail::require_finite(model);

    Rng order_rng(derive_seed(cfg.seed, 0xC0FFEE));
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> log_ratios(data.size());
    std::vector<double> xs;
    std::vector<double> lrs;
    CNetTrainResult result;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::uint64_t epoch_seed = derive_seed(cfg.seed, epoch);
        parallel_for(data.size(), cfg.threads, [&](std::size_t i) {
            Rng rng(derive_seed(epoch_seed, i));
            log_ratios[i] = draw_ratio(model, data[i], cfg.k, rng).log_ratio;
        });
        order_rng.shuffle(std::span(order));
        double epoch_loss = 0.0;
        for (std::size_t first = 0; first < order.size(); first += cfg.batch) {
            const std::size_t last = std::min(order.size(), first + cfg.batch);
            xs.resize(last - first);
            lrs.resize(last - first);
            for (std::size_t i = first; i < last; ++i) {
                xs[i - first] = data[order[i]];
                lrs[i - first] = log_ratios[order[i]];
            }
            CNet grad{};
            const double obj = cnet_objective(cnet, xs, lrs, &grad);
            if (!std::isfinite(obj)) {
                throw Error(ErrorCode::DivergenceDetected, "non-finite C-net loss at epoch " + std::to_string(epoch));
            }
            epoch_loss += obj * static_cast<double>(xs.size());
            if (cfg.lr > 0.0) {
                cnet.net.axpy(-cfg.lr, grad.net);
                if (!cnet.net.all_finite()) {
                    throw Error(ErrorCode::DivergenceDetected, "C-net parameters became non-finite");
                }
            }
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(data.size()));
    }
    result.cnet = cnet;
    return result;
}

struct FixedC {
    double value = 0.0;
};

using CSource = std::variant<CNet, FixedC>;

inline double c_for(const CSource& source, double x) {
    if (const auto* f = std::get_if<FixedC>(&source)) return f->value;
    return std::get<CNet>(source)(x);
}

struct EvalRecord {
    double x = 0.0;
    double s = 0.0;
    double S = 0.0;
    double c = 0.0;
    std::size_t k = 1;
    bool saturated = false;
    double log_ratio = 0.0;  // log sum R(z~) - log sum R(z)
};

struct EvalResult {
    std::vector<EvalRecord> records;
    Estimate lower;  // mean of s_i
    Estimate upper;  // mean of S_i
    std::size_t saturated = 0;
};

/// For each x_i: k draws z and k independent draws z~ from q(.|x_i),
///   s_i = log (1/k) sum_j R(x_i, z_ij)
///   S_i = s_i + C_i - 1 + exp(-C_i) sum_j R(x_i, z~_ij) / sum_j R(x_i, z_ij)
/// E mean(s) <= evidence <= E mean(S). Point i uses stream derive_seed(seed, i).
inline EvalResult evaluate(const ToyVae& model, const CSource& c_source, std::span<const double> data,
                           std::size_t k, std::uint64_t seed, unsigned threads = 1) {
    if (k == 0) throw Error(ErrorCode::InvalidK, "k must be at least 1");
    if (data.empty()) throw Error(ErrorCode::EmptySamples, "evaluation data is empty");
    detail::require_finite(model);

    EvalResult result;
    result.records.resize(data.size());
    parallel_for(data.size(), threads, [&](std::size_t i) {
        Rng rng(derive_seed(seed, i));
        const RatioDraw d = draw_ratio(model, data[i], k, rng);
        const double c = c_for(c_source, data[i]);
        std::size_t sat = 0;
        const double S = d.s + c - 1.0 + clamped_exp(-c + d.log_ratio, sat);
        result.records[i] = {data[i], d.s, S, c, k, sat != 0, d.log_ratio};
    });

    RunningStats lower, upper;
    for (const auto& r : result.records) {
        lower.push(r.s);
        upper.push(r.S);
        if (r.saturated) ++result.saturated;
    }
    result.lower = lower.estimate();
    result.upper = upper.estimate(result.saturated);
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: trainable parameters in declared order, then decoder_var.

inline void save(const ToyVae& m, const std::filesystem::path& path) {
    auto params = m.flat();
    params.push_back(m.decoder_var);
    checkpoint::save(path, kVaeMagic, params);
}

inline ToyVae load_vae(const std::filesystem::path& path) {
    const auto params = checkpoint::load(path, kVaeMagic);
    if (params.size() != ToyVae::kTrainableParams + 1) {
        throw Error(ErrorCode::CheckpointError, "expected " + std::to_string(ToyVae::kTrainableParams + 1) +
                                                    " values, found " + std::to_string(params.size()));
    }
    ToyVae m;
    m.set_flat(std::span(params).first(ToyVae::kTrainableParams));
    m.decoder_var = params.back();
    if (!m.all_finite()) throw Error(ErrorCode::CheckpointError, "checkpoint holds non-finite parameters");
    return m;
}

inline void save(const CNet& c, const std::filesystem::path& path) {
    std::vector<double> params(TinyMlp<1>::kParams);
    c.net.write_flat(params);
    checkpoint::save(path, kCNetMagic, params);
}

inline CNet load_cnet(const std::filesystem::path& path) {
    const auto params = checkpoint::load(path, kCNetMagic);
    if (params.size() != TinyMlp<1>::kParams) throw Error(ErrorCode::CheckpointError, "C-net parameter count mismatch");
    CNet c;
    c.net.read_flat(params);
    return c;
}

}  // namespace gapsandwich::vae
