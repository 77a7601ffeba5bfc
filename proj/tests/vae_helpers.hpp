#pragma once

// Hand-built models and a finite-difference gradient checker shared by the
// unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <vector>

#include "gapsandwich/rng.hpp"
#include "gapsandwich/vae_toy.hpp"

namespace testing_support {

using gapsandwich::Rng;
using gapsandwich::vae::CNet;
using gapsandwich::vae::ToyVae;

/// Encoder outputs constant (mu, log sigma); every weight is zero.
inline void set_constant_posterior(ToyVae& m, double mu, double log_sigma) {
    m.encoder = {};
    m.encoder.b2 = {mu, log_sigma};
}

/// dec(z) = relu(z) - relu(-z) = z.
inline void set_identity_decoder(ToyVae& m) {
    m.decoder = {};
    m.decoder.w1 = {1.0, -1.0, 0.0, 0.0};
    m.decoder.w2[0] = {1.0, -1.0, 0.0, 0.0};
}

inline void set_constant_decoder(ToyVae& m, double value) {
    m.decoder = {};
    m.decoder.b2[0] = value;
}

/// Decoder returns x for every z and q equals the prior, so R(x, z) is the
/// constant N(x; x, v) for the given x.
inline ToyVae perfect_constant_model(double x, double decoder_var) {
    ToyVae m;
    m.decoder_var = decoder_var;
    set_constant_posterior(m, 0.0, 0.0);
    set_constant_decoder(m, x);
    return m;
}

inline double relative_error(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / scale;
}

/// Largest relative error between the hand gradient of the batch objective
/// and central differences with step h over the listed flat coordinates.
inline double vae_gradient_error(const ToyVae& m, const std::vector<double>& xs, const std::vector<double>& eps,
                                 gapsandwich::vae::Objective::Kind kind, const std::vector<std::size_t>& coords,
                                 double h = 1e-5) {
    namespace v = gapsandwich::vae;
    ToyVae grad = v::zero_like(m);
    v::batch_objective(m, xs, eps, kind, &grad);
    const auto analytic = grad.flat();
    const auto base = m.flat();
    double worst = 0.0;
    for (std::size_t c : coords) {
        auto plus = base;
        auto minus = base;
        plus[c] += h;
        minus[c] -= h;
        ToyVae mp = m;
        ToyVae mm = m;
        mp.set_flat(plus);
        mm.set_flat(minus);
        const double fd = (v::batch_objective(mp, xs, eps, kind) - v::batch_objective(mm, xs, eps, kind)) / (2.0 * h);
        worst = std::max(worst, relative_error(analytic[c], fd));
    }
    return worst;
}

inline double cnet_gradient_error(const CNet& c, const std::vector<double>& xs, const std::vector<double>& log_ratios,
                                  const std::vector<std::size_t>& coords, double h = 1e-5) {
    namespace v = gapsandwich::vae;
    using Net = gapsandwich::TinyMlp<1>;
    CNet grad{};
    v::cnet_objective(c, xs, log_ratios, &grad);
    std::vector<double> analytic(Net::kParams);
    std::vector<double> base(Net::kParams);
    grad.net.write_flat(analytic);
    c.net.write_flat(base);
    double worst = 0.0;
    for (std::size_t i : coords) {
        auto plus = base;
        auto minus = base;
        plus[i] += h;
        minus[i] -= h;
        CNet cp = c;
        CNet cm = c;
        cp.net.read_flat(plus);
        cm.net.read_flat(minus);
        const double fd = (v::cnet_objective(cp, xs, log_ratios) - v::cnet_objective(cm, xs, log_ratios)) / (2.0 * h);
        worst = std::max(worst, relative_error(analytic[i], fd));
    }
    return worst;
}

/// n distinct coordinates in [0, count), or all of them if n >= count.
inline std::vector<std::size_t> random_coords(std::size_t count, std::size_t n, Rng& rng) {
    std::vector<std::size_t> all(count);
    for (std::size_t i = 0; i < count; ++i) all[i] = i;
    rng.shuffle(std::span(all));
    all.resize(std::min(n, count));
    return all;
}

}  // namespace testing_support
