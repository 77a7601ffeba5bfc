#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>

#include "gapsandwich/error.hpp"
#include "gapsandwich/rng.hpp"

namespace gapsandwich {

/// Scalar-input perceptron: 1 -> Hidden (ReLU) -> Out (linear), with a
/// hand-written backward pass. Parameters are laid out flat in the order
///   w1[0..H), b1[0..H), w2[0][0..H), ..., w2[Out-1][0..H), b2[0..Out).
template <std::size_t Out, std::size_t Hidden = 4>
struct TinyMlp {
    static constexpr std::size_t kHidden = Hidden;
    static constexpr std::size_t kOut = Out;
    static constexpr std::size_t kParams = 2 * Hidden + Hidden * Out + Out;

    using Output = std::array<double, Out>;

    std::array<double, Hidden> w1{};
    std::array<double, Hidden> b1{};
    std::array<std::array<double, Hidden>, Out> w2{};
    Output b2{};

    /// Activations kept from forward() for the backward pass.
    struct Trace {
        double input = 0.0;
        std::array<double, Hidden> act{};
        std::array<bool, Hidden> active{};
    };

    Output forward(double x, Trace* trace = nullptr) const noexcept {
        std::array<double, Hidden> act{};
        for (std::size_t h = 0; h < Hidden; ++h) {
            const double pre = w1[h] * x + b1[h];
            act[h] = pre > 0.0 ? pre : 0.0;
            if (trace) trace->active[h] = pre > 0.0;
        }
        Output out = b2;
        for (std::size_t o = 0; o < Out; ++o) {
            for (std::size_t h = 0; h < Hidden; ++h) out[o] += w2[o][h] * act[h];
        }
        if (trace) {
            trace->input = x;
            trace->act = act;
        }
        return out;
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(outputs) and
    /// returns d(loss)/d(input). ReLU's derivative at 0 is taken as 0.
    double backward(const Trace& t, const Output& dout, TinyMlp& grad) const noexcept {
        double dinput = 0.0;
        for (std::size_t o = 0; o < Out; ++o) grad.b2[o] += dout[o];
        for (std::size_t h = 0; h < Hidden; ++h) {
            double dact = 0.0;
            for (std::size_t o = 0; o < Out; ++o) {
                grad.w2[o][h] += dout[o] * t.act[h];
                dact += dout[o] * w2[o][h];
            }
            if (!t.active[h]) continue;
            grad.w1[h] += dact * t.input;
            grad.b1[h] += dact;
            dinput += dact * w1[h];
        }
        return dinput;
    }

    /// Calls f(double&) on every parameter in flat order.
    template <typename F>
    void for_each_param(F&& f) {
        for (auto& v : w1) f(v);
        for (auto& v : b1) f(v);
        for (auto& row : w2) {
            for (auto& v : row) f(v);
        }
        for (auto& v : b2) f(v);
    }

    template <typename F>
    void for_each_param(F&& f) const {
        const_cast<TinyMlp*>(this)->for_each_param([&](double& v) { f(static_cast<const double&>(v)); });
    }

    void write_flat(std::span<double> out) const {
        if (out.size() != kParams) throw Error(ErrorCode::InvalidParams, "flat parameter size mismatch");
        std::size_t i = 0;
        for_each_param([&](const double& v) { out[i++] = v; });
    }

    void read_flat(std::span<const double> in) {
        if (in.size() != kParams) throw Error(ErrorCode::InvalidParams, "flat parameter size mismatch");
        std::size_t i = 0;
        for_each_param([&](double& v) { v = in[i++]; });
    }

    [[nodiscard]] bool all_finite() const {
        bool ok = true;
        for_each_param([&](const double& v) { ok = ok && std::isfinite(v); });
        return ok;
    }

    /// Uniform(-scale, scale) on every parameter.
    static TinyMlp random(Rng& rng, double scale = 0.5) {
        TinyMlp net;
        net.for_each_param([&](double& v) { v = rng.uniform(-scale, scale); });
        return net;
    }

    /// this += step * other, parameter-wise.
    void axpy(double step, const TinyMlp& other) {
        std::array<double, kParams> delta{};
        other.write_flat(delta);
        std::size_t i = 0;
        for_each_param([&](double& v) { v += step * delta[i++]; });
    }

    bool operator==(const TinyMlp&) const = default;
};

}  // namespace gapsandwich
