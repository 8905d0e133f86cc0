#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "xaln/rng.hpp"
#include "xaln/tape.hpp"
#include "xaln/tensor.hpp"

namespace xaln::testing {

// Central finite differences against the tape's analytic gradients.
// make_loss must rebuild the forward pass from the given parameter tensors on
// the supplied tape (values are read fresh on every call).
inline double fd_max_rel_err(
    const std::function<Tensor64(Tape64&)>& make_loss,
    std::vector<Tensor64> params, double step = 1e-5) {
    Tape64 tape;
    Tensor64 loss = make_loss(tape);
    tape.backward(loss);
    std::vector<std::vector<double>> analytic;
    for (auto& p : params) {
        analytic.push_back(p.grad ? *p.grad
                                  : std::vector<double>(
                                        static_cast<std::size_t>(p.numel()), 0.0));
        p.zero_grad();
    }

    auto eval = [&]() {
        Tape64 t;
        t.set_recording(false);
        return make_loss(t).item();
    };

    double worst = 0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor64& p = params[pi];
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            double v = p.data()[i];
            p.data()[i] = v + step;
            double f1 = eval();
            p.data()[i] = v - step;
            double f2 = eval();
            p.data()[i] = v;
            double numeric = (f1 - f2) / (2 * step);
            double a = analytic[pi][static_cast<std::size_t>(i)];
            double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

inline Tensor64 random_tensor64(Shape shape, RngStream& rng, double lo = -1.0,
                                double hi = 1.0, bool requires_grad = true) {
    Tensor64 t = Tensor64::zeros(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        t.data()[i] = rng.next_uniform(lo, hi);
    }
    t.requires_grad = requires_grad;
    if (requires_grad) t.ensure_grad();
    return t;
}

inline Tensor random_tensor(Shape shape, RngStream& rng, double lo = -1.0,
                            double hi = 1.0, bool requires_grad = true) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        t.data()[i] = static_cast<float>(rng.next_uniform(lo, hi));
    }
    t.requires_grad = requires_grad;
    if (requires_grad) t.ensure_grad();
    return t;
}

}  // namespace xaln::testing
