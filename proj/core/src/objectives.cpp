#include "xaln/objectives.hpp"

#include <cmath>

namespace xaln::objectives {

template <class T>
TensorT<T> gkl_loss(TapeT<T>& tape, const TensorT<T>& target,
                    const TensorT<T>& recon) {
    if (target.shape != recon.shape) {
        throw ShapeError("gkl_loss: target and reconstruction shapes differ");
    }
    if (target.requires_grad) {
        throw ContractViolation("gkl_loss target must not require grad");
    }
    if (target.ndim() < 1) throw ShapeError("gkl_loss: empty shape");
    std::int64_t batch = target.shape[0];
    auto n = target.numel();
    const T* xp = target.data();
    const T* hp = recon.data();
    constexpr T tiny = T(1e-12);

    double acc = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        T x = xp[i], xh = hp[i];
        if (x < T(0) || xh < T(0)) {
            throw ContractViolation("gkl_loss requires nonnegative inputs");
        }
        if (x == xh) continue;  // term is exactly zero
        if (x == T(0)) {
            acc += static_cast<double>(xh);
        } else {
            T safe = std::max(xh, tiny);
            acc += static_cast<double>(x) * std::log(static_cast<double>(x / safe)) -
                   static_cast<double>(x) + static_cast<double>(xh);
        }
    }
    TensorT<T> y = TensorT<T>::scalar(static_cast<T>(acc / static_cast<double>(batch)));
    ensure_finite(y, "gkl_loss");

    if (tape.recording() && recon.requires_grad) {
        y.requires_grad = true;
        tape.record([target = target, recon = recon, y, n, batch]() mutable {
            if (!y.grad) return;
            constexpr T tiny_local = T(1e-12);
            recon.ensure_grad();
            T g = y.grad_data()[0] / static_cast<T>(batch);
            const T* xp = target.data();
            const T* hp = recon.data();
            T* gh = recon.grad_data();
            for (std::int64_t i = 0; i < n; ++i) {
                T x = xp[i], xh = hp[i];
                if (x == xh) continue;
                gh[i] += g * (T(1) - x / std::max(xh, tiny_local));
            }
        });
    }
    return y;
}

template <class T>
TensorT<T> ntxent_loss(TapeT<T>& tape, const TensorT<T>& phi_a,
                       const TensorT<T>& phi_w, T tau) {
    if (phi_a.ndim() != 2 || phi_a.shape != phi_w.shape) {
        throw ShapeError("ntxent_loss expects two [N x D] matrices of equal shape");
    }
    std::int64_t n = phi_a.shape[0];
    if (n < 2) {
        throw ContractViolation("ntxent_loss needs a batch of at least 2");
    }
    if (!(tau > T(0))) throw ContractViolation("temperature must be > 0");

    TensorT<T> na = ops::l2_normalize_rows(tape, phi_a, T(1e-8));
    TensorT<T> nw = ops::l2_normalize_rows(tape, phi_w, T(1e-8));
    TensorT<T> sims = ops::scale(
        tape, ops::matmul(tape, na, ops::transpose(tape, nw)), T(1) / tau);

    std::vector<std::int64_t> targets(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) targets[static_cast<std::size_t>(i)] = i;
    TensorT<T> audio_to_tags = ops::softmax_cross_entropy(tape, sims, targets);
    TensorT<T> tags_to_audio =
        ops::softmax_cross_entropy(tape, ops::transpose(tape, sims), targets);
    return ops::scale(tape, ops::add(tape, audio_to_tags, tags_to_audio), T(0.5));
}

template <class T>
TotalLossT<T> total_loss(TapeT<T>& tape, const TensorT<T>& target,
                         const TensorT<T>& recon, const TensorT<T>& phi_a,
                         const TensorT<T>& phi_w, const LossWeights& weights) {
    if (weights.lambda_a < 0 || weights.lambda_xi < 0) {
        throw ContractViolation("loss weights must be nonnegative");
    }
    TotalLossT<T> out;
    out.gkl = gkl_loss(tape, target, recon);
    out.ntxent = ntxent_loss(tape, phi_a, phi_w, static_cast<T>(weights.tau));
    out.total = ops::add(tape,
                         ops::scale(tape, out.gkl, static_cast<T>(weights.lambda_a)),
                         ops::scale(tape, out.ntxent, static_cast<T>(weights.lambda_xi)));
    return out;
}

#define XALN_INSTANTIATE_OBJECTIVES(T)                                         \
    template TensorT<T> gkl_loss(TapeT<T>&, const TensorT<T>&,                \
                                 const TensorT<T>&);                          \
    template TensorT<T> ntxent_loss(TapeT<T>&, const TensorT<T>&,            \
                                    const TensorT<T>&, T);                    \
    template TotalLossT<T> total_loss(TapeT<T>&, const TensorT<T>&,          \
                                      const TensorT<T>&, const TensorT<T>&,  \
                                      const TensorT<T>&, const LossWeights&);

XALN_INSTANTIATE_OBJECTIVES(float)
XALN_INSTANTIATE_OBJECTIVES(double)

#undef XALN_INSTANTIATE_OBJECTIVES

}  // namespace xaln::objectives
