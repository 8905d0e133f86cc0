#pragma once

#include "xaln/tape.hpp"
#include "xaln/tensor.hpp"

namespace xaln::ops {

template <class T>
struct BatchNormStateT {
    TensorT<T> running_mean;
    TensorT<T> running_var;

    static BatchNormStateT make(std::int64_t channels) {
        BatchNormStateT s;
        s.running_mean = TensorT<T>::zeros({channels});
        s.running_var = TensorT<T>::full({channels}, T(1));
        return s;
    }
};

// x [N,C,H,W]; gamma/beta [C]. Train mode normalizes with batch statistics
// and updates the running stats in place (momentum on the new value, unbiased
// variance in the running buffer); eval mode normalizes with the running
// stats.
template <class T>
TensorT<T> batch_norm(TapeT<T>& tape, const TensorT<T>& x,
                      const TensorT<T>& gamma, const TensorT<T>& beta,
                      BatchNormStateT<T>& state, Mode mode,
                      T momentum = T(0.1), T eps = T(1e-5));

// Normalizes the last axis; gamma/beta [D].
template <class T>
TensorT<T> layer_norm(TapeT<T>& tape, const TensorT<T>& x,
                      const TensorT<T>& gamma, const TensorT<T>& beta,
                      T eps = T(1e-5));

}  // namespace xaln::ops
