#pragma once

#include "xaln/tape.hpp"
#include "xaln/tensor.hpp"

namespace xaln::ops {

// x [N,Cin,H,W], w [Cout,Cin,K,K], b [Cout].
// Output spatial size: (H + 2*padding - K) / stride + 1.
template <class T>
TensorT<T> conv2d(TapeT<T>& tape, const TensorT<T>& x, const TensorT<T>& w,
                  const TensorT<T>& b, int stride, int padding);

// x [N,Cin,H,W], w [Cin,Cout,K,K], b [Cout].
// Output spatial size: (H - 1) * stride - 2*padding + K. Forward is the
// adjoint of conv2d with the same kernel, so <conv2d(x), y> == <x, conv2d_transposed(y)>
// for zero bias.
template <class T>
TensorT<T> conv2d_transposed(TapeT<T>& tape, const TensorT<T>& x,
                             const TensorT<T>& w, const TensorT<T>& b,
                             int stride, int padding);

inline std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, int stride,
                                    int padding) {
    return (in + 2 * padding - k) / stride + 1;
}

inline std::int64_t conv_transposed_out_extent(std::int64_t in, std::int64_t k,
                                               int stride, int padding) {
    return (in - 1) * stride - 2 * padding + k;
}

}  // namespace xaln::ops
