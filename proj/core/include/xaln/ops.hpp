#pragma once

#include <vector>

#include "xaln/rng.hpp"
#include "xaln/tape.hpp"
#include "xaln/tensor.hpp"

namespace xaln::ops {

// Elementwise.
template <class T> TensorT<T> relu(TapeT<T>& tape, const TensorT<T>& x);
template <class T> TensorT<T> sigmoid(TapeT<T>& tape, const TensorT<T>& x);
template <class T> TensorT<T> log(TapeT<T>& tape, const TensorT<T>& x);
template <class T> TensorT<T> exp(TapeT<T>& tape, const TensorT<T>& x);
template <class T> TensorT<T> add(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b);
template <class T> TensorT<T> sub(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b);
template <class T> TensorT<T> mul(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b);
template <class T> TensorT<T> scale(TapeT<T>& tape, const TensorT<T>& x, T c);
template <class T> TensorT<T> add_scalar(TapeT<T>& tape, const TensorT<T>& x, T c);

// Inverted dropout: train mode scales survivors by 1/(1-p); eval mode and
// p == 0 are the identity. The keep mask is drawn from `rng` in element order.
template <class T>
TensorT<T> dropout(TapeT<T>& tape, const TensorT<T>& x, double p, Mode mode,
                   RngStream& rng);

// Shape.
template <class T> TensorT<T> reshape(TapeT<T>& tape, const TensorT<T>& x, Shape s);
template <class T> TensorT<T> transpose(TapeT<T>& tape, const TensorT<T>& x);
template <class T>
TensorT<T> concat(TapeT<T>& tape, const std::vector<TensorT<T>>& parts, int axis);
template <class T>
TensorT<T> stack_rows(TapeT<T>& tape, const std::vector<TensorT<T>>& rows);
template <class T>
TensorT<T> gather_rows(TapeT<T>& tape, const TensorT<T>& x,
                       const std::vector<std::int64_t>& idx);

// Matrix products. matmul is [N,K]x[K,M]; linear is x[N,in], w[out,in],
// b[out] -> x w^T + b.
template <class T> TensorT<T> matmul(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b);
template <class T>
TensorT<T> linear(TapeT<T>& tape, const TensorT<T>& x, const TensorT<T>& w,
                  const TensorT<T>& b);

// Reductions and row-wise maps.
template <class T> TensorT<T> sum(TapeT<T>& tape, const TensorT<T>& x);
template <class T> TensorT<T> sum_axis0(TapeT<T>& tape, const TensorT<T>& x);
template <class T> TensorT<T> softmax(TapeT<T>& tape, const TensorT<T>& x);
template <class T>
TensorT<T> l2_normalize_rows(TapeT<T>& tape, const TensorT<T>& x, T eps);

// Mean over rows of -log softmax(logits)[row, target].
template <class T>
TensorT<T> softmax_cross_entropy(TapeT<T>& tape, const TensorT<T>& logits,
                                 const std::vector<std::int64_t>& targets);

}  // namespace xaln::ops
