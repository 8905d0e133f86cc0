#pragma once

#include "xaln/ops.hpp"

namespace xaln::objectives {

struct LossWeights {
    double lambda_a = 5.0;
    double lambda_xi = 10.0;
    double tau = 0.1;
};

// Generalized KL divergence: sum over cells of x ln(x/x^) - x + x^, with
// 0 ln(0/x^) = 0, averaged over the leading (batch) axis. Only the
// reconstruction side is differentiated; the target is data.
template <class T>
TensorT<T> gkl_loss(TapeT<T>& tape, const TensorT<T>& target,
                    const TensorT<T>& recon);

// Symmetric cross-modal NT-Xent on cosine similarities: the positives are the
// diagonal pairs, the negatives the other examples of the minibatch, in both
// directions. Norms get +1e-8 so zero embeddings stay defined.
template <class T>
TensorT<T> ntxent_loss(TapeT<T>& tape, const TensorT<T>& phi_a,
                       const TensorT<T>& phi_w, T tau);

template <class T>
struct TotalLossT {
    TensorT<T> total;
    TensorT<T> gkl;
    TensorT<T> ntxent;
};

template <class T>
TotalLossT<T> total_loss(TapeT<T>& tape, const TensorT<T>& target,
                         const TensorT<T>& recon, const TensorT<T>& phi_a,
                         const TensorT<T>& phi_w, const LossWeights& weights);

using TotalLoss = TotalLossT<float>;

}  // namespace xaln::objectives
