#include "xaln/norm.hpp"

#include <cmath>
#include <vector>

namespace xaln::ops {

template <class T>
TensorT<T> batch_norm(TapeT<T>& tape, const TensorT<T>& x,
                      const TensorT<T>& gamma, const TensorT<T>& beta,
                      BatchNormStateT<T>& state, Mode mode, T momentum, T eps) {
    if (x.ndim() != 4) throw ShapeError("batch_norm expects [N,C,H,W]");
    std::int64_t n = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
    if (gamma.shape != Shape{c} || beta.shape != Shape{c} ||
        state.running_mean.shape != Shape{c} || state.running_var.shape != Shape{c}) {
        throw ShapeError("batch_norm: per-channel parameter shape mismatch");
    }
    if (n < 1) throw ContractViolation("batch_norm requires batch size >= 1");

    std::int64_t count = n * hw;
    auto mean = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c));
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c));

    if (mode == Mode::train) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            double s = 0;
            for (std::int64_t i = 0; i < n; ++i) {
                const T* p = x.data() + (i * c + ch) * hw;
                for (std::int64_t j = 0; j < hw; ++j) s += static_cast<double>(p[j]);
            }
            double mu = s / static_cast<double>(count);
            double ss = 0;
            for (std::int64_t i = 0; i < n; ++i) {
                const T* p = x.data() + (i * c + ch) * hw;
                for (std::int64_t j = 0; j < hw; ++j) {
                    double d = static_cast<double>(p[j]) - mu;
                    ss += d * d;
                }
            }
            double var = ss / static_cast<double>(count);
            (*mean)[static_cast<std::size_t>(ch)] = static_cast<T>(mu);
            (*inv_std)[static_cast<std::size_t>(ch)] =
                static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            double unbiased =
                count > 1 ? ss / static_cast<double>(count - 1) : var;
            T* rm = state.running_mean.data();
            T* rv = state.running_var.data();
            rm[ch] = (T(1) - momentum) * rm[ch] + momentum * static_cast<T>(mu);
            rv[ch] = (T(1) - momentum) * rv[ch] + momentum * static_cast<T>(unbiased);
        }
    } else {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            (*mean)[static_cast<std::size_t>(ch)] = state.running_mean.data()[ch];
            (*inv_std)[static_cast<std::size_t>(ch)] = static_cast<T>(
                1.0 / std::sqrt(static_cast<double>(state.running_var.data()[ch]) +
                                static_cast<double>(eps)));
        }
    }

    TensorT<T> y = TensorT<T>::zeros(x.shape);
    {
        const T* xp = x.data();
        T* yp = y.data();
        const T* gp = gamma.data();
        const T* bp = beta.data();
        for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t ch = 0; ch < c; ++ch) {
                T mu = (*mean)[static_cast<std::size_t>(ch)];
                T is = (*inv_std)[static_cast<std::size_t>(ch)];
                T g = gp[ch], bb = bp[ch];
                const T* px = xp + (i * c + ch) * hw;
                T* py = yp + (i * c + ch) * hw;
                for (std::int64_t j = 0; j < hw; ++j) {
                    py[j] = (px[j] - mu) * is * g + bb;
                }
            }
        }
    }
    ensure_finite(y, "batch_norm");

    bool needs = tape.recording() && (x.requires_grad || gamma.requires_grad ||
                                      beta.requires_grad);
    if (needs) {
        y.requires_grad = true;
        bool train = mode == Mode::train;
        tape.record([x = x, gamma = gamma, beta = beta, y, mean, inv_std, n, c, hw, train]() mutable {
            if (!y.grad) return;
            std::int64_t count = n * hw;
            const T* gy = y.grad_data();
            const T* xp = x.data();
            const T* gp = gamma.data();
            if (x.requires_grad) x.ensure_grad();
            if (gamma.requires_grad) gamma.ensure_grad();
            if (beta.requires_grad) beta.ensure_grad();
            for (std::int64_t ch = 0; ch < c; ++ch) {
                T mu = (*mean)[static_cast<std::size_t>(ch)];
                T is = (*inv_std)[static_cast<std::size_t>(ch)];
                double sum_g = 0, sum_gx = 0;
                for (std::int64_t i = 0; i < n; ++i) {
                    const T* g = gy + (i * c + ch) * hw;
                    const T* px = xp + (i * c + ch) * hw;
                    for (std::int64_t j = 0; j < hw; ++j) {
                        sum_g += static_cast<double>(g[j]);
                        sum_gx += static_cast<double>(g[j]) *
                                  ((px[j] - mu) * is);
                    }
                }
                if (gamma.requires_grad) {
                    gamma.grad_data()[ch] += static_cast<T>(sum_gx);
                }
                if (beta.requires_grad) {
                    beta.grad_data()[ch] += static_cast<T>(sum_g);
                }
                if (x.requires_grad) {
                    T* gx = x.grad_data();
                    T gm = gp[ch];
                    if (train) {
                        // Backprop through the batch statistics.
                        T mean_g = static_cast<T>(sum_g / static_cast<double>(count));
                        T mean_gx = static_cast<T>(sum_gx / static_cast<double>(count));
                        for (std::int64_t i = 0; i < n; ++i) {
                            const T* g = gy + (i * c + ch) * hw;
                            const T* px = xp + (i * c + ch) * hw;
                            T* out = gx + (i * c + ch) * hw;
                            for (std::int64_t j = 0; j < hw; ++j) {
                                T xhat = (px[j] - mu) * is;
                                out[j] += gm * is * (g[j] - mean_g - xhat * mean_gx);
                            }
                        }
                    } else {
                        for (std::int64_t i = 0; i < n; ++i) {
                            const T* g = gy + (i * c + ch) * hw;
                            T* out = gx + (i * c + ch) * hw;
                            for (std::int64_t j = 0; j < hw; ++j) {
                                out[j] += gm * is * g[j];
                            }
                        }
                    }
                }
            }
        });
    }
    return y;
}

template <class T>
TensorT<T> layer_norm(TapeT<T>& tape, const TensorT<T>& x,
                      const TensorT<T>& gamma, const TensorT<T>& beta, T eps) {
    if (x.ndim() < 1) throw ShapeError("layer_norm expects at least 1 axis");
    std::int64_t d = x.shape.back();
    if (d < 1) throw ContractViolation("layer_norm requires D >= 1");
    if (gamma.shape != Shape{d} || beta.shape != Shape{d}) {
        throw ShapeError("layer_norm: gamma/beta must be [D]");
    }
    std::int64_t rows = x.numel() / d;

    TensorT<T> y = TensorT<T>::zeros(x.shape);
    auto xhat = std::make_shared<std::vector<T>>(static_cast<std::size_t>(x.numel()));
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
    const T* xp = x.data();
    const T* gp = gamma.data();
    const T* bp = beta.data();
    T* yp = y.data();
    T* hp = xhat->data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* row = xp + r * d;
        double s = 0;
        for (std::int64_t j = 0; j < d; ++j) s += static_cast<double>(row[j]);
        double mu = s / static_cast<double>(d);
        double ss = 0;
        for (std::int64_t j = 0; j < d; ++j) {
            double dv = static_cast<double>(row[j]) - mu;
            ss += dv * dv;
        }
        double var = ss / static_cast<double>(d);
        T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        (*inv_std)[static_cast<std::size_t>(r)] = is;
        for (std::int64_t j = 0; j < d; ++j) {
            T h = (row[j] - static_cast<T>(mu)) * is;
            hp[r * d + j] = h;
            yp[r * d + j] = h * gp[j] + bp[j];
        }
    }
    ensure_finite(y, "layer_norm");

    if (tape.recording() && (x.requires_grad || gamma.requires_grad ||
                             beta.requires_grad)) {
        y.requires_grad = true;
        tape.record([x = x, gamma = gamma, beta = beta, y, xhat, inv_std, rows, d]() mutable {
            if (!y.grad) return;
            const T* gy = y.grad_data();
            const T* hp = xhat->data();
            const T* gp = gamma.data();
            if (x.requires_grad) x.ensure_grad();
            if (gamma.requires_grad) gamma.ensure_grad();
            if (beta.requires_grad) beta.ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r) {
                const T* g = gy + r * d;
                const T* h = hp + r * d;
                if (gamma.requires_grad) {
                    T* gg = gamma.grad_data();
                    for (std::int64_t j = 0; j < d; ++j) gg[j] += g[j] * h[j];
                }
                if (beta.requires_grad) {
                    T* gb = beta.grad_data();
                    for (std::int64_t j = 0; j < d; ++j) gb[j] += g[j];
                }
                if (x.requires_grad) {
                    T is = (*inv_std)[static_cast<std::size_t>(r)];
                    double sum_dh = 0, sum_dhh = 0;
                    for (std::int64_t j = 0; j < d; ++j) {
                        double dh = static_cast<double>(g[j]) * gp[j];
                        sum_dh += dh;
                        sum_dhh += dh * h[j];
                    }
                    T mean_dh = static_cast<T>(sum_dh / static_cast<double>(d));
                    T mean_dhh = static_cast<T>(sum_dhh / static_cast<double>(d));
                    T* gx = x.grad_data() + r * d;
                    for (std::int64_t j = 0; j < d; ++j) {
                        T dh = g[j] * gp[j];
                        gx[j] += is * (dh - mean_dh - h[j] * mean_dhh);
                    }
                }
            }
        });
    }
    return y;
}

#define XALN_INSTANTIATE_NORM(T)                                              \
    template TensorT<T> batch_norm(TapeT<T>&, const TensorT<T>&,             \
                                   const TensorT<T>&, const TensorT<T>&,     \
                                   BatchNormStateT<T>&, Mode, T, T);         \
    template TensorT<T> layer_norm(TapeT<T>&, const TensorT<T>&,             \
                                   const TensorT<T>&, const TensorT<T>&, T);

XALN_INSTANTIATE_NORM(float)
XALN_INSTANTIATE_NORM(double)

#undef XALN_INSTANTIATE_NORM

}  // namespace xaln::ops
