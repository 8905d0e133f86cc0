#include "xaln/conv.hpp"

#include <vector>

#include "xaln/blas.hpp"

namespace xaln::ops {

namespace {

// col is [(C*K*K) x (OH*OW)]; entry ((c,ki,kj),(oh,ow)) reads
// src[c, oh*stride - pad + ki, ow*stride - pad + kj], zero outside. (H,W) are
// the spatial dims of src; (OH,OW) the enumerated positions.
template <class T>
void im2col(const T* src, std::int64_t c_total, std::int64_t h, std::int64_t w,
            std::int64_t k, int stride, int pad, std::int64_t oh,
            std::int64_t ow, T* col) {
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < c_total; ++c) {
        const T* plane = src + c * h * w;
        for (std::int64_t ki = 0; ki < k; ++ki) {
            for (std::int64_t kj = 0; kj < k; ++kj, ++row) {
                T* out = col + row * oh * ow;
                for (std::int64_t i = 0; i < oh; ++i) {
                    std::int64_t yi = i * stride - pad + ki;
                    if (yi < 0 || yi >= h) {
                        for (std::int64_t j = 0; j < ow; ++j) out[i * ow + j] = T(0);
                        continue;
                    }
                    const T* src_row = plane + yi * w;
                    std::int64_t xj = -pad + kj;
                    for (std::int64_t j = 0; j < ow; ++j, xj += stride) {
                        out[i * ow + j] =
                            (xj >= 0 && xj < w) ? src_row[xj] : T(0);
                    }
                }
            }
        }
    }
}

// Scatter-add of the same mapping: dst[c, i*stride-pad+ki, j*stride-pad+kj] +=
// col[(c,ki,kj),(i,j)].
template <class T>
void col2im(const T* col, std::int64_t c_total, std::int64_t h, std::int64_t w,
            std::int64_t k, int stride, int pad, std::int64_t oh,
            std::int64_t ow, T* dst) {
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < c_total; ++c) {
        T* plane = dst + c * h * w;
        for (std::int64_t ki = 0; ki < k; ++ki) {
            for (std::int64_t kj = 0; kj < k; ++kj, ++row) {
                const T* in = col + row * oh * ow;
                for (std::int64_t i = 0; i < oh; ++i) {
                    std::int64_t yi = i * stride - pad + ki;
                    if (yi < 0 || yi >= h) continue;
                    T* dst_row = plane + yi * w;
                    std::int64_t xj = -pad + kj;
                    for (std::int64_t j = 0; j < ow; ++j, xj += stride) {
                        if (xj >= 0 && xj < w) dst_row[xj] += in[i * ow + j];
                    }
                }
            }
        }
    }
}

void check_conv_args(const Shape& x, const Shape& w, const Shape& b, int stride,
                     int padding, bool transposed) {
    if (x.size() != 4) throw ShapeError("conv input must be [N,C,H,W]");
    if (w.size() != 4 || w[2] != w[3]) {
        throw ShapeError("conv weight must be [*,*,K,K] with a square kernel");
    }
    if (b.size() != 1) throw ShapeError("conv bias must be 1D");
    if (stride < 1 || w[2] < 1) {
        throw ContractViolation("conv kernel and stride must be >= 1");
    }
    if (padding < 0) throw ContractViolation("conv padding must be >= 0");
    std::int64_t cin = transposed ? w[0] : w[1];
    std::int64_t cout = transposed ? w[1] : w[0];
    if (x[1] != cin) {
        throw ShapeError("conv: input channels " + std::to_string(x[1]) +
                         " do not match weight " + std::to_string(cin));
    }
    if (b[0] != cout) throw ShapeError("conv: bias length must equal output channels");
    if (!transposed && (x[2] + 2 * padding < w[2] || x[3] + 2 * padding < w[3])) {
        throw ShapeError("conv: padded input smaller than kernel");
    }
    if (transposed && conv_transposed_out_extent(x[2], w[2], stride, padding) < 1) {
        throw ShapeError("conv_transposed: output extent would be empty");
    }
}

}  // namespace

template <class T>
TensorT<T> conv2d(TapeT<T>& tape, const TensorT<T>& x, const TensorT<T>& w,
                  const TensorT<T>& b, int stride, int padding) {
    check_conv_args(x.shape, w.shape, b.shape, stride, padding, false);
    std::int64_t n = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3];
    std::int64_t cout = w.shape[0], k = w.shape[2];
    std::int64_t oh = conv_out_extent(h, k, stride, padding);
    std::int64_t ow = conv_out_extent(wd, k, stride, padding);
    std::int64_t ck = cin * k * k, os = oh * ow;

    TensorT<T> y = TensorT<T>::zeros({n, cout, oh, ow});
    std::vector<T> col(static_cast<std::size_t>(ck * os));
    const T* xp = x.data();
    const T* bp = b.data();
    T* yp = y.data();
    for (std::int64_t i = 0; i < n; ++i) {
        im2col(xp + i * cin * h * wd, cin, h, wd, k, stride, padding, oh, ow,
               col.data());
        T* out = yp + i * cout * os;
        for (std::int64_t c = 0; c < cout; ++c) {
            T bias = bp[c];
            for (std::int64_t j = 0; j < os; ++j) out[c * os + j] = bias;
        }
        gemm(false, false, static_cast<int>(cout), static_cast<int>(os),
             static_cast<int>(ck), T(1), w.data(), static_cast<int>(ck),
             col.data(), static_cast<int>(os), T(1), out, static_cast<int>(os));
    }
    ensure_finite(y, "conv2d");

    if (tape.recording() &&
        (x.requires_grad || w.requires_grad || b.requires_grad)) {
        y.requires_grad = true;
        tape.record([x = x, w = w, b = b, y, n, cin, h, wd, cout, k, oh, ow, stride,
                     padding]() mutable {
            if (!y.grad) return;
            std::int64_t ck = cin * k * k, os = oh * ow;
            std::vector<T> col(static_cast<std::size_t>(ck * os));
            const T* gy = y.grad_data();
            if (x.requires_grad) x.ensure_grad();
            if (w.requires_grad) w.ensure_grad();
            if (b.requires_grad) b.ensure_grad();
            for (std::int64_t i = 0; i < n; ++i) {
                const T* g = gy + i * cout * os;
                if (w.requires_grad) {
                    im2col(x.data() + i * cin * h * wd, cin, h, wd, k, stride,
                           padding, oh, ow, col.data());
                    gemm(false, true, static_cast<int>(cout),
                         static_cast<int>(ck), static_cast<int>(os), T(1), g,
                         static_cast<int>(os), col.data(),
                         static_cast<int>(os), T(1), w.grad_data(),
                         static_cast<int>(ck));
                }
                if (x.requires_grad) {
                    gemm(true, false, static_cast<int>(ck),
                         static_cast<int>(os), static_cast<int>(cout), T(1),
                         w.data(), static_cast<int>(ck), g,
                         static_cast<int>(os), T(0), col.data(),
                         static_cast<int>(os));
                    col2im(col.data(), cin, h, wd, k, stride, padding, oh, ow,
                           x.grad_data() + i * cin * h * wd);
                }
                if (b.requires_grad) {
                    T* gb = b.grad_data();
                    for (std::int64_t c = 0; c < cout; ++c) {
                        double acc = 0;
                        for (std::int64_t j = 0; j < os; ++j) {
                            acc += static_cast<double>(g[c * os + j]);
                        }
                        gb[c] += static_cast<T>(acc);
                    }
                }
            }
        });
    }
    return y;
}

template <class T>
TensorT<T> conv2d_transposed(TapeT<T>& tape, const TensorT<T>& x,
                             const TensorT<T>& w, const TensorT<T>& b,
                             int stride, int padding) {
    check_conv_args(x.shape, w.shape, b.shape, stride, padding, true);
    std::int64_t n = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3];
    std::int64_t cout = w.shape[1], k = w.shape[2];
    std::int64_t oh = conv_transposed_out_extent(h, k, stride, padding);
    std::int64_t ow = conv_transposed_out_extent(wd, k, stride, padding);
    std::int64_t ck = cout * k * k, is = h * wd, os = oh * ow;

    TensorT<T> y = TensorT<T>::zeros({n, cout, oh, ow});
    std::vector<T> col(static_cast<std::size_t>(ck * is));
    const T* xp = x.data();
    const T* bp = b.data();
    T* yp = y.data();
    for (std::int64_t i = 0; i < n; ++i) {
        // col = w^T [cout*k*k, cin] * x_i [cin, h*w]
        gemm(true, false, static_cast<int>(ck), static_cast<int>(is),
             static_cast<int>(cin), T(1), w.data(), static_cast<int>(ck),
             xp + i * cin * is, static_cast<int>(is), T(0), col.data(),
             static_cast<int>(is));
        T* out = yp + i * cout * os;
        for (std::int64_t c = 0; c < cout; ++c) {
            T bias = bp[c];
            for (std::int64_t j = 0; j < os; ++j) out[c * os + j] = bias;
        }
        col2im(col.data(), cout, oh, ow, k, stride, padding, h, wd, out);
    }
    ensure_finite(y, "conv2d_transposed");

    if (tape.recording() &&
        (x.requires_grad || w.requires_grad || b.requires_grad)) {
        y.requires_grad = true;
        tape.record([x = x, w = w, b = b, y, n, cin, h, wd, cout, k, oh, ow, stride,
                     padding]() mutable {
            if (!y.grad) return;
            std::int64_t ck = cout * k * k, is = h * wd, os = oh * ow;
            std::vector<T> col(static_cast<std::size_t>(ck * is));
            const T* gy = y.grad_data();
            if (x.requires_grad) x.ensure_grad();
            if (w.requires_grad) w.ensure_grad();
            if (b.requires_grad) b.ensure_grad();
            for (std::int64_t i = 0; i < n; ++i) {
                const T* g = gy + i * cout * os;
                if (x.requires_grad || w.requires_grad) {
                    im2col(g, cout, oh, ow, k, stride, padding, h, wd, col.data());
                }
                if (x.requires_grad) {
                    gemm(false, false, static_cast<int>(cin),
                         static_cast<int>(is), static_cast<int>(ck), T(1),
                         w.data(), static_cast<int>(ck), col.data(),
                         static_cast<int>(is), T(1),
                         x.grad_data() + i * cin * is, static_cast<int>(is));
                }
                if (w.requires_grad) {
                    gemm(false, true, static_cast<int>(cin),
                         static_cast<int>(ck), static_cast<int>(is), T(1),
                         x.data() + i * cin * is, static_cast<int>(is),
                         col.data(), static_cast<int>(is), T(1), w.grad_data(),
                         static_cast<int>(ck));
                }
                if (b.requires_grad) {
                    T* gb = b.grad_data();
                    for (std::int64_t c = 0; c < cout; ++c) {
                        double acc = 0;
                        for (std::int64_t j = 0; j < os; ++j) {
                            acc += static_cast<double>(g[c * os + j]);
                        }
                        gb[c] += static_cast<T>(acc);
                    }
                }
            }
        });
    }
    return y;
}

template TensorT<float> conv2d(TapeT<float>&, const TensorT<float>&,
                               const TensorT<float>&, const TensorT<float>&,
                               int, int);
template TensorT<double> conv2d(TapeT<double>&, const TensorT<double>&,
                                const TensorT<double>&, const TensorT<double>&,
                                int, int);
template TensorT<float> conv2d_transposed(TapeT<float>&, const TensorT<float>&,
                                          const TensorT<float>&,
                                          const TensorT<float>&, int, int);
template TensorT<double> conv2d_transposed(TapeT<double>&,
                                           const TensorT<double>&,
                                           const TensorT<double>&,
                                           const TensorT<double>&, int, int);

}  // namespace xaln::ops
