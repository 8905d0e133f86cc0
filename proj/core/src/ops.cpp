#include "xaln/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "xaln/blas.hpp"

namespace xaln {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace {

template <class T, class U>
bool any_nonfinite(const T* p, std::int64_t n);

template <>
bool any_nonfinite<float, std::uint32_t>(const float* p, std::int64_t n) {
    std::uint32_t bad = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        std::uint32_t u;
        std::memcpy(&u, p + i, 4);
        bad |= static_cast<std::uint32_t>((u & 0x7f800000u) == 0x7f800000u);
    }
    return bad != 0;
}

template <>
bool any_nonfinite<double, std::uint64_t>(const double* p, std::int64_t n) {
    std::uint64_t bad = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        std::uint64_t u;
        std::memcpy(&u, p + i, 8);
        bad |= static_cast<std::uint64_t>((u & 0x7ff0000000000000ull) ==
                                          0x7ff0000000000000ull);
    }
    return bad != 0;
}

}  // namespace

void ensure_finite(const float* p, std::int64_t n, const char* op) {
    if (any_nonfinite<float, std::uint32_t>(p, n)) {
        throw NonFiniteError(std::string(op) + " produced NaN or Inf");
    }
}

void ensure_finite(const double* p, std::int64_t n, const char* op) {
    if (any_nonfinite<double, std::uint64_t>(p, n)) {
        throw NonFiniteError(std::string(op) + " produced NaN or Inf");
    }
}

}  // namespace xaln

namespace xaln::ops {

namespace {

template <class T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
    if (a.shape != b.shape) {
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape) +
                         " and " + shape_str(b.shape) + " differ");
    }
}

// Rows/cols view of a tensor treated as a 2D matrix over its last axis.
template <class T>
std::pair<std::int64_t, std::int64_t> as_rows(const TensorT<T>& x) {
    if (x.ndim() == 0) throw ShapeError("empty tensor");
    std::int64_t cols = x.shape.back();
    std::int64_t rows = x.numel() / cols;
    return {rows, cols};
}

template <class T>
void accumulate(TensorT<T>& t, const std::vector<T>& g) {
    t.ensure_grad();
    T* dst = t.grad_data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

}  // namespace

template <class T>
TensorT<T> relu(TapeT<T>& tape, const TensorT<T>& x) {
    auto n = x.numel();
    TensorT<T> y = TensorT<T>::zeros(x.shape);
    auto mask = std::make_shared<std::vector<std::uint8_t>>(
        static_cast<std::size_t>(n));
    const T* xp = x.data();
    T* yp = y.data();
    std::uint8_t* mp = mask->data();
    for (std::int64_t i = 0; i < n; ++i) {
        bool pos = xp[i] > T(0);
        mp[i] = pos;
        yp[i] = pos ? xp[i] : T(0);
    }
    ensure_finite(y, "relu");
    if (tape.recording() && x.requires_grad) {
        y.requires_grad = true;
        tape.record([x = x, y, mask]() mutable {
            if (!y.grad) return;
            x.ensure_grad();
            const T* gy = y.grad_data();
            const std::uint8_t* m = mask->data();
            T* gx = x.grad_data();
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(mask->size()); ++i) {
                gx[i] += m[i] ? gy[i] : T(0);
            }
        });
    }
    return y;
}

template <class T>
TensorT<T> sigmoid(TapeT<T>& tape, const TensorT<T>& x) {
    auto n = x.numel();
    TensorT<T> y = TensorT<T>::zeros(x.shape);
    const T* xp = x.data();
    T* yp = y.data();
    for (std::int64_t i = 0; i < n; ++i) {
        yp[i] = T(1) / (T(1) + std::exp(-xp[i]));
    }
    ensure_finite(y, "sigmoid");
    if (tape.recording() && x.requires_grad) {
        y.requires_grad = true;
        tape.record([x = x, y, n]() mutable {
            if (!y.grad) return;
            x.ensure_grad();
            const T* gy = y.grad_data();
            const T* yv = y.data();
            T* gx = x.grad_data();
            for (std::int64_t i = 0; i < n; ++i) {
                gx[i] += gy[i] * yv[i] * (T(1) - yv[i]);
            }
        });
    }
    return y;
}

template <class T>
TensorT<T> log(TapeT<T>& tape, const TensorT<T>& x) {
    auto n = x.numel();
    TensorT<T> y = TensorT<T>::zeros(x.shape);
    const T* xp = x.data();
    T* yp = y.data();
    for (std::int64_t i = 0; i < n; ++i) yp[i] = std::log(xp[i]);
    ensure_finite(y, "log");
    if (tape.recording() && x.requires_grad) {
        y.requires_grad = true;
        tape.record([x = x, y, n]() mutable {
            if (!y.grad) return;
            x.ensure_grad();
            const T* gy = y.grad_data();
            const T* xv = x.data();
            T* gx = x.grad_data();
            for (std::int64_t i = 0; i < n; ++i) gx[i] += gy[i] / xv[i];
        });
    }
    return y;
}

template <class T>
TensorT<T> exp(TapeT<T>& tape, const TensorT<T>& x) {
    auto n = x.numel();
    TensorT<T> y = TensorT<T>::zeros(x.shape);
    const T* xp = x.data();
    T* yp = y.data();
    for (std::int64_t i = 0; i < n; ++i) yp[i] = std::exp(xp[i]);
    ensure_finite(y, "exp");
    if (tape.recording() && x.requires_grad) {
        y.requires_grad = true;
        tape.record([x = x, y, n]() mutable {
            if (!y.grad) return;
            x.ensure_grad();
            const T* gy = y.grad_data();
            const T* yv = y.data();
            T* gx = x.grad_data();
            for (std::int64_t i = 0; i < n; ++i) gx[i] += gy[i] * yv[i];
        });
    }
    return y;
}

template <class T>
TensorT<T> add(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a, b, "add");
    auto n = a.numel();
    TensorT<T> y = TensorT<T>::zeros(a.shape);
    const T* ap = a.data();
    const T* bp = b.data();
    T* yp = y.data();
    for (std::int64_t i = 0; i < n; ++i) yp[i] = ap[i] + bp[i];
    ensure_finite(y, "add");
    if (tape.recording() && (a.requires_grad || b.requires_grad)) {
        y.requires_grad = true;
        tape.record([a = a, b = b, y, n]() mutable {
            if (!y.grad) return;
            const T* gy = y.grad_data();
            if (a.requires_grad) {
                a.ensure_grad();
                T* ga = a.grad_data();
                for (std::int64_t i = 0; i < n; ++i) ga[i] += gy[i];
            }
            if (b.requires_grad) {
                b.ensure_grad();
                T* gb = b.grad_data();
                for (std::int64_t i = 0; i < n; ++i) gb[i] += gy[i];
            }
        });
    }
    return y;
}

template <class T>
TensorT<T> sub(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a, b, "sub");
    auto n = a.numel();
    TensorT<T> y = TensorT<T>::zeros(a.shape);
    const T* ap = a.data();
    const T* bp = b.data();
    T* yp = y.data();
    for (std::int64_t i = 0; i < n; ++i) yp[i] = ap[i] - bp[i];
    ensure_finite(y, "sub");
    if (tape.recording() && (a.requires_grad || b.requires_grad)) {
        y.requires_grad = true;
        tape.record([a = a, b = b, y, n]() mutable {
            if (!y.grad) return;
            const T* gy = y.grad_data();
            if (a.requires_grad) {
                a.ensure_grad();
                T* ga = a.grad_data();
                for (std::int64_t i = 0; i < n; ++i) ga[i] += gy[i];
            }
            if (b.requires_grad) {
                b.ensure_grad();
                T* gb = b.grad_data();
                for (std::int64_t i = 0; i < n; ++i) gb[i] -= gy[i];
            }
        });
    }
    return y;
}

template <class T>
TensorT<T> mul(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a, b, "mul");
    auto n = a.numel();
    TensorT<T> y = TensorT<T>::zeros(a.shape);
    const T* ap = a.data();
    const T* bp = b.data();
    T* yp = y.data();
    for (std::int64_t i = 0; i < n; ++i) yp[i] = ap[i] * bp[i];
    ensure_finite(y, "mul");
    if (tape.recording() && (a.requires_grad || b.requires_grad)) {
        y.requires_grad = true;
        tape.record([a = a, b = b, y, n]() mutable {
            if (!y.grad) return;
            const T* gy = y.grad_data();
            if (a.requires_grad) {
                a.ensure_grad();
                const T* bv = b.data();
                T* ga = a.grad_data();
                for (std::int64_t i = 0; i < n; ++i) ga[i] += gy[i] * bv[i];
            }
            if (b.requires_grad) {
                b.ensure_grad();
                const T* av = a.data();
                T* gb = b.grad_data();
                for (std::int64_t i = 0; i < n; ++i) gb[i] += gy[i] * av[i];
            }
        });
    }
    return y;
}

template <class T>
TensorT<T> scale(TapeT<T>& tape, const TensorT<T>& x, T c) {
    auto n = x.numel();
    TensorT<T> y = TensorT<T>::zeros(x.shape);
    const T* xp = x.data();
    T* yp = y.data();
    for (std::int64_t i = 0; i < n; ++i) yp[i] = xp[i] * c;
    ensure_finite(y, "scale");
    if (tape.recording() && x.requires_grad) {
        y.requires_grad = true;
        tape.record([x = x, y, c, n]() mutable {
            if (!y.grad) return;
            x.ensure_grad();
            const T* gy = y.grad_data();
            T* gx = x.grad_data();
            for (std::int64_t i = 0; i < n; ++i) gx[i] += gy[i] * c;
        });
    }
    return y;
}

template <class T>
TensorT<T> add_scalar(TapeT<T>& tape, const TensorT<T>& x, T c) {
    auto n = x.numel();
    TensorT<T> y = TensorT<T>::zeros(x.shape);
    const T* xp = x.data();
    T* yp = y.data();
    for (std::int64_t i = 0; i < n; ++i) yp[i] = xp[i] + c;
    ensure_finite(y, "add_scalar");
    if (tape.recording() && x.requires_grad) {
        y.requires_grad = true;
        tape.record([x = x, y, n]() mutable {
            if (!y.grad) return;
            x.ensure_grad();
            const T* gy = y.grad_data();
            T* gx = x.grad_data();
            for (std::int64_t i = 0; i < n; ++i) gx[i] += gy[i];
        });
    }
    return y;
}

template <class T>
TensorT<T> dropout(TapeT<T>& tape, const TensorT<T>& x, double p, Mode mode,
                   RngStream& rng) {
    if (p < 0.0 || p >= 1.0) {
        throw ContractViolation("dropout probability must satisfy 0 <= p < 1");
    }
    if (mode == Mode::eval || p == 0.0) return x;
    auto n = x.numel();
    auto mask = std::make_shared<std::vector<std::uint8_t>>(
        static_cast<std::size_t>(n));
    std::uint8_t* mp = mask->data();
    for (std::int64_t i = 0; i < n; ++i) mp[i] = rng.next_double() >= p;
    T inv_keep = T(1) / static_cast<T>(1.0 - p);
    TensorT<T> y = TensorT<T>::zeros(x.shape);
    const T* xp = x.data();
    T* yp = y.data();
    for (std::int64_t i = 0; i < n; ++i) {
        yp[i] = mp[i] ? xp[i] * inv_keep : T(0);
    }
    ensure_finite(y, "dropout");
    if (tape.recording() && x.requires_grad) {
        y.requires_grad = true;
        tape.record([x = x, y, mask, inv_keep, n]() mutable {
            if (!y.grad) return;
            x.ensure_grad();
            const T* gy = y.grad_data();
            const std::uint8_t* m = mask->data();
            T* gx = x.grad_data();
            for (std::int64_t i = 0; i < n; ++i) {
                if (m[i]) gx[i] += gy[i] * inv_keep;
            }
        });
    }
    return y;
}

template <class T>
TensorT<T> reshape(TapeT<T>& tape, const TensorT<T>& x, Shape s) {
    if (shape_numel(s) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape) + " as " +
                         shape_str(s));
    }
    TensorT<T> y;
    y.shape = std::move(s);
    y.values = x.values;  // shared view, values are immutable
    if (tape.recording() && x.requires_grad) {
        y.requires_grad = true;
        auto n = x.numel();
        tape.record([x = x, y, n]() mutable {
            if (!y.grad) return;
            x.ensure_grad();
            const T* gy = y.grad_data();
            T* gx = x.grad_data();
            for (std::int64_t i = 0; i < n; ++i) gx[i] += gy[i];
        });
    }
    return y;
}

template <class T>
TensorT<T> transpose(TapeT<T>& tape, const TensorT<T>& x) {
    if (x.ndim() != 2) throw ShapeError("transpose expects a 2D tensor");
    std::int64_t r = x.shape[0], c = x.shape[1];
    TensorT<T> y = TensorT<T>::zeros({c, r});
    const T* xp = x.data();
    T* yp = y.data();
    for (std::int64_t i = 0; i < r; ++i) {
        for (std::int64_t j = 0; j < c; ++j) yp[j * r + i] = xp[i * c + j];
    }
    if (tape.recording() && x.requires_grad) {
        y.requires_grad = true;
        tape.record([x = x, y, r, c]() mutable {
            if (!y.grad) return;
            x.ensure_grad();
            const T* gy = y.grad_data();
            T* gx = x.grad_data();
            for (std::int64_t i = 0; i < r; ++i) {
                for (std::int64_t j = 0; j < c; ++j) gx[i * c + j] += gy[j * r + i];
            }
        });
    }
    return y;
}

template <class T>
TensorT<T> concat(TapeT<T>& tape, const std::vector<TensorT<T>>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    if (axis != 0 && axis != 1) throw ShapeError("concat supports 2D axis 0 or 1");
    for (const auto& p : parts) {
        if (p.ndim() != 2) throw ShapeError("concat expects 2D tensors");
    }
    std::int64_t rows = parts[0].shape[0], cols = parts[0].shape[1];
    std::int64_t total = 0;
    for (const auto& p : parts) {
        if (axis == 0 && p.shape[1] != cols) throw ShapeError("concat: column mismatch");
        if (axis == 1 && p.shape[0] != rows) throw ShapeError("concat: row mismatch");
        total += p.shape[axis];
    }
    Shape out_shape = axis == 0 ? Shape{total, cols} : Shape{rows, total};
    TensorT<T> y = TensorT<T>::zeros(out_shape);
    T* yp = y.data();
    bool needs = false;
    std::int64_t off = 0;
    for (const auto& p : parts) {
        needs = needs || p.requires_grad;
        if (axis == 0) {
            std::memcpy(yp + off * cols, p.data(),
                        static_cast<std::size_t>(p.numel()) * sizeof(T));
            off += p.shape[0];
        } else {
            std::int64_t w = p.shape[1];
            for (std::int64_t i = 0; i < rows; ++i) {
                std::memcpy(yp + i * total + off, p.data() + i * w,
                            static_cast<std::size_t>(w) * sizeof(T));
            }
            off += w;
        }
    }
    if (tape.recording() && needs) {
        y.requires_grad = true;
        tape.record([parts = parts, y, axis, rows, total]() mutable {
            if (!y.grad) return;
            const T* gy = y.grad_data();
            std::int64_t off = 0;
            for (auto& p : parts) {
                std::int64_t extent = p.shape[axis];
                if (p.requires_grad) {
                    p.ensure_grad();
                    T* gp = p.grad_data();
                    if (axis == 0) {
                        std::int64_t cols = p.shape[1];
                        for (std::int64_t i = 0; i < extent * cols; ++i) {
                            gp[i] += gy[off * cols + i];
                        }
                    } else {
                        for (std::int64_t i = 0; i < rows; ++i) {
                            for (std::int64_t j = 0; j < extent; ++j) {
                                gp[i * extent + j] += gy[i * total + off + j];
                            }
                        }
                    }
                }
                off += extent;
            }
        });
    }
    return y;
}

template <class T>
TensorT<T> stack_rows(TapeT<T>& tape, const std::vector<TensorT<T>>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows of zero tensors");
    std::int64_t d = rows[0].numel();
    for (const auto& r : rows) {
        if (r.ndim() != 1 || r.numel() != d) {
            throw ShapeError("stack_rows expects equal-length 1D tensors");
        }
    }
    auto n = static_cast<std::int64_t>(rows.size());
    TensorT<T> y = TensorT<T>::zeros({n, d});
    T* yp = y.data();
    bool needs = false;
    for (std::int64_t i = 0; i < n; ++i) {
        needs = needs || rows[static_cast<std::size_t>(i)].requires_grad;
        std::memcpy(yp + i * d, rows[static_cast<std::size_t>(i)].data(),
                    static_cast<std::size_t>(d) * sizeof(T));
    }
    if (tape.recording() && needs) {
        y.requires_grad = true;
        tape.record([rows = rows, y, n, d]() mutable {
            if (!y.grad) return;
            const T* gy = y.grad_data();
            for (std::int64_t i = 0; i < n; ++i) {
                auto& r = rows[static_cast<std::size_t>(i)];
                if (!r.requires_grad) continue;
                r.ensure_grad();
                T* gr = r.grad_data();
                for (std::int64_t j = 0; j < d; ++j) gr[j] += gy[i * d + j];
            }
        });
    }
    return y;
}

template <class T>
TensorT<T> gather_rows(TapeT<T>& tape, const TensorT<T>& x,
                       const std::vector<std::int64_t>& idx) {
    if (x.ndim() != 2) throw ShapeError("gather_rows expects a 2D tensor");
    std::int64_t rows = x.shape[0], d = x.shape[1];
    for (auto i : idx) {
        if (i < 0 || i >= rows) throw ShapeError("gather_rows: index out of range");
    }
    auto k = static_cast<std::int64_t>(idx.size());
    TensorT<T> y = TensorT<T>::zeros({k, d});
    T* yp = y.data();
    const T* xp = x.data();
    for (std::int64_t i = 0; i < k; ++i) {
        std::memcpy(yp + i * d, xp + idx[static_cast<std::size_t>(i)] * d,
                    static_cast<std::size_t>(d) * sizeof(T));
    }
    if (tape.recording() && x.requires_grad) {
        y.requires_grad = true;
        tape.record([x = x, y, idx, k, d]() mutable {
            if (!y.grad) return;
            x.ensure_grad();
            const T* gy = y.grad_data();
            T* gx = x.grad_data();
            for (std::int64_t i = 0; i < k; ++i) {
                std::int64_t src = idx[static_cast<std::size_t>(i)];
                for (std::int64_t j = 0; j < d; ++j) gx[src * d + j] += gy[i * d + j];
            }
        });
    }
    return y;
}

template <class T>
TensorT<T> matmul(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.shape[1] != b.shape[0]) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape) +
                         " x " + shape_str(b.shape));
    }
    std::int64_t n = a.shape[0], k = a.shape[1], m = b.shape[1];
    TensorT<T> y = TensorT<T>::zeros({n, m});
    gemm(false, false, static_cast<int>(n), static_cast<int>(m),
         static_cast<int>(k), T(1), a.data(), static_cast<int>(k), b.data(),
         static_cast<int>(m), T(0), y.data(), static_cast<int>(m));
    ensure_finite(y, "matmul");
    if (tape.recording() && (a.requires_grad || b.requires_grad)) {
        y.requires_grad = true;
        tape.record([a = a, b = b, y, n, k, m]() mutable {
            if (!y.grad) return;
            const T* gy = y.grad_data();
            if (a.requires_grad) {
                a.ensure_grad();
                // ga += gy * b^T
                gemm(false, true, static_cast<int>(n), static_cast<int>(k),
                     static_cast<int>(m), T(1), gy, static_cast<int>(m),
                     b.data(), static_cast<int>(m), T(1), a.grad_data(),
                     static_cast<int>(k));
            }
            if (b.requires_grad) {
                b.ensure_grad();
                // gb += a^T * gy
                gemm(true, false, static_cast<int>(k), static_cast<int>(m),
                     static_cast<int>(n), T(1), a.data(), static_cast<int>(k),
                     gy, static_cast<int>(m), T(1), b.grad_data(),
                     static_cast<int>(m));
            }
        });
    }
    return y;
}

template <class T>
TensorT<T> linear(TapeT<T>& tape, const TensorT<T>& x, const TensorT<T>& w,
                  const TensorT<T>& b) {
    if (x.ndim() != 2 || w.ndim() != 2 || b.ndim() != 1 ||
        x.shape[1] != w.shape[1] || w.shape[0] != b.shape[0]) {
        throw ShapeError("linear: incompatible shapes x" + shape_str(x.shape) +
                         " w" + shape_str(w.shape) + " b" + shape_str(b.shape));
    }
    std::int64_t n = x.shape[0], in = x.shape[1], out = w.shape[0];
    TensorT<T> y = TensorT<T>::zeros({n, out});
    T* yp = y.data();
    const T* bp = b.data();
    for (std::int64_t i = 0; i < n; ++i) {
        std::memcpy(yp + i * out, bp, static_cast<std::size_t>(out) * sizeof(T));
    }
    gemm(false, true, static_cast<int>(n), static_cast<int>(out),
         static_cast<int>(in), T(1), x.data(), static_cast<int>(in), w.data(),
         static_cast<int>(in), T(1), yp, static_cast<int>(out));
    ensure_finite(y, "linear");
    if (tape.recording() &&
        (x.requires_grad || w.requires_grad || b.requires_grad)) {
        y.requires_grad = true;
        tape.record([x = x, w = w, b = b, y, n, in, out]() mutable {
            if (!y.grad) return;
            const T* gy = y.grad_data();
            if (x.requires_grad) {
                x.ensure_grad();
                gemm(false, false, static_cast<int>(n), static_cast<int>(in),
                     static_cast<int>(out), T(1), gy, static_cast<int>(out),
                     w.data(), static_cast<int>(in), T(1), x.grad_data(),
                     static_cast<int>(in));
            }
            if (w.requires_grad) {
                w.ensure_grad();
                gemm(true, false, static_cast<int>(out), static_cast<int>(in),
                     static_cast<int>(n), T(1), gy, static_cast<int>(out),
                     x.data(), static_cast<int>(in), T(1), w.grad_data(),
                     static_cast<int>(in));
            }
            if (b.requires_grad) {
                b.ensure_grad();
                T* gb = b.grad_data();
                for (std::int64_t i = 0; i < n; ++i) {
                    for (std::int64_t j = 0; j < out; ++j) gb[j] += gy[i * out + j];
                }
            }
        });
    }
    return y;
}

template <class T>
TensorT<T> sum(TapeT<T>& tape, const TensorT<T>& x) {
    auto n = x.numel();
    const T* xp = x.data();
    // Accumulate in double so large reductions stay accurate at 32-bit.
    double acc = 0;
    for (std::int64_t i = 0; i < n; ++i) acc += static_cast<double>(xp[i]);
    TensorT<T> y = TensorT<T>::scalar(static_cast<T>(acc));
    ensure_finite(y, "sum");
    if (tape.recording() && x.requires_grad) {
        y.requires_grad = true;
        tape.record([x = x, y, n]() mutable {
            if (!y.grad) return;
            x.ensure_grad();
            T g = y.grad_data()[0];
            T* gx = x.grad_data();
            for (std::int64_t i = 0; i < n; ++i) gx[i] += g;
        });
    }
    return y;
}

template <class T>
TensorT<T> sum_axis0(TapeT<T>& tape, const TensorT<T>& x) {
    if (x.ndim() != 2) throw ShapeError("sum_axis0 expects a 2D tensor");
    std::int64_t n = x.shape[0], d = x.shape[1];
    TensorT<T> y = TensorT<T>::zeros({d});
    const T* xp = x.data();
    T* yp = y.data();
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < d; ++j) yp[j] += xp[i * d + j];
    }
    ensure_finite(y, "sum_axis0");
    if (tape.recording() && x.requires_grad) {
        y.requires_grad = true;
        tape.record([x = x, y, n, d]() mutable {
            if (!y.grad) return;
            x.ensure_grad();
            const T* gy = y.grad_data();
            T* gx = x.grad_data();
            for (std::int64_t i = 0; i < n; ++i) {
                for (std::int64_t j = 0; j < d; ++j) gx[i * d + j] += gy[j];
            }
        });
    }
    return y;
}

template <class T>
TensorT<T> softmax(TapeT<T>& tape, const TensorT<T>& x) {
    auto [rows, cols] = as_rows(x);
    TensorT<T> y = TensorT<T>::zeros(x.shape);
    const T* xp = x.data();
    T* yp = y.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* row = xp + r * cols;
        T* out = yp + r * cols;
        T mx = row[0];
        for (std::int64_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double z = 0;
        for (std::int64_t j = 0; j < cols; ++j) {
            out[j] = std::exp(row[j] - mx);
            z += static_cast<double>(out[j]);
        }
        T inv = static_cast<T>(1.0 / z);
        for (std::int64_t j = 0; j < cols; ++j) out[j] *= inv;
    }
    ensure_finite(y, "softmax");
    if (tape.recording() && x.requires_grad) {
        y.requires_grad = true;
        tape.record([x = x, y, rows, cols]() mutable {
            if (!y.grad) return;
            x.ensure_grad();
            const T* gy = y.grad_data();
            const T* yv = y.data();
            T* gx = x.grad_data();
            for (std::int64_t r = 0; r < rows; ++r) {
                const T* g = gy + r * cols;
                const T* p = yv + r * cols;
                T* out = gx + r * cols;
                double dot = 0;
                for (std::int64_t j = 0; j < cols; ++j) {
                    dot += static_cast<double>(g[j]) * p[j];
                }
                for (std::int64_t j = 0; j < cols; ++j) {
                    out[j] += (g[j] - static_cast<T>(dot)) * p[j];
                }
            }
        });
    }
    return y;
}

template <class T>
TensorT<T> l2_normalize_rows(TapeT<T>& tape, const TensorT<T>& x, T eps) {
    auto [rows, cols] = as_rows(x);
    TensorT<T> y = TensorT<T>::zeros(x.shape);
    auto norms = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
    const T* xp = x.data();
    T* yp = y.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* row = xp + r * cols;
        double ss = 0;
        for (std::int64_t j = 0; j < cols; ++j) {
            ss += static_cast<double>(row[j]) * row[j];
        }
        T nrm = static_cast<T>(std::sqrt(ss));
        (*norms)[static_cast<std::size_t>(r)] = nrm;
        T inv = T(1) / (nrm + eps);
        for (std::int64_t j = 0; j < cols; ++j) yp[r * cols + j] = row[j] * inv;
    }
    ensure_finite(y, "l2_normalize_rows");
    if (tape.recording() && x.requires_grad) {
        y.requires_grad = true;
        tape.record([x = x, y, norms, eps, rows, cols]() mutable {
            if (!y.grad) return;
            x.ensure_grad();
            const T* gy = y.grad_data();
            const T* xv = x.data();
            T* gx = x.grad_data();
            for (std::int64_t r = 0; r < rows; ++r) {
                T nrm = (*norms)[static_cast<std::size_t>(r)];
                T inv = T(1) / (nrm + eps);
                const T* g = gy + r * cols;
                const T* row = xv + r * cols;
                double dot = 0;
                for (std::int64_t j = 0; j < cols; ++j) {
                    dot += static_cast<double>(g[j]) * row[j];
                }
                // For a zero row the second term vanishes with the row itself.
                T coef = nrm > T(0)
                             ? static_cast<T>(dot) / (nrm * (nrm + eps) * (nrm + eps))
                             : T(0);
                for (std::int64_t j = 0; j < cols; ++j) {
                    gx[r * cols + j] += g[j] * inv - row[j] * coef;
                }
            }
        });
    }
    return y;
}

template <class T>
TensorT<T> softmax_cross_entropy(TapeT<T>& tape, const TensorT<T>& logits,
                                 const std::vector<std::int64_t>& targets) {
    if (logits.ndim() != 2) throw ShapeError("softmax_cross_entropy expects 2D logits");
    std::int64_t n = logits.shape[0], m = logits.shape[1];
    if (static_cast<std::int64_t>(targets.size()) != n) {
        throw ShapeError("softmax_cross_entropy: one target per row required");
    }
    for (auto t : targets) {
        if (t < 0 || t >= m) throw ShapeError("softmax_cross_entropy: target out of range");
    }
    auto probs = std::make_shared<std::vector<T>>(
        static_cast<std::size_t>(n * m));
    const T* zp = logits.data();
    T* pp = probs->data();
    double total = 0;
    for (std::int64_t r = 0; r < n; ++r) {
        const T* row = zp + r * m;
        T mx = row[0];
        for (std::int64_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
        double z = 0;
        for (std::int64_t j = 0; j < m; ++j) {
            double e = std::exp(static_cast<double>(row[j] - mx));
            pp[r * m + j] = static_cast<T>(e);
            z += e;
        }
        double inv = 1.0 / z;
        for (std::int64_t j = 0; j < m; ++j) {
            pp[r * m + j] = static_cast<T>(pp[r * m + j] * inv);
        }
        total += std::log(z) -
                 static_cast<double>(row[targets[static_cast<std::size_t>(r)]] - mx);
    }
    TensorT<T> y = TensorT<T>::scalar(static_cast<T>(total / static_cast<double>(n)));
    ensure_finite(y, "softmax_cross_entropy");
    if (tape.recording() && logits.requires_grad) {
        y.requires_grad = true;
        tape.record([logits = logits, y, probs, targets, n, m]() mutable {
            if (!y.grad) return;
            logits.ensure_grad();
            T g = y.grad_data()[0] / static_cast<T>(n);
            const T* pp = probs->data();
            T* gz = logits.grad_data();
            for (std::int64_t r = 0; r < n; ++r) {
                std::int64_t t = targets[static_cast<std::size_t>(r)];
                for (std::int64_t j = 0; j < m; ++j) {
                    T delta = pp[r * m + j] - (j == t ? T(1) : T(0));
                    gz[r * m + j] += g * delta;
                }
            }
        });
    }
    return y;
}

#define XALN_INSTANTIATE_OPS(T)                                                     \
    template TensorT<T> relu(TapeT<T>&, const TensorT<T>&);                         \
    template TensorT<T> sigmoid(TapeT<T>&, const TensorT<T>&);                      \
    template TensorT<T> log(TapeT<T>&, const TensorT<T>&);                          \
    template TensorT<T> exp(TapeT<T>&, const TensorT<T>&);                          \
    template TensorT<T> add(TapeT<T>&, const TensorT<T>&, const TensorT<T>&);       \
    template TensorT<T> sub(TapeT<T>&, const TensorT<T>&, const TensorT<T>&);       \
    template TensorT<T> mul(TapeT<T>&, const TensorT<T>&, const TensorT<T>&);       \
    template TensorT<T> scale(TapeT<T>&, const TensorT<T>&, T);                     \
    template TensorT<T> add_scalar(TapeT<T>&, const TensorT<T>&, T);                \
    template TensorT<T> dropout(TapeT<T>&, const TensorT<T>&, double, Mode,         \
                                RngStream&);                                        \
    template TensorT<T> reshape(TapeT<T>&, const TensorT<T>&, Shape);               \
    template TensorT<T> transpose(TapeT<T>&, const TensorT<T>&);                    \
    template TensorT<T> concat(TapeT<T>&, const std::vector<TensorT<T>>&, int);     \
    template TensorT<T> stack_rows(TapeT<T>&, const std::vector<TensorT<T>>&);      \
    template TensorT<T> gather_rows(TapeT<T>&, const TensorT<T>&,                   \
                                    const std::vector<std::int64_t>&);              \
    template TensorT<T> matmul(TapeT<T>&, const TensorT<T>&, const TensorT<T>&);    \
    template TensorT<T> linear(TapeT<T>&, const TensorT<T>&, const TensorT<T>&,     \
                               const TensorT<T>&);                                  \
    template TensorT<T> sum(TapeT<T>&, const TensorT<T>&);                          \
    template TensorT<T> sum_axis0(TapeT<T>&, const TensorT<T>&);                    \
    template TensorT<T> softmax(TapeT<T>&, const TensorT<T>&);                      \
    template TensorT<T> l2_normalize_rows(TapeT<T>&, const TensorT<T>&, T);         \
    template TensorT<T> softmax_cross_entropy(TapeT<T>&, const TensorT<T>&,         \
                                              const std::vector<std::int64_t>&);

XALN_INSTANTIATE_OPS(float)
XALN_INSTANTIATE_OPS(double)

#undef XALN_INSTANTIATE_OPS

}  // namespace xaln::ops
