#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "xaln/common.hpp"

namespace xaln {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s);

// Dense row-major tensor. Values are shared and treated as immutable once an
// op has produced them; mutation is reserved for parameter initialization,
// optimizer steps and running-statistics updates. The grad buffer exists only
// on the autodiff path.
template <class T>
struct TensorT {
    Shape shape;
    std::shared_ptr<std::vector<T>> values;
    std::shared_ptr<std::vector<T>> grad;
    bool requires_grad = false;

    TensorT() = default;

    static TensorT zeros(Shape s) {
        TensorT t;
        t.shape = std::move(s);
        t.values = std::make_shared<std::vector<T>>(
            static_cast<std::size_t>(shape_numel(t.shape)), T(0));
        return t;
    }

    static TensorT full(Shape s, T v) {
        TensorT t = zeros(std::move(s));
        for (auto& x : *t.values) x = v;
        return t;
    }

    static TensorT from(Shape s, std::vector<T> data) {
        if (shape_numel(s) != static_cast<std::int64_t>(data.size())) {
            throw ShapeError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(s));
        }
        TensorT t;
        t.shape = std::move(s);
        t.values = std::make_shared<std::vector<T>>(std::move(data));
        return t;
    }

    static TensorT scalar(T v) { return from({1}, {v}); }

    std::int64_t numel() const { return shape_numel(shape); }
    std::int64_t dim(std::size_t i) const { return shape[i]; }
    std::size_t ndim() const { return shape.size(); }

    const T* data() const { return values->data(); }
    T* data() { return values->data(); }

    T item() const {
        if (numel() != 1) throw ContractViolation("item() on non-scalar tensor");
        return (*values)[0];
    }

    // The grad cell is shared by every copy of the tensor (closures capture
    // copies), so it must exist before capture; the buffer itself is filled
    // lazily on first accumulation.
    void alloc_grad_cell() {
        if (!grad) grad = std::make_shared<std::vector<T>>();
    }

    void ensure_grad() {
        alloc_grad_cell();
        if (grad->empty()) {
            grad->assign(static_cast<std::size_t>(numel()), T(0));
        }
    }

    bool has_grad_values() const { return grad && !grad->empty(); }

    void zero_grad() {
        if (grad) std::fill(grad->begin(), grad->end(), T(0));
    }

    const T* grad_data() const { return grad->data(); }
    T* grad_data() { return grad->data(); }

    TensorT<T> detached() const {
        TensorT<T> t;
        t.shape = shape;
        t.values = values;
        return t;
    }

    // Deep copy of values (grad not copied).
    TensorT<T> clone() const {
        TensorT<T> t;
        t.shape = shape;
        t.values = std::make_shared<std::vector<T>>(*values);
        t.requires_grad = requires_grad;
        if (requires_grad) t.ensure_grad();
        return t;
    }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

// Throws NonFiniteError if any element is NaN or +-Inf. Bit-level check, one
// vectorizable pass.
void ensure_finite(const float* p, std::int64_t n, const char* op);
void ensure_finite(const double* p, std::int64_t n, const char* op);

template <class T>
void ensure_finite(const TensorT<T>& t, const char* op) {
    ensure_finite(t.data(), t.numel(), op);
}

}  // namespace xaln
