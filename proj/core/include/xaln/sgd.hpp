#pragma once

#include <vector>

#include "xaln/tensor.hpp"

namespace xaln {

// Plain SGD: p <- p - lr * g for every registered parameter.
template <class T>
class SgdOptimizerT {
public:
    // lr == 0 is permitted (a no-op step); negative rates are rejected.
    explicit SgdOptimizerT(T lr) : lr_(lr) {
        if (!(lr >= T(0))) throw ContractViolation("learning rate must be >= 0");
    }

    void add_parameter(const TensorT<T>& p) {
        if (!p.requires_grad) {
            throw ContractViolation("optimizer parameter must require grad");
        }
        params_.push_back(p);
        params_.back().ensure_grad();
    }

    void add_parameters(const std::vector<TensorT<T>>& ps) {
        for (const auto& p : ps) add_parameter(p);
    }

    void step() {
        for (auto& p : params_) {
            T* v = p.data();
            const T* g = p.grad_data();
            auto n = p.numel();
            for (std::int64_t i = 0; i < n; ++i) v[i] -= lr_ * g[i];
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    T learning_rate() const { return lr_; }
    void set_learning_rate(T lr) {
        if (!(lr >= T(0))) throw ContractViolation("learning rate must be >= 0");
        lr_ = lr;
    }
    std::size_t parameter_count() const { return params_.size(); }

private:
    std::vector<TensorT<T>> params_;
    T lr_;
};

using SgdOptimizer = SgdOptimizerT<float>;

}  // namespace xaln
