#pragma once

#include <functional>
#include <vector>

#include "xaln/common.hpp"
#include "xaln/tensor.hpp"

namespace xaln {

// Reverse-mode tape. Ops append one record per recorded operation; creation
// order is a topological order because an op's inputs always exist before its
// output. backward() replays the records exactly once, in reverse, releasing
// each record (and the activations its closure owns) as soon as it has run.
template <class T>
class TapeT {
public:
    bool recording() const { return recording_; }
    void set_recording(bool r) { recording_ = r; }

    void record(std::function<void()> fn) {
        if (recording_) records_.push_back(std::move(fn));
    }

    std::size_t size() const { return records_.size(); }
    void clear() { records_.clear(); }

    void backward(TensorT<T>& loss) {
        if (loss.numel() != 1) {
            throw ContractViolation("backward requires a scalar loss");
        }
        if (records_.empty()) {
            throw ContractViolation("backward on an empty tape");
        }
        if (!loss.requires_grad) {
            throw ContractViolation("loss does not require grad");
        }
        loss.ensure_grad();
        (*loss.grad)[0] = T(1);
        for (std::size_t i = records_.size(); i-- > 0;) {
            records_[i]();
            records_[i] = nullptr;  // free saved activations early
        }
        records_.clear();
    }

private:
    std::vector<std::function<void()>> records_;
    bool recording_ = true;
};

using Tape = TapeT<float>;
using Tape64 = TapeT<double>;

}  // namespace xaln
