#include <doctest.h>

#include <cmath>

#include "support/fd.hpp"
#include "xaln/ops.hpp"
#include "xaln/sgd.hpp"

using namespace xaln;
namespace t = xaln::testing;

TEST_CASE("relu forward") {
    Tape tape;
    Tensor x = Tensor::from({3}, {-1.0f, 0.0f, 2.0f});
    Tensor y = ops::relu(tape, x);
    CHECK(y.data()[0] == 0.0f);
    CHECK(y.data()[1] == 0.0f);
    CHECK(y.data()[2] == 2.0f);
}

TEST_CASE("softmax of equal logits is uniform") {
    Tape tape;
    Tensor x = Tensor::from({1, 4}, {0.7f, 0.7f, 0.7f, 0.7f});
    Tensor y = ops::softmax(tape, x);
    for (int i = 0; i < 4; ++i) CHECK(y.data()[i] == doctest::Approx(0.25).epsilon(1e-7));
}

TEST_CASE("softmax rows are a distribution") {
    RngStream rng(7, 1);
    Tape tape;
    Tensor x = t::random_tensor({17, 9}, rng, -30.0, 30.0, false);
    Tensor y = ops::softmax(tape, x);
    for (std::int64_t r = 0; r < 17; ++r) {
        double s = 0;
        for (std::int64_t c = 0; c < 9; ++c) {
            float v = y.data()[r * 9 + c];
            CHECK(v >= 0.0f);
            s += v;
        }
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("dropout p=0 and eval mode are the identity") {
    RngStream rng(1, stream::dropout);
    Tape tape;
    Tensor x = t::random_tensor({4, 5}, rng, -1, 1, false);
    Tensor y0 = ops::dropout(tape, x, 0.0, Mode::train, rng);
    Tensor y1 = ops::dropout(tape, x, 0.5, Mode::eval, rng);
    CHECK(y0.values == x.values);
    CHECK(y1.values == x.values);
}

TEST_CASE("dropout scales survivors by 1/(1-p)") {
    RngStream rng(3, stream::dropout);
    Tape tape;
    Tensor x = Tensor::full({1000}, 1.0f);
    Tensor y = ops::dropout(tape, x, 0.25, Mode::train, rng);
    int kept = 0;
    for (std::int64_t i = 0; i < 1000; ++i) {
        float v = y.data()[i];
        CHECK((v == 0.0f || v == doctest::Approx(1.0f / 0.75f)));
        kept += v != 0.0f;
    }
    CHECK(kept > 650);
    CHECK(kept < 850);
    CHECK_THROWS_AS(ops::dropout(tape, x, 1.0, Mode::train, rng), ContractViolation);
}

TEST_CASE("backward of sum is all ones") {
    Tape tape;
    RngStream rng(5, 1);
    Tensor x = t::random_tensor({2, 3}, rng);
    Tensor loss = ops::sum(tape, x);
    tape.backward(loss);
    for (std::int64_t i = 0; i < 6; ++i) CHECK(x.grad_data()[i] == 1.0f);
}

TEST_CASE("backward of sum(x*x) at (1,2) is (2,4)") {
    Tape tape;
    Tensor x = Tensor::from({2}, {1.0f, 2.0f});
    x.requires_grad = true;
    x.ensure_grad();
    Tensor loss = ops::sum(tape, ops::mul(tape, x, x));
    tape.backward(loss);
    CHECK(x.grad_data()[0] == doctest::Approx(2.0f));
    CHECK(x.grad_data()[1] == doctest::Approx(4.0f));
}

TEST_CASE("backward contract violations") {
    Tape tape;
    RngStream rng(5, 2);
    Tensor x = t::random_tensor({3}, rng);
    Tensor y = ops::mul(tape, x, x);
    CHECK_THROWS_AS(tape.backward(y), ContractViolation);  // non-scalar
    Tape empty;
    Tensor s = Tensor::scalar(1.0f);
    s.requires_grad = true;
    CHECK_THROWS_AS(empty.backward(s), ContractViolation);  // empty tape
}

TEST_CASE("forward is bit-identical across runs with the same seed") {
    auto run = [] {
        RngStream rng(42, stream::dropout);
        Tape tape;
        RngStream data_rng(9, 1);
        Tensor x = t::random_tensor({6, 8}, data_rng, -2, 2, false);
        Tensor y = ops::dropout(tape, ops::sigmoid(tape, x), 0.3, Mode::train, rng);
        return *y.values;
    };
    CHECK(run() == run());
}

TEST_CASE("sgd step examples") {
    Tensor p = Tensor::scalar(1.0f);
    p.requires_grad = true;
    p.ensure_grad();
    p.grad_data()[0] = 2.0f;
    SgdOptimizer opt(0.005f);
    opt.add_parameter(p);
    opt.step();
    CHECK(p.data()[0] == doctest::Approx(0.99f));

    // 100 steps on f(p)=p^2 from p=1, lr=0.1: p shrinks by 0.8 each step.
    Tensor q = Tensor::scalar(1.0f);
    q.requires_grad = true;
    q.ensure_grad();
    SgdOptimizer opt2(0.1f);
    opt2.add_parameter(q);
    for (int i = 0; i < 100; ++i) {
        opt2.zero_grad();
        Tape tape;
        Tensor loss = ops::mul(tape, q, q);
        Tensor scalar_loss = ops::sum(tape, loss);
        tape.backward(scalar_loss);
        opt2.step();
    }
    CHECK(std::abs(q.data()[0]) < 1e-8);

    // Zero gradient leaves parameters unchanged.
    Tensor r = Tensor::scalar(0.5f);
    r.requires_grad = true;
    r.ensure_grad();
    SgdOptimizer opt3(1.0f);
    opt3.add_parameter(r);
    opt3.step();
    CHECK(r.data()[0] == 0.5f);
}

TEST_CASE("non-finite forward results are an error") {
    Tape tape;
    Tensor x = Tensor::from({2}, {-1.0f, 2.0f});
    CHECK_THROWS_AS(ops::log(tape, x), NonFiniteError);
    Tensor big = Tensor::from({1}, {200.0f});
    CHECK_THROWS_AS(ops::exp(tape, big), NonFiniteError);
}

TEST_CASE("shape errors") {
    Tape tape;
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({3, 2});
    CHECK_THROWS_AS(ops::add(tape, a, b), ShapeError);
    CHECK_THROWS_AS(ops::matmul(tape, a, a), ShapeError);
    CHECK_THROWS_AS(ops::reshape(tape, a, {4, 2}), ShapeError);
}

TEST_CASE("finite differences: elementwise and reductions") {
    RngStream rng(11, 1);
    // Inputs kept away from relu's kink at zero.
    Tensor64 x = t::random_tensor64({4, 5}, rng, 0.2, 1.5);
    double err = t::fd_max_rel_err(
        [&](Tape64& t_) {
            return ops::sum(t_, ops::relu(t_, ops::scale(t_, x, 1.7)));
        },
        {x});
    CHECK(err < 1e-4);

    Tensor64 a = t::random_tensor64({3, 4}, rng, -1, 1);
    Tensor64 b = t::random_tensor64({3, 4}, rng, -1, 1);
    err = t::fd_max_rel_err(
        [&](Tape64& t_) {
            auto s = ops::sigmoid(t_, ops::mul(t_, a, b));
            auto d = ops::sub(t_, s, ops::exp(t_, ops::scale(t_, a, 0.3)));
            return ops::sum(t_, ops::mul(t_, d, d));
        },
        {a, b});
    CHECK(err < 1e-4);

    Tensor64 pos = t::random_tensor64({6}, rng, 0.5, 2.0);
    err = t::fd_max_rel_err(
        [&](Tape64& t_) {
            return ops::sum(t_, ops::log(t_, ops::add_scalar(t_, pos, 0.1)));
        },
        {pos});
    CHECK(err < 1e-4);
}

TEST_CASE("finite differences: matmul, linear, transpose, softmax") {
    RngStream rng(13, 1);
    Tensor64 a = t::random_tensor64({4, 3}, rng);
    Tensor64 b = t::random_tensor64({3, 5}, rng);
    double err = t::fd_max_rel_err(
        [&](Tape64& t_) {
            auto m = ops::matmul(t_, a, b);
            auto p = ops::softmax(t_, m);
            return ops::sum(t_, ops::mul(t_, p, m));
        },
        {a, b});
    CHECK(err < 1e-4);

    Tensor64 x = t::random_tensor64({4, 6}, rng);
    Tensor64 w = t::random_tensor64({3, 6}, rng);
    Tensor64 bias = t::random_tensor64({3}, rng);
    err = t::fd_max_rel_err(
        [&](Tape64& t_) {
            auto y = ops::linear(t_, x, w, bias);
            auto yt = ops::transpose(t_, y);
            return ops::sum(t_, ops::mul(t_, yt, yt));
        },
        {x, w, bias});
    CHECK(err < 1e-4);
}

TEST_CASE("finite differences: gather, stack, concat, sum_axis0, l2norm, ce") {
    RngStream rng(17, 1);
    Tensor64 x = t::random_tensor64({5, 4}, rng);
    double err = t::fd_max_rel_err(
        [&](Tape64& t_) {
            auto g = ops::gather_rows(t_, x, {3, 0, 3});
            auto s = ops::sum_axis0(t_, g);
            return ops::sum(t_, ops::mul(t_, s, s));
        },
        {x});
    CHECK(err < 1e-4);

    Tensor64 r0 = t::random_tensor64({4}, rng);
    Tensor64 r1 = t::random_tensor64({4}, rng);
    err = t::fd_max_rel_err(
        [&](Tape64& t_) {
            auto m = ops::stack_rows(t_, {r0, r1});
            auto c = ops::concat(t_, {m, m}, 1);
            auto n = ops::l2_normalize_rows(t_, c, 1e-8);
            return ops::softmax_cross_entropy(t_, n, {1, 6});
        },
        {r0, r1});
    CHECK(err < 1e-4);
}

TEST_CASE("finite differences: dropout with replayed mask") {
    RngStream rng(23, 1);
    Tensor64 x = t::random_tensor64({6, 6}, rng, 0.1, 1.0);
    double err = t::fd_max_rel_err(
        [&](Tape64& t_) {
            RngStream drop(99, stream::dropout);  // reseeded per forward
            auto y = ops::dropout(t_, x, 0.4, Mode::train, drop);
            return ops::sum(t_, ops::mul(t_, y, y));
        },
        {x});
    CHECK(err < 1e-4);
}
