#include <doctest.h>

#include <cmath>

#include "support/fd.hpp"
#include "xaln/objectives.hpp"

using namespace xaln;
namespace t = xaln::testing;

TEST_CASE("gkl of identical matrices is exactly zero") {
    RngStream rng(1, 1);
    Tape tape;
    Tensor x = t::random_tensor({4, 9}, rng, 0.0, 1.0, false);
    x.data()[0] = 0.0f;  // include an exact zero cell
    Tensor loss = objectives::gkl_loss(tape, x, x);
    CHECK(loss.item() == 0.0f);
}

TEST_CASE("gkl single-cell oracles") {
    Tape tape;
    Tensor x0 = Tensor::from({1, 1}, {0.0f});
    Tensor h0 = Tensor::from({1, 1}, {0.5f});
    CHECK(objectives::gkl_loss(tape, x0, h0).item() == doctest::Approx(0.5));

    Tensor x1 = Tensor::from({1, 1}, {0.5f});
    Tensor h1 = Tensor::from({1, 1}, {0.25f});
    // 0.5*ln2 - 0.25 = 0.09657359...
    CHECK(objectives::gkl_loss(tape, x1, h1).item() ==
          doctest::Approx(0.0965735903).epsilon(1e-6));

    Tensor neg = Tensor::from({1, 1}, {-0.1f});
    CHECK_THROWS_AS(objectives::gkl_loss(tape, neg, h1), ContractViolation);
    CHECK_THROWS_AS(objectives::gkl_loss(tape, x1, neg), ContractViolation);
}

TEST_CASE("gkl is positive unless equal, and averages over the batch") {
    RngStream rng(2, 1);
    Tape tape;
    for (int rep = 0; rep < 5; ++rep) {
        Tensor x = t::random_tensor({3, 7}, rng, 0.0, 1.0, false);
        Tensor h = t::random_tensor({3, 7}, rng, 0.05, 0.95, false);
        CHECK(objectives::gkl_loss(tape, x, h).item() > 0.0f);
    }
    // Doubling the batch with the same content leaves the mean unchanged.
    Tensor x = t::random_tensor({2, 5}, rng, 0.0, 1.0, false);
    Tensor h = t::random_tensor({2, 5}, rng, 0.1, 0.9, false);
    Tensor x2 = Tensor::zeros({4, 5});
    Tensor h2 = Tensor::zeros({4, 5});
    for (int rep = 0; rep < 2; ++rep) {
        std::copy(x.values->begin(), x.values->end(),
                  x2.values->begin() + rep * 10);
        std::copy(h.values->begin(), h.values->end(),
                  h2.values->begin() + rep * 10);
    }
    CHECK(objectives::gkl_loss(tape, x2, h2).item() ==
          doctest::Approx(objectives::gkl_loss(tape, x, h).item()).epsilon(1e-6));
}

TEST_CASE("finite differences: gkl w.r.t. the reconstruction") {
    RngStream rng(3, 1);
    Tensor64 x = t::random_tensor64({2, 6}, rng, 0.0, 1.0, false);
    x.data()[3] = 0.0;
    Tensor64 h = t::random_tensor64({2, 6}, rng, 0.1, 0.9);
    double err = t::fd_max_rel_err(
        [&](Tape64& tape) { return objectives::gkl_loss(tape, x, h); }, {h});
    CHECK(err < 1e-4);
}

TEST_CASE("ntxent with identical embeddings equals ln(N)") {
    RngStream rng(4, 1);
    for (std::int64_t n : {2, 8, 128}) {
        Tensor64 row = t::random_tensor64({5}, rng, -1, 1, false);
        Tensor64 phi = Tensor64::zeros({n, 5});
        for (std::int64_t i = 0; i < n; ++i) {
            std::copy(row.values->begin(), row.values->end(),
                      phi.values->begin() + i * 5);
        }
        Tape64 tape;
        double loss = objectives::ntxent_loss(tape, phi, phi, 0.1).item();
        CHECK(std::abs(loss - std::log(static_cast<double>(n))) < 1e-6);
    }
    // Also at 32-bit precision.
    Tensor phi32 = Tensor::full({4, 3}, 0.7f);
    Tape tape32;
    CHECK(std::abs(objectives::ntxent_loss(tape32, phi32, phi32, 0.1f).item() -
                   std::log(4.0)) < 1e-6);
}

TEST_CASE("ntxent orthogonal pair closed form at N=2, tau=0.1") {
    Tensor64 a = Tensor64::from({2, 2}, {1, 0, 0, 1});
    Tensor64 w = Tensor64::from({2, 2}, {1, 0, 0, 1});
    Tape64 tape;
    double loss = objectives::ntxent_loss(tape, a, w, 0.1).item();
    double expect = std::log(1.0 + std::exp(-10.0));
    CHECK(std::abs(loss - expect) < 1e-8);
}

TEST_CASE("ntxent is symmetric under swapping the modalities") {
    RngStream rng(5, 1);
    Tensor64 a = t::random_tensor64({6, 9}, rng, -1, 1, false);
    Tensor64 w = t::random_tensor64({6, 9}, rng, -1, 1, false);
    Tape64 tape;
    double l1 = objectives::ntxent_loss(tape, a, w, 0.1).item();
    double l2 = objectives::ntxent_loss(tape, w, a, 0.1).item();
    CHECK(l1 == l2);
}

TEST_CASE("ntxent ignores positive rescaling of a single embedding") {
    RngStream rng(6, 1);
    Tensor a = t::random_tensor({5, 8}, rng, -1, 1, false);
    Tensor w = t::random_tensor({5, 8}, rng, -1, 1, false);
    Tape tape;
    float base = objectives::ntxent_loss(tape, a, w, 0.1f).item();
    Tensor a2 = a.clone();
    for (std::int64_t j = 0; j < 8; ++j) a2.data()[2 * 8 + j] *= 41.0f;
    float scaled = objectives::ntxent_loss(tape, a2, w, 0.1f).item();
    CHECK(std::abs(base - scaled) < 1e-4);
}

TEST_CASE("ntxent handles a zero-norm embedding via the epsilon guard") {
    Tensor a = Tensor::zeros({2, 4});
    a.data()[4] = 1.0f;  // row 1 nonzero, row 0 exactly zero
    Tensor w = Tensor::full({2, 4}, 0.5f);
    Tape tape;
    float loss = objectives::ntxent_loss(tape, a, w, 0.1f).item();
    CHECK(std::isfinite(loss));
}

TEST_CASE("ntxent contract checks") {
    Tape tape;
    Tensor a = Tensor::zeros({1, 4});
    CHECK_THROWS_AS(objectives::ntxent_loss(tape, a, a, 0.1f), ContractViolation);
    Tensor b = Tensor::zeros({3, 4});
    CHECK_THROWS_AS(objectives::ntxent_loss(tape, b, b, 0.0f), ContractViolation);
}

TEST_CASE("increasing a diagonal similarity strictly decreases the loss") {
    // The NT-Xent core on a synthetic similarity matrix, both directions.
    RngStream rng(7, 1);
    auto loss_of = [](const Tensor64& s) {
        Tape64 tape;
        std::vector<std::int64_t> targets = {0, 1, 2, 3};
        Tensor64 l1 = ops::softmax_cross_entropy(tape, s, targets);
        Tensor64 l2 =
            ops::softmax_cross_entropy(tape, ops::transpose(tape, s), targets);
        return 0.5 * (l1.item() + l2.item());
    };
    Tensor64 s = t::random_tensor64({4, 4}, rng, -2, 2, false);
    double before = loss_of(s);
    for (int i = 0; i < 4; ++i) {
        Tensor64 bumped = s.clone();
        bumped.data()[i * 4 + i] += 0.5;
        CHECK(loss_of(bumped) < before);
    }
}

TEST_CASE("finite differences: ntxent w.r.t. both modalities") {
    RngStream rng(8, 1);
    Tensor64 a = t::random_tensor64({5, 7}, rng, -1, 1);
    Tensor64 w = t::random_tensor64({5, 7}, rng, -1, 1);
    double err = t::fd_max_rel_err(
        [&](Tape64& tape) { return objectives::ntxent_loss(tape, a, w, 0.1); },
        {a, w});
    CHECK(err < 1e-4);
}

TEST_CASE("total loss weights and breakdown") {
    RngStream rng(9, 1);
    Tape tape;
    Tensor x = t::random_tensor({2, 4}, rng, 0.0, 1.0, false);
    Tensor h = t::random_tensor({2, 4}, rng, 0.1, 0.9, false);
    Tensor pa = t::random_tensor({2, 6}, rng, -1, 1, false);
    Tensor pw = t::random_tensor({2, 6}, rng, -1, 1, false);

    objectives::LossWeights w;
    auto both = objectives::total_loss(tape, x, h, pa, pw, w);
    CHECK(both.total.item() ==
          doctest::Approx(5.0 * both.gkl.item() + 10.0 * both.ntxent.item())
              .epsilon(1e-5));

    objectives::LossWeights only_gkl;
    only_gkl.lambda_xi = 0.0;
    auto g = objectives::total_loss(tape, x, h, pa, pw, only_gkl);
    CHECK(g.total.item() == doctest::Approx(5.0 * g.gkl.item()).epsilon(1e-6));

    objectives::LossWeights only_nt;
    only_nt.lambda_a = 0.0;
    auto nt = objectives::total_loss(tape, x, h, pa, pw, only_nt);
    CHECK(nt.total.item() ==
          doctest::Approx(10.0 * nt.ntxent.item()).epsilon(1e-6));
}
