#include <doctest.h>

#include <cmath>
#include <cstring>

#include "support/fd.hpp"
#include "xaln/model.hpp"

using namespace xaln;
namespace t = xaln::testing;

namespace {

Tensor random_patch_batch(std::int64_t n, RngStream& rng) {
    Tensor x = Tensor::zeros({n, 1, 96, 96});
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        x.data()[i] = static_cast<float>(rng.next_double());
    }
    return x;
}

}  // namespace

TEST_CASE("variant parsing") {
    auto v = model::VariantConfig::parse("w2v-128-1h");
    CHECK(v.word_dim == 128);
    CHECK(v.heads == 1);
    CHECK(v.aggregation == model::Aggregation::attention);
    CHECK(v.context_dim == 1152);

    auto m = model::VariantConfig::parse("w2v-1152-mean");
    CHECK(m.aggregation == model::Aggregation::mean);
    CHECK(m.context_dim == 1152);

    auto m2 = model::VariantConfig::parse("w2v-128-mean");
    CHECK(m2.context_dim == 128);

    auto h4 = model::VariantConfig::parse("w2v-1152-4h");
    CHECK(h4.heads == 4);

    CHECK_THROWS_AS(model::VariantConfig::parse("w2v-64-1h"), ConfigError);
    CHECK_THROWS_AS(model::VariantConfig::parse("bogus"), ConfigError);
    CHECK(model::VariantConfig::all_names().size() == 6);
}

TEST_CASE("encoder produces 1152-dim embeddings, deterministic in eval mode") {
    model::AlignmentModel m(model::VariantConfig::parse("w2v-128-1h"), 0);
    RngStream rng(1, 1);
    Tensor x = random_patch_batch(2, rng);
    Tape tape;
    tape.set_recording(false);
    RngStream d1(0, stream::dropout), d2(0, stream::dropout);
    Tensor z1 = m.encode(tape, x, Mode::eval, d1);
    Tensor z2 = m.encode(tape, x, Mode::eval, d2);
    CHECK(z1.shape == Shape{2, 1152});
    CHECK(*z1.values == *z2.values);

    Tensor bad = Tensor::zeros({1, 1, 64, 64});
    CHECK_THROWS_AS(m.encode(tape, bad, Mode::eval, d1), ShapeError);
}

TEST_CASE("decoder reconstructs a 96x96 map strictly inside (0,1)") {
    model::AlignmentModel m(model::VariantConfig::parse("w2v-128-1h"), 0);
    RngStream rng(2, 1);
    Tensor x = random_patch_batch(2, rng);
    Tape tape;
    tape.set_recording(false);
    RngStream drop(0, stream::dropout);
    Tensor z = m.encode(tape, x, Mode::eval, drop);
    Tensor recon = m.decode(tape, z, Mode::eval, drop);
    CHECK(recon.shape == Shape{2, 1, 96, 96});
    for (std::int64_t i = 0; i < recon.numel(); ++i) {
        CHECK(recon.data()[i] > 0.0f);
        CHECK(recon.data()[i] < 1.0f);
    }
}

TEST_CASE("encoder plus projection parameter count is exactly 2383104") {
    model::AlignmentModel m(model::VariantConfig::parse("w2v-1152-1h"), 0);
    CHECK(m.encoder_and_projection_parameter_count() == 2383104);
    // Encoder alone: convs + batch norms + final layer norm.
    std::int64_t encoder_only = 0;
    for (auto& [name, p] : m.named_parameters()) {
        if (name.rfind("encoder.", 0) == 0) encoder_only += p.numel();
    }
    CHECK(encoder_only == 1054848);
    // All attention variants share D_c = 1152, so the count is variant-wide.
    model::AlignmentModel m4(model::VariantConfig::parse("w2v-128-4h"), 0);
    CHECK(m4.encoder_and_projection_parameter_count() == 2383104);
}

TEST_CASE("projection with zero weights returns its bias") {
    model::AlignmentModel m(model::VariantConfig::parse("w2v-128-1h"), 0);
    std::fill(m.projection.weight.values->begin(),
              m.projection.weight.values->end(), 0.0f);
    Tape tape;
    tape.set_recording(false);
    Tensor z = Tensor::full({1, 1152}, 0.37f);
    Tensor phi = m.project(tape, z);
    REQUIRE(phi.shape == Shape{1, 1152});
    for (std::int64_t i = 0; i < 1152; ++i) {
        CHECK(phi.data()[i] == m.projection.bias.data()[i]);
    }
}

namespace {

struct TagCase {
    Tensor rows;
    std::vector<std::uint8_t> mask;
};

TagCase random_tags(std::int64_t word_dim, int valid, RngStream& rng) {
    TagCase tc;
    tc.rows = Tensor::zeros({10, word_dim});
    tc.mask.assign(10, 0);
    for (int i = 0; i < valid; ++i) {
        tc.mask[static_cast<std::size_t>(i)] = 1;
        for (std::int64_t j = 0; j < word_dim; ++j) {
            tc.rows.data()[i * word_dim + j] =
                static_cast<float>(rng.next_uniform(-1, 1));
        }
    }
    return tc;
}

TagCase permute_valid(const TagCase& tc, std::int64_t word_dim,
                      const std::vector<int>& perm) {
    TagCase out;
    out.rows = Tensor::zeros({10, word_dim});
    out.mask = tc.mask;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        std::memcpy(out.rows.data() + static_cast<std::int64_t>(i) * word_dim,
                    tc.rows.data() + perm[i] * word_dim,
                    static_cast<std::size_t>(word_dim) * sizeof(float));
    }
    return out;
}

}  // namespace

TEST_CASE("phi_w is bit-exactly invariant to tag permutation") {
    for (const char* name : {"w2v-128-1h", "w2v-128-4h", "w2v-128-mean"}) {
        model::AlignmentModel m(model::VariantConfig::parse(name), 7);
        RngStream rng(3, 1);
        TagCase tc = random_tags(128, 4, rng);
        Tape tape;
        tape.set_recording(false);
        RngStream drop(0, stream::dropout);
        Tensor a = m.attend(tape, tc.rows, tc.mask, Mode::eval, drop);

        TagCase p = permute_valid(tc, 128, {2, 0, 3, 1});
        Tensor b = m.attend(tape, p.rows, p.mask, Mode::eval, drop);
        CHECK(*a.values == *b.values);
    }
}

TEST_CASE("phi_w ignores masked padding rows, even with garbage content") {
    for (const char* name : {"w2v-128-1h", "w2v-1152-4h", "w2v-128-mean"}) {
        auto cfg = model::VariantConfig::parse(name);
        model::AlignmentModel m(cfg, 11);
        RngStream rng(5, 1);
        TagCase tc = random_tags(cfg.word_dim, 3, rng);
        Tape tape;
        tape.set_recording(false);
        RngStream drop(0, stream::dropout);
        Tensor a = m.attend(tape, tc.rows, tc.mask, Mode::eval, drop);

        TagCase padded = tc;
        padded.rows = tc.rows.clone();
        for (int i = 3; i < 10; ++i) {
            for (std::int64_t j = 0; j < cfg.word_dim; ++j) {
                padded.rows.data()[i * cfg.word_dim + j] =
                    static_cast<float>(rng.next_uniform(-9, 9));
            }
        }
        Tensor b = m.attend(tape, padded.rows, padded.mask, Mode::eval, drop);
        CHECK(*a.values == *b.values);
    }
}

TEST_CASE("attend rejects an all-masked tag set") {
    model::AlignmentModel m(model::VariantConfig::parse("w2v-128-1h"), 0);
    Tensor rows = Tensor::zeros({10, 128});
    std::vector<std::uint8_t> mask(10, 0);
    Tape tape;
    RngStream drop(0, stream::dropout);
    CHECK_THROWS_AS(m.attend(tape, rows, mask, Mode::eval, drop),
                    ContractViolation);
}

TEST_CASE("single valid tag: phi_w = LN(FNN_o(concat of H copies of FNN_v(z)))") {
    auto cfg = model::VariantConfig::parse("w2v-128-4h");
    model::AlignmentModel m(cfg, 23);
    RngStream rng(9, 1);
    TagCase tc = random_tags(128, 1, rng);
    Tape tape;
    tape.set_recording(false);
    RngStream drop(0, stream::dropout);
    Tensor got = m.attend(tape, tc.rows, tc.mask, Mode::eval, drop);

    Tensor z = Tensor::zeros({1, 128});
    std::memcpy(z.data(), tc.rows.data(), 128 * sizeof(float));
    std::vector<Tensor> head_outs;
    for (int h = 0; h < cfg.heads; ++h) {
        head_outs.push_back(
            m.tag_encoder.value[static_cast<std::size_t>(h)].forward(tape, z));
    }
    Tensor cat = ops::concat(tape, head_outs, 1);
    Tensor o = m.tag_encoder.out.forward(tape, cat);
    Tensor summed = ops::sum_axis0(tape, o);
    Tensor expect = m.tag_encoder.ln.forward(tape, summed);
    REQUIRE(got.numel() == expect.numel());
    for (std::int64_t i = 0; i < got.numel(); ++i) {
        CHECK(got.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-5));
    }
}

TEST_CASE("zero query/key weights degenerate attention into a value mean") {
    auto cfg = model::VariantConfig::parse("w2v-128-1h");
    model::AlignmentModel m(cfg, 31);
    std::fill(m.tag_encoder.query[0].weight.values->begin(),
              m.tag_encoder.query[0].weight.values->end(), 0.0f);
    std::fill(m.tag_encoder.query[0].bias.values->begin(),
              m.tag_encoder.query[0].bias.values->end(), 0.0f);
    std::fill(m.tag_encoder.key[0].weight.values->begin(),
              m.tag_encoder.key[0].weight.values->end(), 0.0f);
    std::fill(m.tag_encoder.key[0].bias.values->begin(),
              m.tag_encoder.key[0].bias.values->end(), 0.0f);

    RngStream rng(13, 1);
    int valid = 5;
    TagCase tc = random_tags(128, valid, rng);
    Tape tape;
    tape.set_recording(false);
    RngStream drop(0, stream::dropout);
    Tensor got = m.attend(tape, tc.rows, tc.mask, Mode::eval, drop);

    // Uniform attention: every per-tag row equals FNN_o(concat(mean of value
    // projections)), so the sum is valid * that row.
    Tensor z = Tensor::zeros({valid, 128});
    std::memcpy(z.data(), tc.rows.data(),
                static_cast<std::size_t>(valid) * 128 * sizeof(float));
    Tensor v = m.tag_encoder.value[0].forward(tape, z);
    Tensor mean_v = ops::scale(tape, ops::sum_axis0(tape, v),
                               1.0f / static_cast<float>(valid));
    Tensor mean_mat = ops::reshape(tape, mean_v, {1, 128});
    Tensor o = m.tag_encoder.out.forward(tape, mean_mat);
    Tensor scaled = ops::scale(tape, ops::sum_axis0(tape, o),
                               static_cast<float>(valid));
    Tensor expect = m.tag_encoder.ln.forward(tape, scaled);
    for (std::int64_t i = 0; i < got.numel(); ++i) {
        CHECK(got.data()[i] == doctest::Approx(expect.data()[i]).epsilon(2e-3));
    }
}

TEST_CASE("train-mode attend is deterministic given the dropout stream state") {
    auto cfg = model::VariantConfig::parse("w2v-128-1h");
    model::AlignmentModel m(cfg, 3);
    RngStream rng(17, 1);
    TagCase tc = random_tags(128, 4, rng);
    Tape tape;
    tape.set_recording(false);
    RngStream d1(77, stream::dropout), d2(77, stream::dropout);
    Tensor a = m.attend(tape, tc.rows, tc.mask, Mode::train, d1);
    Tensor b = m.attend(tape, tc.rows, tc.mask, Mode::train, d2);
    CHECK(*a.values == *b.values);
}

TEST_CASE("finite differences through a small attention encoder") {
    model::VariantConfig cfg;
    cfg.name = "tiny";
    cfg.word_dim = 6;
    cfg.heads = 2;
    cfg.aggregation = model::Aggregation::attention;
    cfg.context_dim = 5;
    RngStream init(3, stream::init);
    model::TagEncoderT<double> enc;
    enc.init(cfg, init);

    RngStream rng(21, 1);
    Tensor64 rows = t::random_tensor64({10, 6}, rng, -1, 1, false);
    std::vector<std::uint8_t> mask = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
    Tensor64 probe = t::random_tensor64({5}, rng, -1, 1, false);

    std::vector<Tensor64> params;
    for (int h = 0; h < 2; ++h) {
        auto idx = static_cast<std::size_t>(h);
        params.push_back(enc.query[idx].weight);
        params.push_back(enc.query[idx].bias);
        params.push_back(enc.key[idx].weight);
        params.push_back(enc.key[idx].bias);
        params.push_back(enc.value[idx].weight);
        params.push_back(enc.value[idx].bias);
    }
    params.push_back(enc.out.weight);
    params.push_back(enc.out.bias);
    params.push_back(enc.ln.gamma);
    params.push_back(enc.ln.beta);

    double err = t::fd_max_rel_err(
        [&](Tape64& tape) {
            RngStream drop(0, stream::dropout);
            Tensor64 phi = enc.forward(tape, rows, mask, Mode::eval, drop);
            return ops::sum(tape, ops::mul(tape, phi, probe));
        },
        params);
    CHECK(err < 1e-4);
}
