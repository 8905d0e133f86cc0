#include "xaln/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "xaln/trainer.hpp"

namespace xaln::gradcheck {

Report run(const model::VariantConfig& variant, std::uint64_t seed,
           int min_samples, double step, int batch) {
    model::AlignmentModelT<double> m(variant, seed);
    objectives::LossWeights weights;

    RngStream data_rng(seed, stream::synth);
    auto n = static_cast<std::int64_t>(batch);
    Tensor64 x = Tensor64::zeros({n, 1, model::kPatchSide, model::kPatchSide});
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        x.data()[i] = data_rng.next_double();
    }
    std::vector<Tensor64> tag_rows;
    std::vector<std::vector<std::uint8_t>> masks;
    for (int i = 0; i < batch; ++i) {
        Tensor64 rows = Tensor64::zeros({tags::kMaxTags, variant.word_dim});
        std::vector<std::uint8_t> mask(tags::kMaxTags, 0);
        int valid = 2 + static_cast<int>(data_rng.next_below(3));
        for (int r = 0; r < valid; ++r) {
            mask[static_cast<std::size_t>(r)] = 1;
            for (std::int64_t c = 0; c < variant.word_dim; ++c) {
                rows.data()[r * variant.word_dim + c] =
                    data_rng.next_uniform(-0.5, 0.5);
            }
        }
        tag_rows.push_back(std::move(rows));
        masks.push_back(std::move(mask));
    }

    const std::uint64_t dropout_seed = seed + 17;
    auto forward = [&](TapeT<double>& tape) {
        RngStream drop(dropout_seed, stream::dropout);
        return train::alignment_forward(m, tape, x, tag_rows, masks,
                                        Mode::train, drop, weights)
            .total;
    };

    auto params = m.named_parameters();
    Report rep;
    rep.total_samples = 0;

    // Analytic gradients, one backward pass.
    {
        TapeT<double> tape;
        Tensor64 loss = forward(tape);
        tape.backward(loss);
    }
    std::vector<std::vector<double>> analytic;
    for (auto& [name, p] : params) {
        analytic.push_back(*p.grad);
    }

    auto eval = [&]() {
        TapeT<double> tape;
        tape.set_recording(false);
        return forward(tape).item();
    };

    int per_group = std::max<int>(
        1, (min_samples + static_cast<int>(params.size()) - 1) /
               static_cast<int>(params.size()));
    RngStream pick(seed, stream::probe);

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& [name, p] = params[pi];
        GroupReport g;
        g.name = name;
        int samples = std::min<std::int64_t>(per_group, p.numel());
        for (int s = 0; s < samples; ++s) {
            std::int64_t i = static_cast<std::int64_t>(
                pick.next_below(static_cast<std::uint64_t>(p.numel())));
            double v = p.data()[i];
            p.data()[i] = v + step;
            double f1 = eval();
            p.data()[i] = v - step;
            double f2 = eval();
            p.data()[i] = v;
            double numeric = (f1 - f2) / (2 * step);
            double a = analytic[pi][static_cast<std::size_t>(i)];
            double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            g.max_rel_err = std::max(g.max_rel_err, std::abs(a - numeric) / denom);
        }
        g.samples = samples;
        rep.total_samples += samples;
        if (g.max_rel_err > rep.max_rel_err) {
            rep.max_rel_err = g.max_rel_err;
            rep.worst_group = g.name;
        }
        rep.groups.push_back(std::move(g));
    }
    return rep;
}

}  // namespace xaln::gradcheck
