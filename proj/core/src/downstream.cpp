#include "xaln/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>

#include "xaln/ops.hpp"
#include "xaln/sgd.hpp"

namespace xaln::downstream {

std::vector<Tensor> split_into_patches(const Tensor& logmel) {
    if (logmel.ndim() != 2 || logmel.shape[1] != audio::kMelBands) {
        throw ShapeError("expected a [T x 96] log-mel matrix");
    }
    std::int64_t t = logmel.shape[0];
    const std::int64_t p = audio::kPatchFrames;
    std::vector<Tensor> out;

    auto take = [&](std::int64_t start, std::int64_t frames) {
        Tensor patch = Tensor::zeros({p, audio::kMelBands});
        std::memcpy(patch.data(), logmel.data() + start * audio::kMelBands,
                    static_cast<std::size_t>(frames * audio::kMelBands) * sizeof(float));
        const float* last =
            logmel.data() + (start + frames - 1) * audio::kMelBands;
        for (std::int64_t i = frames; i < p; ++i) {
            std::memcpy(patch.data() + i * audio::kMelBands, last,
                        audio::kMelBands * sizeof(float));
        }
        out.push_back(std::move(patch));
    };

    if (t < p) {
        take(0, t);
        return out;
    }
    std::int64_t full = t / p;
    for (std::int64_t i = 0; i < full; ++i) take(i * p, p);
    std::int64_t rem = t - full * p;
    if (rem >= p / 2) take(full * p, rem);
    return out;
}

std::vector<float> extract_clip_embedding(const audio::AudioClip& clip,
                                          model::AlignmentModel& model,
                                          const audio::ScaleStats& stats) {
    Tensor logmel = audio::stft_logmel(clip);
    std::vector<Tensor> patches = split_into_patches(logmel);
    auto n = static_cast<std::int64_t>(patches.size());
    Tensor x = Tensor::zeros({n, 1, model::kPatchSide, model::kPatchSide});
    const std::int64_t elems = model::kPatchSide * model::kPatchSide;
    for (std::int64_t i = 0; i < n; ++i) {
        Tensor scaled = audio::apply_scale(patches[static_cast<std::size_t>(i)], stats);
        std::memcpy(x.data() + i * elems, scaled.data(),
                    static_cast<std::size_t>(elems) * sizeof(float));
    }
    Tape tape;
    tape.set_recording(false);
    RngStream unused(0, stream::dropout);
    Tensor z = model.encode(tape, x, Mode::eval, unused);

    std::vector<float> mean(static_cast<std::size_t>(model::kEmbeddingDim), 0.0f);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < model::kEmbeddingDim; ++j) {
            mean[static_cast<std::size_t>(j)] +=
                z.data()[i * model::kEmbeddingDim + j];
        }
    }
    for (auto& v : mean) v /= static_cast<float>(n);
    return mean;
}

StandardizeStats compute_standardize_stats(
    const std::vector<std::vector<float>>& train_vectors) {
    if (train_vectors.size() < 2) {
        throw InvalidInputError("standardization needs at least 2 training vectors");
    }
    std::size_t d = train_vectors[0].size();
    StandardizeStats s;
    s.mean.assign(d, 0.0f);
    s.stddev.assign(d, 0.0f);
    for (const auto& v : train_vectors) {
        if (v.size() != d) throw ShapeError("inconsistent feature dimensions");
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += v[j];
    }
    auto n = static_cast<float>(train_vectors.size());
    for (auto& m : s.mean) m /= n;
    for (const auto& v : train_vectors) {
        for (std::size_t j = 0; j < d; ++j) {
            float dv = v[j] - s.mean[j];
            s.stddev[j] += dv * dv;
        }
    }
    for (auto& sd : s.stddev) sd = std::sqrt(sd / n);
    return s;
}

std::vector<float> apply_standardize(const std::vector<float>& v,
                                     const StandardizeStats& s) {
    if (v.size() != s.mean.size()) throw ShapeError("feature dimension mismatch");
    std::vector<float> out(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) {
        out[j] = (v[j] - s.mean[j]) / (s.stddev[j] + 1e-8f);
    }
    return out;
}

float train_probe(const std::vector<std::vector<float>>& train_x,
                  const std::vector<int>& train_y,
                  const std::vector<std::vector<float>>& test_x,
                  const std::vector<int>& test_y, int n_classes,
                  const manifest::ProbeSettings& cfg, std::uint64_t seed) {
    if (n_classes < 2) throw ContractViolation("probe needs at least 2 classes");
    if (train_x.empty() || test_x.empty()) {
        throw InvalidInputError("probe needs non-empty train and test sets");
    }
    auto dim = static_cast<std::int64_t>(train_x[0].size());

    RngStream rng(seed, stream::probe);
    model::LinearLayer<float> l1, l2;
    l1.init(dim, cfg.hidden, rng);
    l2.init(cfg.hidden, n_classes, rng);

    SgdOptimizer opt(static_cast<float>(cfg.learning_rate));
    opt.add_parameter(l1.weight);
    opt.add_parameter(l1.bias);
    opt.add_parameter(l2.weight);
    opt.add_parameter(l2.bias);

    auto forward = [&](Tape& tape, const Tensor& x) {
        return l2.forward(tape, ops::relu(tape, l1.forward(tape, x)));
    };

    std::vector<std::size_t> order(train_x.size());
    std::iota(order.begin(), order.end(), 0);
    auto batch = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        for (std::size_t b = 0; b + 1 <= order.size(); b += batch) {
            std::size_t count = std::min(batch, order.size() - b);
            Tensor x = Tensor::zeros({static_cast<std::int64_t>(count), dim});
            std::vector<std::int64_t> targets(count);
            for (std::size_t i = 0; i < count; ++i) {
                const auto& row = train_x[order[b + i]];
                std::memcpy(x.data() + static_cast<std::int64_t>(i) * dim,
                            row.data(), static_cast<std::size_t>(dim) * sizeof(float));
                targets[i] = train_y[order[b + i]];
            }
            Tape tape;
            Tensor logits = forward(tape, x);
            Tensor loss = ops::softmax_cross_entropy(tape, logits, targets);
            opt.zero_grad();
            tape.backward(loss);
            opt.step();
        }
    }

    // Accuracy on the test protocol.
    std::size_t correct = 0;
    Tensor x = Tensor::zeros({static_cast<std::int64_t>(test_x.size()), dim});
    for (std::size_t i = 0; i < test_x.size(); ++i) {
        std::memcpy(x.data() + static_cast<std::int64_t>(i) * dim,
                    test_x[i].data(), static_cast<std::size_t>(dim) * sizeof(float));
    }
    Tape tape;
    tape.set_recording(false);
    Tensor logits = forward(tape, x);
    for (std::size_t i = 0; i < test_x.size(); ++i) {
        const float* row = logits.data() + static_cast<std::int64_t>(i) * n_classes;
        int arg = 0;
        for (int c = 1; c < n_classes; ++c) {
            if (row[c] > row[arg]) arg = c;
        }
        correct += arg == test_y[i];
    }
    return static_cast<float>(correct) / static_cast<float>(test_x.size());
}

namespace {

struct SplitView {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

float run_split(const FeatureSet& fs, const SplitView& sv,
                const manifest::ProbeSettings& cfg, std::uint64_t seed) {
    std::vector<std::vector<float>> train_raw, test_raw;
    std::vector<int> train_y, test_y;
    for (auto i : sv.train) {
        train_raw.push_back(fs.x[i]);
        train_y.push_back(fs.y[i]);
    }
    for (auto i : sv.test) {
        test_raw.push_back(fs.x[i]);
        test_y.push_back(fs.y[i]);
    }
    StandardizeStats stats = compute_standardize_stats(train_raw);
    std::vector<std::vector<float>> train_x, test_x;
    for (const auto& v : train_raw) train_x.push_back(apply_standardize(v, stats));
    for (const auto& v : test_raw) test_x.push_back(apply_standardize(v, stats));
    return train_probe(train_x, train_y, test_x, test_y, fs.n_classes, cfg, seed);
}

}  // namespace

TaskResult evaluate_features(const FeatureSet& fs,
                             const manifest::ProbeSettings& cfg) {
    if (fs.x.size() != fs.y.size() || fs.x.size() != fs.split.size()) {
        throw ShapeError("feature set fields have inconsistent lengths");
    }
    bool folds = false;
    std::set<std::string> fold_names;
    for (const auto& s : fs.split) {
        if (s.rfind("fold", 0) == 0) {
            folds = true;
            fold_names.insert(s);
        }
    }

    std::vector<SplitView> views;
    if (folds) {
        for (const auto& f : fold_names) {
            SplitView sv;
            for (std::size_t i = 0; i < fs.split.size(); ++i) {
                (fs.split[i] == f ? sv.test : sv.train).push_back(i);
            }
            views.push_back(std::move(sv));
        }
    } else {
        SplitView sv;
        for (std::size_t i = 0; i < fs.split.size(); ++i) {
            if (fs.split[i] == "test") {
                sv.test.push_back(i);
            } else {
                sv.train.push_back(i);
            }
        }
        views.push_back(std::move(sv));
    }
    for (const auto& sv : views) {
        if (sv.train.empty() || sv.test.empty()) {
            throw InvalidInputError("a split has an empty train or test side");
        }
    }

    TaskResult res;
    for (int run = 0; run < cfg.repeats; ++run) {
        auto seed = static_cast<std::uint64_t>(run);
        double acc = 0;
        for (const auto& sv : views) {
            acc += run_split(fs, sv, cfg, seed);
        }
        acc /= static_cast<double>(views.size());
        res.per_run.push_back(acc);
        res.seeds.push_back(seed);
    }
    double mean = 0;
    for (double a : res.per_run) mean += a;
    mean /= static_cast<double>(res.per_run.size());
    double var = 0;
    for (double a : res.per_run) var += (a - mean) * (a - mean);
    var /= static_cast<double>(res.per_run.size());
    res.mean = mean;
    res.stddev = std::sqrt(var);
    return res;
}

}  // namespace xaln::downstream
