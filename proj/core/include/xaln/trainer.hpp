#pragma once

#include <functional>
#include <limits>
#include <optional>

#include "xaln/audio.hpp"
#include "xaln/manifest.hpp"
#include "xaln/model.hpp"
#include "xaln/objectives.hpp"
#include "xaln/serialize.hpp"
#include "xaln/sgd.hpp"
#include "xaln/tags.hpp"

namespace xaln::train {

// One aligned pair ready for training.
struct Example {
    std::string id;
    Tensor patch;        // [96,96], already scaled to [0,1]
    tags::TagSet tagset; // preprocessed against the run vocabulary
    int label = -1;
    std::string split;
};

struct Dataset {
    std::vector<Example> examples;
    audio::ScaleStats stats;
};

// Deterministic seeded shuffle, then a disjoint exhaustive split; the second
// element holds round(fraction * n) validation indices.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_dataset(
    std::size_t n, double fraction, std::uint64_t seed);

// Full forward pass of the joint objective over one assembled batch. Tag rows
// are per example ([10 x F_w] plus mask); the word embeddings are frozen
// inputs, never parameters.
template <class T>
objectives::TotalLossT<T> alignment_forward(
    model::AlignmentModelT<T>& m, TapeT<T>& tape, const TensorT<T>& x,
    const std::vector<TensorT<T>>& tag_rows,
    const std::vector<std::vector<std::uint8_t>>& masks, Mode mode,
    RngStream& dropout_rng, const objectives::LossWeights& weights) {
    TensorT<T> z = m.encode(tape, x, mode, dropout_rng);
    TensorT<T> recon = m.decode(tape, z, mode, dropout_rng);
    TensorT<T> phi_a = m.project(tape, z);
    std::vector<TensorT<T>> phis;
    phis.reserve(tag_rows.size());
    for (std::size_t i = 0; i < tag_rows.size(); ++i) {
        phis.push_back(m.attend(tape, tag_rows[i], masks[i], mode, dropout_rng));
    }
    TensorT<T> phi_w = ops::stack_rows(tape, phis);
    return objectives::total_loss(tape, x.detached(), recon, phi_a, phi_w, weights);
}

// Everything a checkpoint round-trips.
struct TrainState {
    manifest::RunConfig config;
    model::AlignmentModel model;
    tags::Vocabulary vocab;
    tags::WordEmbeddingTable w2v;
    audio::ScaleStats stats;
    int epoch = 0;  // completed epochs
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    RngStream dropout_rng;
    RngStream shuffle_rng;

    TrainState(const manifest::RunConfig& cfg, tags::Vocabulary vocabulary,
               tags::WordEmbeddingTable table, audio::ScaleStats scale_stats);
};

struct EpochMetrics {
    int epoch = 0;
    std::string split;  // "train" or "val"
    double loss_total = 0;
    double loss_gkl = 0;
    double loss_ntxent = 0;
};

struct TrainSinks {
    std::function<void(const EpochMetrics&)> on_metrics;
    // is_best distinguishes the best-validation snapshot from the final one.
    std::function<void(TrainState&, bool is_best)> on_checkpoint;
    std::function<void(const std::string& dump_json)> on_abort_dump;
};

// Runs epochs epoch+1 .. config.epochs: seeded shuffle, full minibatches
// only, joint loss, backward, SGD step; validation in eval mode after each
// epoch. A non-finite loss aborts with a diagnostic dump through the sink.
void train(TrainState& st, const Dataset& data, const TrainSinks& sinks);

void save_checkpoint(TrainState& st, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

// Throws ConfigError unless the checkpoint was produced by an identical
// configuration (used by --resume).
void require_config_match(const TrainState& st, const manifest::RunConfig& cfg);

// Assembles the [N,1,96,96] batch plus per-example tag rows for the given
// example indices.
struct Batch {
    Tensor x;
    std::vector<Tensor> tag_rows;
    std::vector<std::vector<std::uint8_t>> masks;
};
Batch make_batch(const Dataset& data, const std::vector<std::size_t>& order,
                 std::size_t begin, std::size_t count,
                 const tags::Vocabulary& vocab,
                 const tags::WordEmbeddingTable& w2v);

}  // namespace xaln::train
