#include "xaln/trainer.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

namespace xaln::train {

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_dataset(
    std::size_t n, double fraction, std::uint64_t seed) {
    if (fraction < 0 || fraction >= 1) {
        throw ContractViolation("validation fraction must be in [0,1)");
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    RngStream rng(seed, stream::shuffle + 100);
    rng.shuffle(idx.begin(), idx.end());
    auto n_val = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(n)));
    std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    return {train, val};
}

TrainState::TrainState(const manifest::RunConfig& cfg, tags::Vocabulary vocabulary,
                       tags::WordEmbeddingTable table, audio::ScaleStats scale_stats)
    : config(cfg),
      model(model::VariantConfig::parse(cfg.variant), cfg.seed),
      vocab(std::move(vocabulary)),
      w2v(std::move(table)),
      stats(scale_stats),
      dropout_rng(cfg.seed, stream::dropout),
      shuffle_rng(cfg.seed, stream::shuffle) {
    if (w2v.dim != model.cfg.word_dim) {
        throw ConfigError("variant " + cfg.variant + " expects F_w=" +
                          std::to_string(model.cfg.word_dim) +
                          " but the embedding table has dim " +
                          std::to_string(w2v.dim));
    }
}

Batch make_batch(const Dataset& data, const std::vector<std::size_t>& order,
                 std::size_t begin, std::size_t count,
                 const tags::Vocabulary& vocab,
                 const tags::WordEmbeddingTable& w2v) {
    Batch b;
    auto n = static_cast<std::int64_t>(count);
    b.x = Tensor::zeros({n, 1, model::kPatchSide, model::kPatchSide});
    const std::int64_t patch_elems = model::kPatchSide * model::kPatchSide;
    for (std::size_t i = 0; i < count; ++i) {
        const Example& ex = data.examples[order[begin + i]];
        if (ex.patch.shape != Shape{model::kPatchSide, model::kPatchSide}) {
            throw ShapeError("example '" + ex.id + "' has patch shape " +
                             shape_str(ex.patch.shape));
        }
        std::memcpy(b.x.data() + static_cast<std::int64_t>(i) * patch_elems,
                    ex.patch.data(),
                    static_cast<std::size_t>(patch_elems) * sizeof(float));
        tags::EmbeddedTags emb = tags::embed_tags(ex.tagset, vocab, w2v);
        b.tag_rows.push_back(std::move(emb.rows));
        b.masks.push_back(std::move(emb.mask));
    }
    return b;
}

namespace {

struct EpochAccumulator {
    double total = 0, gkl = 0, ntxent = 0;
    std::int64_t examples = 0;

    void add(const objectives::TotalLoss& l, std::int64_t batch) {
        total += static_cast<double>(l.total.item()) * static_cast<double>(batch);
        gkl += static_cast<double>(l.gkl.item()) * static_cast<double>(batch);
        ntxent += static_cast<double>(l.ntxent.item()) * static_cast<double>(batch);
        examples += batch;
    }

    EpochMetrics metrics(int epoch, const std::string& split) const {
        EpochMetrics m;
        m.epoch = epoch;
        m.split = split;
        if (examples > 0) {
            m.loss_total = total / static_cast<double>(examples);
            m.loss_gkl = gkl / static_cast<double>(examples);
            m.loss_ntxent = ntxent / static_cast<double>(examples);
        }
        return m;
    }
};

}  // namespace

void train(TrainState& st, const Dataset& data, const TrainSinks& sinks) {
    if (data.examples.empty()) throw InvalidInputError("empty training dataset");
    const manifest::RunConfig& cfg = st.config;

    auto [train_idx, val_idx] =
        split_dataset(data.examples.size(), cfg.validation_fraction, cfg.seed);
    if (train_idx.empty()) throw InvalidInputError("no training examples after split");

    auto batch_size = static_cast<std::size_t>(cfg.batch_size);
    std::size_t train_batches = train_idx.size() / batch_size;
    if (train_batches == 0) {
        throw ContractViolation(
            "batch size " + std::to_string(batch_size) + " exceeds the " +
            std::to_string(train_idx.size()) + "-example training split");
    }

    SgdOptimizer opt(static_cast<float>(cfg.learning_rate));
    opt.add_parameters(st.model.parameters());

    for (int epoch = st.epoch + 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = train_idx;
        st.shuffle_rng.shuffle(order.begin(), order.end());

        EpochAccumulator train_acc;
        for (std::size_t b = 0; b < train_batches; ++b) {
            Batch batch = make_batch(data, order, b * batch_size, batch_size,
                                     st.vocab, st.w2v);
            try {
                Tape tape;
                auto loss = alignment_forward(st.model, tape, batch.x,
                                              batch.tag_rows, batch.masks,
                                              Mode::train, st.dropout_rng,
                                              cfg.weights);
                train_acc.add(loss, static_cast<std::int64_t>(batch_size));
                opt.zero_grad();
                tape.backward(loss.total);
                opt.step();
            } catch (const NonFiniteError& e) {
                nlohmann::json dump = {
                    {"error", e.what()},
                    {"epoch", epoch},
                    {"step", b},
                    {"examples_seen", train_acc.examples},
                    {"last_train_total",
                     train_acc.examples
                         ? train_acc.total / static_cast<double>(train_acc.examples)
                         : 0.0},
                };
                if (sinks.on_abort_dump) sinks.on_abort_dump(dump.dump());
                throw Error("train-aborted",
                            std::string("non-finite loss at epoch ") +
                                std::to_string(epoch) + ": " + e.what());
            }
        }
        if (sinks.on_metrics) sinks.on_metrics(train_acc.metrics(epoch, "train"));

        // Validation in eval mode: dropout off, batch norm on running stats.
        if (val_idx.size() >= 2) {
            std::size_t vb = std::min(val_idx.size(), batch_size);
            std::size_t val_batches = val_idx.size() / vb;
            EpochAccumulator val_acc;
            for (std::size_t b = 0; b < val_batches; ++b) {
                Batch batch =
                    make_batch(data, val_idx, b * vb, vb, st.vocab, st.w2v);
                Tape tape;
                tape.set_recording(false);
                auto loss = alignment_forward(st.model, tape, batch.x,
                                              batch.tag_rows, batch.masks,
                                              Mode::eval, st.dropout_rng,
                                              cfg.weights);
                val_acc.add(loss, static_cast<std::int64_t>(vb));
            }
            EpochMetrics m = val_acc.metrics(epoch, "val");
            if (sinks.on_metrics) sinks.on_metrics(m);
            if (m.loss_total < st.best_val) {
                st.best_val = m.loss_total;
                st.best_epoch = epoch;
                st.epoch = epoch;
                if (sinks.on_checkpoint) sinks.on_checkpoint(st, true);
            }
        }
        st.epoch = epoch;
    }
    if (sinks.on_checkpoint) sinks.on_checkpoint(st, false);
}

namespace {
constexpr const char* kCheckpointKind = "checkpoint";
}

void save_checkpoint(TrainState& st, const std::filesystem::path& path) {
    TensorFile f;
    f.kind = kCheckpointKind;
    f.meta["config"] = st.config.to_json();
    f.meta["config_digest"] = st.config.digest();
    f.meta["variant"] = st.config.variant;
    f.meta["epoch"] = st.epoch;
    f.meta["best_epoch"] = st.best_epoch;
    f.meta["best_val"] = std::isfinite(st.best_val)
                             ? nlohmann::json(st.best_val)
                             : nlohmann::json();
    f.meta["rng"] = {{"dropout", st.dropout_rng.state_hex()},
                     {"shuffle", st.shuffle_rng.state_hex()}};
    f.meta["scale_stats"] = {{"lo", st.stats.lo}, {"hi", st.stats.hi}};
    f.meta["vocab"] = st.vocab.to_json();
    f.meta["w2v_dim"] = st.w2v.dim;

    for (auto& [name, p] : st.model.named_parameters()) f.add("param." + name, p);
    for (auto& [name, s] : st.model.named_state()) f.add("state." + name, s);
    f.add("w2v.table", st.w2v.table);
    f.save(path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    TensorFile f = TensorFile::load(path);
    if (f.kind != kCheckpointKind) {
        throw CorruptFileError(path.string() + ": not a checkpoint (kind '" +
                               f.kind + "')");
    }
    manifest::RunConfig cfg = manifest::RunConfig::from_json(f.meta.at("config"));
    tags::Vocabulary vocab = tags::Vocabulary::from_json(f.meta.at("vocab"));
    tags::WordEmbeddingTable w2v;
    w2v.dim = f.meta.at("w2v_dim").get<std::int64_t>();
    w2v.table = f.get_f32("w2v.table");
    audio::ScaleStats stats{f.meta.at("scale_stats").at("lo").get<float>(),
                            f.meta.at("scale_stats").at("hi").get<float>()};

    TrainState st(cfg, std::move(vocab), std::move(w2v), stats);
    st.epoch = f.meta.at("epoch").get<int>();
    st.best_epoch = f.meta.at("best_epoch").get<int>();
    st.best_val = f.meta.at("best_val").is_null()
                      ? std::numeric_limits<double>::infinity()
                      : f.meta.at("best_val").get<double>();
    st.dropout_rng = RngStream::from_state_hex(
        f.meta.at("rng").at("dropout").get<std::string>());
    st.shuffle_rng = RngStream::from_state_hex(
        f.meta.at("rng").at("shuffle").get<std::string>());

    for (auto& [name, p] : st.model.named_parameters()) {
        Tensor loaded = f.get_f32("param." + name);
        if (loaded.shape != p.shape) {
            throw ConfigError(path.string() + ": tensor 'param." + name +
                              "' has shape " + shape_str(loaded.shape) +
                              ", expected " + shape_str(p.shape));
        }
        *p.values = *loaded.values;
    }
    for (auto& [name, s] : st.model.named_state()) {
        Tensor loaded = f.get_f32("state." + name);
        if (loaded.shape != s.shape) {
            throw ConfigError(path.string() + ": tensor 'state." + name +
                              "' shape mismatch");
        }
        *s.values = *loaded.values;
    }
    return st;
}

void require_config_match(const TrainState& st, const manifest::RunConfig& cfg) {
    if (st.config.variant != cfg.variant) {
        throw ConfigError("checkpoint variant '" + st.config.variant +
                          "' does not match configured variant '" + cfg.variant +
                          "'");
    }
    if (st.config.digest() != cfg.digest()) {
        throw ConfigError("checkpoint config digest " + st.config.digest() +
                          " does not match configured digest " + cfg.digest());
    }
}

}  // namespace xaln::train
