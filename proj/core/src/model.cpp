#include "xaln/model.hpp"

#include <algorithm>
#include <cmath>

namespace xaln::model {

VariantConfig VariantConfig::parse(const std::string& name) {
    VariantConfig v;
    v.name = name;
    for (const auto& known : all_names()) {
        if (name == known) {
            std::string rest = name.substr(4);  // after "w2v-"
            auto dash = rest.find('-');
            v.word_dim = std::stoll(rest.substr(0, dash));
            std::string agg = rest.substr(dash + 1);
            if (agg == "mean") {
                v.aggregation = Aggregation::mean;
                v.heads = 0;
                v.context_dim = v.word_dim;
            } else {
                v.aggregation = Aggregation::attention;
                v.heads = agg == "4h" ? 4 : 1;
                v.context_dim = kEmbeddingDim;
            }
            return v;
        }
    }
    throw ConfigError("unknown variant '" + name +
                      "' (expected one of w2v-{128,1152}-{1h,4h,mean})");
}

const std::vector<std::string>& VariantConfig::all_names() {
    static const std::vector<std::string> names = {
        "w2v-128-1h",  "w2v-1152-1h",  "w2v-128-4h",
        "w2v-1152-4h", "w2v-128-mean", "w2v-1152-mean",
    };
    return names;
}

namespace {

template <class T>
TensorT<T> uniform_fan_in(Shape shape, std::int64_t fan_in, RngStream& rng) {
    TensorT<T> t = TensorT<T>::zeros(std::move(shape));
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    T* p = t.data();
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        p[i] = static_cast<T>(rng.next_uniform(-bound, bound));
    }
    t.requires_grad = true;
    t.ensure_grad();
    return t;
}

}  // namespace

template <class T>
void Conv2dLayer<T>::init(std::int64_t cin, std::int64_t cout, std::int64_t k,
                          RngStream& rng) {
    std::int64_t fan_in = cin * k * k;
    weight = uniform_fan_in<T>({cout, cin, k, k}, fan_in, rng);
    bias = uniform_fan_in<T>({cout}, fan_in, rng);
}

template <class T>
void ConvTranspose2dLayer<T>::init(std::int64_t cin, std::int64_t cout,
                                   std::int64_t k, RngStream& rng) {
    std::int64_t fan_in = cin * k * k;
    weight = uniform_fan_in<T>({cin, cout, k, k}, fan_in, rng);
    bias = uniform_fan_in<T>({cout}, fan_in, rng);
}

template <class T>
void BatchNorm2dLayer<T>::init(std::int64_t channels) {
    gamma = TensorT<T>::full({channels}, T(1));
    beta = TensorT<T>::zeros({channels});
    gamma.requires_grad = true;
    beta.requires_grad = true;
    gamma.ensure_grad();
    beta.ensure_grad();
    state = ops::BatchNormStateT<T>::make(channels);
}

template <class T>
void LayerNormLayer<T>::init(std::int64_t dim) {
    gamma = TensorT<T>::full({dim}, T(1));
    beta = TensorT<T>::zeros({dim});
    gamma.requires_grad = true;
    beta.requires_grad = true;
    gamma.ensure_grad();
    beta.ensure_grad();
}

template <class T>
void LinearLayer<T>::init(std::int64_t in, std::int64_t out, RngStream& rng) {
    weight = uniform_fan_in<T>({out, in}, in, rng);
    bias = uniform_fan_in<T>({out}, in, rng);
}

template <class T>
void AudioEncoderT<T>::init(RngStream& rng) {
    for (int i = 0; i < kEncoderLayers; ++i) {
        std::int64_t cin = i == 0 ? 1 : kChannels;
        convs[static_cast<std::size_t>(i)].init(cin, kChannels, kKernel, rng);
        bns[static_cast<std::size_t>(i)].init(kChannels);
    }
    ln.init(kEmbeddingDim);
}

template <class T>
TensorT<T> AudioEncoderT<T>::forward(TapeT<T>& tape, const TensorT<T>& x,
                                     Mode mode, RngStream& dropout_rng) {
    if (x.ndim() != 4 || x.shape[1] != 1 || x.shape[2] != kPatchSide ||
        x.shape[3] != kPatchSide) {
        throw ShapeError("encoder expects [N,1,96,96], got " + shape_str(x.shape));
    }
    TensorT<T> h = x;
    for (int i = 0; i < kEncoderLayers; ++i) {
        h = convs[static_cast<std::size_t>(i)].forward(tape, h);
        h = bns[static_cast<std::size_t>(i)].forward(tape, h, mode);
        h = ops::relu(tape, h);
        h = ops::dropout(tape, h, kAudioDropout, mode, dropout_rng);
    }
    h = ops::reshape(tape, h, {x.shape[0], kEmbeddingDim});
    return ln.forward(tape, h);
}

template <class T>
void AudioDecoderT<T>::init(RngStream& rng) {
    for (int i = 0; i < kEncoderLayers; ++i) {
        std::int64_t cout = i == kEncoderLayers - 1 ? 1 : kChannels;
        convs[static_cast<std::size_t>(i)].init(kChannels, cout, kKernel, rng);
        bns[static_cast<std::size_t>(i)].init(cout);
    }
}

template <class T>
TensorT<T> AudioDecoderT<T>::forward(TapeT<T>& tape, const TensorT<T>& z,
                                     Mode mode, RngStream& dropout_rng) {
    if (z.ndim() != 2 || z.shape[1] != kEmbeddingDim) {
        throw ShapeError("decoder expects [N,1152], got " + shape_str(z.shape));
    }
    TensorT<T> h = ops::reshape(
        tape, z, {z.shape[0], kChannels, kBottleneckSide, kBottleneckSide});
    for (int i = 0; i < kEncoderLayers; ++i) {
        h = ops::dropout(tape, h, kAudioDropout, mode, dropout_rng);
        h = convs[static_cast<std::size_t>(i)].forward(tape, h);
        h = bns[static_cast<std::size_t>(i)].forward(tape, h, mode);
        h = i == kEncoderLayers - 1 ? ops::sigmoid(tape, h) : ops::relu(tape, h);
    }
    return h;
}

template <class T>
void TagEncoderT<T>::init(const VariantConfig& v, RngStream& rng) {
    cfg = v;
    query.clear();
    key.clear();
    value.clear();
    if (cfg.aggregation == Aggregation::attention) {
        for (int h = 0; h < cfg.heads; ++h) {
            LinearLayer<T> q, k, val;
            q.init(cfg.word_dim, cfg.word_dim, rng);
            k.init(cfg.word_dim, cfg.word_dim, rng);
            val.init(cfg.word_dim, cfg.word_dim, rng);
            query.push_back(std::move(q));
            key.push_back(std::move(k));
            value.push_back(std::move(val));
        }
        out.init(static_cast<std::int64_t>(cfg.heads) * cfg.word_dim,
                 cfg.context_dim, rng);
    }
    ln.init(cfg.context_dim);
}

template <class T>
TensorT<T> TagEncoderT<T>::forward(TapeT<T>& tape, const TensorT<T>& rows,
                                   const std::vector<std::uint8_t>& mask,
                                   Mode mode, RngStream& dropout_rng) const {
    if (rows.ndim() != 2 || rows.shape[1] != cfg.word_dim) {
        throw ShapeError("tag encoder expects [T_w x " +
                         std::to_string(cfg.word_dim) + "] rows");
    }
    if (static_cast<std::int64_t>(mask.size()) != rows.shape[0]) {
        throw ShapeError("tag mask length does not match rows");
    }
    std::vector<std::int64_t> valid;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) valid.push_back(static_cast<std::int64_t>(i));
    }
    if (valid.empty()) {
        throw ContractViolation("tag encoder requires at least one valid tag");
    }
    // Canonical order: lexicographic by row content. Reductions over tags all
    // run in this order, so permuting the input slots cannot change phi_w.
    std::int64_t d = rows.shape[1];
    const T* rp = rows.data();
    std::stable_sort(valid.begin(), valid.end(),
                     [&](std::int64_t a, std::int64_t b) {
                         return std::lexicographical_compare(
                             rp + a * d, rp + (a + 1) * d, rp + b * d,
                             rp + (b + 1) * d);
                     });

    TensorT<T> gathered = ops::gather_rows(tape, rows, valid);
    TensorT<T> z = ops::dropout(tape, gathered, kTagDropout, mode, dropout_rng);

    TensorT<T> per_tag;  // [n x D_c]
    if (cfg.aggregation == Aggregation::attention) {
        T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg.word_dim)));
        std::vector<TensorT<T>> heads;
        for (int h = 0; h < cfg.heads; ++h) {
            auto idx = static_cast<std::size_t>(h);
            TensorT<T> q = query[idx].forward(tape, z);
            TensorT<T> k = key[idx].forward(tape, z);
            TensorT<T> v = value[idx].forward(tape, z);
            TensorT<T> scores =
                ops::scale(tape, ops::matmul(tape, q, ops::transpose(tape, k)), inv_sqrt);
            TensorT<T> attn = ops::softmax(tape, scores);
            heads.push_back(ops::matmul(tape, attn, v));
        }
        TensorT<T> concat =
            heads.size() == 1 ? heads[0] : ops::concat(tape, heads, 1);
        per_tag = out.forward(tape, concat);
    } else {
        per_tag = z;
    }

    TensorT<T> summed = ops::sum_axis0(tape, per_tag);  // [D_c]
    if (cfg.aggregation == Aggregation::mean) {
        summed = ops::scale(tape, summed,
                            T(1) / static_cast<T>(valid.size()));
    }
    return ln.forward(tape, summed);
}

template <class T>
AlignmentModelT<T>::AlignmentModelT(const VariantConfig& v, std::uint64_t seed)
    : cfg(v) {
    RngStream rng(seed, stream::init);
    encoder.init(rng);
    decoder.init(rng);
    tag_encoder.init(cfg, rng);
    projection.init(kEmbeddingDim, cfg.context_dim, rng);
}

template <class T>
std::vector<std::pair<std::string, TensorT<T>>>
AlignmentModelT<T>::named_parameters() {
    std::vector<std::pair<std::string, TensorT<T>>> out;
    for (int i = 0; i < kEncoderLayers; ++i) {
        std::string n = std::to_string(i + 1);
        auto idx = static_cast<std::size_t>(i);
        out.emplace_back("encoder.conv" + n + ".weight", encoder.convs[idx].weight);
        out.emplace_back("encoder.conv" + n + ".bias", encoder.convs[idx].bias);
        out.emplace_back("encoder.bn" + n + ".gamma", encoder.bns[idx].gamma);
        out.emplace_back("encoder.bn" + n + ".beta", encoder.bns[idx].beta);
    }
    out.emplace_back("encoder.ln.gamma", encoder.ln.gamma);
    out.emplace_back("encoder.ln.beta", encoder.ln.beta);
    for (int i = 0; i < kEncoderLayers; ++i) {
        std::string n = std::to_string(i + 1);
        auto idx = static_cast<std::size_t>(i);
        out.emplace_back("decoder.tconv" + n + ".weight", decoder.convs[idx].weight);
        out.emplace_back("decoder.tconv" + n + ".bias", decoder.convs[idx].bias);
        out.emplace_back("decoder.bn" + n + ".gamma", decoder.bns[idx].gamma);
        out.emplace_back("decoder.bn" + n + ".beta", decoder.bns[idx].beta);
    }
    if (cfg.aggregation == Aggregation::attention) {
        for (int h = 0; h < cfg.heads; ++h) {
            std::string n = "att.head" + std::to_string(h);
            auto idx = static_cast<std::size_t>(h);
            out.emplace_back(n + ".q.weight", tag_encoder.query[idx].weight);
            out.emplace_back(n + ".q.bias", tag_encoder.query[idx].bias);
            out.emplace_back(n + ".k.weight", tag_encoder.key[idx].weight);
            out.emplace_back(n + ".k.bias", tag_encoder.key[idx].bias);
            out.emplace_back(n + ".v.weight", tag_encoder.value[idx].weight);
            out.emplace_back(n + ".v.bias", tag_encoder.value[idx].bias);
        }
        out.emplace_back("att.out.weight", tag_encoder.out.weight);
        out.emplace_back("att.out.bias", tag_encoder.out.bias);
    }
    out.emplace_back("att.ln.gamma", tag_encoder.ln.gamma);
    out.emplace_back("att.ln.beta", tag_encoder.ln.beta);
    out.emplace_back("projection.weight", projection.weight);
    out.emplace_back("projection.bias", projection.bias);
    return out;
}

template <class T>
std::vector<std::pair<std::string, TensorT<T>>> AlignmentModelT<T>::named_state() {
    std::vector<std::pair<std::string, TensorT<T>>> out;
    for (int i = 0; i < kEncoderLayers; ++i) {
        std::string n = std::to_string(i + 1);
        auto idx = static_cast<std::size_t>(i);
        out.emplace_back("encoder.bn" + n + ".running_mean",
                         encoder.bns[idx].state.running_mean);
        out.emplace_back("encoder.bn" + n + ".running_var",
                         encoder.bns[idx].state.running_var);
        out.emplace_back("decoder.bn" + n + ".running_mean",
                         decoder.bns[idx].state.running_mean);
        out.emplace_back("decoder.bn" + n + ".running_var",
                         decoder.bns[idx].state.running_var);
    }
    return out;
}

template <class T>
std::vector<TensorT<T>> AlignmentModelT<T>::parameters() {
    std::vector<TensorT<T>> out;
    for (auto& [name, p] : named_parameters()) out.push_back(p);
    return out;
}

template <class T>
std::int64_t AlignmentModelT<T>::encoder_and_projection_parameter_count() {
    std::int64_t n = 0;
    for (auto& [name, p] : named_parameters()) {
        if (name.rfind("encoder.", 0) == 0 || name.rfind("projection.", 0) == 0) {
            n += p.numel();
        }
    }
    return n;
}

template struct Conv2dLayer<float>;
template struct Conv2dLayer<double>;
template struct ConvTranspose2dLayer<float>;
template struct ConvTranspose2dLayer<double>;
template struct BatchNorm2dLayer<float>;
template struct BatchNorm2dLayer<double>;
template struct LayerNormLayer<float>;
template struct LayerNormLayer<double>;
template struct LinearLayer<float>;
template struct LinearLayer<double>;
template struct AudioEncoderT<float>;
template struct AudioEncoderT<double>;
template struct AudioDecoderT<float>;
template struct AudioDecoderT<double>;
template struct TagEncoderT<float>;
template struct TagEncoderT<double>;
template struct AlignmentModelT<float>;
template struct AlignmentModelT<double>;

}  // namespace xaln::model
