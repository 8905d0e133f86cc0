#pragma once

#include <array>
#include <string>
#include <vector>

#include "xaln/conv.hpp"
#include "xaln/norm.hpp"
#include "xaln/ops.hpp"
#include "xaln/rng.hpp"

namespace xaln::model {

inline constexpr std::int64_t kPatchSide = 96;     // T_a = F_a
inline constexpr int kEncoderLayers = 5;           // N_e-a
inline constexpr int kKernel = 4;                  // K_e-a
inline constexpr int kStride = 2;                  // S_e-a
inline constexpr int kPadding = 1;
inline constexpr std::int64_t kChannels = 128;     // C_out
inline constexpr std::int64_t kBottleneckSide = 3;
inline constexpr std::int64_t kEmbeddingDim = 1152;  // V = 128*3*3
inline constexpr double kAudioDropout = 0.25;      // p_a
inline constexpr double kTagDropout = 0.1;

enum class Aggregation { attention, mean };

// One of the six trained configurations, named like the result-table rows:
// w2v-<F_w>-<1h|4h|mean>.
struct VariantConfig {
    std::string name;
    std::int64_t word_dim = 128;  // F_w
    int heads = 1;                // H
    Aggregation aggregation = Aggregation::attention;
    std::int64_t context_dim = kEmbeddingDim;  // D_c

    static VariantConfig parse(const std::string& name);
    static const std::vector<std::string>& all_names();
};

template <class T>
struct Conv2dLayer {
    TensorT<T> weight;  // [Cout,Cin,K,K]
    TensorT<T> bias;
    int stride = kStride;
    int padding = kPadding;

    void init(std::int64_t cin, std::int64_t cout, std::int64_t k, RngStream& rng);
    TensorT<T> forward(TapeT<T>& tape, const TensorT<T>& x) const {
        return ops::conv2d(tape, x, weight, bias, stride, padding);
    }
};

template <class T>
struct ConvTranspose2dLayer {
    TensorT<T> weight;  // [Cin,Cout,K,K]
    TensorT<T> bias;
    int stride = kStride;
    int padding = kPadding;

    void init(std::int64_t cin, std::int64_t cout, std::int64_t k, RngStream& rng);
    TensorT<T> forward(TapeT<T>& tape, const TensorT<T>& x) const {
        return ops::conv2d_transposed(tape, x, weight, bias, stride, padding);
    }
};

template <class T>
struct BatchNorm2dLayer {
    TensorT<T> gamma;
    TensorT<T> beta;
    ops::BatchNormStateT<T> state;

    void init(std::int64_t channels);
    TensorT<T> forward(TapeT<T>& tape, const TensorT<T>& x, Mode mode) {
        return ops::batch_norm(tape, x, gamma, beta, state, mode);
    }
};

template <class T>
struct LayerNormLayer {
    TensorT<T> gamma;
    TensorT<T> beta;

    void init(std::int64_t dim);
    TensorT<T> forward(TapeT<T>& tape, const TensorT<T>& x) const {
        return ops::layer_norm(tape, x, gamma, beta);
    }
};

template <class T>
struct LinearLayer {
    TensorT<T> weight;  // [out,in]
    TensorT<T> bias;

    void init(std::int64_t in, std::int64_t out, RngStream& rng);
    TensorT<T> forward(TapeT<T>& tape, const TensorT<T>& x) const {
        return ops::linear(tape, x, weight, bias);
    }
};

// e_a: five strided conv blocks (conv -> BN -> ReLU -> dropout), flatten,
// layer norm. [N,1,96,96] -> [N,1152].
template <class T>
struct AudioEncoderT {
    std::array<Conv2dLayer<T>, kEncoderLayers> convs;
    std::array<BatchNorm2dLayer<T>, kEncoderLayers> bns;
    LayerNormLayer<T> ln;

    void init(RngStream& rng);
    TensorT<T> forward(TapeT<T>& tape, const TensorT<T>& x, Mode mode,
                       RngStream& dropout_rng);
};

// d_a: reshape to [N,128,3,3], five blocks (dropout -> transposed conv -> BN),
// ReLU after the first four, sigmoid after the last. [N,1152] -> [N,1,96,96].
template <class T>
struct AudioDecoderT {
    std::array<ConvTranspose2dLayer<T>, kEncoderLayers> convs;
    std::array<BatchNorm2dLayer<T>, kEncoderLayers> bns;

    void init(RngStream& rng);
    TensorT<T> forward(TapeT<T>& tape, const TensorT<T>& z, Mode mode,
                       RngStream& dropout_rng);
};

// Att + FNN_q/k/v/o + LN, or the mean-aggregation variant. Consumes the
// [10 x F_w] word-embedding rows of one example plus the validity mask and
// produces the contextual tag embedding of dimension D_c.
//
// Valid rows are gathered into a canonical (lexicographic) order first; every
// reduction over tags then runs in that order, which makes phi_w bit-exactly
// invariant to tag permutation and padding.
template <class T>
struct TagEncoderT {
    VariantConfig cfg;
    std::vector<LinearLayer<T>> query;  // one per head
    std::vector<LinearLayer<T>> key;
    std::vector<LinearLayer<T>> value;
    LinearLayer<T> out;  // (H*F_w) -> D_c
    LayerNormLayer<T> ln;

    void init(const VariantConfig& v, RngStream& rng);
    TensorT<T> forward(TapeT<T>& tape, const TensorT<T>& rows,
                       const std::vector<std::uint8_t>& mask, Mode mode,
                       RngStream& dropout_rng) const;
};

template <class T>
struct AlignmentModelT {
    VariantConfig cfg;
    AudioEncoderT<T> encoder;
    AudioDecoderT<T> decoder;
    TagEncoderT<T> tag_encoder;
    LinearLayer<T> projection;  // FNN_c-a: V -> D_c

    AlignmentModelT(const VariantConfig& cfg, std::uint64_t seed);

    TensorT<T> encode(TapeT<T>& tape, const TensorT<T>& x, Mode mode,
                      RngStream& rng) {
        return encoder.forward(tape, x, mode, rng);
    }
    TensorT<T> decode(TapeT<T>& tape, const TensorT<T>& z, Mode mode,
                      RngStream& rng) {
        return decoder.forward(tape, z, mode, rng);
    }
    TensorT<T> attend(TapeT<T>& tape, const TensorT<T>& rows,
                      const std::vector<std::uint8_t>& mask, Mode mode,
                      RngStream& rng) const {
        return tag_encoder.forward(tape, rows, mask, mode, rng);
    }
    TensorT<T> project(TapeT<T>& tape, const TensorT<T>& z) const {
        return projection.forward(tape, z);
    }

    std::vector<std::pair<std::string, TensorT<T>>> named_parameters();
    std::vector<std::pair<std::string, TensorT<T>>> named_state();
    std::vector<TensorT<T>> parameters();

    // Parameters of e_a plus FNN_c-a, the published embedding path.
    std::int64_t encoder_and_projection_parameter_count();
};

using AlignmentModel = AlignmentModelT<float>;
using AlignmentModel64 = AlignmentModelT<double>;

extern template struct AudioEncoderT<float>;
extern template struct AudioEncoderT<double>;
extern template struct AudioDecoderT<float>;
extern template struct AudioDecoderT<double>;
extern template struct TagEncoderT<float>;
extern template struct TagEncoderT<double>;
extern template struct AlignmentModelT<float>;
extern template struct AlignmentModelT<double>;

}  // namespace xaln::model
