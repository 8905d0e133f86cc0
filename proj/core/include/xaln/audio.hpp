#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "xaln/tensor.hpp"

namespace xaln::audio {

inline constexpr int kDefaultSampleRate = 22050;
inline constexpr int kWindowSize = 1024;
inline constexpr int kHopSize = 512;
inline constexpr int kMelBands = 96;
inline constexpr int kPatchFrames = 96;
inline constexpr double kLogEps = 1e-10;
inline constexpr int kMfccCoeffs = 20;

struct AudioClip {
    std::vector<float> samples;
    int sample_rate = kDefaultSampleRate;
};

// RIFF WAVE, PCM 16-bit or IEEE float 32-bit; channels are averaged to mono.
AudioClip read_wav(const std::filesystem::path& path);
// Headerless little-endian float32 samples at 22050 Hz.
AudioClip read_raw_f32(const std::filesystem::path& path);
// Written as IEEE float 32-bit mono.
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

// Center frequency (Hz) of mel band `band` for the project filterbank
// (HTK mel scale, kMelBands triangles over 0..sample_rate/2).
double mel_band_center_hz(int band, int sample_rate = kDefaultSampleRate);

inline std::int64_t frame_count(std::int64_t samples) {
    return (samples - kWindowSize) / kHopSize + 1;
}

// [T x 96] natural-log mel energies. Hamming window, 1024-point DFT
// magnitude squared, peak-normalized HTK triangles, ln(e + 1e-10).
// Throws InvalidInputError for clips shorter than one window.
Tensor stft_logmel(const AudioClip& clip);

// Contiguous 96-frame window with maximal summed energy (sum of exp of the
// log values), stride 1, earliest start on ties. Inputs shorter than 96
// frames are padded by repeating the last frame. Result is [96 x 96],
// unscaled.
Tensor select_max_energy_patch(const Tensor& logmel);

struct ScaleStats {
    float lo = 0.0f;
    float hi = 0.0f;
};

// Dataset-global min/max over every entry of every patch.
ScaleStats compute_scale_stats(std::span<const Tensor> patches);

// (v - lo) / (hi - lo), clipped to [0,1]; a degenerate hi == lo maps
// everything to 0.5.
Tensor apply_scale(const Tensor& patch, const ScaleStats& stats);

// 120 values: means and stds through time of the 20 first MFCCs, their
// deltas and delta-deltas, laid out as six blocks of 20:
// [means, stds, d-means, d-stds, dd-means, dd-stds].
std::vector<float> mfcc_baseline(const AudioClip& clip);

// Exposed for tests and the synthetic generator: the 20-coefficient
// orthonormal DCT-II of one 96-band frame.
std::vector<double> dct20(std::span<const double> frame);

// Mel filterbank weights for band `band` as (bin, weight) pairs.
std::vector<std::pair<int, float>> mel_filter(int band,
                                              int sample_rate = kDefaultSampleRate);

}  // namespace xaln::audio
