#pragma once

#include <vector>

#include "xaln/audio.hpp"
#include "xaln/manifest.hpp"
#include "xaln/model.hpp"
#include "xaln/tags.hpp"

namespace xaln::downstream {

// Splits a clip's log-mel into consecutive non-overlapping 96-frame patches
// (remainders of 48+ frames are padded by repeating their last frame, shorter
// ones discarded; clips under 96 frames yield one padded patch), scales them
// with the training-corpus stats, encodes each in eval mode and mean-averages
// the embeddings.
std::vector<float> extract_clip_embedding(const audio::AudioClip& clip,
                                          model::AlignmentModel& model,
                                          const audio::ScaleStats& stats);

// The patching rule on an already computed [T x 96] log-mel.
std::vector<Tensor> split_into_patches(const Tensor& logmel);

struct StandardizeStats {
    std::vector<float> mean;
    std::vector<float> stddev;
};

// Per-dimension (x - mean) / (stddev + 1e-8) with statistics from the
// training vectors only.
StandardizeStats compute_standardize_stats(
    const std::vector<std::vector<float>>& train_vectors);
std::vector<float> apply_standardize(const std::vector<float>& v,
                                     const StandardizeStats& s);

// Feature vectors with labels and the task's split protocol: either fixed
// "train"/"test" splits or "fold<k>" cross-validation folds.
struct FeatureSet {
    std::vector<std::vector<float>> x;
    std::vector<int> y;
    std::vector<std::string> split;
    int n_classes = 0;
};

// MLP probe: input -> hidden (ReLU) -> n_classes, softmax cross-entropy,
// plain SGD. Returns test accuracy. The inputs must already be standardized.
float train_probe(const std::vector<std::vector<float>>& train_x,
                  const std::vector<int>& train_y,
                  const std::vector<std::vector<float>>& test_x,
                  const std::vector<int>& test_y, int n_classes,
                  const manifest::ProbeSettings& cfg, std::uint64_t seed);

struct TaskResult {
    std::vector<double> per_run;
    std::vector<std::uint64_t> seeds;
    double mean = 0;
    double stddev = 0;
};

// Runs standardize -> probe `repeats` times with seeds 0..repeats-1 and
// reports mean and std of the accuracies. Honors the fold protocol when the
// split labels are folds.
TaskResult evaluate_features(const FeatureSet& fs,
                             const manifest::ProbeSettings& cfg);

}  // namespace xaln::downstream
