#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xaln/audio.hpp"
#include "xaln/rng.hpp"

namespace xaln::synth {

// Desk-scale stand-in for the real classification corpora: each class owns a
// fixed set of mel bands (a coarse region crossed with a fine comb phase) and
// its tag set names exactly those bands, so the tags causally determine the
// spectrum. The comb period is finer than 20 DCT coefficients can resolve,
// which keeps the MFCC baseline honest while the 96-band encoder separates
// all classes.
struct SynthSpec {
    int n_clips = 400;
    int n_classes = 4;
    double duration_s = 2.6;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
};

// The mel bands a class excites.
std::vector<int> class_bands(int cls, int n_classes);
// The informative tags of a class (region token + comb token).
std::vector<std::string> class_tags(int cls, int n_classes);

audio::AudioClip make_clip(int cls, int n_classes, double duration_s,
                           RngStream& rng);

// Writes audio/<id>.wav files plus manifest.jsonl under dir and returns the
// manifest path. Every record carries tags, a class label and a fixed
// train/test split, interleaved so both splits are class balanced.
std::filesystem::path make_alignment_dataset(const std::filesystem::path& dir,
                                             const SynthSpec& spec);

}  // namespace xaln::synth
