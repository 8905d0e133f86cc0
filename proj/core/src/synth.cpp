#include "xaln/synth.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "xaln/rng.hpp"

namespace xaln::synth {

namespace {

constexpr double kTwoPi = 6.283185307179586;
constexpr int kCombPeriod = 6;
constexpr int kRegionLo = 18;
constexpr int kRegionHi = 50;
constexpr int kRegionSpan = 30;

const std::vector<std::string>& distractor_pool() {
    static const std::vector<std::string> pool = {
        "field", "noise", "retro", "vintage", "texture", "loop", "raw", "echo",
    };
    return pool;
}

}  // namespace

std::vector<int> class_bands(int cls, int n_classes) {
    if (cls < 0 || cls >= n_classes) throw ContractViolation("class out of range");
    // Classes alternate comb phase within a region; regions stack upward for
    // more than 4 classes.
    int region = cls / 2;
    int phase = (cls % 2) * (kCombPeriod / 2);
    int start = region == 0 ? kRegionLo : kRegionHi + (region - 1) * kRegionSpan;
    std::vector<int> bands;
    for (int b = start + phase; b < start + kRegionSpan; b += kCombPeriod) {
        if (b < audio::kMelBands) bands.push_back(b);
    }
    return bands;
}

std::vector<std::string> class_tags(int cls, int n_classes) {
    if (cls < 0 || cls >= n_classes) throw ContractViolation("class out of range");
    int region = cls / 2;
    int phase = cls % 2;
    std::string region_tok = region == 0 ? "lowband" : "highband";
    if (region > 1) region_tok = "band" + std::to_string(region);
    return {region_tok, phase == 0 ? "comba" : "combb"};
}

audio::AudioClip make_clip(int cls, int n_classes, double duration_s,
                           RngStream& rng) {
    audio::AudioClip clip;
    clip.sample_rate = audio::kDefaultSampleRate;
    auto n = static_cast<std::size_t>(duration_s * clip.sample_rate);
    clip.samples.assign(n, 0.0f);

    std::vector<int> bands = class_bands(cls, n_classes);
    std::vector<double> freqs, amps, phases;
    for (int b : bands) {
        freqs.push_back(audio::mel_band_center_hz(b, clip.sample_rate));
        amps.push_back(rng.next_uniform(0.4, 1.0));
        phases.push_back(rng.next_uniform(0.0, kTwoPi));
    }
    double norm = 0;
    for (double a : amps) norm += a;
    double gain = 0.8 / std::max(norm, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        double t = static_cast<double>(i) / clip.sample_rate;
        double v = 0;
        for (std::size_t k = 0; k < freqs.size(); ++k) {
            v += amps[k] * std::sin(kTwoPi * freqs[k] * t + phases[k]);
        }
        v = v * gain + (rng.next_double() - 0.5) * 0.004;
        clip.samples[i] = static_cast<float>(v);
    }
    return clip;
}

std::filesystem::path make_alignment_dataset(const std::filesystem::path& dir,
                                             const SynthSpec& spec) {
    if (spec.n_classes < 2 || spec.n_classes % 2 != 0) {
        throw ContractViolation("synthetic task needs an even class count >= 2");
    }
    if (spec.n_clips < spec.n_classes) {
        throw ContractViolation("fewer clips than classes");
    }
    std::filesystem::create_directories(dir / "audio");

    RngStream rng(spec.seed, stream::synth);
    std::filesystem::path manifest_path = dir / "manifest.jsonl";
    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + manifest_path.string());

    auto n_test_per_class = static_cast<int>(
        spec.test_fraction * spec.n_clips / spec.n_classes + 0.5);
    std::vector<int> seen_per_class(static_cast<std::size_t>(spec.n_classes), 0);
    int per_class = spec.n_clips / spec.n_classes;

    for (int i = 0; i < spec.n_clips; ++i) {
        int cls = i % spec.n_classes;
        char id[32];
        std::snprintf(id, sizeof(id), "clip%04d", i);
        std::string wav_rel = std::string("audio/") + id + ".wav";

        audio::AudioClip clip = make_clip(cls, spec.n_classes, spec.duration_s, rng);
        audio::write_wav(dir / wav_rel, clip);

        std::vector<std::string> tag_list = class_tags(cls, spec.n_classes);
        // "sound" appears on every clip, so the >70% document-frequency rule
        // removes it from the vocabulary.
        tag_list.push_back("sound");
        const auto& pool = distractor_pool();
        int extra = 1 + static_cast<int>(rng.next_below(2));
        for (int d = 0; d < extra; ++d) {
            tag_list.push_back(pool[rng.next_below(pool.size())]);
        }

        int k = seen_per_class[static_cast<std::size_t>(cls)]++;
        bool test = k >= per_class - n_test_per_class;
        nlohmann::json rec = {
            {"id", id},
            {"audio_path", wav_rel},
            {"tags", tag_list},
            {"label", cls},
            {"split", test ? "test" : "train"},
        };
        out << rec.dump() << "\n";
    }
    if (!out) throw IoError("write failed for " + manifest_path.string());
    return manifest_path;
}

}  // namespace xaln::synth
