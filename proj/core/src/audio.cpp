#include "xaln/audio.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>

namespace xaln::audio {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kFftBins = kWindowSize / 2 + 1;  // 513

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangular filters with peaks normalized to 1, built on kMelBands + 2
// equally spaced mel points spanning 0..sr/2.
struct Filterbank {
    // per band: list of (bin, weight)
    std::vector<std::vector<std::pair<int, float>>> bands;
    std::vector<double> centers_hz;

    explicit Filterbank(int sample_rate) {
        double mel_hi = hz_to_mel(sample_rate / 2.0);
        std::vector<double> hz(kMelBands + 2);
        for (int i = 0; i < kMelBands + 2; ++i) {
            hz[static_cast<std::size_t>(i)] =
                mel_to_hz(mel_hi * i / (kMelBands + 1));
        }
        centers_hz.assign(hz.begin() + 1, hz.end() - 1);
        bands.resize(kMelBands);
        double bin_hz = static_cast<double>(sample_rate) / kWindowSize;
        for (int b = 0; b < kMelBands; ++b) {
            double lo = hz[static_cast<std::size_t>(b)];
            double mid = hz[static_cast<std::size_t>(b) + 1];
            double hi = hz[static_cast<std::size_t>(b) + 2];
            for (int k = 0; k < kFftBins; ++k) {
                double f = k * bin_hz;
                double w = 0.0;
                if (f >= lo && f <= mid && mid > lo) {
                    w = (f - lo) / (mid - lo);
                } else if (f > mid && f <= hi && hi > mid) {
                    w = (hi - f) / (hi - mid);
                }
                if (w > 0.0) {
                    bands[static_cast<std::size_t>(b)].emplace_back(
                        k, static_cast<float>(w));
                }
            }
        }
    }
};

const Filterbank& filterbank(int sample_rate) {
    static std::mutex mu;
    static int cached_rate = 0;
    static Filterbank* cached = nullptr;
    std::lock_guard<std::mutex> lock(mu);
    if (!cached || cached_rate != sample_rate) {
        delete cached;
        cached = new Filterbank(sample_rate);
        cached_rate = sample_rate;
    }
    return *cached;
}

const std::vector<double>& hamming() {
    static const std::vector<double> w = [] {
        std::vector<double> v(kWindowSize);
        for (int n = 0; n < kWindowSize; ++n) {
            v[static_cast<std::size_t>(n)] =
                0.54 - 0.46 * std::cos(2.0 * kPi * n / (kWindowSize - 1));
        }
        return v;
    }();
    return w;
}

// One shared FFTW plan; the new-array execute API is thread-safe, plan
// creation is not.
fftw_plan fft_plan() {
    static std::once_flag flag;
    static fftw_plan plan = nullptr;
    std::call_once(flag, [] {
        double* in = fftw_alloc_real(kWindowSize);
        fftw_complex* out = fftw_alloc_complex(kFftBins);
        plan = fftw_plan_dft_r2c_1d(kWindowSize, in, out,
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(in);
        fftw_free(out);
    });
    return plan;
}

std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

std::uint16_t read_u16(std::ifstream& in) {
    std::uint16_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 2);
    return v;
}

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char tag[4];
    in.read(tag, 4);
    if (!in || std::memcmp(tag, "RIFF", 4) != 0) {
        throw InvalidInputError(path.string() + ": not a RIFF file");
    }
    read_u32(in);  // riff size
    in.read(tag, 4);
    if (!in || std::memcmp(tag, "WAVE", 4) != 0) {
        throw InvalidInputError(path.string() + ": not a WAVE file");
    }

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::vector<char> data;
    bool have_fmt = false, have_data = false;
    while (in.read(tag, 4)) {
        std::uint32_t size = read_u32(in);
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            format = read_u16(in);
            channels = read_u16(in);
            rate = read_u32(in);
            read_u32(in);  // byte rate
            read_u16(in);  // block align
            bits = read_u16(in);
            if (size > 16) in.seekg(size - 16, std::ios::cur);
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            data.resize(size);
            in.read(data.data(), size);
            have_data = true;
        } else {
            in.seekg(size + (size & 1), std::ios::cur);
        }
    }
    if (!have_fmt || !have_data) {
        throw InvalidInputError(path.string() + ": missing fmt or data chunk");
    }
    if (channels < 1) throw InvalidInputError(path.string() + ": zero channels");

    AudioClip clip;
    clip.sample_rate = static_cast<int>(rate);
    std::size_t bytes_per_sample;
    if (format == 1 && bits == 16) {
        bytes_per_sample = 2;
    } else if (format == 3 && bits == 32) {
        bytes_per_sample = 4;
    } else {
        throw InvalidInputError(path.string() +
                                ": only PCM 16-bit and float 32-bit are supported");
    }
    std::size_t frame_bytes = bytes_per_sample * channels;
    std::size_t frames = data.size() / frame_bytes;
    clip.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0;
        for (std::uint16_t c = 0; c < channels; ++c) {
            const char* p = data.data() + i * frame_bytes + c * bytes_per_sample;
            if (bytes_per_sample == 2) {
                std::int16_t s;
                std::memcpy(&s, p, 2);
                acc += s / 32768.0;
            } else {
                float s;
                std::memcpy(&s, p, 4);
                acc += s;
            }
        }
        clip.samples[i] = static_cast<float>(acc / channels);
    }
    return clip;
}

AudioClip read_raw_f32(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open " + path.string());
    auto bytes = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    AudioClip clip;
    clip.samples.resize(bytes / 4);
    in.read(reinterpret_cast<char*>(clip.samples.data()),
            static_cast<std::streamsize>(clip.samples.size() * 4));
    if (!in) throw IoError("read failed for " + path.string());
    return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    std::uint32_t data_size =
        static_cast<std::uint32_t>(clip.samples.size() * 4);
    auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
    auto u16 = [&](std::uint16_t v) { out.write(reinterpret_cast<char*>(&v), 2); };
    out.write("RIFF", 4);
    u32(36 + data_size);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    u32(16);
    u16(3);  // IEEE float
    u16(1);
    u32(static_cast<std::uint32_t>(clip.sample_rate));
    u32(static_cast<std::uint32_t>(clip.sample_rate) * 4);
    u16(4);
    u16(32);
    out.write("data", 4);
    u32(data_size);
    out.write(reinterpret_cast<const char*>(clip.samples.data()), data_size);
    if (!out) throw IoError("write failed for " + path.string());
}

double mel_band_center_hz(int band, int sample_rate) {
    if (band < 0 || band >= kMelBands) {
        throw ContractViolation("mel band out of range");
    }
    return filterbank(sample_rate).centers_hz[static_cast<std::size_t>(band)];
}

std::vector<std::pair<int, float>> mel_filter(int band, int sample_rate) {
    if (band < 0 || band >= kMelBands) {
        throw ContractViolation("mel band out of range");
    }
    return filterbank(sample_rate).bands[static_cast<std::size_t>(band)];
}

Tensor stft_logmel(const AudioClip& clip) {
    auto len = static_cast<std::int64_t>(clip.samples.size());
    if (len < kWindowSize) {
        throw InvalidInputError("clip of " + std::to_string(len) +
                                " samples is shorter than one analysis window");
    }
    ensure_finite(clip.samples.data(), len, "stft_logmel input");
    std::int64_t frames = frame_count(len);
    const Filterbank& fb = filterbank(clip.sample_rate);
    const std::vector<double>& win = hamming();

    Tensor out = Tensor::zeros({frames, kMelBands});
    std::vector<double> buf(kWindowSize);
    std::vector<fftw_complex> spec(kFftBins);
    std::vector<double> power(kFftBins);
    float* op = out.data();
    for (std::int64_t t = 0; t < frames; ++t) {
        const float* src = clip.samples.data() + t * kHopSize;
        for (int n = 0; n < kWindowSize; ++n) {
            buf[static_cast<std::size_t>(n)] =
                static_cast<double>(src[n]) * win[static_cast<std::size_t>(n)];
        }
        fftw_execute_dft_r2c(fft_plan(), buf.data(), spec.data());
        for (int k = 0; k < kFftBins; ++k) {
            power[static_cast<std::size_t>(k)] =
                spec[static_cast<std::size_t>(k)][0] * spec[static_cast<std::size_t>(k)][0] +
                spec[static_cast<std::size_t>(k)][1] * spec[static_cast<std::size_t>(k)][1];
        }
        for (int b = 0; b < kMelBands; ++b) {
            double e = 0;
            for (const auto& [bin, w] : fb.bands[static_cast<std::size_t>(b)]) {
                e += power[static_cast<std::size_t>(bin)] * w;
            }
            op[t * kMelBands + b] = static_cast<float>(std::log(e + kLogEps));
        }
    }
    return out;
}

Tensor select_max_energy_patch(const Tensor& logmel) {
    if (logmel.ndim() != 2 || logmel.shape[1] != kMelBands) {
        throw ShapeError("expected a [T x 96] log-mel matrix");
    }
    std::int64_t t = logmel.shape[0];
    if (t < 1) throw InvalidInputError("empty spectrogram");

    Tensor padded = logmel;
    if (t < kPatchFrames) {
        padded = Tensor::zeros({kPatchFrames, kMelBands});
        std::memcpy(padded.data(), logmel.data(),
                    static_cast<std::size_t>(t * kMelBands) * sizeof(float));
        const float* last = logmel.data() + (t - 1) * kMelBands;
        for (std::int64_t i = t; i < kPatchFrames; ++i) {
            std::memcpy(padded.data() + i * kMelBands, last,
                        kMelBands * sizeof(float));
        }
        t = kPatchFrames;
    }

    // Per-frame energies (sum of exp over bands), then a fresh 96-frame sum
    // per window so ties resolve exactly.
    std::vector<double> frame_energy(static_cast<std::size_t>(t));
    const float* p = padded.data();
    for (std::int64_t i = 0; i < t; ++i) {
        double e = 0;
        for (int b = 0; b < kMelBands; ++b) {
            e += std::exp(static_cast<double>(p[i * kMelBands + b]));
        }
        frame_energy[static_cast<std::size_t>(i)] = e;
    }
    std::int64_t best = 0;
    double best_energy = -1.0;
    for (std::int64_t start = 0; start + kPatchFrames <= t; ++start) {
        double e = 0;
        for (std::int64_t i = 0; i < kPatchFrames; ++i) {
            e += frame_energy[static_cast<std::size_t>(start + i)];
        }
        if (e > best_energy) {
            best_energy = e;
            best = start;
        }
    }

    Tensor patch = Tensor::zeros({kPatchFrames, kMelBands});
    std::memcpy(patch.data(), padded.data() + best * kMelBands,
                static_cast<std::size_t>(kPatchFrames * kMelBands) * sizeof(float));
    return patch;
}

ScaleStats compute_scale_stats(std::span<const Tensor> patches) {
    if (patches.empty()) throw InvalidInputError("no patches to compute stats on");
    float lo = patches[0].data()[0], hi = lo;
    for (const Tensor& p : patches) {
        const float* v = p.data();
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            lo = std::min(lo, v[i]);
            hi = std::max(hi, v[i]);
        }
    }
    return {lo, hi};
}

Tensor apply_scale(const Tensor& patch, const ScaleStats& stats) {
    Tensor out = Tensor::zeros(patch.shape);
    const float* src = patch.data();
    float* dst = out.data();
    if (stats.hi == stats.lo) {
        for (std::int64_t i = 0; i < patch.numel(); ++i) dst[i] = 0.5f;
        return out;
    }
    float inv = 1.0f / (stats.hi - stats.lo);
    for (std::int64_t i = 0; i < patch.numel(); ++i) {
        float v = (src[i] - stats.lo) * inv;
        dst[i] = std::min(1.0f, std::max(0.0f, v));
    }
    return out;
}

std::vector<double> dct20(std::span<const double> frame) {
    if (frame.size() != kMelBands) {
        throw ShapeError("dct20 expects a 96-band frame");
    }
    std::vector<double> out(kMfccCoeffs);
    const double n = kMelBands;
    for (int k = 0; k < kMfccCoeffs; ++k) {
        double s = 0;
        for (int i = 0; i < kMelBands; ++i) {
            s += frame[static_cast<std::size_t>(i)] *
                 std::cos(kPi * (2 * i + 1) * k / (2.0 * n));
        }
        double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
        out[static_cast<std::size_t>(k)] = scale * s;
    }
    return out;
}

std::vector<float> mfcc_baseline(const AudioClip& clip) {
    Tensor logmel = stft_logmel(clip);
    std::int64_t t = logmel.shape[0];

    // [T x 20] coefficients.
    std::vector<double> coeffs(static_cast<std::size_t>(t * kMfccCoeffs));
    std::vector<double> frame(kMelBands);
    for (std::int64_t i = 0; i < t; ++i) {
        for (int b = 0; b < kMelBands; ++b) {
            frame[static_cast<std::size_t>(b)] =
                static_cast<double>(logmel.data()[i * kMelBands + b]);
        }
        auto c = dct20(frame);
        std::copy(c.begin(), c.end(),
                  coeffs.begin() + static_cast<std::ptrdiff_t>(i * kMfccCoeffs));
    }

    // Centered first difference over time with edge replication.
    auto delta = [t](const std::vector<double>& src) {
        std::vector<double> out(src.size());
        for (std::int64_t i = 0; i < t; ++i) {
            std::int64_t prev = i > 0 ? i - 1 : 0;
            std::int64_t next = i + 1 < t ? i + 1 : t - 1;
            for (int k = 0; k < kMfccCoeffs; ++k) {
                out[static_cast<std::size_t>(i * kMfccCoeffs + k)] =
                    (src[static_cast<std::size_t>(next * kMfccCoeffs + k)] -
                     src[static_cast<std::size_t>(prev * kMfccCoeffs + k)]) /
                    2.0;
            }
        }
        return out;
    };
    std::vector<double> d1 = delta(coeffs);
    std::vector<double> d2 = delta(d1);

    auto stats = [t](const std::vector<double>& src, std::vector<float>& out) {
        for (int k = 0; k < kMfccCoeffs; ++k) {
            double mean = 0;
            for (std::int64_t i = 0; i < t; ++i) {
                mean += src[static_cast<std::size_t>(i * kMfccCoeffs + k)];
            }
            mean /= static_cast<double>(t);
            double var = 0;
            for (std::int64_t i = 0; i < t; ++i) {
                double d = src[static_cast<std::size_t>(i * kMfccCoeffs + k)] - mean;
                var += d * d;
            }
            var /= static_cast<double>(t);
            out.push_back(static_cast<float>(mean));
            out.push_back(static_cast<float>(std::sqrt(var)));
        }
    };
    // Interleave per block: [means,stds] for base, deltas, delta-deltas.
    std::vector<float> base, dd1, dd2;
    stats(coeffs, base);
    stats(d1, dd1);
    stats(d2, dd2);
    std::vector<float> out;
    out.reserve(120);
    for (int k = 0; k < kMfccCoeffs; ++k) out.push_back(base[static_cast<std::size_t>(2 * k)]);
    for (int k = 0; k < kMfccCoeffs; ++k) out.push_back(base[static_cast<std::size_t>(2 * k + 1)]);
    for (int k = 0; k < kMfccCoeffs; ++k) out.push_back(dd1[static_cast<std::size_t>(2 * k)]);
    for (int k = 0; k < kMfccCoeffs; ++k) out.push_back(dd1[static_cast<std::size_t>(2 * k + 1)]);
    for (int k = 0; k < kMfccCoeffs; ++k) out.push_back(dd2[static_cast<std::size_t>(2 * k)]);
    for (int k = 0; k < kMfccCoeffs; ++k) out.push_back(dd2[static_cast<std::size_t>(2 * k + 1)]);
    ensure_finite(out.data(), static_cast<std::int64_t>(out.size()), "mfcc_baseline");
    return out;
}

}  // namespace xaln::audio
