#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace xaln {

// xoshiro256** with splitmix64 seeding. Every stochastic component draws from
// its own stream so that adding draws in one place never shifts another.
class RngStream {
public:
    RngStream() : RngStream(0, 0) {}
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t next_u64();
    // Uniform in [0, 1), 53-bit resolution.
    double next_double();
    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi);
    // Uniform integer in [0, n), n >= 1.
    std::uint64_t next_below(std::uint64_t n);

    template <class It>
    void shuffle(It first, It last) {
        auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            std::swap(first[i - 1], first[next_below(i)]);
        }
    }

    std::array<std::uint64_t, 4> state() const { return s_; }
    void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }
    std::string state_hex() const;
    static RngStream from_state_hex(const std::string& hex);

private:
    std::array<std::uint64_t, 4> s_{};
};

// Stream ids used across the project.
namespace stream {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t dropout = 2;
inline constexpr std::uint64_t shuffle = 3;
inline constexpr std::uint64_t cbow = 4;
inline constexpr std::uint64_t synth = 5;
inline constexpr std::uint64_t probe = 6;
}  // namespace stream

}  // namespace xaln
