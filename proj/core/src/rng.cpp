#include "xaln/rng.hpp"

#include <cstdio>

#include "xaln/common.hpp"

namespace xaln {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id) {
    std::uint64_t x = seed ^ (0xa0761d6478bd642fULL * (stream_id + 1));
    for (auto& w : s_) w = splitmix64(x);
    // All-zero state is invalid for xoshiro.
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
}

std::uint64_t RngStream::next_u64() {
    std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RngStream::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
}

std::uint64_t RngStream::next_below(std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased for any n.
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        std::uint64_t r = next_u64();
        if (r >= threshold) return r % n;
    }
}

std::string RngStream::state_hex() const {
    char buf[4 * 16 + 1];
    std::snprintf(buf, sizeof(buf), "%016llx%016llx%016llx%016llx",
                  static_cast<unsigned long long>(s_[0]),
                  static_cast<unsigned long long>(s_[1]),
                  static_cast<unsigned long long>(s_[2]),
                  static_cast<unsigned long long>(s_[3]));
    return std::string(buf);
}

RngStream RngStream::from_state_hex(const std::string& hex) {
    if (hex.size() != 64) throw ConfigError("rng state must be 64 hex chars");
    RngStream r;
    std::array<std::uint64_t, 4> s{};
    for (int i = 0; i < 4; ++i) {
        s[i] = std::stoull(hex.substr(static_cast<std::size_t>(i) * 16, 16), nullptr, 16);
    }
    r.set_state(s);
    return r;
}

}  // namespace xaln
