#include "mergeforge/rng.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

namespace mergeforge {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t hash_combine(uint64_t seed, uint64_t value) {
    return splitmix64(seed ^ (splitmix64(value) + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

uint64_t hash_str(uint64_t seed, std::string_view s) {
    uint64_t h = hash_combine(seed, s.size());
    size_t i = 0;
    while (i < s.size()) {
        uint64_t chunk = 0;
        size_t take = std::min<size_t>(8, s.size() - i);
        std::memcpy(&chunk, s.data() + i, take);
        h = hash_combine(h, chunk);
        i += take;
    }
    return h;
}

double u01_from_bits(uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

uint64_t Prng::next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Prng::next_u01() {
    return u01_from_bits(next_u64());
}

double Prng::next_normal() {
    // u1 shifted away from zero so log() stays finite
    double u1 = 1.0 - next_u01();
    double u2 = next_u01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

uint64_t Prng::next_below(uint64_t bound) {
    // fixed-point multiply; bias of O(bound/2^64) is irrelevant here and the
    // result is identical on every platform
    return static_cast<uint64_t>((static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
}

std::vector<size_t> shuffled_indices(size_t n, Prng& rng) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(idx);
    return idx;
}

double counter_u01(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
    uint64_t h = hash_combine(hash_combine(hash_combine(seed, a), b), c);
    return u01_from_bits(h);
}

double counter_normal(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
    uint64_t h = hash_combine(hash_combine(hash_combine(seed, a), b), c);
    double u1 = 1.0 - u01_from_bits(h);
    double u2 = u01_from_bits(splitmix64(h ^ 0xd1b54a32d192ed03ULL));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace mergeforge
