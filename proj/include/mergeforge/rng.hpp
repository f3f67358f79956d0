#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace mergeforge {

// Deterministic, platform-independent randomness. Everything below is built on
// splitmix64 so that results never depend on the standard library's
// distribution implementations. Two flavours:
//
//   * Prng          — a sequential stream, for shuffles and sampling loops.
//   * counter hashes — stateless values keyed by (seed, parts...), for places
//                      where results must not depend on evaluation order
//                      (DARE masks, parameter init, validation carve-outs).

uint64_t splitmix64(uint64_t x);

// Fold a value / string into a seed. Not cryptographic; collision-resistant
// enough for experiment keying.
uint64_t hash_combine(uint64_t seed, uint64_t value);
uint64_t hash_str(uint64_t seed, std::string_view s);

// Map 64 random bits to [0, 1).
double u01_from_bits(uint64_t bits);

class Prng {
  public:
    explicit Prng(uint64_t seed) : state_(splitmix64(seed ^ 0x2545f4914f6cdd1dULL)) {}

    uint64_t next_u64();
    double next_u01();                  // [0, 1)
    double next_normal();               // standard normal, Box-Muller
    uint64_t next_below(uint64_t bound); // [0, bound), bound >= 1

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    uint64_t state_;
};

std::vector<size_t> shuffled_indices(size_t n, Prng& rng);

// Stateless uniform in [0,1) keyed by (seed, a, b, c). Used for the DARE mask:
// keyed by (seed, task index, layer name hash, element index).
double counter_u01(uint64_t seed, uint64_t a, uint64_t b, uint64_t c);

// Stateless standard normal keyed the same way.
double counter_normal(uint64_t seed, uint64_t a, uint64_t b, uint64_t c);

} // namespace mergeforge
