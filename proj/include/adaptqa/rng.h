// SPDX-License-Identifier: Apache-2.0
//
// Seeded, platform-independent random number generation.
//
// Algorithm: xoshiro256** (Blackman & Vigna, 2018) whose 256-bit state is
// filled from the 64-bit seed with SplitMix64. Every derived draw (uniform
// doubles, bounded integers, normals, shuffles) is defined here in terms of
// next_u64() only, so an identical seed yields an identical sequence on any
// platform and standard library.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace adaptqa {

/// One SplitMix64 step; advances `state` and returns the mixed output.
std::uint64_t splitmix64(std::uint64_t& state);

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform();
    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t uniform_int(std::uint64_t bound);
    /// Standard normal via Box-Muller (both outputs are used).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Independent generator for a named sub-stream; does not advance *this.
    Rng fork(std::uint64_t stream) const;

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace adaptqa
