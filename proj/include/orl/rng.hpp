#pragma once

// Seeded random streams.
//
// Every random draw in the project comes from a stream derived from one 64-bit
// root seed and a label plus optional integer indices:
//
//   s0 = splitmix64(root ^ splitmix64(fnv1a64(label)))
//   s_{k+1} = splitmix64(s_k ^ splitmix64(index_k + 0x9E3779B97F4A7C15))
//
// The final state seeds a std::mt19937_64. Uniform doubles are built from the
// top 53 bits of the engine output, so streams are bit-reproducible across
// standard library implementations.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>

namespace orl {

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

/// Derives a substream seed from (root, label, indices...).
std::uint64_t stream_seed(std::uint64_t root, std::string_view label,
                          std::initializer_list<std::uint64_t> indices = {}) noexcept;

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in [-scale, scale).
    double symmetric(double scale) { return scale * (2.0 * uniform() - 1.0); }
    /// Standard normal via Box-Muller.
    double normal();
    /// Index drawn from a (not necessarily normalized) nonnegative weight vector.
    std::size_t categorical(std::span<const double> weights);

private:
    std::mt19937_64 engine_;
};

inline Rng make_stream(std::uint64_t root, std::string_view label,
                       std::initializer_list<std::uint64_t> indices = {}) {
    return Rng(stream_seed(root, label, indices));
}

}  // namespace orl
