#pragma once

#include <cstdint>
#include <random>

#include "sdr/types.hpp"

namespace sdr {

/// Finalizer of the splitmix64 generator; a good 64-bit bit mixer.
inline std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

/**
 * Counter-based seed derivation: hashes (master, stream_tag, index) into a
 * seed, so every replicate of every stream gets an independent generator
 * without any shared sequential state. Replicates can therefore run in any
 * order (or in parallel) and still produce identical draws.
 */
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream_tag,
                                 std::uint64_t index) noexcept {
  std::uint64_t h = mix64(master + 0x9E3779B97F4A7C15ULL);
  h = mix64(h ^ (stream_tag + 0x6A09E667F3BCC909ULL));
  h = mix64(h ^ (index + 0xC2B2AE3D27D4EB4FULL));
  return h;
}

/// Stream tags keep the draws of one replicate mutually independent.
namespace streams {
inline constexpr std::uint64_t predictor = 1;
inline constexpr std::uint64_t response_noise = 2;
inline constexpr std::uint64_t measurement_error = 3;
inline constexpr std::uint64_t aux_predictor = 4;
inline constexpr std::uint64_t aux_error = 5;
inline constexpr std::uint64_t projection = 6;
inline constexpr std::uint64_t generic = 7;
}  // namespace streams

/// A seeded stream of standard draws. Thin wrapper over std::mt19937_64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  static Rng stream(std::uint64_t master, std::uint64_t stream_tag,
                    std::uint64_t index) {
    return Rng(derive_seed(master, stream_tag, index));
  }

  double normal() { return normal_(gen_); }
  double uniform() { return uniform_(gen_); }

  Vector normal_vector(Index n, double sd = 1.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = sd * normal();
    return v;
  }

  /// Row-per-observation matrix of i.i.d. N(0, sd^2) entries.
  Matrix normal_matrix(Index rows, Index cols, double sd = 1.0) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = sd * normal();
    return m;
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace sdr
