#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>

namespace tpt {

/// xoshiro256** seeded through splitmix64.
///
/// Streams depend only on the seed: normals use Box-Muller over 53-bit
/// uniforms, integer draws use rejection sampling, and shuffles are an
/// explicit Fisher-Yates. Nothing here routes through <random> distributions,
/// whose algorithms are implementation-defined.
class Rng {
 public:
  struct State {
    std::array<std::uint64_t, 4> words{};
    bool has_spare = false;
    double spare = 0.0;

    bool operator==(const State&) const = default;
  };

  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal.
  double normal();
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  State state() const { return state_; }
  void set_state(const State& s) { state_ = s; }

  /// Derives an independent seed for a sub-stream (epoch shuffles, workers).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  State state_;
};

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace tpt
