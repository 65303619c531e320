#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>

namespace emonas {

/// 64-bit FNV-1a, used wherever a stable (platform-independent) hash is
/// needed: seed derivation, config fingerprints.
std::uint64_t fnv1a(std::string_view text,
                    std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

/// Deterministic per-job seed from a root seed and a label.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label) noexcept;

/// Seeded generator with platform-independent uniform/normal draws.
/// The standard distributions are implementation-defined, so they are not
/// used anywhere reproducibility matters.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();

  /// Independent child stream keyed by a label.
  Rng split(std::string_view label) const { return Rng(derive_seed(seed_, label)); }

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  bool has_spare_ = false;
  double spare_ = 0;
};

}  // namespace emonas
