#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace sasv {

/// Seeded generator whose output is identical on every platform.
///
/// Raw bits come from std::mt19937_64, which the standard specifies exactly.
/// The standard distributions are implementation-defined, so the derived
/// variates are computed here: uniforms take the top 53 bits, bounded
/// integers use rejection sampling, and normals use the Box-Muller transform
/// (both outputs of each pair are used, cosine branch first).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform();

  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal variate.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sasv
