#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace dlm {

// 64-bit Mersenne Twister with portable transforms. The standard library's
// distributions are implementation-defined, so uniforms, normals and index
// draws are derived from the raw engine output here; the same seed yields
// the same sequence on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  // Independent stream derived from a seed and a path of stream ids, e.g.
  // Rng::derive(seed, {epoch, batch}).
  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path);
  static std::uint64_t mix(std::uint64_t x);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on [lo, hi].
  double uniform(double lo, double hi);
  double normal();
  // Uniform index in [0, n), unbiased.
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dlm
