#pragma once

#include <cstdint>
#include <random>

#include "wsod/tensor.hpp"

namespace wsod {

// Seeded generator with hand-rolled distributions. std::mt19937_64 output is
// pinned by the standard, but the std distributions are not; rolling our own
// keeps identical seeds producing identical streams on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive on both ends.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(gen_() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  // Box-Muller; second value of each pair is cached.
  double normal();

  void fill_uniform(Tensor& t, double lo, double hi) {
    for (double& v : t.values()) v = uniform(lo, hi);
  }

  // Derive an independent stream (e.g. one per scene id).
  Rng fork(std::uint64_t salt) {
    return Rng(gen_() ^ (salt * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull));
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace wsod
