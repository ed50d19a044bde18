#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace convkit {

// xoshiro256** by Blackman & Vigna, seeded through splitmix64. Fixed
// algorithm so shuffles and weight draws reproduce across platforms;
// never swap in a standard-library engine here.
class Xoshiro256 {
 public:
  explicit Xoshiro256(uint64_t seed);

  uint64_t next();

  // Uniform double in [0, 1).
  double uniform();

  // Standard normal via the Box-Muller transform (two uniforms per draw,
  // no cached spare, so the state alone determines the stream).
  double normal();

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n);

  // Fisher-Yates permutation of 0..n-1.
  std::vector<int64_t> permutation(int64_t n);

  std::array<uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

 private:
  std::array<uint64_t, 4> s_;
};

}  // namespace convkit
