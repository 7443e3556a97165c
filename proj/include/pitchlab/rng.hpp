#pragma once

#include <cstdint>
#include <string>

#include "pitchlab/common.hpp"

namespace pitchlab {

// Deterministic RNG (xoshiro256++ seeded via splitmix64). All randomness in
// the project flows from one root seed, split per subsystem through
// Rng::derive(root, name, index): the stream key is
//   splitmix(root ^ fnv1a(name) ^ index * 0x9e3779b97f4a7c15
// expanded by four splitmix64 draws into the xoshiro state. Distributions are
// implemented here (not std::) so sequences are identical across compilers.
class Rng {
 public:
  Rng() : Rng(0x853c49e6748fea9bull) {}
  explicit Rng(uint64_t seed);
  static Rng derive(uint64_t root_seed, const std::string& stream, uint64_t index = 0);

  uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be > 0.
  uint64_t uniform_int(uint64_t n);
  // Standard normal via Box-Muller; the second draw is cached.
  double normal();
  double normal(double mean, double std) { return mean + std * normal(); }

  // A child stream keyed off this stream's current state (consumes one draw).
  Rng split(const std::string& label);

  struct State {
    uint64_t s[4];
    double cached;
    uint8_t has_cached;
  };
  State state() const;
  void restore(const State& st);

 private:
  uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace pitchlab
