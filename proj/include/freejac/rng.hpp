#pragma once

#include <cstdint>
#include <random>

namespace freejac {

/// Deterministic random source identified by (seed, stream).
///
/// Two instances built from the same pair produce the same sequence. Child
/// streams are derived by hashing, so a trial can hand independent streams to
/// its sub-tasks (one per layer, one per auxiliary rotation, ...) without any
/// shared state.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Independent generator for sub-task `id`; does not advance this one.
  SeededRng child(std::uint64_t id) const;

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace freejac
