#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>

#include "w2s/matrix.hpp"

namespace w2s {

// Counter-based generator (Philox4x32-10). The output stream is a pure
// function of (key, counter), so child streams keyed by (seed, stream ids)
// are reproducible no matter in which order or on which thread they are used.
//
// Normal variates come from Box-Muller rather than std::normal_distribution,
// whose algorithm differs between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  // Independent stream derived from this one's key and `stream_id`. Does not
  // advance this generator.
  Rng child(std::uint64_t stream_id) const;
  Rng child(std::initializer_list<std::uint64_t> path) const;

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1).
  double uniform();
  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();
  double normal(double mean, double std) { return mean + std * normal(); }

  void shuffle(std::span<std::size_t> items);

 private:
  Rng(std::uint64_t seed, std::uint64_t key);

  void refill();

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
  std::optional<double> spare_normal_;
};

// rows x cols matrix of i.i.d. Normal(mean, std^2) entries.
Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double mean, double std, Rng& rng);

}  // namespace w2s
