#ifndef DKM_RANDOM_HPP_
#define DKM_RANDOM_HPP_

#include <cstdint>
#include <optional>
#include <random>

#include "dkm/linalg.hpp"

namespace dkm {

// Seedable generator with a fully specified output stream.
//
// Bits come from std::mt19937_64 (MT19937-64, whose output sequence is fixed
// by the C++ standard). Conversions are done here rather than with the
// <random> distributions, whose algorithms are implementation-defined:
//   uniform()  = (next() >> 11) * 2^-53, in [0, 1)
//   normal()   = Box-Muller on (u1, u2) with u1 = 1 - uniform(); yields
//                r cos(2 pi u2) then r sin(2 pi u2), r = sqrt(-2 ln u1)
//   below(n)   = next() mod n after rejecting the biased tail
// Independent streams for worker i are seeded with seed + i.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng stream(std::uint64_t seed, std::uint64_t index) { return Rng(seed + index); }

  std::uint64_t next() { return engine_(); }
  double uniform();
  double normal();
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  Matrix normal_matrix(Index rows, Index cols);

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

}  // namespace dkm

#endif  // DKM_RANDOM_HPP_
