#include "dkm/memory.hpp"

namespace dkm {

void validate(const MemoryState& mem) {
  if (mem.U.rows() != mem.slots() || mem.U.cols() != mem.slots()) {
    throw DimensionError("memory: U must be K x K");
  }
  if (!(mem.sigma_xi_sq > 0.0)) throw NumericalError("memory: sigma_xi_sq must be positive");
  if (!mem.R.allFinite() || !mem.U.allFinite()) throw NumericalError("memory: non-finite entries");
  if (!is_symmetric(mem.U)) throw NumericalError("memory: U is not symmetric");
  cholesky_lower(mem.U);
}

MemoryState prior(Index slots, Index code_size, double sigma_U_sq, double sigma_xi_sq,
                  std::uint64_t seed) {
  if (slots < 1 || code_size < 1) throw DimensionError("prior: K and C must be >= 1");
  if (!(sigma_U_sq > 0.0) || !(sigma_xi_sq > 0.0)) {
    throw std::invalid_argument("prior: variances must be positive");
  }
  Rng rng(seed);
  return MemoryState{rng.normal_matrix(slots, code_size),
                     sigma_U_sq * Matrix::Identity(slots, slots), sigma_xi_sq};
}

}  // namespace dkm
