#ifndef DKM_MEMORY_HPP_
#define DKM_MEMORY_HPP_

// Matrix-normal memory MN(R, U, I): K x C mean R, K x K row covariance U,
// identity column covariance, i.e. vec(M) ~ N(vec(R), I (x) U).
//
// All routines are templates over the value type `M` (a dense matrix or a
// tape `Var`). Vectors are K x 1 / C x 1 column matrices and scalars are 1x1.

#include <cstdint>
#include <string>
#include <type_traits>

#include "dkm/linalg.hpp"
#include "dkm/random.hpp"

namespace dkm {

template <class M>
struct BasicMemory {
  M R;
  M U;
  double sigma_xi_sq = 1.0;

  Index slots() const { return R.rows(); }
  Index code_size() const { return R.cols(); }
};

using MemoryState = BasicMemory<Matrix>;

// q(w) = N(mu_w, sigma_w_sq I).
template <class M>
struct BasicAddress {
  M mu_w;
  M sigma_w_sq;
};

using AddressPosterior = BasicAddress<Matrix>;

inline AddressPosterior make_address(const Vector& mu_w, double sigma_w_sq) {
  return {Matrix(mu_w), Matrix::Constant(1, 1, sigma_w_sq)};
}

// Throws DimensionError / NumericalError when the memory invariants fail.
void validate(const MemoryState& mem);

// R0 ~ N(0, 1) i.i.d. from `seed`, U0 = sigma_U_sq I.
MemoryState prior(Index slots, Index code_size, double sigma_U_sq, double sigma_xi_sq,
                  std::uint64_t seed);

// z = R^T w. Observation noise is not added on read.
template <class M>
M read(const BasicMemory<M>& mem, const std::type_identity_t<M>& w) {
  if (w.rows() != mem.slots() || w.cols() != 1) {
    throw DimensionError("read: weights must be " + std::to_string(mem.slots()) + "x1");
  }
  return matmul(transpose(mem.R), w);
}

// Exact Bayesian conditioning of the memory on z = M^T w + xi.
template <class M>
BasicMemory<M> update(const BasicMemory<M>& mem, const std::type_identity_t<M>& w,
                      const std::type_identity_t<M>& z) {
  if (w.rows() != mem.slots() || w.cols() != 1) {
    throw DimensionError("update: weights must be " + std::to_string(mem.slots()) + "x1");
  }
  if (z.rows() != mem.code_size() || z.cols() != 1) {
    throw DimensionError("update: code must be " + std::to_string(mem.code_size()) + "x1");
  }
  const M delta = z - matmul(transpose(mem.R), w);
  const M sigma_c = matmul(mem.U, w);
  const M sigma_z = add_scalar(matmul(transpose(w), sigma_c), mem.sigma_xi_sq);
  if (!(scalar(primal(sigma_z)) > 0.0)) {
    throw NumericalError("update: non-positive predictive variance");
  }
  const M gain = matmul(sigma_c, unary(Unary::kReciprocal, sigma_z));
  BasicMemory<M> out{mem.R + matmul(gain, transpose(delta)),
                     symmetrize(mem.U - matmul(gain, transpose(sigma_c))), mem.sigma_xi_sq};
  return out;
}

// Posterior mean of the addressing weights:
//   mu = argmin ||z - R^T mu||^2 / (2 sigma_xi^2) + ||mu||^2 / 2
//      = (R R^T + sigma_xi^2 I)^-1 R z.
template <class M>
M address(const BasicMemory<M>& mem, const std::type_identity_t<M>& z) {
  if (z.rows() != mem.code_size() || z.cols() != 1) {
    throw DimensionError("address: code must be " + std::to_string(mem.code_size()) + "x1");
  }
  const M gram = add_diagonal(matmul(mem.R, transpose(mem.R)), mem.sigma_xi_sq);
  return solve_spd(gram, matmul(mem.R, z));
}

// The least-squares objective minimized by `address`, evaluated at mu.
inline double addressing_objective(const MemoryState& mem, const Matrix& z, const Matrix& mu) {
  const Matrix r = z - mem.R.transpose() * mu;
  return r.squaredNorm() / (2.0 * mem.sigma_xi_sq) + 0.5 * mu.squaredNorm();
}

// KL(N(mu, s I) || N(0, I)) = 1/2 sum_k (s + mu_k^2 - 1 - ln s).
template <class M>
M kl_weights(const M& mu_w, const std::type_identity_t<M>& sigma_w_sq) {
  require_scalar(sigma_w_sq, "kl_weights");
  const double k = static_cast<double>(mu_w.rows());
  const M spread = scale(k, sigma_w_sq) - scale(k, unary(Unary::kLog, sigma_w_sq));
  return scale(0.5, add_scalar(spread + matmul(transpose(mu_w), mu_w), -k));
}

template <class M>
M kl_weights(const BasicAddress<M>& q) {
  return kl_weights<M>(q.mu_w, q.sigma_w_sq);
}

// KL(MN(R_q, U_q, I) || MN(R_p, U_p, I))
//   = 1/2 [ C tr(U_p^-1 U_q) - K C + C ln(|U_p| / |U_q|)
//           + tr((R_q - R_p)^T U_p^-1 (R_q - R_p)) ].
template <class M>
M kl_memory(const BasicMemory<M>& q, const BasicMemory<M>& p) {
  require_same_shape(q.R, p.R, "kl_memory");
  require_same_shape(q.U, p.U, "kl_memory");
  const double k = static_cast<double>(q.slots());
  const double c = static_cast<double>(q.code_size());
  const M spread = trace(solve_spd(p.U, q.U));
  const M diff = q.R - p.R;
  const M mahalanobis = sum(hadamard(diff, solve_spd(p.U, diff)));
  const M log_ratio = logdet_spd(p.U) - logdet_spd(q.U);
  return scale(0.5, add_scalar(scale(c, spread) + scale(c, log_ratio) + mahalanobis, -k * c));
}

}  // namespace dkm

#endif  // DKM_MEMORY_HPP_
