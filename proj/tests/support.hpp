#ifndef DKM_TESTS_SUPPORT_HPP_
#define DKM_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dkm/linalg.hpp"
#include "dkm/random.hpp"
#include "dkm/tape.hpp"

namespace dkm::test {

inline Matrix random_matrix(Rng& rng, Index rows, Index cols) { return rng.normal_matrix(rows, cols); }

// Q diag(lambda) Q^T with eigenvalues log-uniform in [lo, hi].
inline Matrix random_spd(Rng& rng, Index n, double lo = 0.5, double hi = 4.0) {
  const Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(n, n));
  const Matrix q = qr.householderQ();
  Vector lambda(n);
  for (Index i = 0; i < n; ++i) {
    lambda(i) = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * rng.uniform());
  }
  lambda(0) = lo;
  lambda(n - 1) = hi;
  Matrix a = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (a + a.transpose());
}

inline Matrix binary_vector(Rng& rng, Index d, double p = 0.5) {
  Matrix x(d, 1);
  for (Index i = 0; i < d; ++i) x(i, 0) = rng.bernoulli(p) ? 1.0 : 0.0;
  return x;
}

// |a - n| <= rel * max(|a|, |n|) + abs_floor.
inline bool grad_close(double a, double n, double rel = 1e-4, double abs_floor = 1e-8) {
  return std::abs(a - n) <= rel * std::max(std::abs(a), std::abs(n)) + abs_floor;
}

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

struct FdResult {
  double worst_excess = 0.0;  // max of |a - n| - tolerance; <= 0 means pass
  double max_rel = 0.0;
};

// Compares the tape gradient of sum(weights .* f(inputs)) with central
// differences (step h) in every input entry.
inline FdResult check_gradient(const Builder& f, const std::vector<Matrix>& inputs,
                               const Matrix& weights, double h = 1e-5) {
  auto root_of = [&](Tape& tape, const std::vector<Var>& vars) {
    const Var out = f(tape, vars);
    return sum(hadamard(tape.constant(weights), out));
  };
  auto eval = [&](const std::vector<Matrix>& xs) {
    Tape tape;
    std::vector<Var> vars;
    for (const Matrix& x : xs) vars.push_back(tape.constant(x));
    return root_of(tape, vars).value()(0, 0);
  };

  Tape tape;
  std::vector<Var> vars;
  for (const Matrix& x : inputs) vars.push_back(tape.variable(x));
  const Gradients g = tape.backward(root_of(tape, vars));

  FdResult result{-1.0, 0.0};
  std::vector<Matrix> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Index i = 0; i < inputs[k].size(); ++i) {
      const double orig = probe[k](i);
      probe[k](i) = orig + h;
      const double up = eval(probe);
      probe[k](i) = orig - h;
      const double down = eval(probe);
      probe[k](i) = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = g[vars[k]](i);
      const double scale = std::max(std::abs(analytic), std::abs(numeric));
      result.worst_excess =
          std::max(result.worst_excess, std::abs(analytic - numeric) - (1e-4 * scale + 1e-8));
      if (scale > 1e-8) result.max_rel = std::max(result.max_rel, std::abs(analytic - numeric) / scale);
    }
  }
  return result;
}

}  // namespace dkm::test

#endif  // DKM_TESTS_SUPPORT_HPP_
