#ifndef DKM_ATTRACTOR_HPP_
#define DKM_ATTRACTOR_HPP_

// Deterministic attractor retrieval: MAP prediction fed back as the next
// query. Each pass is one round of coordinate descent on E(x, w): the
// least-squares address minimizes over w at fixed x, then the likelihood
// mode minimizes the reconstruction term over x at fixed w.

#include <cstdint>
#include <optional>
#include <vector>

#include "dkm/memory.hpp"
#include "dkm/model.hpp"

namespace dkm {

struct Prediction {
  Matrix x_hat;
  AddressPosterior q;
  // E(x_q, mu_w(x_q)).
  EnergyTerms energy;
};

Prediction predict(const ModelParams& p, const MemoryState& mem, const Matrix& x_q);

struct TraceStep {
  double energy = 0.0;
  double recon = 0.0;
  double kl_w = 0.0;
  // The state equals its predecessor (within tolerance for Gaussian data).
  bool converged = false;
};

struct EnergyTrace {
  std::vector<TraceStep> iterations;
  // states[n] is the pattern whose energy is iterations[n].
  std::vector<Matrix> states;
  Matrix final_pattern;
  // A Bernoulli state revisited an earlier, non-adjacent state.
  bool cycle = false;

  bool converged() const { return !iterations.empty() && iterations.back().converged; }
};

// Infinity-norm tolerance used to declare convergence for Gaussian data.
inline constexpr double kGaussianTolerance = 1e-6;

EnergyTrace iterate(const ModelParams& p, const MemoryState& mem, const Matrix& x0,
                    int max_iters);

// Draws w ~ N(0, I) from stream `seed + i` for sample i, decodes the mode of
// R^T w and runs the dynamics from there.
std::vector<EnergyTrace> sample_prior(const ModelParams& p, const MemoryState& mem, int n,
                                      int max_iters, std::uint64_t seed);

// Fraction of consecutive steps along the trace whose energy does not rise
// (1 when the trace has a single entry).
double non_increasing_fraction(const EnergyTrace& trace);

Index hamming(const Matrix& a, const Matrix& b);

}  // namespace dkm

#endif  // DKM_ATTRACTOR_HPP_
