#include "dkm/attractor.hpp"

#include <stdexcept>

#include "dkm/random.hpp"

namespace dkm {

namespace {

bool same_state(const Likelihood& lik, const Matrix& a, const Matrix& b) {
  if (lik.kind == LikelihoodKind::kBernoulli) return a == b;
  return (a - b).cwiseAbs().maxCoeff() <= kGaussianTolerance;
}

TraceStep step_of(const Prediction& pred, bool converged) {
  return TraceStep{pred.energy.energy, pred.energy.recon, pred.energy.kl_w, converged};
}

}  // namespace

Prediction predict(const ModelParams& p, const MemoryState& mem, const Matrix& x_q) {
  if (x_q.rows() != p.data_width() || x_q.cols() != 1) {
    throw DimensionError("predict: query must be " + std::to_string(p.data_width()) + "x1");
  }
  const AddressPosterior q{address(mem, encode(p, x_q)), sigma_w_sq(p)};
  const Matrix out = decoder_output(p, read(mem, q.mu_w));
  EnergyTerms e;
  e.recon = -scalar(log_prob<Matrix>(p.likelihood, out, x_q));
  e.kl_w = scalar(kl_weights(q));
  e.energy = e.recon + e.kl_w;
  return Prediction{likelihood_mode(p.likelihood, out), q, e};
}

EnergyTrace iterate(const ModelParams& p, const MemoryState& mem, const Matrix& x0,
                    int max_iters) {
  if (max_iters < 1) throw std::invalid_argument("iterate: max_iters must be >= 1");
  const bool binary = p.likelihood.kind == LikelihoodKind::kBernoulli;
  EnergyTrace trace;
  Prediction current = predict(p, mem, x0);
  trace.states.push_back(x0);
  trace.iterations.push_back(step_of(current, false));
  for (int n = 1; n <= max_iters; ++n) {
    const Matrix next = current.x_hat;
    const bool converged = same_state(p.likelihood, next, trace.states.back());
    bool revisited = false;
    if (binary && !converged) {
      for (std::size_t i = 0; i + 1 < trace.states.size(); ++i) {
        if (trace.states[i] == next) {
          revisited = true;
          break;
        }
      }
    }
    current = predict(p, mem, next);
    trace.states.push_back(next);
    trace.iterations.push_back(step_of(current, converged));
    if (converged) break;
    if (revisited) {
      trace.cycle = true;
      break;
    }
  }
  trace.final_pattern = trace.states.back();
  return trace;
}

std::vector<EnergyTrace> sample_prior(const ModelParams& p, const MemoryState& mem, int n,
                                      int max_iters, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_prior: n must be >= 1");
  std::vector<EnergyTrace> traces;
  traces.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
    const Matrix w = rng.normal_matrix(mem.slots(), 1);
    const Matrix x0 = likelihood_mode(p.likelihood, decoder_output(p, read(mem, w)));
    traces.push_back(iterate(p, mem, x0, max_iters));
  }
  return traces;
}

double non_increasing_fraction(const EnergyTrace& trace) {
  const auto& it = trace.iterations;
  if (it.size() < 2) return 1.0;
  std::size_t ok = 0;
  for (std::size_t i = 1; i < it.size(); ++i) {
    if (it[i].energy <= it[i - 1].energy) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(it.size() - 1);
}

Index hamming(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hamming");
  return (a.array() != b.array()).count();
}

}  // namespace dkm
