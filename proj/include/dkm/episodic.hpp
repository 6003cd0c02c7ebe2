#ifndef DKM_EPISODIC_HPP_
#define DKM_EPISODIC_HPP_

// Writing an episode into memory, reading it back, the variational bounds,
// and one gradient-ascent step on the joint objective L_T + L_AE.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dkm/linalg.hpp"
#include "dkm/memory.hpp"
#include "dkm/model.hpp"
#include "dkm/tape.hpp"

namespace dkm {

struct Episode {
  std::vector<Vector> patterns;

  Index length() const { return static_cast<Index>(patterns.size()); }
  Index width() const { return patterns.empty() ? 0 : patterns.front().size(); }
};

// Throws DimensionError on an empty episode or ragged widths.
void validate(const Episode& ep, Index width);

template <class M>
struct BasicWriteResult {
  BasicMemory<M> memory;       // q(M_T)
  BasicMemory<M> before_last;  // q(M_{T-1})
  std::vector<BasicAddress<M>> addresses;
  std::vector<M> per_step_kl_w;
};

using WriteResult = BasicWriteResult<Matrix>;

// Sequential writing with dynamic addressing. Each step addresses against
// the current memory and conditions on (mu_w, z). A refinement iteration
// re-addresses against the freshly updated memory and redoes the update from
// the memory as it was before this step.
template <class M>
BasicWriteResult<M> write_episode(const BasicParams<M>& p, const BasicMemory<M>& mem0,
                                  const std::vector<M>& xs, int refine_iters) {
  if (xs.empty()) throw DimensionError("write_episode: empty episode");
  if (refine_iters < 0) throw std::invalid_argument("write_episode: refine_iters < 0");
  const M s2 = sigma_w_sq(p);
  BasicWriteResult<M> out{mem0, mem0, {}, {}};
  for (const M& x : xs) {
    const M z = encode(p, x);
    const BasicMemory<M> before = out.memory;
    M mu = address(before, z);
    BasicMemory<M> after = update(before, mu, z);
    for (int i = 0; i < refine_iters; ++i) {
      mu = address(after, z);
      after = update(before, mu, z);
    }
    out.before_last = before;
    out.memory = after;
    out.per_step_kl_w.push_back(kl_weights<M>(mu, s2));
    out.addresses.push_back(BasicAddress<M>{mu, s2});
  }
  return out;
}

template <class M>
struct BasicReadout {
  M z_hat;
  BasicAddress<M> address;
  M log_prob;
};

using Readout = BasicReadout<Matrix>;

// Reads every pattern back from `mem`. With `noise` (one K x 1 standard
// normal draw per pattern) the weights are sampled by reparameterization,
// w = mu + sigma_w eps; without it w = mu.
template <class M>
std::vector<BasicReadout<M>> read_episode(const BasicParams<M>& p, const BasicMemory<M>& mem,
                                          const std::vector<M>& xs,
                                          const std::vector<Matrix>* noise) {
  if (noise != nullptr && noise->size() != xs.size()) {
    throw DimensionError("read_episode: one noise draw per pattern required");
  }
  const M s2 = sigma_w_sq(p);
  std::vector<BasicReadout<M>> out;
  out.reserve(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const M mu = address(mem, encode(p, xs[t]));
    M w = mu;
    if (noise != nullptr) {
      const M sigma = unary(Unary::kExp, scale(0.5, p.log_sigma_w_sq));
      w = mu + scale(sigma, constant_like(mu, (*noise)[t]));
    }
    const M z_hat = read(mem, w);
    out.push_back(BasicReadout<M>{z_hat, BasicAddress<M>{mu, s2},
                                  log_prob<M>(p.likelihood, decoder_output(p, z_hat), xs[t])});
  }
  return out;
}

std::vector<Readout> read_episode(const ModelParams& p, const MemoryState& mem, const Episode& ep,
                                  std::uint64_t seed, bool sample);

template <class M>
struct BasicBounds {
  M recon_sum;
  M kl_w_sum;
  M kl_M;
  M elbo_LT;
  M cond_elbo_per_pattern;
  std::optional<M> bound_BT;
};

struct BoundReport {
  double recon_sum = 0.0;
  double kl_w_sum = 0.0;
  double kl_M = 0.0;
  double elbo_LT = 0.0;
  double cond_elbo_per_pattern = 0.0;
  std::optional<double> bound_BT;
};

// L_T = sum_t [ln p(x_t | w_t, M) - KL(q(w_t) || p(w))] - KL(q(M_T) || p(M))
// over the read-time terms. The sequential bound keeps the write-time
// addresses (O(T)) and charges the last update against the memory before it:
// B_T = sum_t [ln p(x_t | mu_t, R_T) - KL(q(w_t) || p(w))]
//       - KL(q(M_T) || q(M_{T-1})) - KL(q(M_{T-1}) || p(M)).
template <class M>
BasicBounds<M> bounds(const BasicParams<M>& p, const BasicMemory<M>& prior_mem,
                      const std::vector<M>& xs, const BasicWriteResult<M>& write,
                      const std::vector<BasicReadout<M>>& reads, bool with_sequential) {
  if (reads.size() != xs.size() || write.addresses.size() != xs.size() || xs.empty()) {
    throw DimensionError("bounds: write/read results do not match the episode");
  }
  M recon = reads.front().log_prob;
  M kl_w = kl_weights(reads.front().address);
  for (std::size_t t = 1; t < reads.size(); ++t) {
    recon = recon + reads[t].log_prob;
    kl_w = kl_w + kl_weights(reads[t].address);
  }
  const M kl_m = kl_memory(write.memory, prior_mem);
  const double count = static_cast<double>(xs.size());
  BasicBounds<M> out{recon, kl_w, kl_m, recon - kl_w - kl_m, scale(1.0 / count, recon - kl_w),
                     std::nullopt};
  if (with_sequential) {
    M seq = kl_memory(write.memory, write.before_last) + kl_memory(write.before_last, prior_mem);
    seq = scale(-1.0, seq);
    for (std::size_t t = 0; t < xs.size(); ++t) {
      const M out_t = decoder_output(p, read(write.memory, write.addresses[t].mu_w));
      seq = seq + log_prob<M>(p.likelihood, out_t, xs[t]) - write.per_step_kl_w[t];
    }
    out.bound_BT = seq;
  }
  return out;
}

BoundReport to_report(const BasicBounds<Matrix>& b);

enum class Objective { kLowerBound, kSequentialBound };

struct ObjectiveOptions {
  Objective objective = Objective::kLowerBound;
  int refine_iters = 0;
  bool sample_reads = true;
};

template <class M>
struct EpisodeObjective {
  M objective;
  M autoencoder;
  BasicBounds<M> bounds;
};

// O = L_T + L_AE for one episode (B_T in place of L_T when requested), with
// L_AE summed over the episode's patterns.
template <class M>
EpisodeObjective<M> episode_objective(const BasicParams<M>& p, const std::vector<M>& xs,
                                      const std::vector<Matrix>* noise,
                                      const ObjectiveOptions& options) {
  const BasicMemory<M> prior_mem = prior_memory(p);
  const auto write = write_episode(p, prior_mem, xs, options.refine_iters);
  const auto reads = read_episode(p, write.memory, xs, options.sample_reads ? noise : nullptr);
  const bool sequential = options.objective == Objective::kSequentialBound;
  BasicBounds<M> b = bounds(p, prior_mem, xs, write, reads, sequential);
  M ae = autoencoder_loglik(p, xs.front());
  for (std::size_t t = 1; t < xs.size(); ++t) ae = ae + autoencoder_loglik(p, xs[t]);
  const M bound = sequential ? *b.bound_BT : b.elbo_LT;
  return EpisodeObjective<M>{bound + ae, ae, std::move(b)};
}

// Batch averages of the objective and its parts.
struct ObjectiveReport {
  double objective = 0.0;
  double elbo_LT = 0.0;
  double L_AE = 0.0;
  double kl_w_sum = 0.0;
  double kl_M = 0.0;
};

// Standard normal K x 1 draws, one per pattern, episodes in order.
using ReadNoise = std::vector<std::vector<Matrix>>;
ReadNoise draw_read_noise(const std::vector<Episode>& batch, Index slots, std::uint64_t seed);

// Plain evaluation of the batch objective (no tape).
ObjectiveReport evaluate_objective(const ModelParams& p, const std::vector<Episode>& batch,
                                   const ObjectiveOptions& options, const ReadNoise& noise);

struct ObjectiveGradient {
  ObjectiveReport report;
  // d objective / d parameter, aligned with trainable(params).
  std::vector<Matrix> grads;
};

// Each episode is differentiated on a private tape; per-episode gradients
// are summed in episode order.
ObjectiveGradient objective_gradient(const ModelParams& p, const std::vector<Episode>& batch,
                                     const ObjectiveOptions& options, const ReadNoise& noise,
                                     unsigned workers = 1);

// Copy of `p` on `tape` with every trainable parameter as a variable.
BasicParams<Var> lift(Tape& tape, const ModelParams& p);

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t step = 0;
};

struct TrainOptions {
  ObjectiveOptions objective;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  unsigned workers = 1;
};

struct TrainStepResult {
  ModelParams params;
  AdamState state;
  ObjectiveReport report;
  bool accepted = true;
  std::string error;
};

// One Adam ascent step on the batch objective. A non-finite objective or
// numerical failure rejects the step and returns the inputs unchanged.
TrainStepResult train_step(const ModelParams& p, const std::vector<Episode>& batch,
                           const AdamState& state, const TrainOptions& options,
                           std::uint64_t noise_seed);

}  // namespace dkm

#endif  // DKM_EPISODIC_HPP_
