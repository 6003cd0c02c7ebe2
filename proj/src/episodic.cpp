#include "dkm/episodic.hpp"

#include <cmath>
#include <exception>
#include <utility>

#include "dkm/parallel.hpp"
#include "dkm/random.hpp"

namespace dkm {

void validate(const Episode& ep, Index width) {
  if (ep.patterns.empty()) throw DimensionError("episode: no patterns");
  for (const Vector& x : ep.patterns) {
    if (x.size() != width) {
      throw DimensionError("episode: pattern width " + std::to_string(x.size()) + ", expected " +
                           std::to_string(width));
    }
  }
}

namespace {

std::vector<Matrix> plain_patterns(const Episode& ep) {
  std::vector<Matrix> xs;
  xs.reserve(ep.patterns.size());
  for (const Vector& x : ep.patterns) xs.emplace_back(x);
  return xs;
}

std::vector<Var> tape_patterns(Tape& tape, const Episode& ep) {
  std::vector<Var> xs;
  xs.reserve(ep.patterns.size());
  for (const Vector& x : ep.patterns) xs.push_back(tape.constant(Matrix(x)));
  return xs;
}

BasicLayer<Var> lift_layer(Tape& tape, const Layer& layer) {
  return BasicLayer<Var>{tape.variable(layer.weight), tape.variable(layer.bias), layer.activation};
}

void accumulate(ObjectiveReport& into, const EpisodeObjective<Matrix>& e) {
  into.objective += scalar(e.objective);
  into.elbo_LT += scalar(e.bounds.elbo_LT);
  into.L_AE += scalar(e.autoencoder);
  into.kl_w_sum += scalar(e.bounds.kl_w_sum);
  into.kl_M += scalar(e.bounds.kl_M);
}

void divide(ObjectiveReport& r, double n) {
  r.objective /= n;
  r.elbo_LT /= n;
  r.L_AE /= n;
  r.kl_w_sum /= n;
  r.kl_M /= n;
}

}  // namespace

std::vector<Readout> read_episode(const ModelParams& p, const MemoryState& mem, const Episode& ep,
                                  std::uint64_t seed, bool sample) {
  validate(ep, p.data_width());
  const std::vector<Matrix> xs = plain_patterns(ep);
  if (!sample) return read_episode<Matrix>(p, mem, xs, nullptr);
  const ReadNoise noise = draw_read_noise({ep}, p.slots(), seed);
  return read_episode<Matrix>(p, mem, xs, &noise.front());
}

BoundReport to_report(const BasicBounds<Matrix>& b) {
  BoundReport r;
  r.recon_sum = scalar(b.recon_sum);
  r.kl_w_sum = scalar(b.kl_w_sum);
  r.kl_M = scalar(b.kl_M);
  r.elbo_LT = scalar(b.elbo_LT);
  r.cond_elbo_per_pattern = scalar(b.cond_elbo_per_pattern);
  if (b.bound_BT) r.bound_BT = scalar(*b.bound_BT);
  return r;
}

ReadNoise draw_read_noise(const std::vector<Episode>& batch, Index slots, std::uint64_t seed) {
  ReadNoise noise;
  noise.reserve(batch.size());
  for (std::size_t e = 0; e < batch.size(); ++e) {
    Rng rng = Rng::stream(seed, e);
    std::vector<Matrix> draws;
    for (std::size_t t = 0; t < batch[e].patterns.size(); ++t) {
      draws.push_back(rng.normal_matrix(slots, 1));
    }
    noise.push_back(std::move(draws));
  }
  return noise;
}

BasicParams<Var> lift(Tape& tape, const ModelParams& p) {
  BasicParams<Var> out;
  for (const Layer& layer : p.encoder) out.encoder.push_back(lift_layer(tape, layer));
  for (const Layer& layer : p.decoder) out.decoder.push_back(lift_layer(tape, layer));
  out.likelihood = p.likelihood;
  out.log_sigma_w_sq = tape.variable(p.log_sigma_w_sq);
  out.R0 = tape.variable(p.R0);
  out.log_sigma_U_sq = tape.variable(p.log_sigma_U_sq);
  out.sigma_xi_sq = p.sigma_xi_sq;
  return out;
}

ObjectiveReport evaluate_objective(const ModelParams& p, const std::vector<Episode>& batch,
                                   const ObjectiveOptions& options, const ReadNoise& noise) {
  if (batch.empty()) throw std::invalid_argument("objective: empty batch");
  if (noise.size() != batch.size()) throw DimensionError("objective: noise/batch size mismatch");
  ObjectiveReport report;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    validate(batch[e], p.data_width());
    accumulate(report, episode_objective<Matrix>(p, plain_patterns(batch[e]), &noise[e], options));
  }
  divide(report, static_cast<double>(batch.size()));
  return report;
}

ObjectiveGradient objective_gradient(const ModelParams& p, const std::vector<Episode>& batch,
                                     const ObjectiveOptions& options, const ReadNoise& noise,
                                     unsigned workers) {
  if (batch.empty()) throw std::invalid_argument("objective: empty batch");
  if (noise.size() != batch.size()) throw DimensionError("objective: noise/batch size mismatch");
  for (const Episode& ep : batch) validate(ep, p.data_width());

  struct PerEpisode {
    EpisodeObjective<Matrix> values;
    std::vector<Matrix> grads;
  };
  std::vector<PerEpisode> results(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t e) {
    Tape tape;
    BasicParams<Var> vars = lift(tape, p);
    const std::vector<Var> xs = tape_patterns(tape, batch[e]);
    const EpisodeObjective<Var> obj = episode_objective<Var>(vars, xs, &noise[e], options);
    const Gradients g = tape.backward(obj.objective);
    PerEpisode& r = results[e];
    for (const Var* v : trainable(vars)) r.grads.push_back(g[*v]);
    r.values.objective = obj.objective.value();
    r.values.autoencoder = obj.autoencoder.value();
    r.values.bounds = BasicBounds<Matrix>{obj.bounds.recon_sum.value(),
                                          obj.bounds.kl_w_sum.value(),
                                          obj.bounds.kl_M.value(),
                                          obj.bounds.elbo_LT.value(),
                                          obj.bounds.cond_elbo_per_pattern.value(),
                                          std::nullopt};
  });

  ObjectiveGradient out;
  const double n = static_cast<double>(batch.size());
  for (const PerEpisode& r : results) {
    accumulate(out.report, r.values);
    if (out.grads.empty()) {
      out.grads = r.grads;
    } else {
      for (std::size_t i = 0; i < r.grads.size(); ++i) out.grads[i] += r.grads[i];
    }
  }
  for (Matrix& g : out.grads) g /= n;
  divide(out.report, n);
  return out;
}

TrainStepResult train_step(const ModelParams& p, const std::vector<Episode>& batch,
                           const AdamState& state, const TrainOptions& options,
                           std::uint64_t noise_seed) {
  TrainStepResult result{p, state, {}, true, {}};
  ObjectiveGradient grad;
  try {
    grad = objective_gradient(p, batch, options.objective,
                              draw_read_noise(batch, p.slots(), noise_seed), options.workers);
  } catch (const std::runtime_error& e) {
    result.accepted = false;
    result.error = e.what();
    return result;
  } catch (const std::domain_error& e) {
    result.accepted = false;
    result.error = e.what();
    return result;
  }
  result.report = grad.report;
  if (!std::isfinite(grad.report.objective)) {
    result.accepted = false;
    result.error = "non-finite objective";
    return result;
  }

  std::vector<Matrix*> params = trainable(result.params);
  AdamState& s = result.state;
  if (s.m.empty()) {
    for (const Matrix* m : params) {
      s.m.push_back(Matrix::Zero(m->rows(), m->cols()));
      s.v.push_back(Matrix::Zero(m->rows(), m->cols()));
    }
  }
  s.step += 1;
  const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grad.grads[i];
    s.m[i] = options.beta1 * s.m[i] + (1.0 - options.beta1) * g;
    s.v[i] = options.beta2 * s.v[i] + (1.0 - options.beta2) * g.cwiseProduct(g);
    // Ascent: the objective is a lower bound to maximize.
    const Matrix step = ((s.m[i] / c1).array() /
                         ((s.v[i] / c2).array().sqrt() + options.epsilon)).matrix();
    *params[i] += options.learning_rate * step;
  }
  return result;
}

}  // namespace dkm
