#include "dkm/experiments.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>

#include "json.hpp"

#include "dkm/parallel.hpp"
#include "dkm/random.hpp"

namespace dkm {

namespace {

// Noise seed for training step `step`; decorrelated from the batch stream.
std::uint64_t step_noise_seed(std::uint64_t seed, int step) {
  return seed * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL * static_cast<std::uint64_t>(step + 1);
}

std::vector<std::size_t> choose_distinct(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

MemoryState write_plain(const ModelParams& p, const Episode& ep, int refine_iters) {
  std::vector<Matrix> xs;
  for (const Vector& x : ep.patterns) xs.emplace_back(x);
  return write_episode<Matrix>(p, prior_memory(p), xs, refine_iters).memory;
}

}  // namespace

void validate(const RunConfig& c) {
  if (c.K < 1 || c.C < 1 || c.T < 1 || c.hidden < 1) {
    throw std::invalid_argument("K, C, T and hidden must be >= 1");
  }
  if (!(c.learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
  if (c.train_steps < 0 || c.batch_episodes < 1 || c.refine_iters < 0) {
    throw std::invalid_argument("train_steps >= 0, batch_episodes >= 1, refine_iters >= 0");
  }
  if (!(c.sigma_xi_sq > 0.0) || !(c.sigma_out_sq > 0.0) || !(c.sigma_w_sq > 0.0) ||
      !(c.sigma_U_sq > 0.0)) {
    throw std::invalid_argument("variances must be positive");
  }
  if (c.max_iters < 1 || c.trials < 1) throw std::invalid_argument("max_iters and trials must be >= 1");
  parse_likelihood(c.likelihood);
  parse_noise(c.noise_spec);
  if (c.objective != "lower_bound" && c.objective != "sequential") {
    throw std::invalid_argument("objective must be lower_bound or sequential");
  }
}

std::string config_json(const RunConfig& c, const std::string& command) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["K"] = c.K;
  j["C"] = c.C;
  j["T"] = c.T;
  j["seed"] = c.seed;
  j["learning_rate"] = c.learning_rate;
  j["train_steps"] = c.train_steps;
  j["batch_episodes"] = c.batch_episodes;
  j["refine_iters"] = c.refine_iters;
  j["likelihood"] = c.likelihood;
  j["sigma_xi_sq"] = c.sigma_xi_sq;
  j["sigma_out_sq"] = c.sigma_out_sq;
  j["noise_spec"] = c.noise_spec;
  j["sigma_w_sq"] = c.sigma_w_sq;
  j["sigma_U_sq"] = c.sigma_U_sq;
  j["hidden"] = c.hidden;
  j["objective"] = c.objective;
  j["max_iters"] = c.max_iters;
  j["trials"] = c.trials;
  return j.dump(2) + "\n";
}

Architecture architecture_for(const RunConfig& c, Index data_width) {
  Architecture a;
  a.data_width = data_width;
  a.code_size = c.C;
  a.slots = c.K;
  a.hidden = c.hidden;
  a.likelihood.kind = parse_likelihood(c.likelihood);
  a.likelihood.sigma_out_sq = c.sigma_out_sq;
  a.sigma_w_sq = c.sigma_w_sq;
  a.sigma_U_sq = c.sigma_U_sq;
  a.sigma_xi_sq = c.sigma_xi_sq;
  return a;
}

TrainOptions train_options_for(const RunConfig& c) {
  TrainOptions o;
  o.objective.objective =
      c.objective == "sequential" ? Objective::kSequentialBound : Objective::kLowerBound;
  o.objective.refine_iters = c.refine_iters;
  o.objective.sample_reads = true;
  o.learning_rate = c.learning_rate;
  o.workers = c.workers;
  return o;
}

Episode sample_episode(const Corpus& corpus, Index length, Rng& rng) {
  if (length < 1 || static_cast<std::size_t>(length) > corpus.size()) {
    throw std::invalid_argument("episode length " + std::to_string(length) +
                                " exceeds corpus size " + std::to_string(corpus.size()));
  }
  Episode ep;
  for (std::size_t i : choose_distinct(corpus.size(), static_cast<std::size_t>(length), rng)) {
    ep.patterns.push_back(corpus.patterns[i]);
  }
  return ep;
}

Episode sample_class_episode(const Corpus& corpus, Index length, int classes, Rng& rng) {
  if (corpus.class_ids.empty()) throw std::invalid_argument("corpus has no class labels");
  const std::set<int> distinct(corpus.class_ids.begin(), corpus.class_ids.end());
  const std::vector<int> ids(distinct.begin(), distinct.end());
  if (classes < 1 || static_cast<std::size_t>(classes) > ids.size()) {
    throw std::invalid_argument("requested " + std::to_string(classes) + " classes, corpus has " +
                                std::to_string(ids.size()));
  }
  std::set<int> chosen;
  for (std::size_t i : choose_distinct(ids.size(), static_cast<std::size_t>(classes), rng)) {
    chosen.insert(ids[i]);
  }
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (chosen.count(corpus.class_ids[i]) != 0) pool.push_back(i);
  }
  if (length < 1 || static_cast<std::size_t>(length) > pool.size()) {
    throw std::invalid_argument("episode length " + std::to_string(length) + " exceeds the " +
                                std::to_string(pool.size()) + " patterns in the chosen classes");
  }
  Episode ep;
  for (std::size_t i : choose_distinct(pool.size(), static_cast<std::size_t>(length), rng)) {
    ep.patterns.push_back(corpus.patterns[pool[i]]);
  }
  return ep;
}

TrainOutcome train_model(const Corpus& corpus, const RunConfig& config,
                         const std::function<void(const TrainLogRow&)>& on_step) {
  validate(config);
  validate(corpus);
  TrainOutcome outcome{init_params(architecture_for(config, corpus.width), config.seed), {}, {}};
  continue_training(outcome, corpus, config, config.train_steps, on_step);
  return outcome;
}

void continue_training(TrainOutcome& outcome, const Corpus& corpus, const RunConfig& config,
                       int steps, const std::function<void(const TrainLogRow&)>& on_step) {
  const TrainOptions options = train_options_for(config);
  const int first = static_cast<int>(outcome.log.size());
  for (int step = first; step < first + steps; ++step) {
    // Batches depend only on (seed, step), so resumed runs see the same data.
    Rng rng = Rng::stream(config.seed, static_cast<std::uint64_t>(step));
    std::vector<Episode> batch;
    for (int e = 0; e < config.batch_episodes; ++e) {
      batch.push_back(sample_episode(corpus, config.T, rng));
    }
    TrainStepResult r = train_step(outcome.params, batch, outcome.state, options,
                                   step_noise_seed(config.seed, step));
    outcome.params = std::move(r.params);
    outcome.state = std::move(r.state);
    TrainLogRow row{step, r.report, r.accepted};
    outcome.log.push_back(row);
    if (on_step) on_step(row);
  }
}

void write_training_csv(std::ostream& os, const std::vector<TrainLogRow>& rows) {
  os << "step,objective,elbo_LT,L_AE,kl_w_sum,kl_M\n" << std::setprecision(17);
  for (const TrainLogRow& r : rows) {
    os << r.step << ',' << r.report.objective << ',' << r.report.elbo_LT << ',' << r.report.L_AE
       << ',' << r.report.kl_w_sum << ',' << r.report.kl_M << '\n';
  }
}

double retrieval_error(const ModelParams& p, const MemoryState& mem, const Episode& queries) {
  const auto reads = read_episode(p, mem, queries, 0, false);
  double total = 0.0;
  for (const Readout& r : reads) total += scalar(r.log_prob) - scalar(kl_weights(r.address));
  return -total / static_cast<double>(reads.size());
}

double pattern_distance(CorpusKind kind, const Matrix& a, const Matrix& b) {
  if (kind == CorpusKind::kBinary) return static_cast<double>(hamming(a, b));
  return (a - b).norm();
}

std::vector<DenoiseTrial> run_denoise(const ModelParams& p, const Corpus& corpus,
                                      const RunConfig& config) {
  validate(config);
  const NoiseSpec noise = parse_noise(config.noise_spec);
  std::vector<DenoiseTrial> trials(static_cast<std::size_t>(config.trials));
  parallel_for(trials.size(), config.workers, [&](std::size_t t) {
    Rng rng = Rng::stream(config.seed, t);
    const Episode ep = sample_episode(corpus, config.T, rng);
    const MemoryState mem = write_plain(p, ep, config.refine_iters);
    const Vector& target = ep.patterns[rng.below(ep.patterns.size())];
    const Matrix noisy = inject_noise(target, noise, corpus.kind, rng.next());
    DenoiseTrial& out = trials[t];
    out.trial = static_cast<int>(t);
    out.reference = target;
    out.trace = iterate(p, mem, noisy, config.max_iters);
    out.initial_distance = pattern_distance(corpus.kind, noisy, out.reference);
    out.final_distance = pattern_distance(corpus.kind, out.trace.final_pattern, out.reference);
    out.initial_energy = out.trace.iterations.front().energy;
    out.final_energy = out.trace.iterations.back().energy;
    out.non_increasing = non_increasing_fraction(out.trace);
    out.converged = out.trace.converged();
  });
  return trials;
}

SampleRun run_sample(const ModelParams& p, const Corpus& corpus, const RunConfig& config, int n) {
  validate(config);
  Rng rng(config.seed);
  const Episode ep = sample_episode(corpus, config.T, rng);
  SampleRun run;
  run.memory = write_plain(p, ep, config.refine_iters);
  for (const Vector& x : ep.patterns) run.stored.emplace_back(x);
  run.traces = sample_prior(p, run.memory, n, config.max_iters, rng.next());
  for (const EnergyTrace& trace : run.traces) {
    double best = std::numeric_limits<double>::infinity();
    for (const Matrix& s : run.stored) {
      best = std::min(best, pattern_distance(corpus.kind, trace.final_pattern, s));
    }
    run.nearest_distance.push_back(best);
  }
  return run;
}

std::vector<CapacityRow> run_capacity(const ModelParams& p, const Corpus& corpus,
                                      const std::vector<Index>& lengths,
                                      const std::vector<int>& classes_list,
                                      const RunConfig& config) {
  validate(config);
  std::vector<CapacityRow> rows;
  std::uint64_t cell = 0;
  for (Index length : lengths) {
    for (int classes : classes_list) {
      std::vector<double> errors(static_cast<std::size_t>(config.trials));
      const std::uint64_t base = cell * static_cast<std::uint64_t>(config.trials);
      parallel_for(errors.size(), config.workers, [&](std::size_t t) {
        Rng rng = Rng::stream(config.seed, base + t);
        const Episode ep = sample_class_episode(corpus, length, classes, rng);
        errors[t] = retrieval_error(p, write_plain(p, ep, config.refine_iters), ep);
      });
      double mean = 0.0;
      for (double e : errors) mean += e;
      mean /= static_cast<double>(errors.size());
      double var = 0.0;
      for (double e : errors) var += (e - mean) * (e - mean);
      const double n = static_cast<double>(errors.size());
      const double se = errors.size() > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
      rows.push_back(CapacityRow{length, classes, mean, se, config.trials});
      ++cell;
    }
  }
  return rows;
}

void write_trace_csv(std::ostream& os, const std::string& id_column,
                     const std::vector<EnergyTrace>& traces,
                     const std::vector<Matrix>& references, CorpusKind kind) {
  os << id_column << ",iteration,energy,recon_term,kl_term,hamming_to_reference\n"
     << std::setprecision(17);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const EnergyTrace& tr = traces[i];
    for (std::size_t n = 0; n < tr.iterations.size(); ++n) {
      const TraceStep& s = tr.iterations[n];
      os << i << ',' << n << ',' << s.energy << ',' << s.recon << ',' << s.kl_w << ',';
      if (i < references.size()) os << pattern_distance(kind, tr.states[n], references[i]);
      os << '\n';
    }
  }
}

void write_denoise_summary_csv(std::ostream& os, const std::vector<DenoiseTrial>& trials) {
  os << "trial,initial_distance,final_distance,initial_energy,final_energy,"
        "non_increasing_fraction,iterations,converged\n"
     << std::setprecision(17);
  for (const DenoiseTrial& t : trials) {
    os << t.trial << ',' << t.initial_distance << ',' << t.final_distance << ','
       << t.initial_energy << ',' << t.final_energy << ',' << t.non_increasing << ','
       << t.trace.iterations.size() - 1 << ',' << (t.converged ? 1 : 0) << '\n';
  }
}

void write_sample_summary_csv(std::ostream& os, const SampleRun& run) {
  os << "sample,initial_energy,final_energy,non_increasing_fraction,iterations,converged,"
        "nearest_stored_distance\n"
     << std::setprecision(17);
  for (std::size_t i = 0; i < run.traces.size(); ++i) {
    const EnergyTrace& tr = run.traces[i];
    os << i << ',' << tr.iterations.front().energy << ',' << tr.iterations.back().energy << ','
       << non_increasing_fraction(tr) << ',' << tr.iterations.size() - 1 << ','
       << (tr.converged() ? 1 : 0) << ',' << run.nearest_distance[i] << '\n';
  }
}

void write_capacity_csv(std::ostream& os, const std::vector<CapacityRow>& rows) {
  os << "length,classes,mean_error,std_error,trials\n" << std::setprecision(17);
  for (const CapacityRow& r : rows) {
    os << r.length << ',' << r.classes << ',' << r.mean_error << ',' << r.std_error << ','
       << r.trials << '\n';
  }
}

}  // namespace dkm
