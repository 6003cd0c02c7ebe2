#ifndef DKM_EXPERIMENTS_HPP_
#define DKM_EXPERIMENTS_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "dkm/attractor.hpp"
#include "dkm/corpus.hpp"
#include "dkm/episodic.hpp"
#include "dkm/model.hpp"

namespace dkm {

struct RunConfig {
  Index K = 32;
  Index C = 32;
  Index T = 8;
  std::uint64_t seed = 0;
  double learning_rate = 1e-4;
  int train_steps = 2000;
  int batch_episodes = 4;
  int refine_iters = 0;
  std::string likelihood = "bernoulli";
  double sigma_xi_sq = 1.0;
  double sigma_out_sq = 0.25;
  std::string noise_spec = "salt_pepper:0.15";
  // Initial values of the trained variances.
  double sigma_w_sq = 0.3;
  double sigma_U_sq = 1.0;
  Index hidden = 64;
  // "lower_bound" (L_T + L_AE) or "sequential" (B_T + L_AE).
  std::string objective = "lower_bound";
  int max_iters = 15;
  int trials = 50;
  unsigned workers = 1;
};

// Throws std::invalid_argument on non-positive sizes or variances.
void validate(const RunConfig& config);
std::string config_json(const RunConfig& config, const std::string& command);
Architecture architecture_for(const RunConfig& config, Index data_width);
TrainOptions train_options_for(const RunConfig& config);

// T distinct corpus patterns chosen uniformly.
Episode sample_episode(const Corpus& corpus, Index length, Rng& rng);
// T distinct patterns drawn from `classes` randomly chosen classes.
Episode sample_class_episode(const Corpus& corpus, Index length, int classes, Rng& rng);

struct TrainLogRow {
  int step = 0;
  ObjectiveReport report;
  bool accepted = true;
};

struct TrainOutcome {
  ModelParams params;
  AdamState state;
  std::vector<TrainLogRow> log;
};

// Fresh model trained on episodes sampled from `corpus`.
TrainOutcome train_model(const Corpus& corpus, const RunConfig& config,
                         const std::function<void(const TrainLogRow&)>& on_step = {});
// Continues training from `outcome`.
void continue_training(TrainOutcome& outcome, const Corpus& corpus, const RunConfig& config,
                       int steps, const std::function<void(const TrainLogRow&)>& on_step = {});

void write_training_csv(std::ostream& os, const std::vector<TrainLogRow>& rows);

// -(sum ln p(x | read) - sum KL(q(w) || p(w))) / n over queries read back
// from `mem` without sampling.
double retrieval_error(const ModelParams& p, const MemoryState& mem, const Episode& queries);

// Hamming distance for binary data, Euclidean distance otherwise.
double pattern_distance(CorpusKind kind, const Matrix& a, const Matrix& b);

struct DenoiseTrial {
  int trial = 0;
  double initial_distance = 0.0;
  double final_distance = 0.0;
  double initial_energy = 0.0;
  double final_energy = 0.0;
  double non_increasing = 1.0;
  bool converged = false;
  EnergyTrace trace;
  Matrix reference;
};

// Per trial: write T sampled patterns, corrupt one of them, run the dynamics
// from the corrupted pattern.
std::vector<DenoiseTrial> run_denoise(const ModelParams& p, const Corpus& corpus,
                                      const RunConfig& config);

struct SampleRun {
  MemoryState memory;
  std::vector<Matrix> stored;
  std::vector<EnergyTrace> traces;
  // Distance from each final pattern to its nearest stored pattern.
  std::vector<double> nearest_distance;
};

SampleRun run_sample(const ModelParams& p, const Corpus& corpus, const RunConfig& config, int n);

struct CapacityRow {
  Index length = 0;
  int classes = 0;
  double mean_error = 0.0;
  double std_error = 0.0;
  int trials = 0;
};

// Mean retrieval error per (length, classes) cell; rows follow the order of
// `lengths` (outer) and `classes_list` (inner).
std::vector<CapacityRow> run_capacity(const ModelParams& p, const Corpus& corpus,
                                      const std::vector<Index>& lengths,
                                      const std::vector<int>& classes_list,
                                      const RunConfig& config);

void write_trace_csv(std::ostream& os, const std::string& id_column,
                     const std::vector<EnergyTrace>& traces,
                     const std::vector<Matrix>& references, CorpusKind kind);
void write_denoise_summary_csv(std::ostream& os, const std::vector<DenoiseTrial>& trials);
void write_sample_summary_csv(std::ostream& os, const SampleRun& run);
void write_capacity_csv(std::ostream& os, const std::vector<CapacityRow>& rows);

}  // namespace dkm

#endif  // DKM_EXPERIMENTS_HPP_
