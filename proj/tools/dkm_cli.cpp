// dkm: command-line driver for corpus generation, training, memory writes,
// retrieval queries and the denoise / sample / capacity experiments.
//
// Exit codes: 0 success, 2 usage error, 3 data-format error, 4 numerical
// failure.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dkm/attractor.hpp"
#include "dkm/corpus.hpp"
#include "dkm/episodic.hpp"
#include "dkm/errors.hpp"
#include "dkm/experiments.hpp"
#include "dkm/persistence.hpp"
#include "dkm/random.hpp"

namespace {

constexpr int kUsage = 2;
constexpr int kFormat = 3;
constexpr int kNumerical = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void add_config_flags(CLI::App* cmd, dkm::RunConfig& c) {
  cmd->add_option("--K", c.K, "memory slots");
  cmd->add_option("--C", c.C, "code size");
  cmd->add_option("--T", c.T, "episode length");
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--learning_rate", c.learning_rate);
  cmd->add_option("--train_steps", c.train_steps);
  cmd->add_option("--batch_episodes", c.batch_episodes);
  cmd->add_option("--refine_iters", c.refine_iters, "addressing refinement passes per write");
  cmd->add_option("--likelihood", c.likelihood, "bernoulli or gaussian");
  cmd->add_option("--sigma_xi_sq", c.sigma_xi_sq);
  cmd->add_option("--sigma_out_sq", c.sigma_out_sq);
  cmd->add_option("--noise_spec", c.noise_spec, "salt_pepper:<p> or gaussian:<sigma>");
  cmd->add_option("--sigma_w_sq", c.sigma_w_sq, "initial address variance");
  cmd->add_option("--sigma_U_sq", c.sigma_U_sq, "initial prior row variance");
  cmd->add_option("--hidden", c.hidden, "hidden units of encoder and decoder");
  cmd->add_option("--objective", c.objective, "lower_bound or sequential");
  cmd->add_option("--max_iters", c.max_iters, "attractor iterations");
  cmd->add_option("--trials", c.trials);
  cmd->add_option("--workers", c.workers);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path);
  out << text;
}

template <class Fn>
void write_csv(const std::string& path, Fn&& fn) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path);
  fn(out);
}

void echo_config(const std::string& out, const dkm::RunConfig& c, const std::string& command) {
  write_text(out + ".config.json", dkm::config_json(c, command));
}

// The listed corpus rows, or T rows sampled with the run seed.
dkm::Episode pick_episode(const dkm::Corpus& corpus, const std::vector<std::size_t>& indices,
                          const dkm::RunConfig& c) {
  if (indices.empty()) {
    dkm::Rng rng(c.seed);
    return dkm::sample_episode(corpus, c.T, rng);
  }
  dkm::Episode ep;
  for (std::size_t i : indices) {
    if (i >= corpus.size()) {
      throw UsageError("index " + std::to_string(i) + " out of range for corpus of " +
                       std::to_string(corpus.size()));
    }
    ep.patterns.push_back(corpus.patterns[i]);
  }
  return ep;
}

dkm::MemoryState require_memory(const dkm::ModelFile& file, const std::string& path) {
  if (!file.memory) throw UsageError(path + " holds no memory; run `dkm write` first");
  return *file.memory;
}

// Central differences against the tape gradient on a small random problem.
int gradcheck(const dkm::RunConfig& c, const std::string& out_path, double h, Eigen::Index width) {
  dkm::Architecture arch = dkm::architecture_for(c, width);
  const dkm::ModelParams params = dkm::init_params(arch, c.seed);
  dkm::Rng rng(c.seed + 1);
  std::vector<dkm::Episode> batch(static_cast<std::size_t>(c.batch_episodes));
  for (dkm::Episode& ep : batch) {
    for (dkm::Index t = 0; t < c.T; ++t) {
      dkm::Vector x(width);
      for (dkm::Index d = 0; d < width; ++d) {
        x(d) = arch.likelihood.kind == dkm::LikelihoodKind::kBernoulli
                   ? (rng.bernoulli(0.5) ? 1.0 : 0.0)
                   : rng.normal();
      }
      ep.patterns.push_back(x);
    }
  }
  const dkm::TrainOptions options = dkm::train_options_for(c);
  const dkm::ReadNoise noise = dkm::draw_read_noise(batch, params.slots(), c.seed + 2);
  const dkm::ObjectiveGradient grad =
      dkm::objective_gradient(params, batch, options.objective, noise, c.workers);
  const std::vector<std::string> names = dkm::trainable_names(params);

  double worst = 0.0;
  write_csv(out_path, [&](std::ostream& os) {
    os << "parameter,row,col,analytic,numeric,rel_error\n" << std::setprecision(17);
    dkm::ModelParams probe = params;
    std::vector<dkm::Matrix*> slots = dkm::trainable(probe);
    for (std::size_t i = 0; i < slots.size(); ++i) {
      dkm::Matrix& m = *slots[i];
      for (dkm::Index r = 0; r < m.rows(); ++r) {
        for (dkm::Index col = 0; col < m.cols(); ++col) {
          const double orig = m(r, col);
          m(r, col) = orig + h;
          const double up = dkm::evaluate_objective(probe, batch, options.objective, noise).objective;
          m(r, col) = orig - h;
          const double down =
              dkm::evaluate_objective(probe, batch, options.objective, noise).objective;
          m(r, col) = orig;
          const double numeric = (up - down) / (2.0 * h);
          const double analytic = grad.grads[i](r, col);
          const double rel = std::abs(analytic - numeric) /
                             std::max({std::abs(analytic), std::abs(numeric), 1e-8});
          worst = std::max(worst, rel);
          os << names[i] << ',' << r << ',' << col << ',' << analytic << ',' << numeric << ','
             << rel << '\n';
        }
      }
    }
  });
  std::cout << "max relative error " << worst << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic Kanerva Machine: generative episodic memory"};
  app.require_subcommand(1);
  dkm::RunConfig config;

  // gen
  int n_classes = 16;
  int per_class = 8;
  dkm::Index width = 144;
  double flip_prob = 0.02;
  std::string out;
  auto* gen = app.add_subcommand("gen", "generate a synthetic class-structured binary corpus");
  gen->add_option("--n_classes", n_classes);
  gen->add_option("--per_class", per_class);
  gen->add_option("--D", width, "pattern width");
  gen->add_option("--flip_prob", flip_prob);
  gen->add_option("--seed", config.seed);
  gen->add_option("--out", out, "corpus file")->required();

  // Shared by the model-based commands.
  std::string corpus_path;
  std::string model_path;
  std::string log_path;

  auto* train = app.add_subcommand("train", "train a model on a corpus");
  add_config_flags(train, config);
  train->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "model file")->required();
  train->add_option("--log", log_path, "training CSV (default <out>.train.csv)");
  bool quiet = false;
  train->add_flag("--quiet", quiet);

  std::vector<std::size_t> indices;
  auto* write = app.add_subcommand("write", "write an episode into the model's memory prior");
  add_config_flags(write, config);
  write->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  write->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  write->add_option("--indices", indices, "corpus rows to write (default: T sampled rows)");
  write->add_option("--out", out, "model file with memory")->required();

  bool sample_reads = false;
  auto* query = app.add_subcommand("query", "read corpus patterns back from a written memory");
  add_config_flags(query, config);
  query->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  query->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  query->add_option("--indices", indices, "corpus rows to query (default: all)");
  query->add_flag("--sample_reads", sample_reads, "sample w instead of reading at its mean");
  query->add_option("--out", out, "query CSV")->required();

  auto* denoise = app.add_subcommand("denoise", "attractor denoising trials");
  add_config_flags(denoise, config);
  denoise->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  denoise->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  denoise->add_option("--out", out, "output prefix")->required();

  int n_samples = 20;
  auto* sample = app.add_subcommand("sample", "run the dynamics from prior draws of w");
  add_config_flags(sample, config);
  sample->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  sample->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  sample->add_option("--n", n_samples, "number of draws");
  sample->add_option("--out", out, "output prefix")->required();

  std::vector<dkm::Index> lengths{16, 32, 64};
  std::vector<int> classes{2, 4, 8};
  auto* capacity = app.add_subcommand("capacity", "retrieval error against episode length");
  add_config_flags(capacity, config);
  capacity->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  capacity->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  capacity->add_option("--lengths", lengths);
  capacity->add_option("--classes", classes);
  capacity->add_option("--out", out, "capacity CSV")->required();

  double h = 1e-5;
  dkm::Index gc_width = 6;
  auto* grad = app.add_subcommand("gradcheck", "compare tape gradients with finite differences");
  add_config_flags(grad, config);
  grad->add_option("--D", gc_width, "pattern width");
  grad->add_option("--step", h, "finite-difference step");
  grad->add_option("--out", out, "gradient CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*gen) {
      const dkm::Corpus corpus = dkm::generate_synthetic(n_classes, per_class, width, flip_prob,
                                                         config.seed);
      dkm::save_corpus(out, corpus);
      nlohmann::ordered_json j;
      j["command"] = "gen";
      j["n_classes"] = n_classes;
      j["per_class"] = per_class;
      j["D"] = width;
      j["flip_prob"] = flip_prob;
      j["seed"] = config.seed;
      write_text(out + ".config.json", j.dump(2) + "\n");
      return 0;
    }

    dkm::validate(config);
    echo_config(out, config, app.get_subcommands().front()->get_name());
    if (*grad) return gradcheck(config, out, h, gc_width);
    const dkm::Corpus corpus = dkm::load_corpus(corpus_path);

    if (*train) {
      std::size_t rejected = 0;
      const dkm::TrainOutcome outcome =
          dkm::train_model(corpus, config, [&](const dkm::TrainLogRow& row) {
            if (!row.accepted) ++rejected;
            if (!quiet && (row.step + 1) % 100 == 0) {
              std::cerr << "step " << row.step + 1 << " objective " << row.report.objective
                        << '\n';
            }
          });
      dkm::save_model(out, outcome.params);
      write_csv(log_path.empty() ? out + ".train.csv" : log_path,
                [&](std::ostream& os) { dkm::write_training_csv(os, outcome.log); });
      if (rejected > 0) std::cerr << rejected << " steps rejected\n";
      if (config.train_steps > 0 && rejected == static_cast<std::size_t>(config.train_steps)) {
        throw dkm::NumericalError("every training step was rejected");
      }
      return 0;
    }

    const dkm::ModelFile file = dkm::load_model(model_path);
    const dkm::ModelParams& params = file.params;
    if (params.data_width() != corpus.width) {
      throw dkm::FormatError("corpus width " + std::to_string(corpus.width) +
                             " does not match model width " +
                             std::to_string(params.data_width()));
    }

    if (*write) {
      const dkm::Episode ep = pick_episode(corpus, indices, config);
      std::vector<dkm::Matrix> xs;
      for (const dkm::Vector& x : ep.patterns) xs.emplace_back(x);
      const dkm::MemoryState base = file.memory ? *file.memory : dkm::prior_memory(params);
      const auto written = dkm::write_episode<dkm::Matrix>(params, base, xs, config.refine_iters);
      dkm::save_model(out, params, written.memory);
      return 0;
    }

    if (*query) {
      const dkm::MemoryState mem = require_memory(file, model_path);
      dkm::Episode ep;
      if (indices.empty()) {
        ep.patterns = corpus.patterns;
      } else {
        ep = pick_episode(corpus, indices, config);
      }
      const auto reads = dkm::read_episode(params, mem, ep, config.seed, sample_reads);
      write_csv(out, [&](std::ostream& os) {
        os << "query,log_prob,kl_w,retrieval_error,distance_to_query\n" << std::setprecision(17);
        for (std::size_t i = 0; i < reads.size(); ++i) {
          const double lp = dkm::scalar(reads[i].log_prob);
          const double kl = dkm::scalar(dkm::kl_weights(reads[i].address));
          const dkm::Matrix mode = dkm::likelihood_mode(
              params.likelihood, dkm::decoder_output(params, reads[i].z_hat));
          os << i << ',' << lp << ',' << kl << ',' << kl - lp << ','
             << dkm::pattern_distance(corpus.kind, mode, ep.patterns[i]) << '\n';
        }
      });
      return 0;
    }

    if (*denoise) {
      const auto trials = dkm::run_denoise(params, corpus, config);
      std::vector<dkm::EnergyTrace> traces;
      std::vector<dkm::Matrix> refs;
      for (const auto& t : trials) {
        traces.push_back(t.trace);
        refs.push_back(t.reference);
      }
      write_csv(out + ".traces.csv", [&](std::ostream& os) {
        dkm::write_trace_csv(os, "trial", traces, refs, corpus.kind);
      });
      write_csv(out + ".summary.csv",
                [&](std::ostream& os) { dkm::write_denoise_summary_csv(os, trials); });
      return 0;
    }

    if (*sample) {
      const dkm::SampleRun run = dkm::run_sample(params, corpus, config, n_samples);
      write_csv(out + ".traces.csv", [&](std::ostream& os) {
        dkm::write_trace_csv(os, "sample", run.traces, {}, corpus.kind);
      });
      write_csv(out + ".summary.csv",
                [&](std::ostream& os) { dkm::write_sample_summary_csv(os, run); });
      return 0;
    }

    if (*capacity) {
      const auto rows = dkm::run_capacity(params, corpus, lengths, classes, config);
      write_csv(out, [&](std::ostream& os) { dkm::write_capacity_csv(os, rows); });
      return 0;
    }
  } catch (const dkm::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kFormat;
  } catch (const dkm::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const dkm::NotPositiveDefinite& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::domain_error& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return 0;
}
