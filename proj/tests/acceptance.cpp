// Acceptance run: one PASS/FAIL line per criterion, with the measured numbers.

#include <unistd.h>
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>

#include "dkm/attractor.hpp"
#include "dkm/episodic.hpp"
#include "dkm/experiments.hpp"
#include "dkm/persistence.hpp"
#include "support.hpp"

using namespace dkm;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const char* id, bool pass, const std::string& detail) {
  std::cout << id << ' ' << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
  if (!pass) ++failures;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

unsigned worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

MemoryState random_memory(Rng& rng, Index k, Index c) {
  return MemoryState{rng.normal_matrix(k, c), dkm::test::random_spd(rng, k), 0.3 + rng.uniform()};
}

// Direct conditioning of vec(M) ~ N(vec(R0), I (x) U0) on all observations
// z_t = M^T w_t + xi_t at once, through an explicit inverse.
void brute_force_posterior(const MemoryState& m0, const std::vector<Matrix>& ws,
                           const std::vector<Matrix>& zs, Vector& mean, Matrix& cov) {
  const Index k = m0.slots(), c = m0.code_size(), t = static_cast<Index>(ws.size());
  mean = Eigen::Map<const Vector>(m0.R.data(), k * c);
  cov = Matrix::Zero(k * c, k * c);
  for (Index j = 0; j < c; ++j) cov.block(j * k, j * k, k, k) = m0.U;
  Matrix h = Matrix::Zero(t * c, k * c);
  Vector y(t * c);
  for (Index s = 0; s < t; ++s) {
    for (Index j = 0; j < c; ++j) {
      h.block(s * c + j, j * k, 1, k) = ws[static_cast<std::size_t>(s)].transpose();
      y(s * c + j) = zs[static_cast<std::size_t>(s)](j, 0);
    }
  }
  const Matrix innovation = h * cov * h.transpose() + m0.sigma_xi_sq * Matrix::Identity(t * c, t * c);
  const Matrix gain = cov * h.transpose() * innovation.fullPivLu().inverse();
  mean = mean + gain * (y - h * mean);
  cov = cov - gain * h * cov;
}

void a1_posterior_oracle() {
  Stopwatch clock;
  Rng rng(101);
  double worst = 0.0;
  int cases = 0;
  for (Index k = 1; k <= 4; ++k) {
    for (Index c = 1; c <= 3; ++c) {
      for (Index t = 1; t <= 5; ++t) {
        const MemoryState m0 = random_memory(rng, k, c);
        std::vector<Matrix> ws, zs;
        MemoryState m = m0;
        for (Index s = 0; s < t; ++s) {
          ws.push_back(rng.normal_matrix(k, 1));
          zs.push_back(rng.normal_matrix(c, 1));
          m = update(m, ws.back(), zs.back());
        }
        Vector mean;
        Matrix cov;
        brute_force_posterior(m0, ws, zs, mean, cov);
        Matrix blocks = Matrix::Zero(k * c, k * c);
        for (Index j = 0; j < c; ++j) blocks.block(j * k, j * k, k, k) = m.U;
        const Vector got = Eigen::Map<const Vector>(m.R.data(), k * c);
        worst = std::max({worst, (got - mean).cwiseAbs().maxCoeff(), (blocks - cov).cwiseAbs().maxCoeff()});
        ++cases;
      }
    }
  }
  const double secs = clock.seconds();
  report("A1", worst <= 1e-8 && secs < 1.0,
         std::to_string(cases) + " cases, max abs error " + fmt(worst) + ", " + fmt(secs) + " s");
}

void a2_exchangeability() {
  Rng rng(202);
  const MemoryState m0 = random_memory(rng, 4, 3);
  std::vector<Matrix> ws, zs;
  for (int s = 0; s < 5; ++s) {
    ws.push_back(rng.normal_matrix(4, 1));
    zs.push_back(rng.normal_matrix(3, 1));
  }
  std::vector<std::size_t> order(5);
  std::iota(order.begin(), order.end(), 0);
  MemoryState ref = m0;
  for (std::size_t i : order) ref = update(ref, ws[i], zs[i]);
  double worst = 0.0;
  for (int perm = 0; perm < 20; ++perm) {
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    MemoryState m = m0;
    for (std::size_t i : order) m = update(m, ws[i], zs[i]);
    worst = std::max({worst, (m.R - ref.R).cwiseAbs().maxCoeff(), (m.U - ref.U).cwiseAbs().maxCoeff()});
  }
  report("A2", worst <= 1e-8, "20 permutations, max abs difference " + fmt(worst));
}

void a3_gradient_check() {
  Stopwatch clock;
  Architecture arch;
  arch.data_width = 6;
  arch.code_size = 3;
  arch.slots = 4;
  arch.hidden = 5;
  const ModelParams p = init_params(arch, 303);
  Rng rng(303);
  std::vector<Episode> batch(2);
  for (Episode& ep : batch) {
    for (int t = 0; t < 3; ++t) ep.patterns.push_back(dkm::test::binary_vector(rng, 6).col(0));
  }
  ObjectiveOptions options;
  options.objective = Objective::kLowerBound;
  const ReadNoise noise = draw_read_noise(batch, p.slots(), 304);
  const ObjectiveGradient g = objective_gradient(p, batch, options, noise);

  ModelParams probe = p;
  const auto slots = trainable(probe);
  const double h = 1e-5;
  double max_rel = 0.0;
  int entries = 0, bad = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    Matrix& m = *slots[i];
    for (Index j = 0; j < m.size(); ++j) {
      const double orig = m(j);
      m(j) = orig + h;
      const double up = evaluate_objective(probe, batch, options, noise).objective;
      m(j) = orig - h;
      const double down = evaluate_objective(probe, batch, options, noise).objective;
      m(j) = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = g.grads[i](j);
      const double scale = std::max(std::abs(analytic), std::abs(numeric));
      if (scale > 1e-8) max_rel = std::max(max_rel, std::abs(analytic - numeric) / scale);
      bad += !dkm::test::grad_close(analytic, numeric);
      ++entries;
    }
  }
  const double secs = clock.seconds();
  report("A3", bad == 0 && secs < 30.0,
         std::to_string(entries) + " entries, " + std::to_string(bad) + " outside tolerance, max rel " +
             fmt(max_rel) + ", " + fmt(secs) + " s");
}

struct McEstimate {
  double mean = 0.0;
  double se = 0.0;
};

template <class F>
McEstimate monte_carlo(int n, F&& draw) {
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = draw();
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  return {mean, std::sqrt(std::max(0.0, sq / n - mean * mean) / n)};
}

// -1/2 [C ln|U| + tr((M - R)^T U^-1 (M - R))], up to a shared constant.
double matrix_normal_log_density(const Matrix& m, const Matrix& r, const Eigen::LLT<Matrix>& u) {
  const Matrix d = m - r;
  const Matrix l = u.matrixL();
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(m.cols()) * logdet + (d.array() * u.solve(d).array()).sum());
}

void a4_kl_monte_carlo() {
  const int samples = 1000000;
  Rng rng(404);
  double worst_z = 0.0;
  for (int instance = 0; instance < 10; ++instance) {
    const Index k = 2 + instance % 4;
    const Vector mu = rng.normal_matrix(k, 1).col(0);
    const double s2 = 0.1 + 2.0 * rng.uniform();
    const double closed = scalar(kl_weights(make_address(mu, s2)));
    Rng draws = Rng::stream(405, static_cast<std::uint64_t>(instance));
    const McEstimate est = monte_carlo(samples, [&] {
      double lq = 0.0, lp = 0.0;
      for (Index i = 0; i < k; ++i) {
        const double e = draws.normal();
        const double w = mu(i) + std::sqrt(s2) * e;
        lq += -0.5 * e * e - 0.5 * std::log(s2);
        lp += -0.5 * w * w;
      }
      return lq - lp;
    });
    worst_z = std::max(worst_z, std::abs(est.mean - closed) / est.se);
  }
  for (int instance = 0; instance < 10; ++instance) {
    const Index k = 2 + instance % 3, c = 1 + instance % 3;
    const MemoryState q = random_memory(rng, k, c);
    MemoryState p = random_memory(rng, k, c);
    p.R = q.R + 0.5 * rng.normal_matrix(k, c);
    const double closed = scalar(kl_memory(q, p));
    const Eigen::LLT<Matrix> uq(q.U), up(p.U);
    const Matrix lq = uq.matrixL();
    Rng draws = Rng::stream(406, static_cast<std::uint64_t>(instance));
    const McEstimate est = monte_carlo(samples, [&] {
      const Matrix m = q.R + lq * draws.normal_matrix(k, c);
      return matrix_normal_log_density(m, q.R, uq) - matrix_normal_log_density(m, p.R, up);
    });
    worst_z = std::max(worst_z, std::abs(est.mean - closed) / est.se);
  }
  report("A4", worst_z <= 3.0,
         "20 instances x 1e6 samples, worst |closed - MC| = " + fmt(worst_z) + " standard errors");
}

void a5_addressing() {
  Rng rng(505);
  double worst = 0.0;
  int improved = 0, probes = 0;
  for (Index k = 1; k <= 6; ++k) {
    for (int rep = 0; rep < 5; ++rep) {
      const Index c = 1 + static_cast<Index>(rng.below(5));
      const MemoryState m = random_memory(rng, k, c);
      const Matrix z = rng.normal_matrix(c, 1);
      const Matrix mu = address(m, z);
      const Matrix gram = m.R * m.R.transpose() + m.sigma_xi_sq * Matrix::Identity(k, k);
      worst = std::max(worst, (mu - gram.inverse() * m.R * z).cwiseAbs().maxCoeff());
      const double best = addressing_objective(m, z, mu);
      for (int i = 0; i < 100; ++i) {
        Matrix delta = rng.normal_matrix(k, 1);
        delta *= 1e-3 / delta.norm();
        improved += addressing_objective(m, z, mu + delta) < best;
        ++probes;
      }
    }
  }
  report("A5", worst <= 1e-9 && improved == 0,
         "max abs error vs explicit inverse " + fmt(worst) + ", " + std::to_string(improved) + "/" +
             std::to_string(probes) + " perturbations improved the quadratic");
}

struct TrainedModel {
  Corpus corpus;
  RunConfig config;
  ModelParams params;
};

TrainedModel train_desk_model() {
  TrainedModel t;
  t.corpus = generate_synthetic(16, 32, 144, 0.02, 1);
  t.config.K = 32;
  t.config.C = 32;
  t.config.T = 8;
  t.config.learning_rate = 2e-3;
  t.config.train_steps = 2000;
  t.config.seed = 0;
  t.config.workers = worker_count();
  t.params = train_model(t.corpus, t.config).params;
  return t;
}

void a6_denoising(const TrainedModel& t, double train_secs) {
  Stopwatch clock;
  RunConfig c = t.config;
  c.trials = 50;
  c.max_iters = 15;
  c.noise_spec = "salt_pepper:0.15";
  const auto trials = run_denoise(t.params, t.corpus, c);
  std::vector<double> ratios;
  int energy_ok = 0;
  std::size_t steps = 0, down = 0;
  for (const DenoiseTrial& d : trials) {
    ratios.push_back(d.initial_distance > 0 ? d.final_distance / d.initial_distance : 0.0);
    energy_ok += d.final_energy <= d.initial_energy;
    const auto& it = d.trace.iterations;
    for (std::size_t i = 1; i < it.size(); ++i) {
      ++steps;
      down += it[i].energy <= it[i - 1].energy;
    }
  }
  std::sort(ratios.begin(), ratios.end());
  const double median = 0.5 * (ratios[24] + ratios[25]);
  const double energy_frac = energy_ok / 50.0;
  const double step_frac = steps ? static_cast<double>(down) / static_cast<double>(steps) : 1.0;
  const double secs = train_secs + clock.seconds();
  report("A6", median <= 0.3 && energy_frac >= 0.95 && step_frac >= 0.9 && secs < 1200.0,
         "median final/initial Hamming " + fmt(median) + ", final<=initial energy " + fmt(energy_frac) +
             ", non-increasing steps " + fmt(step_frac) + ", " + fmt(secs) + " s incl. training");
}

void a7_prior_sampling(const TrainedModel& t) {
  const SampleRun run = run_sample(t.params, t.corpus, t.config, 20);
  const double limit = 0.05 * 144.0;
  int energy_ok = 0, near_written = 0, near_corpus = 0;
  for (std::size_t i = 0; i < run.traces.size(); ++i) {
    const EnergyTrace& trace = run.traces[i];
    energy_ok += trace.iterations.back().energy <= trace.iterations.front().energy;
    near_written += run.nearest_distance[i] <= limit;
    double best = std::numeric_limits<double>::infinity();
    for (const Vector& x : t.corpus.patterns) {
      best = std::min(best, static_cast<double>(hamming(trace.final_pattern, x)));
    }
    near_corpus += best <= limit;
  }
  const int n = static_cast<int>(run.traces.size());
  report("A7", energy_ok == n && near_corpus * 2 >= n,
         "final<=initial energy " + std::to_string(energy_ok) + "/" + std::to_string(n) +
             ", within 5% Hamming of a corpus pattern " + std::to_string(near_corpus) + "/" +
             std::to_string(n) + " (of a pattern written in this episode " +
             std::to_string(near_written) + "/" + std::to_string(n) + ")");
}

void a8_capacity(const TrainedModel& t) {
  RunConfig c = t.config;
  c.trials = 20;
  const auto rows = run_capacity(t.params, t.corpus, {16, 64}, {2}, c);
  const double ratio = rows[1].mean_error / rows[0].mean_error;
  report("A8", rows[1].mean_error <= 1.5 * rows[0].mean_error,
         "error T=16 " + fmt(rows[0].mean_error) + ", T=64 " + fmt(rows[1].mean_error) + ", ratio " +
             fmt(ratio));
}

void a9_refinement() {
  int worse = 0;
  double deficit = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Architecture arch;
    arch.data_width = 6;
    arch.code_size = 3;
    arch.slots = 4;
    arch.hidden = 5;
    const ModelParams p = init_params(arch, 900 + seed);
    Rng rng(1900 + seed);
    std::vector<Matrix> xs;
    const Index t = 2 + static_cast<Index>(rng.below(4));
    for (Index i = 0; i < t; ++i) xs.push_back(dkm::test::binary_vector(rng, 6));
    const MemoryState prior_mem = prior_memory(p);
    double bt[2];
    for (int refine = 0; refine < 2; ++refine) {
      const WriteResult w = write_episode<Matrix>(p, prior_mem, xs, refine);
      const auto reads = read_episode<Matrix>(p, w.memory, xs, nullptr);
      bt[refine] = *to_report(bounds(p, prior_mem, xs, w, reads, true)).bound_BT;
    }
    if (bt[1] < bt[0] - 1e-9) {
      ++worse;
      deficit = std::max(deficit, bt[0] - bt[1]);
    }
  }
  report("A9", worse == 0,
         std::to_string(worse) + "/100 instances where refinement lowered B_T, largest drop " + fmt(deficit));
}

std::string slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

bool run_cli(const std::string& args) {
  const std::string cmd = std::string(DKM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) && WEXITSTATUS(status) == 0;
}

void a10_persistence(const TrainedModel& t) {
  const fs::path dir = fs::temp_directory_path() / ("dkm_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);

  const fs::path model = dir / "desk.dkm";
  save_model(model.string(), t.params);
  const ModelFile loaded = load_model(model.string());
  bool exact = true;
  const auto a = trainable(t.params);
  const auto b = trainable(loaded.params);
  for (std::size_t i = 0; i < a.size(); ++i) {
    exact = exact && a[i]->size() == b[i]->size() &&
            std::memcmp(a[i]->data(), b[i]->data(), sizeof(double) * a[i]->size()) == 0;
  }

  const std::string corpus = (dir / "corpus.txt").string();
  const std::string common = " --K 8 --C 8 --T 4 --hidden 16 --seed 7 --workers 2";
  bool ran = run_cli("gen --n_classes 4 --per_class 8 --D 32 --flip_prob 0.05 --seed 3 --out " + corpus);
  std::vector<std::string> outputs;
  for (int rep = 0; rep < 2; ++rep) {
    const std::string r = (dir / ("r" + std::to_string(rep))).string();
    ran = ran && run_cli("train --quiet --corpus " + corpus + " --out " + r + ".dkm --train_steps 50" + common);
    ran = ran && run_cli("denoise --model " + r + ".dkm --corpus " + corpus + " --out " + r + "_d --trials 10" + common);
    ran = ran && run_cli("sample --model " + r + ".dkm --corpus " + corpus + " --out " + r + "_s" + common);
    ran = ran && run_cli("capacity --model " + r + ".dkm --corpus " + corpus + " --out " + r + "_c.csv --lengths 4 8 --classes 1 2 --trials 5" + common);
    outputs.push_back(slurp(r + ".dkm.train.csv") + slurp(r + "_d.summary.csv") + slurp(r + "_d.traces.csv") +
                      slurp(r + "_s.summary.csv") + slurp(r + "_s.traces.csv") + slurp(r + "_c.csv") +
                      slurp(r + ".dkm"));
  }
  const bool identical = ran && outputs[0] == outputs[1] && !outputs[0].empty();
  fs::remove_all(dir);
  report("A10", exact && identical,
         std::string("save/load bit-exact ") + (exact ? "yes" : "no") + ", CLI reruns " +
             (ran ? (identical ? "byte-identical" : "differ") : "failed to run"));
}

}  // namespace

int main() {
  a1_posterior_oracle();
  a2_exchangeability();
  a3_gradient_check();
  a4_kl_monte_carlo();
  a5_addressing();
  Stopwatch train_clock;
  const TrainedModel model = train_desk_model();
  const double train_secs = train_clock.seconds();
  a6_denoising(model, train_secs);
  a7_prior_sampling(model);
  a8_capacity(model);
  a9_refinement();
  a10_persistence(model);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
