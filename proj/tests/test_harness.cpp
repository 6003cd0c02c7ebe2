#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "dkm/errors.hpp"
#include "dkm/experiments.hpp"
#include "dkm/persistence.hpp"
#include "support.hpp"

using namespace dkm;
namespace fs = std::filesystem;

namespace {

Architecture small_arch() {
  Architecture a;
  a.data_width = 16;
  a.code_size = 8;
  a.slots = 8;
  a.hidden = 16;
  return a;
}

const Corpus& four_patterns() {
  static const Corpus corpus = generate_synthetic(4, 1, 16, 0.0, 3);
  return corpus;
}

const ModelParams& trained_four() {
  static const ModelParams params = [] {
    RunConfig c;
    c.K = 8;
    c.C = 8;
    c.T = 4;
    c.hidden = 16;
    c.train_steps = 500;
    c.learning_rate = 1e-3;
    c.seed = 5;
    return train_model(four_patterns(), c).params;
  }();
  return params;
}

MemoryState write_all(const ModelParams& p, const std::vector<Matrix>& xs) {
  return write_episode<Matrix>(p, prior_memory(p), xs, 0).memory;
}

Episode single(const Vector& v) {
  Episode ep;
  ep.patterns.push_back(v);
  return ep;
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / ("dkm_harness_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DKM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("generate_synthetic") {
  const Corpus clean = generate_synthetic(3, 5, 20, 0.0, 1);
  REQUIRE(clean.size() == 15);
  CHECK_NOTHROW(validate(clean));
  for (std::size_t i = 0; i < clean.size(); ++i) {
    CHECK(clean.class_ids[i] == static_cast<int>(i / 5));
    CHECK(clean.patterns[i] == clean.patterns[5 * (i / 5)]);
  }
  CHECK(clean.patterns[0] != clean.patterns[5]);

  const Corpus a = generate_synthetic(4, 10, 32, 0.2, 9);
  const Corpus b = generate_synthetic(4, 10, 32, 0.2, 9);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.patterns[i] == b.patterns[i]);

  // Instances sit about flip_prob * D bits from their prototype.
  const Corpus protos = generate_synthetic(1, 1, 100, 0.0, 4);
  const Corpus noisy = generate_synthetic(1, 100, 100, 0.1, 4);
  double mean = 0.0;
  for (const Vector& x : noisy.patterns) mean += hamming(x, protos.patterns[0]);
  mean /= 100.0;
  CHECK(mean >= 7.0);
  CHECK(mean <= 13.0);

  CHECK_THROWS_AS(generate_synthetic(2, 2, 3, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(generate_synthetic(2, 2, 8, 0.6, 1), std::invalid_argument);
}

TEST_CASE("corpus text round trip") {
  const Corpus binary = generate_synthetic(3, 4, 10, 0.1, 2);
  std::stringstream ss;
  write_corpus(ss, binary);
  const Corpus back = read_corpus(ss);
  CHECK(back.kind == CorpusKind::kBinary);
  CHECK(back.class_ids == binary.class_ids);
  for (std::size_t i = 0; i < binary.size(); ++i) CHECK(back.patterns[i] == binary.patterns[i]);

  Corpus real;
  real.kind = CorpusKind::kReal;
  real.width = 7;
  Rng rng(3);
  for (int i = 0; i < 5; ++i) real.patterns.push_back(rng.normal_matrix(7, 1).col(0) * 1e3);
  real.patterns[0](0) = 1.0 / 3.0;
  real.patterns[0](1) = -2.5e-300;
  std::stringstream rs;
  write_corpus(rs, real);
  const Corpus real_back = read_corpus(rs);
  CHECK(real_back.class_ids.empty());
  for (std::size_t i = 0; i < real.size(); ++i) CHECK(real_back.patterns[i] == real.patterns[i]);
}

TEST_CASE("corpus format errors") {
  auto parse = [](const std::string& text) {
    std::istringstream is(text);
    return read_corpus(is);
  };
  CHECK_NOTHROW(parse("DKM-CORPUS 1 2 3 binary\n0 1 0\n1 1 1\n"));
  CHECK_THROWS_AS(parse(""), FormatError);
  CHECK_THROWS_AS(parse("CORPUS 1 2 3 binary\n0 1 0\n1 1 1\n"), FormatError);
  CHECK_THROWS_AS(parse("DKM-CORPUS 2 2 3 binary\n0 1 0\n1 1 1\n"), FormatError);
  CHECK_THROWS_AS(parse("DKM-CORPUS 1 2 3 binary\n0 1 0\n"), FormatError);
  CHECK_THROWS_AS(parse("DKM-CORPUS 1 2 3 binary\n0 1\n1 1 1\n"), FormatError);
  CHECK_THROWS_AS(parse("DKM-CORPUS 1 2 3 binary\n0 1 0 1\n1 1 1\n"), FormatError);
  CHECK_THROWS_AS(parse("DKM-CORPUS 1 2 3 binary\n0 2 0\n1 1 1\n"), FormatError);
  CHECK_THROWS_AS(parse("DKM-CORPUS 1 2 3 real\n0 x 0\n1 1 1\n"), FormatError);
  CHECK_THROWS_AS(parse("DKM-CORPUS 1 2 3 binary\nCLASSES 0\n0 1 0\n1 1 1\n"), FormatError);
  CHECK_THROWS_AS(parse("DKM-CORPUS 1 2 3 ternary\n0 1 0\n1 1 1\n"), FormatError);
}

TEST_CASE("inject_noise") {
  Rng rng(5);
  const Vector x = dkm::test::binary_vector(rng, 1000).col(0);
  CHECK(inject_noise(x, NoiseSpec{NoiseSpec::Kind::kSaltPepper, 0.0}, CorpusKind::kBinary, 1) == x);
  const Vector flipped = inject_noise(x, NoiseSpec{NoiseSpec::Kind::kSaltPepper, 1.0}, CorpusKind::kBinary, 1);
  CHECK(hamming(flipped, x) == 1000);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Index n = hamming(inject_noise(x, parse_noise("salt_pepper:0.15"), CorpusKind::kBinary, seed), x);
    CHECK(n >= 100);
    CHECK(n <= 200);
  }
  CHECK_THROWS_AS(inject_noise(x, parse_noise("salt_pepper:0.1"), CorpusKind::kReal, 1), FormatError);

  const Vector r = Vector::Zero(20000);
  const Vector g = inject_noise(r, parse_noise("gaussian:0.15"), CorpusKind::kReal, 2);
  const double sd = std::sqrt(g.squaredNorm() / 20000.0);
  CHECK(sd == doctest::Approx(0.15).epsilon(0.03));
  CHECK(inject_noise(r, parse_noise("gaussian:0.15"), CorpusKind::kReal, 2) == g);

  CHECK(to_string(parse_noise("gaussian:0.25")) == "gaussian:0.25");
  CHECK_THROWS_AS(parse_noise("salt_pepper"), std::invalid_argument);
  CHECK_THROWS_AS(parse_noise("speckle:0.1"), std::invalid_argument);
  CHECK_THROWS_AS(parse_noise("salt_pepper:1.5"), std::invalid_argument);
}

TEST_CASE("model persistence round trip") {
  const ModelParams p = init_params(small_arch(), 7);
  Rng rng(8);
  std::vector<Matrix> xs;
  for (int i = 0; i < 3; ++i) xs.push_back(dkm::test::binary_vector(rng, 16));
  const MemoryState mem = write_all(p, xs);

  const ModelFile bare = deserialize_model(serialize_model(p, std::nullopt));
  CHECK_FALSE(bare.memory.has_value());
  const ModelFile full = deserialize_model(serialize_model(p, mem));
  REQUIRE(full.memory.has_value());
  const auto a = trainable(p);
  const auto b = trainable(full.params);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i]->size() == b[i]->size());
    CHECK(std::memcmp(a[i]->data(), b[i]->data(), sizeof(double) * a[i]->size()) == 0);
  }
  CHECK(full.memory->R == mem.R);
  CHECK(full.memory->U == mem.U);
  CHECK(full.memory->sigma_xi_sq == mem.sigma_xi_sq);
  CHECK(full.params.likelihood.kind == p.likelihood.kind);
  CHECK(serialize_model(full.params, full.memory) == serialize_model(p, mem));

  const fs::path path = scratch_dir() / "model.dkm";
  save_model(path.string(), p, mem);
  CHECK(serialize_model(load_model(path.string()).params, mem) == serialize_model(p, mem));
}

TEST_CASE("model file corruption is rejected") {
  const std::string good = serialize_model(init_params(small_arch(), 9), std::nullopt);
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_model(bad_magic), FormatError);

  std::string bad_version = good;
  bad_version[4] = 9;
  CHECK_THROWS_AS(deserialize_model(bad_version), FormatError);

  CHECK_THROWS_AS(deserialize_model(good.substr(0, good.size() - 9)), FormatError);
  CHECK_THROWS_AS(deserialize_model(good + std::string(8, '\0')), FormatError);

  std::string flipped = good;
  flipped[good.size() - 20] ^= 0x01;
  CHECK_THROWS_AS(deserialize_model(flipped), FormatError);

  // A header whose declared data width disagrees with the payload.
  std::string dims = good;
  const std::size_t at = dims.find("\"data_width\":16");
  REQUIRE(at != std::string::npos);
  dims.replace(at, 15, "\"data_width\":17");
  CHECK_THROWS_AS(deserialize_model(dims), FormatError);

  CHECK_THROWS_AS(load_model((scratch_dir() / "missing.dkm").string()), FormatError);
}

TEST_CASE("episode sampling") {
  const Corpus corpus = generate_synthetic(4, 3, 8, 0.3, 11);
  Rng rng(1);
  const Episode ep = sample_episode(corpus, 12, rng);
  CHECK(ep.patterns.size() == 12);
  CHECK_THROWS_AS(sample_episode(corpus, 13, rng), std::invalid_argument);
  const Episode two = sample_class_episode(corpus, 6, 2, rng);
  CHECK(two.patterns.size() == 6);
  CHECK_THROWS_AS(sample_class_episode(corpus, 7, 2, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_class_episode(corpus, 2, 5, rng), std::invalid_argument);
}

TEST_CASE("run_capacity shape and rejection") {
  const Corpus corpus = generate_synthetic(4, 8, 16, 0.05, 2);
  const ModelParams p = init_params(small_arch(), 3);
  RunConfig c;
  c.trials = 3;
  const auto rows = run_capacity(p, corpus, {2, 4, 8}, {1, 2}, c);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].length == 2);
  CHECK(rows[1].classes == 2);
  CHECK(rows[5].length == 8);
  for (const CapacityRow& r : rows) {
    CHECK(r.trials == 3);
    CHECK(std::isfinite(r.mean_error));
  }
  std::ostringstream os;
  write_capacity_csv(os, rows);
  CHECK(os.str().rfind("length,classes,mean_error,std_error,trials\n", 0) == 0);
  CHECK_THROWS_AS(run_capacity(p, corpus, {33}, {4}, c), std::invalid_argument);
}

TEST_CASE("a written pattern has lower retrieval error than the same query under other single writes") {
  const ModelParams& p = trained_four();
  const Corpus& corpus = four_patterns();
  for (std::size_t q = 0; q < corpus.size(); ++q) {
    const Episode query = single(corpus.patterns[q]);
    const double own = retrieval_error(p, write_all(p, {Matrix(corpus.patterns[q])}), query);
    for (std::size_t s = 0; s < corpus.size(); ++s) {
      if (s == q) continue;
      CHECK(own <= retrieval_error(p, write_all(p, {Matrix(corpus.patterns[s])}), query));
    }
  }
}

TEST_CASE("repeating one pattern does not raise its retrieval error") {
  const ModelParams& p = trained_four();
  for (const Vector& v : four_patterns().patterns) {
    double previous = std::numeric_limits<double>::infinity();
    for (int t : {2, 4, 8}) {
      const double err = retrieval_error(p, write_all(p, std::vector<Matrix>(t, Matrix(v))), single(v));
      CHECK(err <= previous);
      previous = err;
    }
  }
}

TEST_CASE("CLI exit codes") {
  const fs::path dir = scratch_dir();
  const std::string corpus = (dir / "c.txt").string();
  CHECK(run_cli("gen --n_classes 2 --per_class 3 --D 8 --out " + corpus) == 0);
  CHECK(fs::exists(corpus));
  CHECK(run_cli("") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("train --corpus " + corpus + " --out " + (dir / "m.dkm").string() + " --K 0") == 2);

  {
    std::ofstream bad(dir / "bad.txt");
    bad << "DKM-CORPUS 1 1 3 binary\n0 3 1\n";
  }
  CHECK(run_cli("train --corpus " + (dir / "bad.txt").string() + " --out " +
                (dir / "m.dkm").string()) == 3);
  CHECK(run_cli("train --corpus " + corpus + " --out " + (dir / "m.dkm").string() +
                " --K 2 --C 2 --T 2 --hidden 3 --train_steps 3 --quiet") == 0);
  CHECK(run_cli("query --model " + (dir / "m.dkm").string() + " --corpus " + corpus +
                " --out " + (dir / "q").string()) != 0);

  // Squared residuals overflow on this finite real corpus.
  {
    std::ofstream huge(dir / "huge.txt");
    huge << "DKM-CORPUS 1 2 3 real\n1e308 1 0\n1 -1e308 1\n";
  }
  CHECK(run_cli("train --corpus " + (dir / "huge.txt").string() + " --out " +
                (dir / "m2.dkm").string() +
                " --likelihood gaussian --K 2 --C 2 --T 2 --hidden 3 --train_steps 2 --quiet") == 4);
}
