#include "dkm/corpus.hpp"

#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "dkm/random.hpp"

namespace dkm {

void validate(const Corpus& corpus) {
  if (!corpus.class_ids.empty() && corpus.class_ids.size() != corpus.patterns.size()) {
    throw FormatError("corpus: class list length does not match pattern count");
  }
  for (std::size_t n = 0; n < corpus.patterns.size(); ++n) {
    const Vector& x = corpus.patterns[n];
    if (x.size() != corpus.width) {
      throw FormatError("corpus: pattern " + std::to_string(n) + " has width " +
                        std::to_string(x.size()));
    }
    if (!x.allFinite()) throw FormatError("corpus: non-finite value in pattern " + std::to_string(n));
    if (corpus.kind == CorpusKind::kBinary &&
        !(x.array() == 0.0 || x.array() == 1.0).all()) {
      throw FormatError("corpus: non-binary value in pattern " + std::to_string(n));
    }
  }
}

Corpus generate_synthetic(int n_classes, int per_class, Index width, double flip_prob,
                          std::uint64_t seed) {
  if (n_classes < 1 || per_class < 1) throw std::invalid_argument("gen: counts must be >= 1");
  if (width < 4) throw std::invalid_argument("gen: width must be >= 4");
  if (!(flip_prob >= 0.0 && flip_prob <= 0.5)) {
    throw std::invalid_argument("gen: flip_prob must lie in [0, 0.5]");
  }
  Rng rng(seed);
  std::vector<Vector> prototypes;
  for (int c = 0; c < n_classes; ++c) {
    Vector proto(width);
    for (Index d = 0; d < width; ++d) proto(d) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    prototypes.push_back(std::move(proto));
  }
  Corpus corpus;
  corpus.kind = CorpusKind::kBinary;
  corpus.width = width;
  for (int c = 0; c < n_classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      Vector x = prototypes[static_cast<std::size_t>(c)];
      for (Index d = 0; d < width; ++d) {
        if (rng.bernoulli(flip_prob)) x(d) = 1.0 - x(d);
      }
      corpus.patterns.push_back(std::move(x));
      corpus.class_ids.push_back(c);
    }
  }
  return corpus;
}

void write_corpus(std::ostream& os, const Corpus& corpus) {
  validate(corpus);
  const bool binary = corpus.kind == CorpusKind::kBinary;
  os << "DKM-CORPUS 1 " << corpus.size() << ' ' << corpus.width << ' '
     << (binary ? "binary" : "real") << '\n';
  if (!corpus.class_ids.empty()) {
    os << "CLASSES";
    for (int c : corpus.class_ids) os << ' ' << c;
    os << '\n';
  }
  os << std::setprecision(17);
  for (const Vector& x : corpus.patterns) {
    for (Index d = 0; d < x.size(); ++d) {
      if (d > 0) os << ' ';
      if (binary) {
        os << (x(d) != 0.0 ? '1' : '0');
      } else {
        os << x(d);
      }
    }
    os << '\n';
  }
}

Corpus read_corpus(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("corpus: empty input");
  std::istringstream header(line);
  std::string magic, kind;
  int version = 0;
  long long n = -1, width = -1;
  header >> magic >> version >> n >> width >> kind;
  if (magic != "DKM-CORPUS") throw FormatError("corpus: bad magic '" + magic + "'");
  if (version != 1) throw FormatError("corpus: unsupported version " + std::to_string(version));
  if (!header || n < 0 || width < 1) throw FormatError("corpus: malformed header");
  Corpus corpus;
  if (kind == "binary") {
    corpus.kind = CorpusKind::kBinary;
  } else if (kind == "real") {
    corpus.kind = CorpusKind::kReal;
  } else {
    throw FormatError("corpus: unknown kind '" + kind + "'");
  }
  corpus.width = static_cast<Index>(width);

  std::vector<std::string> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("CLASSES", 0) == 0) {
      if (!rows.empty() || !corpus.class_ids.empty()) {
        throw FormatError("corpus: CLASSES must directly follow the header");
      }
      std::istringstream ids(line.substr(7));
      int c;
      while (ids >> c) corpus.class_ids.push_back(c);
      if (!ids.eof()) throw FormatError("corpus: malformed CLASSES line");
      continue;
    }
    rows.push_back(line);
  }
  if (static_cast<long long>(rows.size()) != n) {
    throw FormatError("corpus: header declares " + std::to_string(n) + " patterns, found " +
                      std::to_string(rows.size()));
  }
  for (const std::string& row : rows) {
    std::istringstream values(row);
    Vector x(corpus.width);
    for (Index d = 0; d < corpus.width; ++d) {
      std::string token;
      if (!(values >> token)) throw FormatError("corpus: short row");
      try {
        std::size_t used = 0;
        x(d) = std::stod(token, &used);
        if (used != token.size()) throw FormatError("corpus: bad value '" + token + "'");
      } catch (const std::logic_error&) {
        throw FormatError("corpus: bad value '" + token + "'");
      }
    }
    std::string extra;
    if (values >> extra) throw FormatError("corpus: long row");
    corpus.patterns.push_back(std::move(x));
  }
  validate(corpus);
  return corpus;
}

void save_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_corpus(os, corpus);
}

Corpus load_corpus(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open corpus '" + path + "'");
  return read_corpus(is);
}

NoiseSpec parse_noise(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("noise spec must be kind:level");
  const std::string kind = text.substr(0, colon);
  NoiseSpec spec;
  if (kind == "salt_pepper") {
    spec.kind = NoiseSpec::Kind::kSaltPepper;
  } else if (kind == "gaussian") {
    spec.kind = NoiseSpec::Kind::kGaussian;
  } else {
    throw std::invalid_argument("unknown noise kind '" + kind + "'");
  }
  spec.level = std::stod(text.substr(colon + 1));
  if (!(spec.level >= 0.0)) throw std::invalid_argument("noise level must be >= 0");
  if (spec.kind == NoiseSpec::Kind::kSaltPepper && spec.level > 1.0) {
    throw std::invalid_argument("flip probability must be <= 1");
  }
  return spec;
}

std::string to_string(const NoiseSpec& spec) {
  std::ostringstream os;
  os << (spec.kind == NoiseSpec::Kind::kSaltPepper ? "salt_pepper:" : "gaussian:")
     << std::setprecision(17) << spec.level;
  return os.str();
}

Vector inject_noise(const Vector& x, const NoiseSpec& spec, CorpusKind kind, std::uint64_t seed) {
  Rng rng(seed);
  Vector out = x;
  if (spec.kind == NoiseSpec::Kind::kSaltPepper) {
    if (kind != CorpusKind::kBinary) {
      throw FormatError("salt-and-pepper noise requires a binary corpus");
    }
    for (Index d = 0; d < out.size(); ++d) {
      if (rng.bernoulli(spec.level)) out(d) = 1.0 - out(d);
    }
  } else {
    for (Index d = 0; d < out.size(); ++d) out(d) += spec.level * rng.normal();
  }
  return out;
}

}  // namespace dkm
