#ifndef DKM_CORPUS_HPP_
#define DKM_CORPUS_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dkm/linalg.hpp"

namespace dkm {

enum class CorpusKind { kBinary, kReal };

struct Corpus {
  CorpusKind kind = CorpusKind::kBinary;
  Index width = 0;
  std::vector<Vector> patterns;
  std::vector<int> class_ids;  // empty, or one per pattern

  std::size_t size() const { return patterns.size(); }
};

// Throws FormatError on ragged widths, non-binary entries in a binary
// corpus, or a class list of the wrong length.
void validate(const Corpus& corpus);

// n_classes random binary prototypes; each instance flips every bit of its
// prototype independently with probability flip_prob. Instances are stored
// class by class.
Corpus generate_synthetic(int n_classes, int per_class, Index width, double flip_prob,
                          std::uint64_t seed);

// Text format:
//   DKM-CORPUS 1 <N> <D> <binary|real>
//   CLASSES <id> ... <id>          (optional)
//   N lines of D space-separated values
// Real values are written with 17 significant digits.
void write_corpus(std::ostream& os, const Corpus& corpus);
Corpus read_corpus(std::istream& is);
void save_corpus(const std::string& path, const Corpus& corpus);
Corpus load_corpus(const std::string& path);

struct NoiseSpec {
  enum class Kind { kSaltPepper, kGaussian };
  Kind kind = Kind::kSaltPepper;
  double level = 0.15;  // flip probability, or standard deviation
};

// "salt_pepper:<p>" or "gaussian:<sigma>".
NoiseSpec parse_noise(const std::string& text);
std::string to_string(const NoiseSpec& spec);

Vector inject_noise(const Vector& x, const NoiseSpec& spec, CorpusKind kind, std::uint64_t seed);

}  // namespace dkm

#endif  // DKM_CORPUS_HPP_
