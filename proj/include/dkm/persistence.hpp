#ifndef DKM_PERSISTENCE_HPP_
#define DKM_PERSISTENCE_HPP_

// Model file layout (all integers little-endian):
//   "DKMM"                      4 bytes
//   version                     uint32 (currently 1)
//   header length               uint64
//   header                      UTF-8 JSON: architecture, hyperparameters,
//                               layer specs and an ordered array manifest
//   arrays                      row-major IEEE-754 binary64, manifest order
//   crc32                       uint32 over header bytes + array bytes

#include <cstdint>
#include <optional>
#include <string>

#include "dkm/memory.hpp"
#include "dkm/model.hpp"

namespace dkm {

inline constexpr std::uint32_t kModelFormatVersion = 1;

struct ModelFile {
  ModelParams params;
  std::optional<MemoryState> memory;
};

std::string serialize_model(const ModelParams& params, const std::optional<MemoryState>& memory);
// Throws FormatError on bad magic/version, truncation, manifest/payload
// disagreement, or checksum mismatch.
ModelFile deserialize_model(const std::string& bytes);

void save_model(const std::string& path, const ModelParams& params,
                const std::optional<MemoryState>& memory = std::nullopt);
ModelFile load_model(const std::string& path);

}  // namespace dkm

#endif  // DKM_PERSISTENCE_HPP_
