#include "dkm/persistence.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

#include <zlib.h>

#include "json.hpp"

namespace dkm {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'D', 'K', 'M', 'M'};

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(const std::string& in, std::size_t offset) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return value;
}

std::uint32_t crc_of(const std::string& bytes, std::size_t begin, std::size_t end) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + begin),
              static_cast<uInt>(end - begin));
  return static_cast<std::uint32_t>(crc);
}

json layer_specs(const std::vector<Layer>& layers) {
  json out = json::array();
  for (const Layer& l : layers) {
    out.push_back({{"in", l.weight.cols()},
                   {"out", l.weight.rows()},
                   {"activation", activation_name(l.activation)}});
  }
  return out;
}

std::vector<Layer> layers_from(const json& specs) {
  std::vector<Layer> layers;
  for (const json& s : specs) {
    const Index in = s.at("in").get<Index>();
    const Index out = s.at("out").get<Index>();
    if (in < 1 || out < 1) throw FormatError("model: layer widths must be positive");
    layers.push_back(Layer{Matrix(out, in), Matrix(out, 1),
                           parse_activation(s.at("activation").get<std::string>())});
  }
  return layers;
}

struct Slot {
  std::string name;
  Matrix* target;
};

}  // namespace

std::string serialize_model(const ModelParams& params, const std::optional<MemoryState>& memory) {
  validate(params);
  if (memory) {
    validate(*memory);
    if (memory->slots() != params.slots() || memory->code_size() != params.code_size()) {
      throw DimensionError("save_model: memory shape does not match the model");
    }
  }
  std::vector<std::pair<std::string, const Matrix*>> arrays;
  const auto names = trainable_names(params);
  const auto values = trainable(params);
  for (std::size_t i = 0; i < names.size(); ++i) arrays.emplace_back(names[i], values[i]);
  if (memory) {
    arrays.emplace_back("memory.R", &memory->R);
    arrays.emplace_back("memory.U", &memory->U);
  }

  json header;
  header["format"] = "DKMM";
  header["data_width"] = params.data_width();
  header["code_size"] = params.code_size();
  header["slots"] = params.slots();
  header["likelihood"] = likelihood_name(params.likelihood.kind);
  header["sigma_out_sq"] = params.likelihood.sigma_out_sq;
  header["sigma_xi_sq"] = params.sigma_xi_sq;
  header["encoder"] = layer_specs(params.encoder);
  header["decoder"] = layer_specs(params.decoder);
  header["memory"] = memory ? json{{"sigma_xi_sq", memory->sigma_xi_sq}} : json(nullptr);
  json manifest = json::array();
  for (const auto& [name, m] : arrays) {
    manifest.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
  }
  header["arrays"] = manifest;
  const std::string header_text = header.dump();

  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, kModelFormatVersion);
  put_le<std::uint64_t>(out, header_text.size());
  const std::size_t payload_begin = out.size();
  out += header_text;
  for (const auto& entry : arrays) {
    const Matrix& m = *entry.second;
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(m(i, j)));
    }
  }
  put_le<std::uint32_t>(out, crc_of(out, payload_begin, out.size()));
  return out;
}

ModelFile deserialize_model(const std::string& bytes) {
  constexpr std::size_t kPrefix = 4 + 4 + 8;
  if (bytes.size() < kPrefix + 4) throw FormatError("model: file too short");
  if (bytes.compare(0, 4, kMagic, 4) != 0) throw FormatError("model: bad magic bytes");
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kModelFormatVersion) {
    throw FormatError("model: unsupported version " + std::to_string(version));
  }
  const auto header_len = get_le<std::uint64_t>(bytes, 8);
  if (header_len > bytes.size() - kPrefix - 4) throw FormatError("model: truncated header");

  json header;
  try {
    header = json::parse(bytes.substr(kPrefix, header_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: malformed header: ") + e.what());
  }

  ModelFile file;
  try {
    ModelParams& p = file.params;
    p.encoder = layers_from(header.at("encoder"));
    p.decoder = layers_from(header.at("decoder"));
    p.likelihood.kind = parse_likelihood(header.at("likelihood").get<std::string>());
    p.likelihood.sigma_out_sq = header.at("sigma_out_sq").get<double>();
    p.sigma_xi_sq = header.at("sigma_xi_sq").get<double>();
    const Index k = header.at("slots").get<Index>();
    const Index c = header.at("code_size").get<Index>();
    if (k < 1 || c < 1) throw FormatError("model: memory dimensions must be positive");
    p.R0.resize(k, c);
    p.log_sigma_w_sq.resize(1, 1);
    p.log_sigma_U_sq.resize(1, 1);
    if (!header.at("memory").is_null()) {
      file.memory = MemoryState{Matrix(k, c), Matrix(k, k),
                                header.at("memory").at("sigma_xi_sq").get<double>()};
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: header field error: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("model: ") + e.what());
  }

  std::vector<Slot> slots;
  const auto names = trainable_names(file.params);
  const auto targets = trainable(file.params);
  for (std::size_t i = 0; i < names.size(); ++i) slots.push_back({names[i], targets[i]});
  if (file.memory) {
    slots.push_back({"memory.R", &file.memory->R});
    slots.push_back({"memory.U", &file.memory->U});
  }

  const json& manifest = header.at("arrays");
  if (!manifest.is_array() || manifest.size() != slots.size()) {
    throw FormatError("model: array manifest does not match the architecture");
  }
  std::size_t expected = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const json& entry = manifest[i];
    const Matrix& m = *slots[i].target;
    if (entry.value("name", "") != slots[i].name || entry.value("rows", Index(-1)) != m.rows() ||
        entry.value("cols", Index(-1)) != m.cols()) {
      throw FormatError("model: manifest entry " + std::to_string(i) + " (" + slots[i].name +
                        ") is inconsistent with the declared dimensions");
    }
    expected += static_cast<std::size_t>(m.size()) * 8;
  }
  const std::size_t payload_end = kPrefix + header_len + expected;
  if (bytes.size() != payload_end + 4) {
    throw FormatError("model: payload length " + std::to_string(bytes.size() - kPrefix - header_len - 4) +
                      " does not match the " + std::to_string(expected) + " bytes declared");
  }
  if (get_le<std::uint32_t>(bytes, payload_end) != crc_of(bytes, kPrefix, payload_end)) {
    throw FormatError("model: checksum mismatch");
  }

  std::size_t offset = kPrefix + header_len;
  for (Slot& slot : slots) {
    Matrix& m = *slot.target;
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) {
        m(i, j) = std::bit_cast<double>(get_le<std::uint64_t>(bytes, offset));
        offset += 8;
      }
    }
  }
  try {
    validate(file.params);
    if (file.memory) validate(*file.memory);
  } catch (const std::exception& e) {
    throw FormatError(std::string("model: invalid contents: ") + e.what());
  }
  return file;
}

void save_model(const std::string& path, const ModelParams& params,
                const std::optional<MemoryState>& memory) {
  const std::string bytes = serialize_model(params, memory);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ModelFile load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open model '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace dkm
