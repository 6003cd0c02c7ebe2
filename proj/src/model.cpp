#include "dkm/model.hpp"

#include <cmath>
#include <stdexcept>

#include "dkm/random.hpp"

namespace dkm {

namespace {

Layer glorot_layer(Index in, Index out, Activation act, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix w(out, in);
  for (Index i = 0; i < out; ++i) {
    for (Index j = 0; j < in; ++j) w(i, j) = limit * (2.0 * rng.uniform() - 1.0);
  }
  return Layer{std::move(w), Matrix::Zero(out, 1), act};
}

void check_chain(const std::vector<Layer>& layers, Index in, Index out, const char* which) {
  if (layers.empty()) throw DimensionError(std::string(which) + ": no layers");
  Index width = in;
  for (const Layer& layer : layers) {
    if (layer.weight.cols() != width) {
      throw DimensionError(std::string(which) + ": layer input width mismatch");
    }
    if (layer.bias.rows() != layer.weight.rows() || layer.bias.cols() != 1) {
      throw DimensionError(std::string(which) + ": bias shape mismatch");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw NumericalError(std::string(which) + ": non-finite weights");
    }
    width = layer.weight.rows();
  }
  if (width != out) throw DimensionError(std::string(which) + ": output width mismatch");
}

}  // namespace

ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
  if (arch.data_width < 1 || arch.code_size < 1 || arch.slots < 1 || arch.hidden < 1) {
    throw DimensionError("init_params: widths must be >= 1");
  }
  Rng rng(seed);
  ModelParams p;
  p.encoder.push_back(glorot_layer(arch.data_width, arch.hidden, arch.hidden_activation, rng));
  p.encoder.push_back(glorot_layer(arch.hidden, arch.code_size, Activation::kIdentity, rng));
  p.decoder.push_back(glorot_layer(arch.code_size, arch.hidden, arch.hidden_activation, rng));
  p.decoder.push_back(glorot_layer(arch.hidden, arch.data_width, Activation::kIdentity, rng));
  p.likelihood = arch.likelihood;
  p.log_sigma_w_sq = Matrix::Constant(1, 1, std::log(arch.sigma_w_sq));
  p.R0 = rng.normal_matrix(arch.slots, arch.code_size);
  p.log_sigma_U_sq = Matrix::Constant(1, 1, std::log(arch.sigma_U_sq));
  p.sigma_xi_sq = arch.sigma_xi_sq;
  return p;
}

void validate(const ModelParams& p) {
  if (p.encoder.empty() || p.decoder.empty()) throw DimensionError("model: missing layers");
  const Index d = p.encoder.front().weight.cols();
  check_chain(p.encoder, d, p.code_size(), "encoder");
  check_chain(p.decoder, p.code_size(), d, "decoder");
  require_scalar(p.log_sigma_w_sq, "log_sigma_w_sq");
  require_scalar(p.log_sigma_U_sq, "log_sigma_U_sq");
  if (!p.R0.allFinite() || !p.log_sigma_w_sq.allFinite() || !p.log_sigma_U_sq.allFinite()) {
    throw NumericalError("model: non-finite memory parameters");
  }
  if (!(p.sigma_xi_sq > 0.0)) throw NumericalError("model: sigma_xi_sq must be positive");
  if (p.likelihood.kind == LikelihoodKind::kGaussian && !(p.likelihood.sigma_out_sq > 0.0)) {
    throw NumericalError("model: sigma_out_sq must be positive");
  }
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

const char* likelihood_name(LikelihoodKind k) {
  return k == LikelihoodKind::kBernoulli ? "bernoulli" : "gaussian";
}

LikelihoodKind parse_likelihood(const std::string& name) {
  if (name == "bernoulli") return LikelihoodKind::kBernoulli;
  if (name == "gaussian") return LikelihoodKind::kGaussian;
  throw std::invalid_argument("unknown likelihood '" + name + "'");
}

std::vector<std::string> trainable_names(const ModelParams& p) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < p.encoder.size(); ++i) {
    names.push_back("encoder." + std::to_string(i) + ".weight");
    names.push_back("encoder." + std::to_string(i) + ".bias");
  }
  for (std::size_t i = 0; i < p.decoder.size(); ++i) {
    names.push_back("decoder." + std::to_string(i) + ".weight");
    names.push_back("decoder." + std::to_string(i) + ".bias");
  }
  names.push_back("log_sigma_w_sq");
  names.push_back("R0");
  names.push_back("log_sigma_U_sq");
  return names;
}

Matrix likelihood_mode(const Likelihood& lik, const Matrix& out) {
  if (lik.kind == LikelihoodKind::kGaussian) return out;
  // round(sigmoid(l)) with ties (l = 0) rounding up.
  return out.unaryExpr([](double l) { return l >= 0.0 ? 1.0 : 0.0; });
}

LikelihoodEval decode_loglik(const ModelParams& p, const Matrix& z, const Matrix& x) {
  const Matrix out = decoder_output(p, z);
  return LikelihoodEval{scalar(log_prob<Matrix>(p.likelihood, out, x)),
                        likelihood_mode(p.likelihood, out)};
}

EnergyTerms energy_terms(const ModelParams& p, const MemoryState& mem, const Matrix& x,
                         const AddressPosterior& q) {
  EnergyTerms e;
  e.recon = -decode_loglik(p, read(mem, q.mu_w), x).log_prob;
  e.kl_w = scalar(kl_weights(q));
  e.energy = e.recon + e.kl_w;
  return e;
}

double energy(const ModelParams& p, const MemoryState& mem, const Matrix& x,
              const AddressPosterior& q) {
  return energy_terms(p, mem, x, q).energy;
}

}  // namespace dkm
