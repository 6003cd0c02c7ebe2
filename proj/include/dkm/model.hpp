#ifndef DKM_MODEL_HPP_
#define DKM_MODEL_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "dkm/linalg.hpp"
#include "dkm/memory.hpp"

namespace dkm {

enum class Activation { kIdentity, kTanh, kRelu, kSigmoid };

enum class LikelihoodKind { kBernoulli, kGaussian };

struct Likelihood {
  LikelihoodKind kind = LikelihoodKind::kBernoulli;
  // Fixed output variance of the Gaussian family.
  double sigma_out_sq = 0.25;
};

// Dense layer y = act(W x + b); W is out x in, b is out x 1.
template <class M>
struct BasicLayer {
  M weight;
  M bias;
  Activation activation = Activation::kIdentity;
};

template <class M>
struct BasicParams {
  std::vector<BasicLayer<M>> encoder;
  std::vector<BasicLayer<M>> decoder;
  Likelihood likelihood;
  M log_sigma_w_sq;  // 1x1
  M R0;              // K x C
  M log_sigma_U_sq;  // 1x1
  // Fixed observation noise of the memory; not trained.
  double sigma_xi_sq = 1.0;

  Index slots() const { return R0.rows(); }
  Index code_size() const { return R0.cols(); }
  Index data_width() const { return encoder.front().weight.cols(); }
};

using Layer = BasicLayer<Matrix>;
using ModelParams = BasicParams<Matrix>;

struct Architecture {
  Index data_width = 144;
  Index code_size = 32;
  Index slots = 32;
  Index hidden = 64;
  Activation hidden_activation = Activation::kTanh;
  Likelihood likelihood;
  double sigma_w_sq = 0.3;
  double sigma_U_sq = 1.0;
  double sigma_xi_sq = 1.0;
};

// Glorot-uniform weights, zero biases, R0 ~ N(0, 1).
ModelParams init_params(const Architecture& arch, std::uint64_t seed);

// Throws DimensionError when widths do not chain (encoder ends at C, decoder
// maps C to the data width) or NumericalError on non-finite entries.
void validate(const ModelParams& params);

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);
const char* likelihood_name(LikelihoodKind k);
LikelihoodKind parse_likelihood(const std::string& name);

// Parameters that receive gradients, in a fixed order: encoder (W, b) per
// layer, decoder (W, b) per layer, log sigma_w^2, R0, log sigma_U^2.
template <class M>
std::vector<M*> trainable(BasicParams<M>& p) {
  std::vector<M*> out;
  for (auto& layer : p.encoder) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  for (auto& layer : p.decoder) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  out.push_back(&p.log_sigma_w_sq);
  out.push_back(&p.R0);
  out.push_back(&p.log_sigma_U_sq);
  return out;
}

template <class M>
std::vector<const M*> trainable(const BasicParams<M>& p) {
  std::vector<const M*> out;
  for (M* m : trainable(const_cast<BasicParams<M>&>(p))) out.push_back(m);
  return out;
}

std::vector<std::string> trainable_names(const ModelParams& p);

template <class M>
M apply_activation(Activation a, const M& x) {
  switch (a) {
    case Activation::kIdentity: return x;
    case Activation::kTanh: return unary(Unary::kTanh, x);
    case Activation::kRelu: return unary(Unary::kRelu, x);
    case Activation::kSigmoid: return unary(Unary::kSigmoid, x);
  }
  return x;
}

template <class M>
M forward(const std::vector<BasicLayer<M>>& layers, const M& x) {
  M h = x;
  for (const auto& layer : layers) {
    const M pre = matmul(layer.weight, h) + layer.bias;
    h = apply_activation(layer.activation, pre);
  }
  return h;
}

// Deterministic embedding z = e(x).
template <class M>
M encode(const BasicParams<M>& p, const std::type_identity_t<M>& x) {
  if (x.rows() != p.data_width() || x.cols() != 1) {
    throw DimensionError("encode: input must be " + std::to_string(p.data_width()) + "x1");
  }
  return forward(p.encoder, x);
}

// Decoder output: Bernoulli logits or Gaussian means.
template <class M>
M decoder_output(const BasicParams<M>& p, const std::type_identity_t<M>& z) {
  if (z.rows() != p.code_size() || z.cols() != 1) {
    throw DimensionError("decode: code must be " + std::to_string(p.code_size()) + "x1");
  }
  return forward(p.decoder, z);
}

// ln p(x | decoder output).
//   Bernoulli: sum_d x_d ln s(l_d) + (1 - x_d) ln(1 - s(l_d))
//   Gaussian:  sum_d -(x_d - m_d)^2 / (2 s2) - ln(2 pi s2) / 2
template <class M>
M log_prob(const Likelihood& lik, const M& out, const std::type_identity_t<M>& x) {
  require_same_shape(out, x, "log_prob");
  if (!primal(out).allFinite()) throw NumericalError("log_prob: non-finite decoder output");
  if (lik.kind == LikelihoodKind::kBernoulli) {
    const M one_minus_x = add_scalar(scale(-1.0, x), 1.0);
    return sum(hadamard(x, unary(Unary::kLogSigmoid, out)) +
               hadamard(one_minus_x, unary(Unary::kLogSigmoid, scale(-1.0, out))));
  }
  const M diff = x - out;
  const double d = static_cast<double>(x.rows());
  M result = add_scalar(scale(-0.5 / lik.sigma_out_sq, sum(hadamard(diff, diff))),
                    -0.5 * d * std::log(2.0 * std::numbers::pi * lik.sigma_out_sq));
  if (!std::isfinite(primal(result)(0, 0))) throw NumericalError("log_prob: non-finite result");
  return result;
}

// Mode of the likelihood: rounded sigmoid for Bernoulli, the mean for Gaussian.
Matrix likelihood_mode(const Likelihood& lik, const Matrix& out);

struct LikelihoodEval {
  double log_prob = 0.0;
  Matrix mode;
};

LikelihoodEval decode_loglik(const ModelParams& p, const Matrix& z, const Matrix& x);

// ln d(e(x)), memory bypassed.
template <class M>
M autoencoder_loglik(const BasicParams<M>& p, const std::type_identity_t<M>& x) {
  return log_prob<M>(p.likelihood, decoder_output(p, encode(p, x)), x);
}

template <class M>
M sigma_w_sq(const BasicParams<M>& p) {
  return unary(Unary::kExp, p.log_sigma_w_sq);
}

// p(M) = MN(R0, sigma_U^2 I, I).
template <class M>
BasicMemory<M> prior_memory(const BasicParams<M>& p) {
  const Index k = p.slots();
  const M identity = constant_like(p.R0, Matrix::Identity(k, k));
  return BasicMemory<M>{p.R0, scale(unary(Unary::kExp, p.log_sigma_U_sq), identity),
                        p.sigma_xi_sq};
}

struct EnergyTerms {
  double energy = 0.0;
  double recon = 0.0;  // -ln p(x | R^T mu_w)
  double kl_w = 0.0;
};

// E(x, w) = -ln p(x | w, M) + KL(q(w) || p(w)), with M at its mean R and w
// at mu_w.
EnergyTerms energy_terms(const ModelParams& p, const MemoryState& mem, const Matrix& x,
                         const AddressPosterior& q);
double energy(const ModelParams& p, const MemoryState& mem, const Matrix& x,
              const AddressPosterior& q);

}  // namespace dkm

#endif  // DKM_MODEL_HPP_
