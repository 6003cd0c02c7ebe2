#ifndef DKM_LINALG_HPP_
#define DKM_LINALG_HPP_

// Dense kernel shared by the plain (Eigen) and the recorded (tape) code
// paths. Every model routine is written against the free functions below,
// so it can be instantiated with `MatrixX<Scalar>` for evaluation or with
// `Var` for reverse-mode differentiation. Scalars travel as 1x1 matrices.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "dkm/errors.hpp"

namespace dkm {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

enum class Unary { kSigmoid, kTanh, kRelu, kLog, kExp, kReciprocal, kLogSigmoid };

// Probabilities inside Bernoulli log terms are confined to [1e-7, 1 - 1e-7].
inline const double kLogProbFloor = std::log(1e-7);
inline const double kLogProbCeil = std::log1p(-1e-7);

namespace detail {

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar log_sigmoid_raw(Scalar x) {
  return std::min(x, Scalar(0)) - std::log1p(std::exp(-std::abs(x)));
}

template <typename Scalar>
Scalar unary_value(Unary kind, Scalar x) {
  switch (kind) {
    case Unary::kSigmoid: return sigmoid(x);
    case Unary::kTanh: return std::tanh(x);
    case Unary::kRelu: return x > 0 ? x : Scalar(0);
    case Unary::kLog: return std::log(x);
    case Unary::kExp: return std::exp(x);
    case Unary::kReciprocal: return Scalar(1) / x;
    case Unary::kLogSigmoid:
      return std::clamp(log_sigmoid_raw(x), Scalar(kLogProbFloor), Scalar(kLogProbCeil));
  }
  return x;
}

// Derivative of the elementwise map at input `x` with output `y`.
template <typename Scalar>
Scalar unary_derivative(Unary kind, Scalar x, Scalar y) {
  switch (kind) {
    case Unary::kSigmoid: return y * (Scalar(1) - y);
    case Unary::kTanh: return Scalar(1) - y * y;
    case Unary::kRelu: return x > 0 ? Scalar(1) : Scalar(0);
    case Unary::kLog: return Scalar(1) / x;
    case Unary::kExp: return y;
    case Unary::kReciprocal: return -y * y;
    case Unary::kLogSigmoid: {
      const Scalar raw = log_sigmoid_raw(x);
      if (raw < Scalar(kLogProbFloor) || raw > Scalar(kLogProbCeil)) return Scalar(0);
      return sigmoid(-x);
    }
  }
  return Scalar(0);
}

inline const char* unary_name(Unary kind) {
  switch (kind) {
    case Unary::kSigmoid: return "sigmoid";
    case Unary::kTanh: return "tanh";
    case Unary::kRelu: return "relu";
    case Unary::kLog: return "log";
    case Unary::kExp: return "exp";
    case Unary::kReciprocal: return "reciprocal";
    case Unary::kLogSigmoid: return "log_sigmoid";
  }
  return "?";
}

inline std::string shape(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace detail

template <typename A, typename B>
void require_same_shape(const A& a, const B& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape " + detail::shape(a.rows(), a.cols()) +
                         " vs " + detail::shape(b.rows(), b.cols()));
  }
}

template <typename A, typename B>
void require_product(const A& a, const B& b, const char* op) {
  if (a.cols() != b.rows()) {
    throw DimensionError(std::string(op) + ": cannot multiply " +
                         detail::shape(a.rows(), a.cols()) + " by " +
                         detail::shape(b.rows(), b.cols()));
  }
}

template <typename A>
void require_scalar(const A& a, const char* op) {
  if (a.rows() != 1 || a.cols() != 1) {
    throw DimensionError(std::string(op) + ": expected 1x1, got " +
                         detail::shape(a.rows(), a.cols()));
  }
}

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& a, double tolerance = 1e-10) {
  using Scalar = typename Derived::Scalar;
  if (a.rows() != a.cols()) return false;
  if (a.size() == 0) return true;
  const Scalar scale = std::max(Scalar(1), a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= Scalar(tolerance) * scale;
}

// Unpivoted Cholesky, lower factor. Throws NotPositiveDefinite with the
// 1-based order of the first failing leading minor.
template <typename Derived>
MatrixX<typename Derived::Scalar> cholesky_lower(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  if (a.rows() != a.cols()) {
    throw DimensionError("cholesky: matrix is " + detail::shape(a.rows(), a.cols()));
  }
  const Index n = a.rows();
  MatrixX<Scalar> l = MatrixX<Scalar>::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    const Scalar d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > Scalar(0))) throw NotPositiveDefinite(static_cast<std::size_t>(j + 1));
    const Scalar pivot = std::sqrt(d);
    l(j, j) = pivot;
    for (Index i = j + 1; i < n; ++i) {
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / pivot;
    }
  }
  return l;
}

template <typename Scalar, typename Derived>
MatrixX<Scalar> cholesky_solve(const MatrixX<Scalar>& lower, const Eigen::MatrixBase<Derived>& b) {
  MatrixX<Scalar> y = lower.template triangularView<Eigen::Lower>().solve(b);
  return lower.transpose().template triangularView<Eigen::Upper>().solve(y);
}

template <typename DA, typename DB>
void require_spd_operands(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  if (a.rows() != a.cols()) {
    throw DimensionError("solve_spd: system matrix is " + detail::shape(a.rows(), a.cols()));
  }
  require_product(a, b, "solve_spd");
  if (!is_symmetric(a)) throw DimensionError("solve_spd: system matrix is not symmetric");
}

// X with A X = B for symmetric positive definite A.
template <typename DA, typename DB>
MatrixX<typename DA::Scalar> solve_spd(const Eigen::MatrixBase<DA>& a,
                                       const Eigen::MatrixBase<DB>& b) {
  require_spd_operands(a, b);
  return cholesky_solve(cholesky_lower(a), b);
}

template <typename Derived>
MatrixX<typename Derived::Scalar> logdet_spd(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  if (!is_symmetric(a)) throw DimensionError("logdet_spd: matrix is not symmetric");
  const MatrixX<Scalar> l = cholesky_lower(a);
  return MatrixX<Scalar>::Constant(1, 1, Scalar(2) * l.diagonal().array().log().sum());
}

template <typename Derived>
void require_unary_domain(Unary kind, const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  if (kind != Unary::kLog && kind != Unary::kReciprocal) return;
  // Row-major flat index, matching the on-disk layout.
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      const Scalar v = a(i, j);
      const bool bad = kind == Unary::kLog ? !(v > Scalar(0)) : v == Scalar(0);
      if (bad) {
        throw DomainError(std::string(detail::unary_name(kind)) + ": argument out of domain",
                          static_cast<std::size_t>(i * a.cols() + j));
      }
    }
  }
}

template <typename Derived>
MatrixX<typename Derived::Scalar> unary(Unary kind, const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  require_unary_domain(kind, a);
  return a.unaryExpr([kind](Scalar v) { return detail::unary_value(kind, v); });
}

template <typename Derived>
MatrixX<typename Derived::Scalar> transpose(const Eigen::MatrixBase<Derived>& a) {
  return a.transpose();
}

template <typename DA, typename DB>
MatrixX<typename DA::Scalar> hadamard(const Eigen::MatrixBase<DA>& a,
                                      const Eigen::MatrixBase<DB>& b) {
  require_same_shape(a, b, "hadamard");
  return a.cwiseProduct(b);
}

template <typename Derived>
MatrixX<typename Derived::Scalar> sum(const Eigen::MatrixBase<Derived>& a) {
  return MatrixX<typename Derived::Scalar>::Constant(1, 1, a.sum());
}

template <typename Derived>
MatrixX<typename Derived::Scalar> trace(const Eigen::MatrixBase<Derived>& a) {
  if (a.rows() != a.cols()) throw DimensionError("trace: matrix is not square");
  return MatrixX<typename Derived::Scalar>::Constant(1, 1, a.trace());
}

template <typename Derived>
MatrixX<typename Derived::Scalar> scale(double factor, const Eigen::MatrixBase<Derived>& a) {
  return typename Derived::Scalar(factor) * a;
}

// `factor` is 1x1.
template <typename DF, typename DA>
MatrixX<typename DA::Scalar> scale(const Eigen::MatrixBase<DF>& factor,
                                   const Eigen::MatrixBase<DA>& a) {
  require_scalar(factor, "scale");
  return factor(0, 0) * a;
}

template <typename Derived>
MatrixX<typename Derived::Scalar> add_scalar(const Eigen::MatrixBase<Derived>& a, double value) {
  return a.array() + typename Derived::Scalar(value);
}

template <typename Derived>
MatrixX<typename Derived::Scalar> add_diagonal(const Eigen::MatrixBase<Derived>& a, double value) {
  if (a.rows() != a.cols()) throw DimensionError("add_diagonal: matrix is not square");
  MatrixX<typename Derived::Scalar> out = a;
  out.diagonal().array() += typename Derived::Scalar(value);
  return out;
}

template <typename Derived>
MatrixX<typename Derived::Scalar> symmetrize(const Eigen::MatrixBase<Derived>& a) {
  if (a.rows() != a.cols()) throw DimensionError("symmetrize: matrix is not square");
  return typename Derived::Scalar(0.5) * (a + a.transpose());
}

template <typename DA, typename DB>
MatrixX<typename DA::Scalar> matmul(const Eigen::MatrixBase<DA>& a,
                                    const Eigen::MatrixBase<DB>& b) {
  require_product(a, b, "matmul");
  return a * b;
}

// A value of the same kind as `like` holding `value` (tape constant or plain).
template <typename Derived>
MatrixX<typename Derived::Scalar> constant_like(const Eigen::MatrixBase<Derived>&,
                                                const Matrix& value) {
  return value.template cast<typename Derived::Scalar>();
}

template <typename Scalar>
const MatrixX<Scalar>& primal(const MatrixX<Scalar>& a) {
  return a;
}

inline double scalar(const Matrix& a) {
  require_scalar(a, "scalar");
  return a(0, 0);
}

}  // namespace dkm

#endif  // DKM_LINALG_HPP_
