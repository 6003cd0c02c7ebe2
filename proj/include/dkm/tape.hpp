#ifndef DKM_TAPE_HPP_
#define DKM_TAPE_HPP_

// Reverse-mode differentiation over dense double matrices.
//
// A Tape owns an append-only list of nodes. Each node caches its forward
// value and, when any of its inputs needs a gradient, a closure that maps the
// node's output gradient onto its inputs. Because nodes can only reference
// earlier nodes, insertion order is a topological order and the backward pass
// is a single sweep in reverse.
//
// `Var` is a lightweight handle (tape pointer + node id). The free functions
// at the bottom mirror the plain-matrix vocabulary in linalg.hpp so model
// code can be instantiated with either.

#include <cstddef>
#include <functional>
#include <vector>

#include "dkm/linalg.hpp"

namespace dkm {

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Gradients {
 public:
  // Gradient of the root with respect to `v`; zeros when `v` does not
  // influence the root.
  const Matrix& operator[](const Var& v) const { return grads_.at(v.id()); }
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  explicit Gradients(std::vector<Matrix> grads) : grads_(std::move(grads)) {}
  std::vector<Matrix> grads_;
};

// Accumulates contributions into input gradients during the backward pass.
class GradSink {
 public:
  GradSink(const Tape& tape, std::vector<Matrix>& grads) : tape_(tape), grads_(grads) {}
  bool wants(std::size_t id) const;
  void add(std::size_t id, const Matrix& g);
  const Matrix& value(std::size_t id) const;

 private:
  const Tape& tape_;
  std::vector<Matrix>& grads_;
};

class Tape {
 public:
  using Backward = std::function<void(const Matrix& upstream, GradSink& sink)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf whose gradient is tracked.
  Var variable(Matrix value);
  // Leaf treated as a constant.
  Var constant(Matrix value);

  // Appends a node computed from `inputs`. `backward` is dropped when no
  // input requires a gradient. Throws NumericalError on non-finite values.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);

  // Reverse sweep from a 1x1 root. Accumulators start at zero on every call.
  Gradients backward(const Var& root) const;

  const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    bool requires_grad = false;
    Backward backward;
  };
  Var push(Matrix value, bool requires_grad, Backward backward);

  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(const Var& a, const Var& b);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var hadamard(const Var& a, const Var& b);
Var sum(const Var& a);
Var trace(const Var& a);
Var scale(double factor, const Var& a);
Var scale(const Var& factor, const Var& a);
Var add_scalar(const Var& a, double value);
Var add_diagonal(const Var& a, double value);
Var symmetrize(const Var& a);
Var unary(Unary kind, const Var& a);
// Reverse rule: dB = A^-1 G, dA = -sym(dB X^T).
Var solve_spd(const Var& a, const Var& b);
Var logdet_spd(const Var& a);

Var constant_like(const Var& like, const Matrix& value);
inline const Matrix& primal(const Var& a) { return a.value(); }

}  // namespace dkm

#endif  // DKM_TAPE_HPP_
