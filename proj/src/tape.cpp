#include "dkm/tape.hpp"

#include <string>
#include <utility>

namespace dkm {

bool GradSink::wants(std::size_t id) const { return tape_.requires_grad(id); }

void GradSink::add(std::size_t id, const Matrix& g) {
  if (!tape_.requires_grad(id)) return;
  Matrix& slot = grads_[id];
  if (slot.size() == 0) {
    slot = g;
  } else {
    slot += g;
  }
}

const Matrix& GradSink::value(std::size_t id) const { return tape_.value(id); }

Var Tape::push(Matrix value, bool requires_grad, Backward backward) {
  if (!value.allFinite()) throw NumericalError("tape: non-finite value recorded");
  nodes_.push_back(Node{std::move(value), requires_grad, std::move(backward)});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) { return push(std::move(value), true, nullptr); }

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  bool requires_grad = false;
  for (const Var& in : inputs) {
    if (in.tape() != this) throw std::invalid_argument("tape: operand belongs to another tape");
    requires_grad = requires_grad || nodes_[in.id()].requires_grad;
  }
  return push(std::move(value), requires_grad, requires_grad ? std::move(backward) : nullptr);
}

Gradients Tape::backward(const Var& root) const {
  if (root.tape() != this) throw std::invalid_argument("backward: root belongs to another tape");
  const Matrix& root_value = value(root.id());
  if (root_value.rows() != 1 || root_value.cols() != 1) {
    throw DimensionError("backward: root must be 1x1, got " +
                         detail::shape(root_value.rows(), root_value.cols()));
  }
  std::vector<Matrix> grads(nodes_.size());
  grads[root.id()] = Matrix::Ones(1, 1);
  GradSink sink(*this, grads);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!node.backward || grads[i].size() == 0) continue;
    node.backward(grads[i], sink);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (grads[i].size() == 0) grads[i] = Matrix::Zero(nodes_[i].value.rows(), nodes_[i].value.cols());
  }
  return Gradients(std::move(grads));
}

namespace {

Tape& tape_of(const Var& a) {
  if (a.tape() == nullptr) throw std::invalid_argument("tape: uninitialized Var");
  return *a.tape();
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value() + b.value(), {a, b}, [ia, ib](const Matrix& g, GradSink& s) {
    s.add(ia, g);
    s.add(ib, g);
  });
}

Var operator-(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value() - b.value(), {a, b}, [ia, ib](const Matrix& g, GradSink& s) {
    s.add(ia, g);
    s.add(ib, -g);
  });
}

Var operator-(const Var& a) { return scale(-1.0, a); }

Var operator*(const Var& a, const Var& b) { return matmul(a, b); }

Var matmul(const Var& a, const Var& b) {
  require_product(a, b, "matmul");
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value() * b.value(), {a, b}, [ia, ib](const Matrix& g, GradSink& s) {
    if (s.wants(ia)) s.add(ia, g * s.value(ib).transpose());
    if (s.wants(ib)) s.add(ib, s.value(ia).transpose() * g);
  });
}

Var transpose(const Var& a) {
  const std::size_t ia = a.id();
  return tape_of(a).record(a.value().transpose(), {a},
                           [ia](const Matrix& g, GradSink& s) { s.add(ia, g.transpose()); });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value().cwiseProduct(b.value()), {a, b},
                           [ia, ib](const Matrix& g, GradSink& s) {
                             if (s.wants(ia)) s.add(ia, g.cwiseProduct(s.value(ib)));
                             if (s.wants(ib)) s.add(ib, g.cwiseProduct(s.value(ia)));
                           });
}

Var sum(const Var& a) {
  const std::size_t ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return tape_of(a).record(Matrix::Constant(1, 1, a.value().sum()), {a},
                           [ia, r, c](const Matrix& g, GradSink& s) {
                             s.add(ia, Matrix::Constant(r, c, g(0, 0)));
                           });
}

Var trace(const Var& a) {
  if (a.rows() != a.cols()) throw DimensionError("trace: matrix is not square");
  const std::size_t ia = a.id();
  const Index n = a.rows();
  return tape_of(a).record(Matrix::Constant(1, 1, a.value().trace()), {a},
                           [ia, n](const Matrix& g, GradSink& s) {
                             s.add(ia, g(0, 0) * Matrix::Identity(n, n));
                           });
}

Var scale(double factor, const Var& a) {
  const std::size_t ia = a.id();
  return tape_of(a).record(factor * a.value(), {a},
                           [ia, factor](const Matrix& g, GradSink& s) { s.add(ia, factor * g); });
}

Var scale(const Var& factor, const Var& a) {
  require_scalar(factor, "scale");
  const std::size_t is = factor.id(), ia = a.id();
  return tape_of(a).record(factor.value()(0, 0) * a.value(), {factor, a},
                           [is, ia](const Matrix& g, GradSink& s) {
                             if (s.wants(is)) {
                               s.add(is, Matrix::Constant(1, 1, g.cwiseProduct(s.value(ia)).sum()));
                             }
                             if (s.wants(ia)) s.add(ia, s.value(is)(0, 0) * g);
                           });
}

Var add_scalar(const Var& a, double value) {
  const std::size_t ia = a.id();
  return tape_of(a).record(dkm::add_scalar(a.value(), value), {a},
                           [ia](const Matrix& g, GradSink& s) { s.add(ia, g); });
}

Var add_diagonal(const Var& a, double value) {
  const std::size_t ia = a.id();
  return tape_of(a).record(dkm::add_diagonal(a.value(), value), {a},
                           [ia](const Matrix& g, GradSink& s) { s.add(ia, g); });
}

Var symmetrize(const Var& a) {
  const std::size_t ia = a.id();
  return tape_of(a).record(dkm::symmetrize(a.value()), {a}, [ia](const Matrix& g, GradSink& s) {
    s.add(ia, 0.5 * (g + g.transpose()));
  });
}

Var unary(Unary kind, const Var& a) {
  const std::size_t ia = a.id();
  Matrix out = dkm::unary(kind, a.value());
  const std::size_t out_id = tape_of(a).size();
  return tape_of(a).record(std::move(out), {a}, [ia, out_id, kind](const Matrix& g, GradSink& s) {
    const Matrix& x = s.value(ia);
    const Matrix& y = s.value(out_id);
    Matrix d(x.rows(), x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
      for (Index i = 0; i < x.rows(); ++i) d(i, j) = detail::unary_derivative(kind, x(i, j), y(i, j));
    }
    s.add(ia, g.cwiseProduct(d));
  });
}

Var solve_spd(const Var& a, const Var& b) {
  require_spd_operands(a.value(), b.value());
  Matrix lower = cholesky_lower(a.value());
  Matrix x = cholesky_solve(lower, b.value());
  const std::size_t ia = a.id(), ib = b.id();
  const std::size_t out_id = tape_of(a).size();
  return tape_of(a).record(std::move(x), {a, b},
                           [ia, ib, out_id, lower = std::move(lower)](const Matrix& g, GradSink& s) {
                             const Matrix gb = cholesky_solve(lower, g);
                             if (s.wants(ib)) s.add(ib, gb);
                             if (s.wants(ia)) {
                               const Matrix ga = -gb * s.value(out_id).transpose();
                               s.add(ia, 0.5 * (ga + ga.transpose()));
                             }
                           });
}

Var logdet_spd(const Var& a) {
  if (!is_symmetric(a.value())) throw DimensionError("logdet_spd: matrix is not symmetric");
  Matrix lower = cholesky_lower(a.value());
  Matrix out = Matrix::Constant(1, 1, 2.0 * lower.diagonal().array().log().sum());
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(out), {a},
                           [ia, lower = std::move(lower)](const Matrix& g, GradSink& s) {
                             const Index n = lower.rows();
                             const Matrix inv = cholesky_solve(lower, Matrix(Matrix::Identity(n, n)));
                             s.add(ia, g(0, 0) * dkm::symmetrize(inv));
                           });
}

Var constant_like(const Var& like, const Matrix& value) { return tape_of(like).constant(value); }

}  // namespace dkm
