#include "dlm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dlm/error.hpp"

namespace dlm {

std::string shape_string(Index rows, Index cols) {
  std::ostringstream os;
  os << '[' << rows << 'x' << cols << ']';
  return os.str();
}

std::string shape_string(const Matrix& m) { return shape_string(m.rows(), m.cols()); }

Parameter::Parameter(std::string name, Matrix value)
    : name(std::move(name)), value(std::move(value)), grad(Matrix::Zero(this->value.rows(), this->value.cols())) {}

void Parameter::zero_grad() const { grad.setZero(value.rows(), value.cols()); }

// ---------------------------------------------------------------------------
// Var / Tape

const Matrix& Var::value() const { return tape_->value(id_); }

Matrix Var::grad() const {
  const Matrix* g = tape_->grad_if_any(id_);
  if (g != nullptr) return *g;
  const Matrix& v = value();
  return Matrix::Zero(v.rows(), v.cols());
}

double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw DimensionError("item() on non-scalar " + shape_string(v));
  return v(0, 0);
}

Index Var::rows() const { return value().rows(); }
Index Var::cols() const { return value().cols(); }

const Matrix& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.param != nullptr ? n.param->value : n.value;
}

const Matrix* Tape::grad_if_any(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.grad.size() == 0 ? nullptr : &n.grad;
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  return push(std::move(n));
}

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::variable(Matrix value) {
  if (!value.allFinite()) throw NumericError("variable: non-finite leaf value");
  Node n;
  n.value = std::move(value);
  n.op = "variable";
  n.requires_grad = grad_enabled_;
  n.keep_grad = true;
  return push(std::move(n));
}

Var Tape::param(const Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.param = &p;
  n.op = "parameter";
  n.requires_grad = grad_enabled_;
  Var v = push(std::move(n));
  param_nodes_.emplace(&p, v.id());
  return v;
}

Var Tape::record(Matrix value, const char* op, std::initializer_list<Var> parents, BackwardFn fn) {
  return record(std::move(value), op, std::span<const Var>(parents.begin(), parents.size()), std::move(fn));
}

Var Tape::record(Matrix value, const char* op, std::span<const Var> parents, BackwardFn fn) {
  if (!value.allFinite()) {
    throw NumericError(std::string("non-finite value produced by op '") + op + "' at node " +
                       std::to_string(nodes_.size()));
  }
  Node n;
  n.value = std::move(value);
  n.op = op;
  if (grad_enabled_) {
    for (const Var& p : parents) {
      if (nodes_[p.id()].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
  }
  if (n.requires_grad) {
    n.backward = std::move(fn);
    n.parents.reserve(parents.size());
    for (const Var& p : parents) n.parents.push_back(p.id());
  }
  return push(std::move(n));
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ContractError("backward: loss belongs to another tape");
  const Matrix& lv = value(loss.id());
  if (lv.size() != 1) throw ContractError("backward: loss must be scalar, got " + shape_string(lv));
  for (Node& n : nodes_) {
    if (!n.keep_grad) n.grad.resize(0, 0);
  }
  if (!nodes_[loss.id()].requires_grad) return;
  accumulate(loss.id(), Matrix::Ones(1, 1));

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) {
      n.backward(*this, n.grad);
      for (std::size_t p : n.parents) {
        const Matrix& pg = nodes_[p].grad;
        if (pg.size() != 0 && !pg.allFinite()) {
          throw NumericError(std::string("non-finite gradient from op '") + n.op + "' at node " +
                             std::to_string(i));
        }
      }
    }
    if (n.param != nullptr) {
      const Parameter& p = *n.param;
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
      p.grad += n.grad;
    }
  }
}

// ---------------------------------------------------------------------------
// Broadcasting helpers

namespace {

Index broadcast_extent(Index a, Index b, const char* op, const Matrix& ma, const Matrix& mb) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(ma) + " with " + shape_string(mb));
}

Matrix expand(const Matrix& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Matrix r = g;
  if (rows == 1 && r.rows() != 1) r = r.colwise().sum().eval();
  if (cols == 1 && r.cols() != 1) r = r.rowwise().sum().eval();
  return r;
}

enum class BinaryKind { add, sub, mul, div };

Var binary(Var a, Var b, BinaryKind kind, const char* op) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands on different tapes");
  Tape& t = a.tape();
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const Index rows = broadcast_extent(av.rows(), bv.rows(), op, av, bv);
  const Index cols = broadcast_extent(av.cols(), bv.cols(), op, av, bv);
  const bool same = av.rows() == bv.rows() && av.cols() == bv.cols();
  Matrix ea = same ? Matrix() : expand(av, rows, cols);
  Matrix eb = same ? Matrix() : expand(bv, rows, cols);
  const Matrix& xa = same ? av : ea;
  const Matrix& xb = same ? bv : eb;

  Matrix out;
  switch (kind) {
    case BinaryKind::add: out = xa + xb; break;
    case BinaryKind::sub: out = xa - xb; break;
    case BinaryKind::mul: out = xa.cwiseProduct(xb); break;
    case BinaryKind::div:
      if ((xb.array() == 0.0).any()) throw DomainError("div: division by zero");
      out = xa.cwiseQuotient(xb);
      break;
  }

  const std::size_t ia = a.id(), ib = b.id();
  const Index ar = av.rows(), ac = av.cols(), br = bv.rows(), bc = bv.cols();
  return t.record(std::move(out), op, {a, b}, [=](Tape& tp, const Matrix& g) {
    const bool need_a = tp.requires_grad(ia), need_b = tp.requires_grad(ib);
    switch (kind) {
      case BinaryKind::add:
        if (need_a) tp.accumulate(ia, reduce_to(g, ar, ac));
        if (need_b) tp.accumulate(ib, reduce_to(g, br, bc));
        break;
      case BinaryKind::sub:
        if (need_a) tp.accumulate(ia, reduce_to(g, ar, ac));
        if (need_b) tp.accumulate(ib, reduce_to(-g, br, bc));
        break;
      case BinaryKind::mul: {
        if (need_a) tp.accumulate(ia, reduce_to(g.cwiseProduct(expand(tp.value(ib), g.rows(), g.cols())), ar, ac));
        if (need_b) tp.accumulate(ib, reduce_to(g.cwiseProduct(expand(tp.value(ia), g.rows(), g.cols())), br, bc));
        break;
      }
      case BinaryKind::div: {
        Matrix xb2 = expand(tp.value(ib), g.rows(), g.cols());
        if (need_a) tp.accumulate(ia, reduce_to(g.cwiseQuotient(xb2), ar, ac));
        if (need_b) {
          Matrix xa2 = expand(tp.value(ia), g.rows(), g.cols());
          Matrix d = -(g.array() * xa2.array() / (xb2.array() * xb2.array())).matrix();
          tp.accumulate(ib, reduce_to(d, br, bc));
        }
        break;
      }
    }
  });
}

template <typename Forward, typename Local>
Var unary(Var a, const char* op, Forward forward, Local local_grad) {
  Tape& t = a.tape();
  Matrix out = forward(a.value());
  const std::size_t ia = a.id();
  const std::size_t iout = t.size();
  return t.record(std::move(out), op, {a}, [=](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, local_grad(tp.value(ia), tp.value(iout), g));
  });
}

Matrix row_softmax(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Eigen::VectorXd row_logsumexp(const Matrix& x) {
  Eigen::VectorXd out(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out(r) = m + std::log((x.row(r).array() - m).exp().sum());
  }
  return out;
}

void require_nonempty(const Matrix& m, const char* op) {
  if (m.size() == 0) throw DimensionError(std::string(op) + ": empty input " + shape_string(m));
}

}  // namespace

// ---------------------------------------------------------------------------
// Element-wise

Var add(Var a, Var b) { return binary(a, b, BinaryKind::add, "add"); }
Var sub(Var a, Var b) { return binary(a, b, BinaryKind::sub, "sub"); }
Var mul(Var a, Var b) { return binary(a, b, BinaryKind::mul, "mul"); }
Var div(Var a, Var b) { return binary(a, b, BinaryKind::div, "div"); }

Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }
Var operator*(Var a, Var b) { return mul(a, b); }
Var operator/(Var a, Var b) { return div(a, b); }
Var operator-(Var a) { return neg(a); }
Var operator+(Var a, double s) { return add(a, a.tape().constant(s)); }
Var operator+(double s, Var a) { return add(a.tape().constant(s), a); }
Var operator-(Var a, double s) { return sub(a, a.tape().constant(s)); }
Var operator-(double s, Var a) { return sub(a.tape().constant(s), a); }
Var operator*(Var a, double s) { return mul(a, a.tape().constant(s)); }
Var operator*(double s, Var a) { return mul(a.tape().constant(s), a); }
Var operator/(Var a, double s) { return div(a, a.tape().constant(s)); }

Var neg(Var a) {
  return unary(
      a, "neg", [](const Matrix& x) -> Matrix { return -x; },
      [](const Matrix&, const Matrix&, const Matrix& g) -> Matrix { return -g; });
}

Var exp(Var a) {
  return unary(
      a, "exp", [](const Matrix& x) -> Matrix { return x.array().exp().matrix(); },
      [](const Matrix&, const Matrix& y, const Matrix& g) -> Matrix { return g.cwiseProduct(y); });
}

Var log(Var a) {
  if ((a.value().array() <= 0.0).any()) throw DomainError("log: non-positive operand");
  return unary(
      a, "log", [](const Matrix& x) -> Matrix { return x.array().log().matrix(); },
      [](const Matrix& x, const Matrix&, const Matrix& g) -> Matrix { return g.cwiseQuotient(x); });
}

Var tanh(Var a) {
  return unary(
      a, "tanh", [](const Matrix& x) -> Matrix { return x.array().tanh().matrix(); },
      [](const Matrix&, const Matrix& y, const Matrix& g) -> Matrix {
        return (g.array() * (1.0 - y.array().square())).matrix();
      });
}

namespace {
double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Var sigmoid(Var a) {
  return unary(
      a, "sigmoid", [](const Matrix& x) -> Matrix { return x.unaryExpr(&stable_sigmoid); },
      [](const Matrix&, const Matrix& y, const Matrix& g) -> Matrix {
        return (g.array() * y.array() * (1.0 - y.array())).matrix();
      });
}

Var square(Var a) {
  return unary(
      a, "square", [](const Matrix& x) -> Matrix { return x.array().square().matrix(); },
      [](const Matrix& x, const Matrix&, const Matrix& g) -> Matrix { return 2.0 * g.cwiseProduct(x); });
}

Var softplus(Var a) {
  return unary(
      a, "softplus",
      [](const Matrix& x) -> Matrix {
        return x.unaryExpr([](double v) { return std::log1p(std::exp(-std::abs(v))) + std::max(v, 0.0); });
      },
      [](const Matrix& x, const Matrix&, const Matrix& g) -> Matrix {
        return g.cwiseProduct(x.unaryExpr(&stable_sigmoid));
      });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(Var a) {
  const std::size_t ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return a.tape().record(Matrix::Constant(1, 1, a.value().sum()), "sum", {a}, [=](Tape& t, const Matrix& g) {
    t.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
  });
}

Var mean(Var a) {
  require_nonempty(a.value(), "mean");
  return sum(a) / static_cast<double>(a.value().size());
}

Var sum_rows(Var a) {
  const std::size_t ia = a.id();
  const Index c = a.cols();
  Matrix out = a.value().rowwise().sum();
  return a.tape().record(std::move(out), "sum_rows", {a}, [=](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.replicate(1, c));
  });
}

Var sum_cols(Var a) {
  const std::size_t ia = a.id();
  const Index r = a.rows();
  Matrix out = a.value().colwise().sum();
  return a.tape().record(std::move(out), "sum_cols", {a}, [=](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.replicate(r, 1));
  });
}

// ---------------------------------------------------------------------------
// Structure

Var matmul(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(av) + " x " + shape_string(bv));
  }
  Matrix out = av * bv;
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), "matmul", {a, b}, [=](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var transpose(Var a) {
  const std::size_t ia = a.id();
  return a.tape().record(a.value().transpose(), "transpose", {a}, [=](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.transpose());
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts.front().value()) + " vs " +
                           shape_string(p.value()));
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<Index> widths;
  Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  return parts.front().tape().record(std::move(out), "concat_cols", parts, [=](Tape& t, const Matrix& g) {
    Index off = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (t.requires_grad(ids[i])) t.accumulate(ids[i], g.middleCols(off, widths[i]));
      off += widths[i];
    }
  });
}

Var slice_cols(Var a, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_string(a.value()));
  }
  const std::size_t ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return a.tape().record(a.value().middleCols(begin, count), "slice_cols", {a}, [=](Tape& t, const Matrix& g) {
    Matrix d = Matrix::Zero(r, c);
    d.middleCols(begin, count) = g;
    t.accumulate(ia, d);
  });
}

Var row_outer(Var a, Var c) {
  const Matrix& av = a.value();
  const Matrix& cv = c.value();
  if (av.rows() != cv.rows()) {
    throw DimensionError("row_outer: row mismatch " + shape_string(av) + " vs " + shape_string(cv));
  }
  const Index ka = av.cols(), kc = cv.cols();
  Matrix out(av.rows(), ka * kc);
  for (Index b = 0; b < av.rows(); ++b) {
    for (Index j = 0; j < ka; ++j) out.row(b).segment(j * kc, kc) = av(b, j) * cv.row(b);
  }
  const std::size_t ia = a.id(), ic = c.id();
  return a.tape().record(std::move(out), "row_outer", {a, c}, [=](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(ia);
    const Matrix& y = t.value(ic);
    Matrix da = Matrix::Zero(x.rows(), ka);
    Matrix dc = Matrix::Zero(y.rows(), kc);
    for (Index b = 0; b < x.rows(); ++b) {
      for (Index j = 0; j < ka; ++j) {
        auto block = g.row(b).segment(j * kc, kc);
        da(b, j) = block.dot(y.row(b));
        dc.row(b) += x(b, j) * block;
      }
    }
    if (t.requires_grad(ia)) t.accumulate(ia, da);
    if (t.requires_grad(ic)) t.accumulate(ic, dc);
  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Matrix& av = a.value();
  Matrix out(static_cast<Index>(rows.size()), av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Index>(rows[i]) >= av.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(rows[i]) + " outside " + shape_string(av));
    }
    out.row(static_cast<Index>(i)) = av.row(static_cast<Index>(rows[i]));
  }
  const std::size_t ia = a.id();
  const Index r = av.rows(), c = av.cols();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return a.tape().record(std::move(out), "gather_rows", {a}, [=](Tape& t, const Matrix& g) {
    Matrix d = Matrix::Zero(r, c);
    for (std::size_t i = 0; i < idx.size(); ++i) d.row(static_cast<Index>(idx[i])) += g.row(static_cast<Index>(i));
    t.accumulate(ia, d);
  });
}

Var stop_gradient(Var a) { return a.tape().constant(a.value()); }

Var straight_through(Var input, Var quantized) {
  if (input.rows() != quantized.rows() || input.cols() != quantized.cols()) {
    throw DimensionError("straight_through: " + shape_string(input.value()) + " vs " +
                         shape_string(quantized.value()));
  }
  const std::size_t ii = input.id();
  return input.tape().record(quantized.value(), "straight_through", {input},
                             [=](Tape& t, const Matrix& g) { t.accumulate(ii, g); });
}

// ---------------------------------------------------------------------------
// Normalizers

Var softmax(Var logits) {
  require_nonempty(logits.value(), "softmax");
  Matrix s = row_softmax(logits.value());
  const std::size_t ia = logits.id();
  const std::size_t iout = logits.tape().size();
  return logits.tape().record(std::move(s), "softmax", {logits}, [=](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(iout);
    Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Matrix d = y.array() * (g.colwise() - dot).array();
    t.accumulate(ia, d);
  });
}

Var log_softmax(Var logits) { return log_softmax_groups(logits, logits.cols()); }

Var logsumexp(Var x) {
  require_nonempty(x.value(), "logsumexp");
  Matrix out = row_logsumexp(x.value());
  const std::size_t ia = x.id();
  return x.tape().record(std::move(out), "logsumexp", {x}, [=](Tape& t, const Matrix& g) {
    Matrix s = row_softmax(t.value(ia));
    t.accumulate(ia, s.array().colwise() * g.col(0).array());
  });
}

Var log_softmax_groups(Var logits, Index group) {
  const Matrix& x = logits.value();
  require_nonempty(x, "log_softmax");
  if (group <= 0 || x.cols() % group != 0) {
    throw DimensionError("log_softmax_groups: width " + std::to_string(x.cols()) + " not a multiple of " +
                         std::to_string(group));
  }
  const Index groups = x.cols() / group;
  Matrix out(x.rows(), x.cols());
  for (Index j = 0; j < groups; ++j) {
    Matrix block = x.middleCols(j * group, group);
    out.middleCols(j * group, group) = block.colwise() - row_logsumexp(block);
  }
  const std::size_t ia = logits.id();
  const std::size_t iout = logits.tape().size();
  return logits.tape().record(std::move(out), "log_softmax", {logits}, [=](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(iout);
    Matrix d(g.rows(), g.cols());
    for (Index j = 0; j < groups; ++j) {
      auto gb = g.middleCols(j * group, group);
      Eigen::VectorXd total = gb.rowwise().sum();
      d.middleCols(j * group, group) = gb - (y.middleCols(j * group, group).array().exp().colwise() * total.array()).matrix();
    }
    t.accumulate(ia, d);
  });
}

// ---------------------------------------------------------------------------
// Fused kernels

Var squared_distances(Var z, Var e) {
  const Matrix& zv = z.value();
  const Matrix& ev = e.value();
  if (zv.cols() != ev.cols()) {
    throw DimensionError("squared_distances: code dimension differs, " + shape_string(zv) + " vs " +
                         shape_string(ev));
  }
  Matrix out(zv.rows(), ev.rows());
  for (Index b = 0; b < zv.rows(); ++b) {
    for (Index k = 0; k < ev.rows(); ++k) out(b, k) = (zv.row(b) - ev.row(k)).squaredNorm();
  }
  const std::size_t iz = z.id(), ie = e.id();
  return z.tape().record(std::move(out), "squared_distances", {z, e}, [=](Tape& t, const Matrix& g) {
    const Matrix& zz = t.value(iz);
    const Matrix& ee = t.value(ie);
    if (t.requires_grad(iz)) {
      Matrix dz = 2.0 * ((zz.array().colwise() * g.rowwise().sum().array()).matrix() - g * ee);
      t.accumulate(iz, dz);
    }
    if (t.requires_grad(ie)) {
      Eigen::RowVectorXd colsum = g.colwise().sum();
      Matrix de = -2.0 * (g.transpose() * zz - (ee.array().colwise() * colsum.transpose().array()).matrix());
      t.accumulate(ie, de);
    }
  });
}

Var lstm_cell(Var x, Var h, Var c, Var w_input, Var w_hidden, Var bias) {
  const Matrix& xv = x.value();
  const Matrix& hv = h.value();
  const Matrix& cv = c.value();
  const Index hidden = hv.cols();
  if (w_input.rows() != xv.cols() || w_input.cols() != 4 * hidden || w_hidden.rows() != hidden ||
      w_hidden.cols() != 4 * hidden || bias.cols() != 4 * hidden || cv.cols() != hidden || hv.rows() != xv.rows() ||
      cv.rows() != xv.rows()) {
    throw DimensionError("lstm_cell: inconsistent shapes x" + shape_string(xv) + " h" + shape_string(hv) + " c" +
                         shape_string(cv) + " W_in" + shape_string(w_input.value()) + " W_hid" +
                         shape_string(w_hidden.value()));
  }
  Matrix gates = xv * w_input.value() + hv * w_hidden.value();
  gates.rowwise() += bias.value().row(0);
  auto act = gates.array();
  act.leftCols(2 * hidden) = act.leftCols(2 * hidden).unaryExpr(&stable_sigmoid);
  act.middleCols(2 * hidden, hidden) = act.middleCols(2 * hidden, hidden).tanh();
  act.rightCols(hidden) = act.rightCols(hidden).unaryExpr(&stable_sigmoid);

  Matrix out(xv.rows(), 2 * hidden);
  auto i_gate = gates.leftCols(hidden).array();
  auto f_gate = gates.middleCols(hidden, hidden).array();
  auto g_gate = gates.middleCols(2 * hidden, hidden).array();
  auto o_gate = gates.rightCols(hidden).array();
  Matrix c_next = (f_gate * cv.array() + i_gate * g_gate).matrix();
  out.rightCols(hidden) = c_next;
  out.leftCols(hidden) = (o_gate * c_next.array().tanh()).matrix();

  Tape& t = x.tape();
  const bool needs = t.grad_enabled() && (t.requires_grad(x.id()) || t.requires_grad(h.id()) ||
                                          t.requires_grad(c.id()) || t.requires_grad(w_input.id()) ||
                                          t.requires_grad(w_hidden.id()) || t.requires_grad(bias.id()));
  if (!needs) return t.record(std::move(out), "lstm_cell", {x, h, c, w_input, w_hidden, bias}, nullptr);

  const std::size_t ix = x.id(), ih = h.id(), ic = c.id(), iwi = w_input.id(), iwh = w_hidden.id(), ib = bias.id();
  return t.record(std::move(out), "lstm_cell", {x, h, c, w_input, w_hidden, bias},
                  [=, gates = std::move(gates), c_next = std::move(c_next)](Tape& tp, const Matrix& g) {
                    auto gi = gates.leftCols(hidden).array();
                    auto gf = gates.middleCols(hidden, hidden).array();
                    auto gg = gates.middleCols(2 * hidden, hidden).array();
                    auto go = gates.rightCols(hidden).array();
                    Eigen::ArrayXXd tc = c_next.array().tanh();
                    auto grad_h = g.leftCols(hidden).array();
                    Eigen::ArrayXXd grad_c = g.rightCols(hidden).array() + grad_h * go * (1.0 - tc.square());

                    Matrix dpre(gates.rows(), 4 * hidden);
                    dpre.leftCols(hidden) = (grad_c * gg * gi * (1.0 - gi)).matrix();
                    dpre.middleCols(hidden, hidden) = (grad_c * tp.value(ic).array() * gf * (1.0 - gf)).matrix();
                    dpre.middleCols(2 * hidden, hidden) = (grad_c * gi * (1.0 - gg.square())).matrix();
                    dpre.rightCols(hidden) = (grad_h * tc * go * (1.0 - go)).matrix();

                    if (tp.requires_grad(ix)) tp.accumulate(ix, dpre * tp.value(iwi).transpose());
                    if (tp.requires_grad(ih)) tp.accumulate(ih, dpre * tp.value(iwh).transpose());
                    if (tp.requires_grad(ic)) tp.accumulate(ic, (grad_c * gf).matrix());
                    if (tp.requires_grad(iwi)) tp.accumulate(iwi, tp.value(ix).transpose() * dpre);
                    if (tp.requires_grad(iwh)) tp.accumulate(iwh, tp.value(ih).transpose() * dpre);
                    if (tp.requires_grad(ib)) tp.accumulate(ib, dpre.colwise().sum());
                  });
}

}  // namespace dlm
