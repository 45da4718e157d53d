#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass (define-by-run). Values
// are 2-D: scalars are 1x1, vectors are 1xK rows, batched quantities are
// B x n with one row per sequence. Binary element-wise operations broadcast
// along any extent equal to 1.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace dlm {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

std::string shape_string(const Matrix& m);
std::string shape_string(Index rows, Index cols);

// A trainable array. The gradient buffer is not part of the logical value of
// a parameter, so it stays writable through const references: a forward pass
// on a const model can still accumulate into it.
struct Parameter {
  std::string name;
  Matrix value;
  mutable Matrix grad;

  Parameter() = default;
  Parameter(std::string name, Matrix value);

  void zero_grad() const;
  Index size() const { return value.size(); }
};

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid as long as the Tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  // Gradient accumulated by the last backward pass; zeros if none reached it.
  Matrix grad() const;
  double item() const;
  Index rows() const;
  Index cols() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the gradient flowing into a node and distributes it to the
  // node's parents through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Matrix&)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var constant(double value);
  // Leaf whose gradient is kept on the tape and readable through Var::grad.
  Var variable(Matrix value);
  // Leaf bound to a parameter; backward() adds dL/dp into p.grad. Each
  // parameter maps to a single node per tape.
  Var param(const Parameter& p);

  // Reverse sweep from a 1x1 loss. Parameter gradients accumulate across
  // calls; intermediate node gradients are recomputed each call.
  void backward(Var loss);

  // Records an operation. Parents that do not require a gradient are skipped
  // during the reverse sweep; if none of them does, fn is dropped.
  Var record(Matrix value, const char* op, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(Matrix value, const char* op, std::span<const Var> parents, BackwardFn fn);

  bool grad_enabled() const { return grad_enabled_; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Matrix& value(std::size_t id) const;
  const Matrix* grad_if_any(std::size_t id) const;
  void accumulate(std::size_t id, const Matrix& g);
  std::size_t size() const { return nodes_.size(); }
  const char* op_name(std::size_t id) const { return nodes_[id].op; }

 private:
  struct Node {
    Matrix value;
    const Parameter* param = nullptr;
    Matrix grad;
    BackwardFn backward;
    std::vector<std::size_t> parents;
    const char* op = "";
    bool requires_grad = false;
    bool keep_grad = false;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool grad_enabled_;
};

// Element-wise arithmetic with broadcasting over unit extents.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double s);
Var operator+(double s, Var a);
Var operator-(Var a, double s);
Var operator-(double s, Var a);
Var operator*(Var a, double s);
Var operator*(double s, Var a);
Var operator/(Var a, double s);

Var neg(Var a);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var square(Var a);
Var softplus(Var a);

// Reductions.
Var sum(Var a);       // 1x1
Var mean(Var a);      // 1x1
Var sum_rows(Var a);  // rows x 1, sum of each row
Var sum_cols(Var a);  // 1 x cols, sum of each column

// Structure.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, Index begin, Index count);
// Row-wise outer product: out(b, j*K + k) = a(b, j) * c(b, k).
Var row_outer(Var a, Var c);
// Selects rows of a by index; gradient scatters back.
Var gather_rows(Var a, std::span<const std::size_t> rows);
Var stop_gradient(Var a);
// Forward value of `quantized`, gradient passed unchanged to `input`.
Var straight_through(Var input, Var quantized);

// Row-wise normalizers. Each row of a B x K input is an independent vector.
Var softmax(Var logits);
Var log_softmax(Var logits);
Var logsumexp(Var x);  // B x 1
// log_softmax over consecutive column blocks of width `group`.
Var log_softmax_groups(Var logits, Index group);

// Squared Euclidean distances between the rows of z (B x D) and the rows of
// e (K x D); out(b, k) = ||z_b - e_k||^2.
Var squared_distances(Var z, Var e);

// Fused LSTM cell. gate order in the 4H columns: input, forget, cell, output.
// Returns [h | c] as a B x 2H node.
Var lstm_cell(Var x, Var h, Var c, Var w_input, Var w_hidden, Var bias);

}  // namespace dlm
