#include "dlm/sequence_nets.hpp"

#include <cmath>

#include "dlm/error.hpp"

namespace dlm {

namespace {

Matrix uniform_matrix(Index rows, Index cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  }
  return m;
}

void check_input(const Var& x, Index expected, const char* what) {
  if (x.cols() != expected) {
    throw DimensionError(std::string(what) + ": expected input width " + std::to_string(expected) + ", got " +
                         shape_string(x.value()));
  }
}

}  // namespace

std::string_view to_string(CellKind kind) {
  switch (kind) {
    case CellKind::rnn: return "rnn";
    case CellKind::gru: return "gru";
    case CellKind::lstm: return "lstm";
  }
  return "?";
}

CellKind parse_cell_kind(std::string_view name) {
  if (name == "rnn") return CellKind::rnn;
  if (name == "gru") return CellKind::gru;
  if (name == "lstm") return CellKind::lstm;
  throw ContractError("unknown cell kind '" + std::string(name) + "'");
}

Index CellParams::gate_count(CellKind kind) {
  switch (kind) {
    case CellKind::rnn: return 1;
    case CellKind::gru: return 3;
    case CellKind::lstm: return 4;
  }
  return 0;
}

CellParams CellParams::create(CellKind kind, Index input_dim, Index hidden_dim, Rng& rng, const std::string& prefix) {
  if (input_dim <= 0 || hidden_dim <= 0) throw ContractError("cell dimensions must be positive");
  const Index width = gate_count(kind) * hidden_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  CellParams cell;
  cell.kind = kind;
  cell.input_dim = input_dim;
  cell.hidden_dim = hidden_dim;
  cell.w_input = Parameter(prefix + ".w_input", uniform_matrix(input_dim, width, bound, rng));
  cell.w_hidden = Parameter(prefix + ".w_hidden", uniform_matrix(hidden_dim, width, bound, rng));
  Matrix bias = Matrix::Zero(1, width);
  if (kind == CellKind::lstm) bias.middleCols(hidden_dim, hidden_dim).setOnes();
  cell.bias = Parameter(prefix + ".bias", std::move(bias));
  return cell;
}

void CellParams::collect(std::vector<Parameter*>& out) {
  out.insert(out.end(), {&w_input, &w_hidden, &bias});
}

void CellParams::collect(std::vector<const Parameter*>& out) const {
  out.insert(out.end(), {&w_input, &w_hidden, &bias});
}

CellState zero_state(Tape& tape, const CellParams& cell, Index batch) {
  CellState s;
  s.h = tape.constant(Matrix::Zero(batch, cell.hidden_dim));
  if (cell.kind == CellKind::lstm) s.c = tape.constant(Matrix::Zero(batch, cell.hidden_dim));
  return s;
}

CellState cell_step(Tape& tape, const CellParams& cell, const CellState& prev, Var x) {
  check_input(x, cell.input_dim, "cell_step");
  if (prev.h.cols() != cell.hidden_dim || prev.h.rows() != x.rows()) {
    throw DimensionError("cell_step: state " + shape_string(prev.h.value()) + " does not match hidden size " +
                         std::to_string(cell.hidden_dim) + " and batch " + std::to_string(x.rows()));
  }
  const Index h = cell.hidden_dim;
  Var w_in = tape.param(cell.w_input);
  Var w_hid = tape.param(cell.w_hidden);
  Var b = tape.param(cell.bias);

  switch (cell.kind) {
    case CellKind::rnn:
      return CellState{tanh(matmul(x, w_in) + matmul(prev.h, w_hid) + b), Var()};
    case CellKind::gru: {
      Var xs = matmul(x, w_in) + b;
      Var hs = matmul(prev.h, w_hid);
      Var reset = sigmoid(slice_cols(xs, 0, h) + slice_cols(hs, 0, h));
      Var update = sigmoid(slice_cols(xs, h, h) + slice_cols(hs, h, h));
      Var candidate = tanh(slice_cols(xs, 2 * h, h) + reset * slice_cols(hs, 2 * h, h));
      return CellState{candidate + update * (prev.h - candidate), Var()};
    }
    case CellKind::lstm: {
      if (!prev.c.valid()) throw ContractError("cell_step: lstm state without cell memory");
      Var hc = lstm_cell(x, prev.h, prev.c, w_in, w_hid, b);
      return CellState{slice_cols(hc, 0, h), slice_cols(hc, h, h)};
    }
  }
  throw ContractError("cell_step: unknown cell kind");
}

StackedRecurrence StackedRecurrence::create(CellKind kind, Index input_dim, Index hidden_dim, Index depth, Rng& rng,
                                            const std::string& prefix) {
  if (depth <= 0) throw ContractError("stacked recurrence depth must be positive");
  StackedRecurrence s;
  for (Index l = 0; l < depth; ++l) {
    s.layers.push_back(CellParams::create(kind, l == 0 ? input_dim : hidden_dim, hidden_dim, rng,
                                          prefix + ".layer" + std::to_string(l)));
  }
  return s;
}

void StackedRecurrence::collect(std::vector<Parameter*>& out) {
  for (auto& l : layers) l.collect(out);
}

void StackedRecurrence::collect(std::vector<const Parameter*>& out) const {
  for (const auto& l : layers) l.collect(out);
}

std::vector<Var> unroll(Tape& tape, const StackedRecurrence& stack, std::span<const Var> inputs) {
  if (inputs.empty()) throw DimensionError("unroll: empty sequence");
  if (stack.layers.empty()) throw ContractError("unroll: stack has no layers");
  const Index batch = inputs.front().rows();
  std::vector<CellState> states;
  states.reserve(stack.layers.size());
  for (const auto& layer : stack.layers) states.push_back(zero_state(tape, layer, batch));

  std::vector<Var> outputs;
  outputs.reserve(inputs.size());
  for (const Var& x : inputs) {
    Var input = x;
    for (std::size_t l = 0; l < stack.layers.size(); ++l) {
      states[l] = cell_step(tape, stack.layers[l], states[l], input);
      input = states[l].h;
    }
    outputs.push_back(input);
  }
  return outputs;
}

CausalConvParams CausalConvParams::create(Index receptive_field, Index channels_in, Index channels_out, Rng& rng,
                                          const std::string& prefix) {
  if (receptive_field < 0 || channels_in <= 0 || channels_out <= 0) {
    throw ContractError("causal conv dimensions must be positive");
  }
  CausalConvParams conv;
  conv.receptive_field = receptive_field;
  conv.channels_in = channels_in;
  conv.channels_out = channels_out;
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels_out));
  conv.weight = Parameter(prefix + ".weight",
                          uniform_matrix((receptive_field + 1) * channels_in, channels_out, bound, rng));
  conv.bias = Parameter(prefix + ".bias", Matrix::Zero(1, channels_out));
  return conv;
}

void CausalConvParams::collect(std::vector<Parameter*>& out) { out.insert(out.end(), {&weight, &bias}); }

void CausalConvParams::collect(std::vector<const Parameter*>& out) const { out.insert(out.end(), {&weight, &bias}); }

std::vector<Var> causal_conv(Tape& tape, const CausalConvParams& conv, std::span<const Var> inputs) {
  if (inputs.empty()) throw DimensionError("causal_conv: empty sequence");
  const Index batch = inputs.front().rows();
  for (const Var& x : inputs) check_input(x, conv.channels_in, "causal_conv");
  Var zeros = tape.constant(Matrix::Zero(batch, conv.channels_in));
  Var w = tape.param(conv.weight);
  Var b = tape.param(conv.bias);

  std::vector<Var> outputs;
  outputs.reserve(inputs.size());
  std::vector<Var> taps(static_cast<std::size_t>(conv.receptive_field + 1));
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    for (std::size_t lag = 0; lag < taps.size(); ++lag) taps[lag] = lag <= t ? inputs[t - lag] : zeros;
    outputs.push_back(matmul(concat_cols(taps), w) + b);
  }
  return outputs;
}

Linear Linear::create(Index in, Index out, Rng& rng, const std::string& prefix) {
  if (in <= 0 || out <= 0) throw ContractError("linear dimensions must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  return Linear{Parameter(prefix + ".weight", uniform_matrix(in, out, bound, rng)),
                Parameter(prefix + ".bias", Matrix::Zero(1, out))};
}

Var Linear::apply(Tape& tape, Var x) const {
  check_input(x, weight.value.rows(), "linear");
  return matmul(x, tape.param(weight)) + tape.param(bias);
}

void Linear::collect(std::vector<Parameter*>& out) { out.insert(out.end(), {&weight, &bias}); }

void Linear::collect(std::vector<const Parameter*>& out) const { out.insert(out.end(), {&weight, &bias}); }

}  // namespace dlm
