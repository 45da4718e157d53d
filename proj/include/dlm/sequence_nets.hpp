#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dlm/autodiff.hpp"
#include "dlm/rng.hpp"

namespace dlm {

enum class CellKind { rnn, gru, lstm };

std::string_view to_string(CellKind kind);
CellKind parse_cell_kind(std::string_view name);

// Weights of one recurrent cell. Gate blocks are laid out side by side in
// the columns of w_input / w_hidden / bias:
//   rnn : [candidate]
//   gru : [reset, update, candidate]
//   lstm: [input, forget, cell, output]
struct CellParams {
  CellKind kind = CellKind::rnn;
  Index input_dim = 0;
  Index hidden_dim = 0;
  Parameter w_input;   // input_dim x (gates * hidden_dim)
  Parameter w_hidden;  // hidden_dim x (gates * hidden_dim)
  Parameter bias;      // 1 x (gates * hidden_dim)

  static Index gate_count(CellKind kind);
  // Matrices uniform on +-1/sqrt(hidden_dim), zero biases, lstm forget bias 1.
  static CellParams create(CellKind kind, Index input_dim, Index hidden_dim, Rng& rng, const std::string& prefix);

  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;
};

// c is only set for lstm cells.
struct CellState {
  Var h;
  Var c;
};

CellState zero_state(Tape& tape, const CellParams& cell, Index batch);
CellState cell_step(Tape& tape, const CellParams& cell, const CellState& prev, Var x);

struct StackedRecurrence {
  std::vector<CellParams> layers;

  static StackedRecurrence create(CellKind kind, Index input_dim, Index hidden_dim, Index depth, Rng& rng,
                                  const std::string& prefix);
  Index input_dim() const { return layers.front().input_dim; }
  Index output_dim() const { return layers.back().hidden_dim; }

  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;
};

// Runs the stack over inputs[0..T) from a zero state and returns the top
// layer's hidden state at each step. Each input is B x input_dim.
std::vector<Var> unroll(Tape& tape, const StackedRecurrence& stack, std::span<const Var> inputs);

// y_t = sum_{lag=0}^{R} x_{t-lag} W_lag + b, with x_s = 0 before the first
// step. The kernel spans R + 1 steps including the current one.
struct CausalConvParams {
  Index receptive_field = 0;
  Index channels_in = 0;
  Index channels_out = 0;
  Parameter weight;  // (R + 1) * channels_in x channels_out, lag-major row blocks
  Parameter bias;    // 1 x channels_out

  static CausalConvParams create(Index receptive_field, Index channels_in, Index channels_out, Rng& rng,
                                 const std::string& prefix);

  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;
};

std::vector<Var> causal_conv(Tape& tape, const CausalConvParams& conv, std::span<const Var> inputs);

// y = x W + b
struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out

  static Linear create(Index in, Index out, Rng& rng, const std::string& prefix);
  Var apply(Tape& tape, Var x) const;

  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;
};

}  // namespace dlm
