#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dlm/autodiff.hpp"

namespace dlm {

// Bias-corrected adaptive-moment optimizer state. Moments are kept per
// parameter in the order of the parameter list passed to adam_step.
struct AdamState {
  std::int64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

// Applies one update using each parameter's accumulated grad. Throws
// NumericError before touching anything if a gradient entry is not finite.
void adam_step(std::span<Parameter* const> params, AdamState& state);

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

void zero_grad(std::span<Parameter* const> params);

}  // namespace dlm
