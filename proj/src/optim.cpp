#include "dlm/optim.hpp"

#include <cmath>

#include "dlm/error.hpp"

namespace dlm {

void adam_step(std::span<Parameter* const> params, AdamState& state) {
  if (state.first_moment.empty() && state.second_moment.empty()) {
    for (const Parameter* p : params) {
      state.first_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.second_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ContractError("adam_step: state holds " + std::to_string(state.first_moment.size()) +
                        " moments for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
    if (state.first_moment[i].rows() != p.value.rows() || state.first_moment[i].cols() != p.value.cols()) {
      throw ContractError("adam_step: moment shape mismatch for '" + p.name + "'");
    }
    if (!p.grad.allFinite()) throw NumericError("adam_step: non-finite gradient in '" + p.name + "'");
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * p.grad;
    v = state.beta2 * v + (1.0 - state.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= state.learning_rate * (m.array() / correction1) /
                       ((v.array() / correction2).sqrt() + state.epsilon);
  }
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double total = 0.0;
  for (const Parameter* p : params) {
    if (p->grad.size() == p->value.size()) total += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(total);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (const Parameter* p : params) p->grad *= scale;
  }
  return norm;
}

void zero_grad(std::span<Parameter* const> params) {
  for (const Parameter* p : params) p->zero_grad();
}

}  // namespace dlm
