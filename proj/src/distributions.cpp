#include "dlm/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "dlm/error.hpp"

namespace dlm {

Var gaussian_log_pdf(Var x, Var mu, Var sigma) {
  if (x.rows() != mu.rows() || x.cols() != mu.cols()) {
    throw DimensionError("gaussian_log_pdf: x" + shape_string(x.value()) + " vs mu" + shape_string(mu.value()));
  }
  if (sigma.cols() != 1 || (sigma.rows() != 1 && sigma.rows() != x.rows())) {
    throw DimensionError("gaussian_log_pdf: sigma must be Bx1 or 1x1, got " + shape_string(sigma.value()));
  }
  if ((sigma.value().array() <= 0.0).any()) throw DomainError("gaussian_log_pdf: sigma must be positive");
  const double d = static_cast<double>(x.cols());
  Var sq = sum_rows(square(x - mu));
  Var two_var = square(sigma) * 2.0;
  return (-0.5 * d * std::log(2.0 * std::numbers::pi)) - d * log(sigma) - sq / two_var;
}

double gaussian_log_pdf(std::span<const double> x, std::span<const double> mu, double sigma) {
  if (x.size() != mu.size()) throw DimensionError("gaussian_log_pdf: x and mu lengths differ");
  if (!(sigma > 0.0)) throw DomainError("gaussian_log_pdf: sigma must be positive");
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - mu[i]) * (x[i] - mu[i]);
  const double d = static_cast<double>(x.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma) - sq / (2.0 * sigma * sigma);
}

double gumbel_from_uniform(double u) {
  u = std::clamp(u, kGumbelUniformClamp, 1.0 - kGumbelUniformClamp);
  return -std::log(-std::log(u));
}

double sample_gumbel(Rng& rng) { return gumbel_from_uniform(rng.uniform()); }

Matrix sample_gumbel(Index rows, Index cols, Rng& rng) {
  Matrix g(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) g(r, c) = sample_gumbel(rng);
  }
  return g;
}

std::size_t gumbel_argmax(std::span<const double> log_probs, Rng& rng) {
  if (log_probs.empty()) throw DimensionError("gumbel_argmax: empty law");
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < log_probs.size(); ++k) {
    const double score = log_probs[k] + sample_gumbel(rng);
    if (score > best_score) {
      best_score = score;
      best = k;
    }
  }
  return best;
}

RelaxedSample gumbel_softmax(Var log_q, double tau, Var codebooks, const Matrix& noise) {
  if (!(tau > 0.0)) throw DomainError("gumbel_softmax: temperature must be positive");
  if (noise.rows() != log_q.rows() || noise.cols() != log_q.cols()) {
    throw DimensionError("gumbel_softmax: noise" + shape_string(noise) + " vs log_q" + shape_string(log_q.value()));
  }
  if (codebooks.rows() != log_q.cols()) {
    throw DimensionError("gumbel_softmax: " + std::to_string(log_q.cols()) + " categories but " +
                         std::to_string(codebooks.rows()) + " codebooks");
  }
  Tape& t = log_q.tape();
  Var weights = softmax((log_q + t.constant(noise)) * (1.0 / tau));
  return RelaxedSample{weights, matmul(weights, codebooks), tau};
}

RelaxedSample gumbel_softmax(Var log_q, double tau, Var codebooks, Rng& rng) {
  return gumbel_softmax(log_q, tau, codebooks, sample_gumbel(log_q.rows(), log_q.cols(), rng));
}

Var posterior_logits(Var z_e, Var codebooks) { return log_softmax(-squared_distances(z_e, codebooks)); }

double TemperatureSchedule::at(int epoch) const {
  return std::max(minimum, initial * std::pow(decay, static_cast<double>(epoch)));
}

}  // namespace dlm
