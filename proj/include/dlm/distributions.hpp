#pragma once

#include <cstddef>
#include <span>

#include "dlm/autodiff.hpp"
#include "dlm/rng.hpp"

namespace dlm {

// Categorical laws are carried as B x K matrices of log-probabilities, one
// law per row, each row normalized so that logsumexp(row) = 0.

// log N(x; mu, sigma^2 I_d) per row. x, mu: B x d; sigma: B x 1 or 1 x 1.
// Returns B x 1.
Var gaussian_log_pdf(Var x, Var mu, Var sigma);
double gaussian_log_pdf(std::span<const double> x, std::span<const double> mu, double sigma);

// Standard Gumbel(0, 1) via inverse CDF, U clamped to [1e-12, 1 - 1e-12].
inline constexpr double kGumbelUniformClamp = 1e-12;
double gumbel_from_uniform(double u);
double sample_gumbel(Rng& rng);
Matrix sample_gumbel(Index rows, Index cols, Rng& rng);

// Exact categorical draw: argmax_k (log_probs_k + g_k). Ties go to the
// lowest index. Returns a zero-based index.
std::size_t gumbel_argmax(std::span<const double> log_probs, Rng& rng);

struct RelaxedSample {
  Var weights;     // B x K, rows on the simplex
  Var mixed_code;  // B x D, weights * codebooks
  double temperature = 1.0;
};

// weights = softmax((log_q + noise) / tau), mixed_code = weights * codebooks.
// The Gumbel noise enters the tape as a constant.
RelaxedSample gumbel_softmax(Var log_q, double tau, Var codebooks, const Matrix& noise);
RelaxedSample gumbel_softmax(Var log_q, double tau, Var codebooks, Rng& rng);

// log q(k | z_e) proportional to -||z_e - e_k||^2, normalized per row.
// z_e: B x D, codebooks: K x D. Returns B x K.
Var posterior_logits(Var z_e, Var codebooks);

// tau(epoch) = max(tau_min, initial * decay^epoch). With decay = 1 the
// temperature stays at `initial`.
struct TemperatureSchedule {
  double initial = 1.0;
  double decay = 1.0;
  double minimum = 0.25;

  double at(int epoch) const;
};

}  // namespace dlm
