#pragma once

// Discrete-state hidden Markov model with isotropic Gaussian emissions,
// fitted by Baum-Welch (scaled forward-backward E-step, closed-form M-step).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlm/autodiff.hpp"
#include "dlm/checkpoint.hpp"
#include "dlm/rng.hpp"

namespace dlm {

struct HmmParams {
  Matrix initial;     // 1 x K
  Matrix transition;  // K x K, row j holds p(z_t = . | z_{t-1} = j)
  Matrix means;       // K x d
  Matrix variances;   // 1 x K, one isotropic variance per state

  Index states() const { return initial.cols(); }
  Index obs_dim() const { return means.cols(); }
  // Probabilities sum to 1 within tol and variances are positive.
  void validate(double tol = 1e-9) const;
};

// log N(x; mean_k, variance_k I) for every row of x and every state (T x K).
Matrix hmm_emission_log_density(const HmmParams& params, const Matrix& x);

// Exact log p(x_{1:T}) by the scaled forward recursion.
double hmm_log_likelihood(const HmmParams& params, const Matrix& x);
double hmm_log_likelihood(const HmmParams& params, std::span<const Matrix> sequences);

struct HmmPosteriors {
  Matrix state;           // T x K, p(z_t = k | x)
  Matrix pair_counts;     // K x K, sum_t p(z_{t-1} = j, z_t = k | x)
  double log_likelihood = 0.0;
};

HmmPosteriors hmm_posteriors(const HmmParams& params, const Matrix& x);

struct HmmFitConfig {
  Index states = 8;
  int iterations = 100;
  double variance_floor = 1e-4;
  // Stop early once an iteration improves the log-likelihood by less than
  // this amount; 0 runs all iterations.
  double tolerance = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct HmmFitResult {
  HmmParams params;
  // Entry i is the log-likelihood of the parameters after i M-steps; entry 0
  // belongs to the initialization.
  std::vector<double> log_likelihoods;
  std::vector<std::string> warnings;
};

// Initial parameters: k-means++ seeding with a few Lloyd refinements for the
// means, pooled variance, uniform start distribution, sticky transitions.
HmmParams hmm_initialize(std::span<const Matrix> sequences, const HmmFitConfig& config);
HmmFitResult hmm_em_fit(std::span<const Matrix> sequences, const HmmFitConfig& config);

// Ancestral sampling. Paths are N lists of T state indices.
std::vector<std::vector<std::size_t>> hmm_sample_paths(const HmmParams& params, Index steps, Index n, Rng& rng);
// N trajectories of T x d. Without emission noise each step is the mean of its state.
std::vector<Matrix> hmm_generate(const HmmParams& params, Index steps, Index n, Rng& rng, bool emit_noise = true);

Archive hmm_to_archive(const HmmParams& params, const HmmFitConfig& config, std::span<const double> log_likelihoods,
                       const nlohmann::json& extra = nlohmann::json::object());
HmmParams hmm_from_archive(const Archive& archive);

}  // namespace dlm
