#pragma once

// Discrete-latent sequence model: a causal encoder maps observations to
// codebook logits, a command-conditioned Markov chain acts as the prior over
// codebook indices, and a Gaussian autoregressive decoder emits observations
// from the codes of earlier steps.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dlm/autodiff.hpp"
#include "dlm/distributions.hpp"
#include "dlm/rng.hpp"
#include "dlm/sequence_nets.hpp"
#include "dlm/series.hpp"

namespace dlm {

enum class KernelKind { rnn, gru, cnn };

std::string_view to_string(KernelKind kind);
KernelKind parse_kernel_kind(std::string_view name);

struct ModelConfig {
  Index codebooks = 8;         // K
  Index code_dim = 32;         // D
  Index mc_samples = 1;        // M
  Index receptive_field = 24;  // history span of the cnn kernel
  KernelKind kernel = KernelKind::gru;
  Index obs_dim = 1;
  Index cmd_dim = 1;
  Index encoder_hidden = 64;
  Index decoder_hidden = 64;
  Index kernel_hidden = 64;
  Index depth = 3;
  double sigma_floor = 1e-4;
  // Codebook entries start uniform on +-codebook_init / sqrt(D).
  double codebook_init = 4.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Log-probabilities of the latent chain for a batch of command sequences.
// initial is B x K. transitions[t - 1] (t >= 1) is B x (K * K) holding
// log p(z_t = k | z_{t-1} = j) at column j * K + k.
struct PriorOutputs {
  Var initial;
  std::vector<Var> transitions;
  Index states = 0;
};

struct Emission {
  std::vector<Var> mean;   // B x d per step
  std::vector<Var> sigma;  // B x 1 per step
};

struct ElboComponents {
  double recon = 0.0;
  double prior_term = 0.0;
  double entropy_term = 0.0;
  double beta = 0.0;

  double objective() const { return recon + beta * (prior_term + entropy_term); }
};

// Batch means of the three ELBO terms and the beta-weighted objective.
struct ElboTerms {
  Var recon;
  Var prior_term;
  Var entropy_term;
  Var objective;
  double beta = 0.0;

  ElboComponents values() const;
};

// sum_k w_1k log p_1(k) + sum_t sum_{j,k} w_{t-1,j} w_{t,k} log p_t(k | j),
// one value per batch row (B x 1). With one-hot weights this is the exact
// log-probability of the indicated path. Rows of every weight matrix must
// sum to 1 within 1e-6.
Var prior_log_prob_relaxed(std::span<const Var> weights, const PriorOutputs& prior);

// -sum_t sum_k q log q per batch row (B x 1).
Var posterior_entropy(std::span<const Var> log_q);

class MarkovCodebookModel {
 public:
  explicit MarkovCodebookModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // z^e_{1:T}; each step B x D.
  std::vector<Var> encode(Tape& tape, std::span<const Var> x) const;
  // log q(z_t = k | x); each step B x K.
  std::vector<Var> posterior(Tape& tape, std::span<const Var> encoded) const;
  PriorOutputs prior_forward(Tape& tape, std::span<const Var> u) const;
  // The decoder reads (0, c_1, ..., c_{T-1}): the emission at t only sees
  // codes of earlier steps.
  Emission decode(Tape& tape, std::span<const Var> codes) const;

  ElboTerms elbo(Tape& tape, const SeriesBatch& batch, double beta, double tau, Rng& rng) const;

  // Latent index paths drawn from the prior given commands u (T x q).
  std::vector<std::vector<std::size_t>> sample_paths(const Matrix& u, Index n, Rng& rng) const;
  // Trajectories (each T x d) decoded from the given paths. Emission noise
  // mu + sigma * eps is added when emit_noise is set.
  std::vector<Matrix> decode_paths(const std::vector<std::vector<std::size_t>>& paths, Rng& rng,
                                   bool emit_noise) const;
  std::vector<Matrix> generate(const Matrix& u, Index n, Rng& rng, bool emit_noise) const;

  // Parameter groups in a fixed order: encoder, codebooks, prior, decoder.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> encoder_parameters();
  std::vector<Parameter*> codebook_parameters();
  std::vector<Parameter*> prior_parameters();
  std::vector<Parameter*> decoder_parameters();

  Parameter& parameter(std::string_view name);
  const Parameter& parameter(std::string_view name) const;
  const Parameter& codebooks() const { return codebooks_; }

 private:
  std::vector<Var> kernel_forward(Tape& tape, std::span<const Var> features) const;

  ModelConfig config_;
  StackedRecurrence encoder_;
  Linear encoder_head_;
  Parameter codebooks_;
  StackedRecurrence input_model_;
  StackedRecurrence kernel_cell_;
  CausalConvParams kernel_conv_;
  Linear initial_head_;
  Linear transition_head_;
  StackedRecurrence decoder_;
  Linear mean_head_;
  Linear sigma_head_;
};

// Wraps each matrix as a constant on the tape.
std::vector<Var> constants(Tape& tape, std::span<const Matrix> values);

}  // namespace dlm
