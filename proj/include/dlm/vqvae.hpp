#pragma once

// Vector-quantized autoencoder baseline sharing the architecture of
// MarkovCodebookModel. Stage one fits encoder, codebooks and decoder with
// nearest-codebook quantization under a uniform prior; stage two fits the
// command-conditioned prior on the frozen encoder's index sequences.

#include <span>
#include <vector>

#include "dlm/model.hpp"
#include "dlm/training.hpp"

namespace dlm {

struct VqAssignment {
  std::vector<std::size_t> index;  // one per row of z_e
  Matrix quantized;                // rows e_{index}
};

// Nearest codebook row by squared Euclidean distance; ties to the lowest index.
VqAssignment vq_posterior(const Matrix& z_e, const Matrix& codebooks);

struct VqVaeConfig {
  TrainConfig autoencoder;
  TrainConfig prior;
  double commitment = 0.25;

  void validate() const;
};

struct VqStage1Terms {
  Var recon;       // Gaussian log-likelihood, batch mean
  Var codebook;    // ||sg(z_e) - e||^2, batch mean
  Var commitment;  // ||z_e - sg(e)||^2, batch mean
  Var loss;        // -recon + codebook + commitment_weight * commitment
};

VqStage1Terms vqvae_stage1_loss(Tape& tape, const MarkovCodebookModel& model, const SeriesBatch& batch,
                                double commitment_weight);
// Argmin index paths of every window under the current encoder.
std::vector<std::vector<std::size_t>> vq_index_paths(const MarkovCodebookModel& model, const SeriesBatch& batch);
// Mean negative log-probability of the given index paths under the prior.
Var vqvae_stage2_loss(Tape& tape, const MarkovCodebookModel& model, const SeriesBatch& batch,
                      const std::vector<std::vector<std::size_t>>& paths);

struct StageRecord {
  int epoch = 0;
  double loss = 0.0;
  double recon = 0.0;
  double codebook = 0.0;
  double commitment = 0.0;
  double seconds = 0.0;
};

struct StageLog {
  std::vector<StageRecord> epochs;
};

// Each stage updates only its own parameter groups; the rest stay bit-identical.
StageLog vqvae_stage1_train(MarkovCodebookModel& model, std::span<const Window> windows, const VqVaeConfig& config);
StageLog vqvae_stage2_train(MarkovCodebookModel& model, std::span<const Window> windows, const VqVaeConfig& config);

}  // namespace dlm
