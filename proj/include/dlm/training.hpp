#pragma once

// Joint variational training of MarkovCodebookModel with a linearly
// annealed beta, plus checkpoint conversion for the model and optimizer.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlm/checkpoint.hpp"
#include "dlm/distributions.hpp"
#include "dlm/model.hpp"
#include "dlm/optim.hpp"
#include "dlm/series.hpp"

namespace dlm {

struct TrainConfig {
  int epochs = 300;
  int beta_warmup_epochs = 100;
  Index batch_size = 32;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double clip_norm = 5.0;
  TemperatureSchedule temperature;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs between checkpoints; 0 disables

  // epochs >= beta_warmup_epochs >= 1, except that epochs == 0 is a no-op run.
  void validate() const;
  AdamState make_optimizer() const;
};

// min(1, epoch / warmup) for epoch >= 1.
double beta_schedule(int epoch, int warmup);

struct EpochRecord {
  int epoch = 0;
  double recon = 0.0;
  double prior_term = 0.0;
  double entropy_term = 0.0;
  double beta = 0.0;
  double tau = 0.0;
  double seconds = 0.0;

  double objective() const { return recon + beta * (prior_term + entropy_term); }
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

// One JSON object per line. Wall-clock seconds are included only on request
// so that logs of identical runs compare equal.
std::string to_jsonl(const TrainLog& log, bool with_seconds = true);

// Progress of an interrupted or finished run; `epoch` is the last completed one.
struct TrainState {
  int epoch = 0;
  AdamState optimizer;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(const MarkovCodebookModel&, const TrainState&)> on_checkpoint;
};

// Runs epochs state.epoch + 1 .. config.epochs. Shuffling and Gumbel noise
// come from streams derived from (seed, epoch, batch), so a resumed run
// retraces an uninterrupted one.
TrainLog train(MarkovCodebookModel& model, std::span<const Window> windows, const TrainConfig& config,
               TrainState& state, const TrainHooks& hooks = {});
TrainLog train(MarkovCodebookModel& model, std::span<const Window> windows, const TrainConfig& config);

// Shared pieces of the training loops.
void check_windows(const ModelConfig& model, std::span<const Window> windows);
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, Index batch_size, Rng& rng);
// Backpropagates a 1x1 loss, clips, and applies one Adam update to params.
void optimizer_step(Tape& tape, Var loss, std::span<Parameter* const> params, AdamState& optimizer,
                    double clip_norm);

// Checkpoints. The archive carries the model config, every parameter, the
// epoch counter, Adam moments, and a free-form "extra" metadata object.
Archive model_to_archive(const MarkovCodebookModel& model, const TrainState& state, const std::string& kind,
                         const nlohmann::json& extra = nlohmann::json::object());

struct LoadedModel {
  std::string kind;
  MarkovCodebookModel model;
  TrainState state;
  nlohmann::json extra;
};

LoadedModel model_from_archive(const Archive& archive);
void save_model_checkpoint(const std::string& path, const MarkovCodebookModel& model, const TrainState& state,
                           const std::string& kind = "joint",
                           const nlohmann::json& extra = nlohmann::json::object());
LoadedModel load_model_checkpoint(const std::string& path);

}  // namespace dlm
