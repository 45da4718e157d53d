#include "dlm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "dlm/config.hpp"
#include "dlm/error.hpp"

namespace dlm {

namespace {

constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kNoiseStream = 2;

std::string where(int epoch, std::size_t batch) {
  return "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch);
}

}  // namespace

void TrainConfig::validate() const {
  if (beta_warmup_epochs < 1) throw ContractError("train: beta_warmup_epochs must be >= 1");
  if (epochs < 0) throw ContractError("train: epochs must be >= 0");
  if (epochs != 0 && epochs < beta_warmup_epochs) {
    throw ContractError("train: epochs (" + std::to_string(epochs) + ") must be >= beta_warmup_epochs (" +
                        std::to_string(beta_warmup_epochs) + ")");
  }
  if (batch_size < 1) throw ContractError("train: batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !(clip_norm > 0.0)) throw ContractError("train: learning_rate and clip_norm must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_epsilon > 0.0)) {
    throw ContractError("train: invalid Adam hyperparameters");
  }
  if (!(temperature.initial > 0.0) || !(temperature.decay > 0.0) || !(temperature.minimum > 0.0)) {
    throw ContractError("train: temperature schedule must be positive");
  }
  if (checkpoint_every < 0) throw ContractError("train: checkpoint_every must be >= 0");
}

AdamState TrainConfig::make_optimizer() const {
  AdamState s;
  s.learning_rate = learning_rate;
  s.beta1 = adam_beta1;
  s.beta2 = adam_beta2;
  s.epsilon = adam_epsilon;
  return s;
}

double beta_schedule(int epoch, int warmup) {
  if (epoch < 1) throw ContractError("beta_schedule: epoch must be >= 1");
  if (warmup < 1) throw ContractError("beta_schedule: warmup must be >= 1");
  return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(warmup));
}

std::string to_jsonl(const TrainLog& log, bool with_seconds) {
  std::ostringstream out;
  for (const EpochRecord& r : log.epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["recon"] = r.recon;
    j["prior_term"] = r.prior_term;
    j["entropy_term"] = r.entropy_term;
    j["objective"] = r.objective();
    j["beta"] = r.beta;
    j["tau"] = r.tau;
    if (with_seconds) j["seconds"] = r.seconds;
    out << j.dump() << '\n';
  }
  return out.str();
}

void check_windows(const ModelConfig& model, std::span<const Window> windows) {
  if (windows.empty()) throw ContractError("training needs at least one window");
  const Index steps = windows.front().steps();
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const Window& w = windows[i];
    if (w.steps() != steps || w.u.rows() != steps || w.x.cols() != model.obs_dim || w.u.cols() != model.cmd_dim) {
      throw DimensionError("window " + std::to_string(i) + " has shape x " + shape_string(w.x) + ", u " +
                           shape_string(w.u) + "; expected T=" + std::to_string(steps) +
                           ", d=" + std::to_string(model.obs_dim) + ", q=" + std::to_string(model.cmd_dim));
    }
  }
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, Index batch_size, Rng& rng) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  const auto b = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < count; start += b) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(count, start + b)));
  }
  return batches;
}

void optimizer_step(Tape& tape, Var loss, std::span<Parameter* const> params, AdamState& optimizer,
                    double clip_norm) {
  if (!std::isfinite(loss.item())) throw NumericError("loss is not finite (" + std::to_string(loss.item()) + ")");
  zero_grad(params);
  tape.backward(loss);
  clip_grad_norm(params, clip_norm);
  adam_step(params, optimizer);
}

TrainLog train(MarkovCodebookModel& model, std::span<const Window> windows, const TrainConfig& config,
               TrainState& state, const TrainHooks& hooks) {
  config.validate();
  check_windows(model.config(), windows);
  std::vector<Parameter*> params = model.parameters();

  TrainLog log;
  for (int epoch = state.epoch + 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double beta = beta_schedule(epoch, config.beta_warmup_epochs);
    const double tau = config.temperature.at(epoch);
    Rng shuffle_rng = Rng::derive(config.seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)});
    const auto batches = epoch_batches(windows.size(), config.batch_size, shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.beta = beta;
    rec.tau = tau;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      Rng noise = Rng::derive(config.seed, {kNoiseStream, static_cast<std::uint64_t>(epoch), b});
      const SeriesBatch batch = make_batch(windows, batches[b]);
      Tape tape;
      try {
        ElboTerms terms = model.elbo(tape, batch, beta, tau, noise);
        optimizer_step(tape, -terms.objective, params, state.optimizer, config.clip_norm);
        const ElboComponents v = terms.values();
        const double weight = static_cast<double>(batches[b].size());
        rec.recon += weight * v.recon;
        rec.prior_term += weight * v.prior_term;
        rec.entropy_term += weight * v.entropy_term;
      } catch (const NumericError& e) {
        throw NumericError(where(epoch, b) + ": " + e.what());
      }
    }
    const double n = static_cast<double>(windows.size());
    rec.recon /= n;
    rec.prior_term /= n;
    rec.entropy_term /= n;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    state.epoch = epoch;
    log.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (hooks.on_checkpoint && config.checkpoint_every > 0 &&
        (epoch % config.checkpoint_every == 0 || epoch == config.epochs)) {
      hooks.on_checkpoint(model, state);
    }
  }
  return log;
}

TrainLog train(MarkovCodebookModel& model, std::span<const Window> windows, const TrainConfig& config) {
  TrainState state;
  state.optimizer = config.make_optimizer();
  return train(model, windows, config, state);
}

Archive model_to_archive(const MarkovCodebookModel& model, const TrainState& state, const std::string& kind,
                         const nlohmann::json& extra) {
  Archive a;
  a.kind = kind;
  a.meta["model"] = to_json(model.config());
  a.meta["epoch"] = state.epoch;
  const AdamState& opt = state.optimizer;
  a.meta["adam"] = {{"step", opt.step_count},
                    {"learning_rate", opt.learning_rate},
                    {"beta1", opt.beta1},
                    {"beta2", opt.beta2},
                    {"epsilon", opt.epsilon},
                    {"moments", !opt.first_moment.empty()}};
  a.meta["extra"] = extra;
  const auto params = model.parameters();
  for (const Parameter* p : params) a.add(p->name, p->value);
  if (!opt.first_moment.empty()) {
    if (opt.first_moment.size() != params.size() || opt.second_moment.size() != params.size()) {
      throw ContractError("checkpoint: optimizer state does not match the model's parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      a.add("adam.m." + params[i]->name, opt.first_moment[i]);
      a.add("adam.v." + params[i]->name, opt.second_moment[i]);
    }
  }
  return a;
}

LoadedModel model_from_archive(const Archive& archive) {
  try {
    ModelConfig cfg = model_config_from_json(archive.meta.at("model"));
    MarkovCodebookModel model(cfg);
    TrainState state;
    state.epoch = archive.meta.at("epoch").get<int>();
    const auto& adam = archive.meta.at("adam");
    state.optimizer.step_count = adam.at("step").get<std::int64_t>();
    state.optimizer.learning_rate = adam.at("learning_rate").get<double>();
    state.optimizer.beta1 = adam.at("beta1").get<double>();
    state.optimizer.beta2 = adam.at("beta2").get<double>();
    state.optimizer.epsilon = adam.at("epsilon").get<double>();
    const bool moments = adam.at("moments").get<bool>();
    for (Parameter* p : model.parameters()) {
      const Matrix& v = archive.get(p->name);
      if (v.rows() != p->value.rows() || v.cols() != p->value.cols()) {
        throw FormatError("checkpoint array '" + p->name + "' has shape " + shape_string(v) + ", expected " +
                          shape_string(p->value));
      }
      p->value = v;
      p->grad.setZero();
      if (moments) {
        state.optimizer.first_moment.push_back(archive.get("adam.m." + p->name));
        state.optimizer.second_moment.push_back(archive.get("adam.v." + p->name));
      }
    }
    nlohmann::json extra = archive.meta.value("extra", nlohmann::json::object());
    return LoadedModel{archive.kind, std::move(model), std::move(state), std::move(extra)};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is incomplete: ") + e.what());
  }
}

void save_model_checkpoint(const std::string& path, const MarkovCodebookModel& model, const TrainState& state,
                           const std::string& kind, const nlohmann::json& extra) {
  save_archive(model_to_archive(model, state, kind, extra), path);
}

LoadedModel load_model_checkpoint(const std::string& path) {
  Archive a = load_archive(path);
  if (a.kind != "joint" && a.kind != "vqvae") {
    throw FormatError("'" + path + "' holds a '" + a.kind + "' checkpoint, not a sequence model");
  }
  return model_from_archive(a);
}

}  // namespace dlm
