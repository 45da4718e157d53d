#pragma once

// JSON configuration. Every section is optional; missing keys keep their
// defaults and unknown keys are rejected.

#include <string>

#include <json.hpp>

#include "dlm/data.hpp"
#include "dlm/hmm.hpp"
#include "dlm/model.hpp"
#include "dlm/training.hpp"
#include "dlm/vqvae.hpp"

namespace dlm {

struct DataConfig {
  std::string path;  // ETT or series CSV; empty means generate synthetic data
  Index window = 168;
  Index stride = 24;
  bool normalize = true;
  SynthConfig synth;
};

struct EvalConfig {
  Index samples = 100;
  std::uint64_t seed = 0;
  bool emit_noise = false;
  bool raw_units = false;
};

struct ExperimentConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  VqVaeConfig vqvae;
  HmmFitConfig hmm;
  EvalConfig eval;

  ExperimentConfig();
};

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const SynthConfig& c);
nlohmann::json to_json(const ExperimentConfig& c);

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig base = {});
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace dlm
