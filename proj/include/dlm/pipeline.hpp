#pragma once

// Glue between configuration, data files and checkpoints, shared by the
// command-line tool and end-to-end tests.

#include <string>
#include <vector>

#include <json.hpp>

#include "dlm/config.hpp"
#include "dlm/data.hpp"

namespace dlm {

struct PreparedData {
  Dataset data;
  std::vector<Window> train;
  std::vector<Window> validation;
};

// Loads data.path (or generates synthetic data when it is empty), normalizes
// with training statistics when requested, and cuts windows.
PreparedData prepare_data(const DataConfig& config);
// Same, but normalization comes from a checkpoint's data metadata.
PreparedData prepare_data(const DataConfig& config, const nlohmann::json& data_meta);

// Column names, normalization statistics and window geometry, stored in
// checkpoints so later commands see the data exactly as training did.
nlohmann::json data_meta(const PreparedData& prepared, const DataConfig& config);
Normalization normalization_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Normalization& n);

// Model dimensions taken from the data.
ModelConfig fit_model_dims(ModelConfig model, const Dataset& data);

}  // namespace dlm
