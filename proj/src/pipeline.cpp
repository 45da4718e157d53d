#include "dlm/pipeline.hpp"

#include "dlm/error.hpp"

namespace dlm {

namespace {

Matrix row_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  Matrix m(1, static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Index>(i)) = v[i];
  return m;
}

std::vector<double> row_to_vector(const Matrix& m) { return std::vector<double>(m.data(), m.data() + m.size()); }

Dataset load_raw(const DataConfig& config) {
  if (config.path.empty()) return synth_regime_data(config.synth);
  Dataset d = load_dataset(config.path);
  if (d.normalized) {
    // ETT loader normalizes by default; undo so the caller decides.
    for (auto* split : {&d.train, &d.validation}) {
      for (Segment& s : *split) {
        s.x = d.obs_norm.denormalize(s.x);
        s.u = d.cmd_norm.denormalize(s.u);
      }
    }
    d.normalized = false;
  }
  return d;
}

PreparedData cut(Dataset data, const DataConfig& config) {
  PreparedData p;
  p.train = make_windows(data.train, config.window, config.stride);
  if (!data.validation.empty()) p.validation = make_windows(data.validation, config.window, config.stride);
  p.data = std::move(data);
  return p;
}

}  // namespace

nlohmann::json to_json(const Normalization& n) {
  return {{"mean", row_to_vector(n.mean)}, {"std", row_to_vector(n.std)}};
}

Normalization normalization_from_json(const nlohmann::json& j) {
  try {
    Normalization n{row_from_json(j.at("mean")), row_from_json(j.at("std"))};
    if (n.mean.cols() != n.std.cols()) throw FormatError("normalization mean and std differ in length");
    return n;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("normalization metadata: ") + e.what());
  }
}

PreparedData prepare_data(const DataConfig& config) {
  Dataset d = load_raw(config);
  if (config.normalize) d.fit_normalization();
  return cut(std::move(d), config);
}

PreparedData prepare_data(const DataConfig& config, const nlohmann::json& meta) {
  Dataset d = load_raw(config);
  try {
    const auto obs = meta.at("obs_columns").get<std::vector<std::string>>();
    const auto cmd = meta.at("cmd_columns").get<std::vector<std::string>>();
    if (obs != d.obs_columns || cmd != d.cmd_columns) {
      throw ContractError("data columns do not match the ones the checkpoint was trained on");
    }
    if (meta.at("normalized").get<bool>()) {
      d.apply_normalization(normalization_from_json(meta.at("obs_norm")), normalization_from_json(meta.at("cmd_norm")));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint data metadata: ") + e.what());
  }
  return cut(std::move(d), config);
}

nlohmann::json data_meta(const PreparedData& prepared, const DataConfig& config) {
  const Dataset& d = prepared.data;
  return {{"obs_columns", d.obs_columns},
          {"cmd_columns", d.cmd_columns},
          {"normalized", d.normalized},
          {"obs_norm", to_json(d.obs_norm)},
          {"cmd_norm", to_json(d.cmd_norm)},
          {"window", config.window},
          {"stride", config.stride}};
}

ModelConfig fit_model_dims(ModelConfig model, const Dataset& data) {
  model.obs_dim = data.obs_dim();
  model.cmd_dim = data.cmd_dim();
  return model;
}

}  // namespace dlm
