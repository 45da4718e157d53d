// Command-line entry point: synth, train, vqvae-train, hmm-fit, evaluate,
// sample and usage.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dlm/checkpoint.hpp"
#include "dlm/config.hpp"
#include "dlm/error.hpp"
#include "dlm/eval.hpp"
#include "dlm/hmm.hpp"
#include "dlm/pipeline.hpp"
#include "dlm/training.hpp"
#include "dlm/vqvae.hpp"

namespace {

using dlm::Index;
using dlm::Matrix;
using nlohmann::json;

struct Common {
  std::string config_path;
  std::string data_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> kernel;
  std::string out;
};

dlm::ExperimentConfig load_config(const Common& c) {
  dlm::ExperimentConfig cfg = c.config_path.empty() ? dlm::ExperimentConfig{} : dlm::load_experiment_config(c.config_path);
  if (!c.data_path.empty()) cfg.data.path = c.data_path;
  if (c.seed) {
    cfg.model.seed = *c.seed;
    cfg.train.seed = *c.seed;
    cfg.vqvae.autoencoder.seed = *c.seed;
    cfg.vqvae.prior.seed = *c.seed;
    cfg.hmm.seed = *c.seed;
    cfg.eval.seed = *c.seed;
    cfg.data.synth.seed = *c.seed;
  }
  if (c.kernel) cfg.model.kernel = dlm::parse_kernel_kind(*c.kernel);
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw dlm::IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw dlm::IoError("failed writing '" + path + "'");
}

void add_common(CLI::App* app, Common& c, bool needs_out) {
  app->add_option("--config", c.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app->add_option("--data", c.data_path, "ETT or series CSV (default: config data.path, else synthetic)");
  app->add_option("--seed", c.seed, "Seed overriding every seed in the config");
  auto* out = app->add_option("--out", c.out, "Output path");
  if (needs_out) out->required();
}

void announce_epoch(const std::string& tag, int epoch, double value) {
  std::cerr << tag << " epoch " << epoch << ": " << std::setprecision(6) << value << '\n';
}

int run_synth(const Common& c) {
  const dlm::ExperimentConfig cfg = load_config(c);
  dlm::write_series_csv(dlm::synth_regime_data(cfg.data.synth), c.out);
  return 0;
}

int run_train(const Common& c, const std::string& log_path, bool quiet) {
  const dlm::ExperimentConfig cfg = load_config(c);
  const dlm::PreparedData data = dlm::prepare_data(cfg.data);
  const dlm::ModelConfig model_cfg = dlm::fit_model_dims(cfg.model, data.data);
  dlm::MarkovCodebookModel model(model_cfg);
  dlm::TrainState state;
  state.optimizer = cfg.train.make_optimizer();
  const json extra = {{"data", dlm::data_meta(data, cfg.data)}, {"train", dlm::to_json(cfg.train)}};

  dlm::TrainHooks hooks;
  if (!quiet) hooks.on_epoch = [](const dlm::EpochRecord& r) { announce_epoch("train", r.epoch, r.objective()); };
  hooks.on_checkpoint = [&](const dlm::MarkovCodebookModel& m, const dlm::TrainState& s) {
    dlm::save_model_checkpoint(c.out, m, s, "joint", extra);
  };
  const dlm::TrainLog log = dlm::train(model, data.train, cfg.train, state, hooks);
  dlm::save_model_checkpoint(c.out, model, state, "joint", extra);
  if (!log_path.empty()) write_text(log_path, dlm::to_jsonl(log));
  return 0;
}

int run_vqvae(const Common& c, bool quiet) {
  const dlm::ExperimentConfig cfg = load_config(c);
  const dlm::PreparedData data = dlm::prepare_data(cfg.data);
  dlm::MarkovCodebookModel model(dlm::fit_model_dims(cfg.model, data.data));
  const dlm::StageLog s1 = dlm::vqvae_stage1_train(model, data.train, cfg.vqvae);
  const dlm::StageLog s2 = dlm::vqvae_stage2_train(model, data.train, cfg.vqvae);
  if (!quiet) {
    for (const auto& r : s1.epochs) announce_epoch("autoencoder", r.epoch, r.loss);
    for (const auto& r : s2.epochs) announce_epoch("prior", r.epoch, r.loss);
  }
  dlm::TrainState state;
  state.epoch = cfg.vqvae.autoencoder.epochs + cfg.vqvae.prior.epochs;
  const json extra = {{"data", dlm::data_meta(data, cfg.data)}, {"commitment", cfg.vqvae.commitment}};
  dlm::save_model_checkpoint(c.out, model, state, "vqvae", extra);
  return 0;
}

int run_hmm(const Common& c, std::optional<Index> states, std::optional<int> iterations) {
  dlm::ExperimentConfig cfg = load_config(c);
  if (states) cfg.hmm.states = *states;
  if (iterations) cfg.hmm.iterations = *iterations;
  const dlm::PreparedData data = dlm::prepare_data(cfg.data);
  std::vector<Matrix> sequences;
  for (const auto& s : data.data.train) sequences.push_back(s.x);
  const dlm::HmmFitResult fit = dlm::hmm_em_fit(sequences, cfg.hmm);
  for (const auto& w : fit.warnings) std::cerr << "warning: " << w << '\n';
  const json extra = {{"data", dlm::data_meta(data, cfg.data)}};
  dlm::save_archive(dlm::hmm_to_archive(fit.params, cfg.hmm, fit.log_likelihoods, extra), c.out);
  return 0;
}

struct EvalFlags {
  std::string checkpoint;
  std::optional<Index> n;
  bool emit_noise = false;
  bool raw_units = false;
  bool timing = false;
};

dlm::DataConfig data_config_for(const dlm::ExperimentConfig& cfg, const json& meta) {
  dlm::DataConfig d = cfg.data;
  d.window = meta.at("window").get<Index>();
  d.stride = meta.at("stride").get<Index>();
  return d;
}

int run_evaluate(const Common& c, const EvalFlags& f) {
  dlm::ExperimentConfig cfg = load_config(c);
  const dlm::Archive archive = dlm::load_archive(f.checkpoint);
  const json meta = archive.meta.value("extra", json::object()).value("data", json::object());
  if (meta.empty()) throw dlm::FormatError("'" + f.checkpoint + "' carries no data metadata");
  const dlm::PreparedData data = dlm::prepare_data(data_config_for(cfg, meta), meta);
  if (data.validation.empty()) throw dlm::ContractError("the data has no validation windows");

  dlm::EvalOptions opt;
  opt.samples = f.n.value_or(cfg.eval.samples);
  opt.seed = cfg.eval.seed;
  opt.emit_noise = f.emit_noise || cfg.eval.emit_noise;
  opt.raw_units = f.raw_units || cfg.eval.raw_units;
  opt.obs_norm = data.data.obs_norm;

  dlm::EvalReport report;
  if (archive.kind == "hmm") {
    report = dlm::evaluate_hmm(dlm::hmm_from_archive(archive), data.validation, opt);
  } else {
    const dlm::LoadedModel loaded = dlm::model_from_archive(archive);
    report = dlm::evaluate_model(archive.kind, loaded.model, data.validation, opt);
  }
  write_text(c.out, report.to_json(f.timing).dump(2) + "\n");
  return 0;
}

// Commands of one window: from a CSV with a header of command columns, or
// validation window `index` of the data.
Matrix load_commands(const Common& c, const std::string& commands_path, Index index, const json& meta,
                     const dlm::ExperimentConfig& cfg) {
  const auto columns = meta.at("cmd_columns").get<std::vector<std::string>>();
  if (commands_path.empty()) {
    const dlm::PreparedData data = dlm::prepare_data(data_config_for(cfg, meta), meta);
    const auto& pool = data.validation.empty() ? data.train : data.validation;
    if (index < 0 || index >= static_cast<Index>(pool.size())) {
      throw dlm::ContractError("window index " + std::to_string(index) + " out of range (" +
                               std::to_string(pool.size()) + " windows)");
    }
    return pool[static_cast<std::size_t>(index)].u;
  }
  (void)c;
  std::ifstream in(commands_path);
  if (!in) throw dlm::IoError("cannot open commands file '" + commands_path + "'");
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    std::string h;
    while (std::getline(hs, h, ',')) header.push_back(h);
  }
  if (header != columns) throw dlm::FormatError(commands_path + ":1: header must list the command columns in training order");
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<double> row;
    while (std::getline(ls, field, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw dlm::FormatError(commands_path + ":" + std::to_string(line_no) + ": cannot parse '" + field + "'");
      }
    }
    if (row.size() != columns.size()) {
      throw dlm::FormatError(commands_path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(columns.size()) + " values");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw dlm::FormatError(commands_path + ": no command rows");
  Matrix u(static_cast<Index>(rows.size()), static_cast<Index>(columns.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t j = 0; j < columns.size(); ++j) u(static_cast<Index>(t), static_cast<Index>(j)) = rows[t][j];
  }
  if (meta.at("normalized").get<bool>()) u = dlm::normalization_from_json(meta.at("cmd_norm")).normalize(u);
  return u;
}

int run_sample(const Common& c, const EvalFlags& f, const std::string& commands, Index window) {
  const dlm::ExperimentConfig cfg = load_config(c);
  const dlm::Archive archive = dlm::load_archive(f.checkpoint);
  const json meta = archive.meta.value("extra", json::object()).value("data", json::object());
  if (meta.empty()) throw dlm::FormatError("'" + f.checkpoint + "' carries no data metadata");
  const Matrix u = load_commands(c, commands, window, meta, cfg);
  const Index n = f.n.value_or(cfg.eval.samples);
  const bool noise = f.emit_noise || cfg.eval.emit_noise;
  dlm::Rng rng = dlm::Rng::derive(cfg.eval.seed, {0x5a});

  std::vector<Matrix> traj;
  if (archive.kind == "hmm") {
    traj = dlm::hmm_generate(dlm::hmm_from_archive(archive), u.rows(), n, rng, noise);
  } else {
    traj = dlm::model_from_archive(archive).model.generate(u, n, rng, noise);
  }
  const bool raw = f.raw_units || cfg.eval.raw_units;
  if (raw && meta.at("normalized").get<bool>()) {
    const dlm::Normalization norm = dlm::normalization_from_json(meta.at("obs_norm"));
    for (Matrix& t : traj) t = norm.denormalize(t);
  }
  const dlm::TrajectoryBands bands = dlm::trajectory_bands(traj);
  const auto obs = meta.at("obs_columns").get<std::vector<std::string>>();
  std::ostringstream out;
  out << std::setprecision(17) << "t";
  for (const auto& name : obs) out << ",low." << name << ",mean." << name << ",high." << name;
  out << '\n';
  for (Index t = 0; t < bands.mean.rows(); ++t) {
    out << t;
    for (Index j = 0; j < bands.mean.cols(); ++j) {
      out << ',' << bands.low(t, j) << ',' << bands.mean(t, j) << ',' << bands.high(t, j);
    }
    out << '\n';
  }
  write_text(c.out, out.str());
  return 0;
}

int run_usage(const Common& c, const EvalFlags& f, const std::string& commands, Index window) {
  const dlm::ExperimentConfig cfg = load_config(c);
  const dlm::Archive archive = dlm::load_archive(f.checkpoint);
  if (archive.kind == "hmm") throw dlm::ContractError("usage needs a codebook model checkpoint, not an hmm");
  const json meta = archive.meta.value("extra", json::object()).value("data", json::object());
  if (meta.empty()) throw dlm::FormatError("'" + f.checkpoint + "' carries no data metadata");
  const Matrix u = load_commands(c, commands, window, meta, cfg);
  const dlm::LoadedModel loaded = dlm::model_from_archive(archive);
  dlm::Rng rng = dlm::Rng::derive(cfg.eval.seed, {0x75});
  const dlm::UsageReport usage = dlm::codebook_usage(loaded.model, u, f.n.value_or(cfg.eval.samples), rng);
  nlohmann::ordered_json j;
  j["codebooks"] = usage.counts.rows();
  j["steps"] = usage.counts.cols();
  j["samples"] = f.n.value_or(cfg.eval.samples);
  j["most_selected"] = usage.most_selected;
  std::vector<std::vector<long long>> counts(static_cast<std::size_t>(usage.counts.rows()));
  for (Index k = 0; k < usage.counts.rows(); ++k) {
    for (Index t = 0; t < usage.counts.cols(); ++t) counts[static_cast<std::size_t>(k)].push_back(std::llround(usage.counts(k, t)));
  }
  j["counts"] = counts;
  write_text(c.out, j.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete-latent sequence models: training, baselines and evaluation"};
  app.require_subcommand(1);

  Common common;
  EvalFlags eval;
  std::string log_path;
  std::string commands;
  Index window = 0;
  bool quiet = false;
  std::optional<Index> hmm_states;
  std::optional<int> hmm_iterations;

  auto* synth = app.add_subcommand("synth", "Generate the synthetic regime-switching dataset as CSV");
  add_common(synth, common, true);

  auto* train = app.add_subcommand("train", "Jointly train the model and write a checkpoint");
  add_common(train, common, true);
  train->add_option("--kernel", common.kernel, "Prior kernel")->check(CLI::IsMember({"rnn", "gru", "cnn"}));
  train->add_option("--log", log_path, "Per-epoch log (JSON lines)");
  train->add_flag("--quiet", quiet, "No per-epoch progress on stderr");

  auto* vq = app.add_subcommand("vqvae-train", "Train the two-stage VQ-VAE baseline");
  add_common(vq, common, true);
  vq->add_option("--kernel", common.kernel, "Prior kernel")->check(CLI::IsMember({"rnn", "gru", "cnn"}));
  vq->add_flag("--quiet", quiet, "No per-epoch progress on stderr");

  auto* hmm = app.add_subcommand("hmm-fit", "Fit the Gaussian HMM baseline by EM");
  add_common(hmm, common, true);
  hmm->add_option("--states", hmm_states, "Number of hidden states");
  hmm->add_option("--iterations", hmm_iterations, "EM iterations");

  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on the validation windows");
  add_common(evaluate, common, false);
  evaluate->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  evaluate->add_option("--n", eval.n, "Trajectories per window");
  evaluate->add_flag("--emit-noise", eval.emit_noise, "Add Gaussian emission noise to samples");
  evaluate->add_flag("--raw-units", eval.raw_units, "Score in the data's original units");
  evaluate->add_flag("--timing", eval.timing, "Include wall-clock time in the report");

  auto* sample = app.add_subcommand("sample", "Write mean and 95% bands of sampled trajectories");
  add_common(sample, common, false);
  sample->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  sample->add_option("--commands", commands, "CSV of commands (header: command columns)");
  sample->add_option("--window", window, "Validation window supplying commands when --commands is absent");
  sample->add_option("--n", eval.n, "Number of trajectories");
  sample->add_flag("--emit-noise", eval.emit_noise, "Add Gaussian emission noise to samples");
  sample->add_flag("--raw-units", eval.raw_units, "Write values in the data's original units");

  auto* usage = app.add_subcommand("usage", "Codebook usage counts of prior samples");
  add_common(usage, common, false);
  usage->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  usage->add_option("--commands", commands, "CSV of commands (header: command columns)");
  usage->add_option("--window", window, "Validation window supplying commands when --commands is absent");
  usage->add_option("--n", eval.n, "Number of latent paths");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return run_synth(common);
    if (*train) return run_train(common, log_path, quiet);
    if (*vq) return run_vqvae(common, quiet);
    if (*hmm) return run_hmm(common, hmm_states, hmm_iterations);
    if (*evaluate) return run_evaluate(common, eval);
    if (*sample) return run_sample(common, eval, commands, window);
    if (*usage) return run_usage(common, eval, commands, window);
  } catch (const dlm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed metadata: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
