#include "dlm/config.hpp"

#include <fstream>
#include <set>

#include "dlm/error.hpp"

namespace dlm {

namespace {

using nlohmann::json;

// Reads keys of one object, remembering which were consumed.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw FormatError("config: '" + name_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw FormatError("config: " + name_ + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) const { return j_.at(key); }
  std::string path(const char* key) const { return name_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw FormatError("config: unknown key '" + name_ + "." + item.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

ModelConfig read_model(const json& j, ModelConfig c, const std::string& name) {
  Section s(j, name);
  s.read("codebooks", c.codebooks);
  s.read("code_dim", c.code_dim);
  s.read("mc_samples", c.mc_samples);
  s.read("receptive_field", c.receptive_field);
  if (s.has("kernel")) {
    try {
      c.kernel = parse_kernel_kind(s.at("kernel").get<std::string>());
    } catch (const json::exception& e) {
      throw FormatError("config: " + s.path("kernel") + ": " + e.what());
    } catch (const ContractError& e) {
      throw FormatError("config: " + s.path("kernel") + ": " + e.what());
    }
  }
  s.read("obs_dim", c.obs_dim);
  s.read("cmd_dim", c.cmd_dim);
  s.read("encoder_hidden", c.encoder_hidden);
  s.read("decoder_hidden", c.decoder_hidden);
  s.read("kernel_hidden", c.kernel_hidden);
  s.read("depth", c.depth);
  s.read("sigma_floor", c.sigma_floor);
  s.read("codebook_init", c.codebook_init);
  s.read("seed", c.seed);
  s.finish();
  return c;
}

TrainConfig read_train(const json& j, TrainConfig c, const std::string& name) {
  Section s(j, name);
  s.read("epochs", c.epochs);
  s.read("beta_warmup_epochs", c.beta_warmup_epochs);
  s.read("batch_size", c.batch_size);
  s.read("learning_rate", c.learning_rate);
  s.read("adam_beta1", c.adam_beta1);
  s.read("adam_beta2", c.adam_beta2);
  s.read("adam_epsilon", c.adam_epsilon);
  s.read("clip_norm", c.clip_norm);
  s.read("tau_initial", c.temperature.initial);
  s.read("tau_decay", c.temperature.decay);
  s.read("tau_minimum", c.temperature.minimum);
  s.read("seed", c.seed);
  s.read("checkpoint_every", c.checkpoint_every);
  s.finish();
  return c;
}

SynthConfig read_synth(const json& j, SynthConfig c, const std::string& name) {
  Section s(j, name);
  s.read("sequences", c.sequences);
  s.read("steps", c.steps);
  s.read("seed", c.seed);
  s.read("validation_fraction", c.validation_fraction);
  s.read("command_rho", c.command_rho);
  s.read("bucket_edge", c.bucket_edge);
  s.read("target_stay", c.target_stay);
  s.read("move_to_target", c.move_to_target);
  s.read("move_to_other", c.move_to_other);
  s.read("regime_means", c.regime_means);
  s.read("ar_coefficients", c.ar_coefficients);
  s.read("noise_scales", c.noise_scales);
  s.finish();
  return c;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  // Baseline stages have no beta annealing.
  vqvae.autoencoder.beta_warmup_epochs = 1;
  vqvae.prior.beta_warmup_epochs = 1;
}

json to_json(const ModelConfig& c) {
  return {{"codebooks", c.codebooks},
          {"code_dim", c.code_dim},
          {"mc_samples", c.mc_samples},
          {"receptive_field", c.receptive_field},
          {"kernel", std::string(to_string(c.kernel))},
          {"obs_dim", c.obs_dim},
          {"cmd_dim", c.cmd_dim},
          {"encoder_hidden", c.encoder_hidden},
          {"decoder_hidden", c.decoder_hidden},
          {"kernel_hidden", c.kernel_hidden},
          {"depth", c.depth},
          {"sigma_floor", c.sigma_floor},
          {"codebook_init", c.codebook_init},
          {"seed", c.seed}};
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"beta_warmup_epochs", c.beta_warmup_epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"clip_norm", c.clip_norm},
          {"tau_initial", c.temperature.initial},
          {"tau_decay", c.temperature.decay},
          {"tau_minimum", c.temperature.minimum},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every}};
}

json to_json(const SynthConfig& c) {
  return {{"sequences", c.sequences},
          {"steps", c.steps},
          {"seed", c.seed},
          {"validation_fraction", c.validation_fraction},
          {"command_rho", c.command_rho},
          {"bucket_edge", c.bucket_edge},
          {"target_stay", c.target_stay},
          {"move_to_target", c.move_to_target},
          {"move_to_other", c.move_to_other},
          {"regime_means", c.regime_means},
          {"ar_coefficients", c.ar_coefficients},
          {"noise_scales", c.noise_scales}};
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["data"] = {{"path", c.data.path},
               {"window", c.data.window},
               {"stride", c.data.stride},
               {"normalize", c.data.normalize},
               {"synth", to_json(c.data.synth)}};
  j["model"] = to_json(c.model);
  j["train"] = to_json(c.train);
  j["vqvae"] = {{"autoencoder", to_json(c.vqvae.autoencoder)},
                {"prior", to_json(c.vqvae.prior)},
                {"commitment", c.vqvae.commitment}};
  j["hmm"] = {{"states", c.hmm.states},
              {"iterations", c.hmm.iterations},
              {"variance_floor", c.hmm.variance_floor},
              {"tolerance", c.hmm.tolerance},
              {"seed", c.hmm.seed}};
  j["eval"] = {{"samples", c.eval.samples},
               {"seed", c.eval.seed},
               {"emit_noise", c.eval.emit_noise},
               {"raw_units", c.eval.raw_units}};
  return j;
}

ModelConfig model_config_from_json(const json& j, ModelConfig base) { return read_model(j, base, "model"); }
TrainConfig train_config_from_json(const json& j, TrainConfig base) { return read_train(j, base, "train"); }
SynthConfig synth_config_from_json(const json& j, SynthConfig base) { return read_synth(j, base, "synth"); }

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  Section root(j, "config");
  if (root.has("data")) {
    Section s(root.at("data"), "data");
    s.read("path", c.data.path);
    s.read("window", c.data.window);
    s.read("stride", c.data.stride);
    s.read("normalize", c.data.normalize);
    if (s.has("synth")) c.data.synth = read_synth(s.at("synth"), c.data.synth, "data.synth");
    s.finish();
  }
  if (root.has("model")) c.model = read_model(root.at("model"), c.model, "model");
  if (root.has("train")) c.train = read_train(root.at("train"), c.train, "train");
  if (root.has("vqvae")) {
    Section s(root.at("vqvae"), "vqvae");
    if (s.has("autoencoder")) c.vqvae.autoencoder = read_train(s.at("autoencoder"), c.vqvae.autoencoder, "vqvae.autoencoder");
    if (s.has("prior")) c.vqvae.prior = read_train(s.at("prior"), c.vqvae.prior, "vqvae.prior");
    s.read("commitment", c.vqvae.commitment);
    s.finish();
  }
  if (root.has("hmm")) {
    Section s(root.at("hmm"), "hmm");
    s.read("states", c.hmm.states);
    s.read("iterations", c.hmm.iterations);
    s.read("variance_floor", c.hmm.variance_floor);
    s.read("tolerance", c.hmm.tolerance);
    s.read("seed", c.hmm.seed);
    s.finish();
  }
  if (root.has("eval")) {
    Section s(root.at("eval"), "eval");
    s.read("samples", c.eval.samples);
    s.read("seed", c.eval.seed);
    s.read("emit_noise", c.eval.emit_noise);
    s.read("raw_units", c.eval.raw_units);
    s.finish();
  }
  root.finish();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("config '" + path + "': " + e.what());
  }
  try {
    return experiment_config_from_json(j);
  } catch (const FormatError& e) {
    throw FormatError("config '" + path + "': " + e.what());
  }
}

}  // namespace dlm
