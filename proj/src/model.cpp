#include "dlm/model.hpp"

#include <cmath>

#include "dlm/error.hpp"

namespace dlm {

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::rnn: return "rnn";
    case KernelKind::gru: return "gru";
    case KernelKind::cnn: return "cnn";
  }
  return "?";
}

KernelKind parse_kernel_kind(std::string_view name) {
  if (name == "rnn") return KernelKind::rnn;
  if (name == "gru") return KernelKind::gru;
  if (name == "cnn") return KernelKind::cnn;
  throw ContractError("unknown kernel kind '" + std::string(name) + "' (expected rnn, gru or cnn)");
}

void ModelConfig::validate() const {
  if (codebooks < 2) throw ContractError("model: need at least 2 codebooks");
  if (code_dim < 1 || mc_samples < 1 || receptive_field < 0 || obs_dim < 1 || cmd_dim < 1 || encoder_hidden < 1 ||
      decoder_hidden < 1 || kernel_hidden < 1 || depth < 1) {
    throw ContractError("model: all sizes must be positive");
  }
  if (!(sigma_floor > 0.0)) throw ContractError("model: sigma floor must be positive");
  if (!(codebook_init > 0.0)) throw ContractError("model: codebook_init must be positive");
}

ElboComponents ElboTerms::values() const {
  return ElboComponents{recon.item(), prior_term.item(), entropy_term.item(), beta};
}

std::vector<Var> constants(Tape& tape, std::span<const Matrix> values) {
  std::vector<Var> out;
  out.reserve(values.size());
  for (const Matrix& m : values) out.push_back(tape.constant(m));
  return out;
}

Var prior_log_prob_relaxed(std::span<const Var> weights, const PriorOutputs& prior) {
  if (weights.empty()) throw DimensionError("prior_log_prob_relaxed: empty sequence");
  if (weights.size() != prior.transitions.size() + 1) {
    throw DimensionError("prior_log_prob_relaxed: " + std::to_string(weights.size()) + " weight steps for a prior over " +
                         std::to_string(prior.transitions.size() + 1) + " steps");
  }
  for (std::size_t t = 0; t < weights.size(); ++t) {
    const Matrix& w = weights[t].value();
    if (w.cols() != prior.states || w.rows() != prior.initial.rows()) {
      throw DimensionError("prior_log_prob_relaxed: weights " + shape_string(w) + " at step " + std::to_string(t));
    }
    const double worst = (w.rowwise().sum().array() - 1.0).abs().maxCoeff();
    if (worst > 1e-6) {
      throw ContractError("prior_log_prob_relaxed: weights at step " + std::to_string(t) +
                          " are not normalized (off by " + std::to_string(worst) + ")");
    }
  }
  Var total = sum_rows(weights[0] * prior.initial);
  for (std::size_t t = 1; t < weights.size(); ++t) {
    total = total + sum_rows(row_outer(weights[t - 1], weights[t]) * prior.transitions[t - 1]);
  }
  return total;
}

Var posterior_entropy(std::span<const Var> log_q) {
  if (log_q.empty()) throw DimensionError("posterior_entropy: empty sequence");
  Var total = sum_rows(exp(log_q[0]) * log_q[0]);
  for (std::size_t t = 1; t < log_q.size(); ++t) total = total + sum_rows(exp(log_q[t]) * log_q[t]);
  return -total;
}

MarkovCodebookModel::MarkovCodebookModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng = Rng::derive(config_.seed, {0x1417});
  const Index k = config_.codebooks;
  const Index d = config_.code_dim;
  encoder_ = StackedRecurrence::create(CellKind::lstm, config_.obs_dim, config_.encoder_hidden, config_.depth, rng,
                                       "encoder");
  encoder_head_ = Linear::create(config_.encoder_hidden, d, rng, "encoder.head");

  Matrix books(k, d);
  const double bound = config_.codebook_init / std::sqrt(static_cast<double>(d));
  for (Index r = 0; r < k; ++r) {
    for (Index c = 0; c < d; ++c) books(r, c) = rng.uniform(-bound, bound);
  }
  codebooks_ = Parameter("codebooks", std::move(books));

  input_model_ = StackedRecurrence::create(CellKind::lstm, config_.cmd_dim, config_.cmd_dim, config_.depth, rng,
                                           "prior.input_model");
  switch (config_.kernel) {
    case KernelKind::rnn:
    case KernelKind::gru:
      kernel_cell_ = StackedRecurrence::create(config_.kernel == KernelKind::rnn ? CellKind::rnn : CellKind::gru,
                                               config_.cmd_dim, config_.kernel_hidden, 1, rng, "prior.kernel");
      break;
    case KernelKind::cnn:
      kernel_conv_ = CausalConvParams::create(config_.receptive_field, config_.cmd_dim, config_.kernel_hidden, rng,
                                              "prior.kernel");
      break;
  }
  initial_head_ = Linear::create(config_.kernel_hidden, k, rng, "prior.initial_head");
  transition_head_ = Linear::create(config_.kernel_hidden, k * k, rng, "prior.transition_head");

  decoder_ = StackedRecurrence::create(CellKind::lstm, d, config_.decoder_hidden, config_.depth, rng, "decoder");
  mean_head_ = Linear::create(config_.decoder_hidden, config_.obs_dim, rng, "decoder.mean_head");
  sigma_head_ = Linear::create(config_.decoder_hidden, 1, rng, "decoder.sigma_head");
}

std::vector<Var> MarkovCodebookModel::encode(Tape& tape, std::span<const Var> x) const {
  if (x.empty()) throw DimensionError("encode: empty sequence");
  for (const Var& v : x) {
    if (v.cols() != config_.obs_dim) {
      throw DimensionError("encode: observation width " + std::to_string(v.cols()) + ", model expects " +
                           std::to_string(config_.obs_dim));
    }
  }
  std::vector<Var> hidden = unroll(tape, encoder_, x);
  std::vector<Var> out;
  out.reserve(hidden.size());
  for (const Var& h : hidden) out.push_back(encoder_head_.apply(tape, h));
  return out;
}

std::vector<Var> MarkovCodebookModel::posterior(Tape& tape, std::span<const Var> encoded) const {
  Var books = tape.param(codebooks_);
  std::vector<Var> out;
  out.reserve(encoded.size());
  for (const Var& z : encoded) out.push_back(posterior_logits(z, books));
  return out;
}

std::vector<Var> MarkovCodebookModel::kernel_forward(Tape& tape, std::span<const Var> features) const {
  if (config_.kernel == KernelKind::cnn) {
    std::vector<Var> conv = causal_conv(tape, kernel_conv_, features);
    for (Var& v : conv) v = tanh(v);
    return conv;
  }
  return unroll(tape, kernel_cell_, features);
}

PriorOutputs MarkovCodebookModel::prior_forward(Tape& tape, std::span<const Var> u) const {
  if (u.empty()) throw DimensionError("prior_forward: empty sequence");
  for (const Var& v : u) {
    if (v.cols() != config_.cmd_dim) {
      throw DimensionError("prior_forward: command width " + std::to_string(v.cols()) + ", model expects " +
                           std::to_string(config_.cmd_dim));
    }
  }
  std::vector<Var> features = unroll(tape, input_model_, u);
  std::vector<Var> h = kernel_forward(tape, features);
  PriorOutputs out;
  out.states = config_.codebooks;
  out.initial = log_softmax(initial_head_.apply(tape, h.front()));
  out.transitions.reserve(h.size() - 1);
  for (std::size_t t = 1; t < h.size(); ++t) {
    out.transitions.push_back(log_softmax_groups(transition_head_.apply(tape, h[t]), config_.codebooks));
  }
  return out;
}

Emission MarkovCodebookModel::decode(Tape& tape, std::span<const Var> codes) const {
  if (codes.empty()) throw DimensionError("decode: empty sequence");
  for (const Var& c : codes) {
    if (c.cols() != config_.code_dim) {
      throw DimensionError("decode: code width " + std::to_string(c.cols()) + ", model expects " +
                           std::to_string(config_.code_dim));
    }
  }
  std::vector<Var> shifted;
  shifted.reserve(codes.size());
  shifted.push_back(tape.constant(Matrix::Zero(codes.front().rows(), config_.code_dim)));
  shifted.insert(shifted.end(), codes.begin(), codes.end() - 1);

  std::vector<Var> hidden = unroll(tape, decoder_, shifted);
  Emission em;
  em.mean.reserve(hidden.size());
  em.sigma.reserve(hidden.size());
  for (const Var& h : hidden) {
    em.mean.push_back(mean_head_.apply(tape, h));
    em.sigma.push_back(softplus(sigma_head_.apply(tape, h)) + config_.sigma_floor);
  }
  return em;
}

ElboTerms MarkovCodebookModel::elbo(Tape& tape, const SeriesBatch& batch, double beta, double tau, Rng& rng) const {
  if (beta < 0.0 || beta > 1.0) throw ContractError("elbo: beta must lie in [0, 1]");
  if (batch.steps() < 1) throw DimensionError("elbo: empty batch");
  const double batch_size = static_cast<double>(batch.batch());
  std::vector<Var> x = constants(tape, batch.x);
  std::vector<Var> u = constants(tape, batch.u);

  std::vector<Var> log_q = posterior(tape, encode(tape, x));
  PriorOutputs prior = prior_forward(tape, u);
  Var books = tape.param(codebooks_);

  Var recon;
  Var prior_term;
  for (Index i = 0; i < config_.mc_samples; ++i) {
    std::vector<Var> weights;
    std::vector<Var> codes;
    weights.reserve(log_q.size());
    codes.reserve(log_q.size());
    for (const Var& lq : log_q) {
      RelaxedSample s = gumbel_softmax(lq, tau, books, rng);
      weights.push_back(s.weights);
      codes.push_back(s.mixed_code);
    }
    Emission em = decode(tape, codes);
    Var ll = gaussian_log_pdf(x[0], em.mean[0], em.sigma[0]);
    for (std::size_t t = 1; t < x.size(); ++t) ll = ll + gaussian_log_pdf(x[t], em.mean[t], em.sigma[t]);
    Var lp = prior_log_prob_relaxed(weights, prior);
    recon = i == 0 ? sum(ll) : recon + sum(ll);
    prior_term = i == 0 ? sum(lp) : prior_term + sum(lp);
  }
  const double scale = 1.0 / (batch_size * static_cast<double>(config_.mc_samples));
  ElboTerms terms;
  terms.beta = beta;
  terms.recon = recon * scale;
  terms.prior_term = prior_term * scale;
  terms.entropy_term = sum(posterior_entropy(log_q)) * (1.0 / batch_size);
  terms.objective = terms.recon + (terms.prior_term + terms.entropy_term) * beta;
  return terms;
}

std::vector<std::vector<std::size_t>> MarkovCodebookModel::sample_paths(const Matrix& u, Index n, Rng& rng) const {
  if (n < 1) throw ContractError("sample_paths: need at least one path");
  if (u.rows() < 1) throw DimensionError("sample_paths: empty command sequence");
  Tape tape(false);
  std::vector<Var> steps;
  steps.reserve(static_cast<std::size_t>(u.rows()));
  for (Index t = 0; t < u.rows(); ++t) steps.push_back(tape.constant(u.row(t)));
  PriorOutputs prior = prior_forward(tape, steps);

  const Index k = config_.codebooks;
  std::vector<std::vector<std::size_t>> paths(static_cast<std::size_t>(n));
  const Matrix& initial = prior.initial.value();
  for (auto& path : paths) {
    path.reserve(static_cast<std::size_t>(u.rows()));
    path.push_back(gumbel_argmax(std::span<const double>(initial.data(), static_cast<std::size_t>(k)), rng));
    for (const Var& trans : prior.transitions) {
      const double* row = trans.value().data() + static_cast<Index>(path.back()) * k;
      path.push_back(gumbel_argmax(std::span<const double>(row, static_cast<std::size_t>(k)), rng));
    }
  }
  return paths;
}

std::vector<Matrix> MarkovCodebookModel::decode_paths(const std::vector<std::vector<std::size_t>>& paths, Rng& rng,
                                                      bool emit_noise) const {
  if (paths.empty()) throw ContractError("decode_paths: no paths");
  const std::size_t steps = paths.front().size();
  const Index n = static_cast<Index>(paths.size());
  Tape tape(false);
  std::vector<Var> codes;
  codes.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Matrix c(n, config_.code_dim);
    for (Index i = 0; i < n; ++i) {
      const auto& path = paths[static_cast<std::size_t>(i)];
      if (path.size() != steps) throw DimensionError("decode_paths: paths of different lengths");
      if (static_cast<Index>(path[t]) >= config_.codebooks) throw DimensionError("decode_paths: index out of range");
      c.row(i) = codebooks_.value.row(static_cast<Index>(path[t]));
    }
    codes.push_back(tape.constant(std::move(c)));
  }
  Emission em = decode(tape, codes);

  std::vector<Matrix> out(paths.size(), Matrix(static_cast<Index>(steps), config_.obs_dim));
  for (std::size_t t = 0; t < steps; ++t) {
    const Matrix& mu = em.mean[t].value();
    const Matrix& sigma = em.sigma[t].value();
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < config_.obs_dim; ++j) {
        double v = mu(i, j);
        if (emit_noise) v += sigma(i, 0) * rng.normal();
        out[static_cast<std::size_t>(i)](static_cast<Index>(t), j) = v;
      }
    }
  }
  return out;
}

std::vector<Matrix> MarkovCodebookModel::generate(const Matrix& u, Index n, Rng& rng, bool emit_noise) const {
  if (u.cols() != config_.cmd_dim) {
    throw DimensionError("generate: command width " + std::to_string(u.cols()) + ", model expects " +
                         std::to_string(config_.cmd_dim));
  }
  return decode_paths(sample_paths(u, n, rng), rng, emit_noise);
}

std::vector<Parameter*> MarkovCodebookModel::encoder_parameters() {
  std::vector<Parameter*> out;
  encoder_.collect(out);
  encoder_head_.collect(out);
  return out;
}

std::vector<Parameter*> MarkovCodebookModel::codebook_parameters() { return {&codebooks_}; }

std::vector<Parameter*> MarkovCodebookModel::prior_parameters() {
  std::vector<Parameter*> out;
  input_model_.collect(out);
  if (config_.kernel == KernelKind::cnn) {
    kernel_conv_.collect(out);
  } else {
    kernel_cell_.collect(out);
  }
  initial_head_.collect(out);
  transition_head_.collect(out);
  return out;
}

std::vector<Parameter*> MarkovCodebookModel::decoder_parameters() {
  std::vector<Parameter*> out;
  decoder_.collect(out);
  mean_head_.collect(out);
  sigma_head_.collect(out);
  return out;
}

std::vector<Parameter*> MarkovCodebookModel::parameters() {
  std::vector<Parameter*> out = encoder_parameters();
  for (const auto& group : {codebook_parameters(), prior_parameters(), decoder_parameters()}) {
    out.insert(out.end(), group.begin(), group.end());
  }
  return out;
}

std::vector<const Parameter*> MarkovCodebookModel::parameters() const {
  std::vector<Parameter*> all = const_cast<MarkovCodebookModel*>(this)->parameters();
  return {all.begin(), all.end()};
}

Parameter& MarkovCodebookModel::parameter(std::string_view name) {
  for (Parameter* p : parameters()) {
    if (p->name == name) return *p;
  }
  throw ContractError("model has no parameter named '" + std::string(name) + "'");
}

const Parameter& MarkovCodebookModel::parameter(std::string_view name) const {
  return const_cast<MarkovCodebookModel*>(this)->parameter(name);
}

}  // namespace dlm
