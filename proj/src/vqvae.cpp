#include "dlm/vqvae.hpp"

#include <chrono>
#include <limits>

#include "dlm/error.hpp"

namespace dlm {

namespace {

constexpr std::uint64_t kStage1Stream = 0x51;
constexpr std::uint64_t kStage2Stream = 0x52;

std::vector<Var> one_hot_steps(Tape& tape, const std::vector<std::vector<std::size_t>>& paths, Index states) {
  const std::size_t steps = paths.front().size();
  std::vector<Var> out;
  out.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Matrix w = Matrix::Zero(static_cast<Index>(paths.size()), states);
    for (std::size_t b = 0; b < paths.size(); ++b) w(static_cast<Index>(b), static_cast<Index>(paths[b][t])) = 1.0;
    out.push_back(tape.constant(std::move(w)));
  }
  return out;
}

template <typename StepFn>
StageLog run_stage(const TrainConfig& config, std::size_t count, std::uint64_t stream,
                   std::span<Parameter* const> params, StepFn step) {
  config.validate();
  AdamState optimizer = config.make_optimizer();
  StageLog log;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    Rng rng = Rng::derive(config.seed, {stream, static_cast<std::uint64_t>(epoch)});
    StageRecord rec;
    rec.epoch = epoch;
    const auto batches = epoch_batches(count, config.batch_size, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      try {
        StageRecord part = step(batches[b], optimizer, params);
        const double w = static_cast<double>(batches[b].size());
        rec.loss += w * part.loss;
        rec.recon += w * part.recon;
        rec.codebook += w * part.codebook;
        rec.commitment += w * part.commitment;
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) + ": " + e.what());
      }
    }
    const double n = static_cast<double>(count);
    rec.loss /= n;
    rec.recon /= n;
    rec.codebook /= n;
    rec.commitment /= n;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.epochs.push_back(rec);
  }
  return log;
}

}  // namespace

VqAssignment vq_posterior(const Matrix& z_e, const Matrix& codebooks) {
  if (z_e.cols() != codebooks.cols()) {
    throw DimensionError("vq_posterior: z_e " + shape_string(z_e) + " vs codebooks " + shape_string(codebooks));
  }
  if (codebooks.rows() < 1) throw DimensionError("vq_posterior: no codebooks");
  VqAssignment out;
  out.index.resize(static_cast<std::size_t>(z_e.rows()));
  out.quantized.resize(z_e.rows(), z_e.cols());
  for (Index b = 0; b < z_e.rows(); ++b) {
    Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index k = 0; k < codebooks.rows(); ++k) {
      const double d = (z_e.row(b) - codebooks.row(k)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    out.index[static_cast<std::size_t>(b)] = static_cast<std::size_t>(best);
    out.quantized.row(b) = codebooks.row(best);
  }
  return out;
}

void VqVaeConfig::validate() const {
  autoencoder.validate();
  prior.validate();
  if (!(commitment >= 0.0)) throw ContractError("vqvae: commitment weight must be >= 0");
}

VqStage1Terms vqvae_stage1_loss(Tape& tape, const MarkovCodebookModel& model, const SeriesBatch& batch,
                                double commitment_weight) {
  if (batch.steps() < 1) throw DimensionError("vqvae: empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.batch());
  std::vector<Var> x = constants(tape, batch.x);
  std::vector<Var> z_e = model.encode(tape, x);
  Var books = tape.param(model.codebooks());

  std::vector<Var> codes;
  codes.reserve(z_e.size());
  Var codebook_sum;
  Var commit_sum;
  for (std::size_t t = 0; t < z_e.size(); ++t) {
    const VqAssignment a = vq_posterior(z_e[t].value(), model.codebooks().value);
    Var e = gather_rows(books, a.index);
    codes.push_back(straight_through(z_e[t], e));
    Var cb = sum(square(stop_gradient(z_e[t]) - e));
    Var cm = sum(square(z_e[t] - stop_gradient(e)));
    codebook_sum = t == 0 ? cb : codebook_sum + cb;
    commit_sum = t == 0 ? cm : commit_sum + cm;
  }
  Emission em = model.decode(tape, codes);
  Var ll = gaussian_log_pdf(x[0], em.mean[0], em.sigma[0]);
  for (std::size_t t = 1; t < x.size(); ++t) ll = ll + gaussian_log_pdf(x[t], em.mean[t], em.sigma[t]);

  VqStage1Terms out;
  out.recon = sum(ll) * inv_b;
  out.codebook = codebook_sum * inv_b;
  out.commitment = commit_sum * inv_b;
  out.loss = -out.recon + out.codebook + out.commitment * commitment_weight;
  return out;
}

std::vector<std::vector<std::size_t>> vq_index_paths(const MarkovCodebookModel& model, const SeriesBatch& batch) {
  Tape tape(false);
  std::vector<Var> z_e = model.encode(tape, constants(tape, batch.x));
  std::vector<std::vector<std::size_t>> paths(static_cast<std::size_t>(batch.batch()));
  for (auto& p : paths) p.reserve(z_e.size());
  for (const Var& z : z_e) {
    const VqAssignment a = vq_posterior(z.value(), model.codebooks().value);
    for (std::size_t b = 0; b < paths.size(); ++b) paths[b].push_back(a.index[b]);
  }
  return paths;
}

Var vqvae_stage2_loss(Tape& tape, const MarkovCodebookModel& model, const SeriesBatch& batch,
                      const std::vector<std::vector<std::size_t>>& paths) {
  if (paths.size() != static_cast<std::size_t>(batch.batch())) throw DimensionError("vqvae: one path per window needed");
  for (const auto& p : paths) {
    if (p.size() != static_cast<std::size_t>(batch.steps())) throw DimensionError("vqvae: path length differs from T");
  }
  PriorOutputs prior = model.prior_forward(tape, constants(tape, batch.u));
  std::vector<Var> w = one_hot_steps(tape, paths, model.config().codebooks);
  return -sum(prior_log_prob_relaxed(w, prior)) * (1.0 / static_cast<double>(batch.batch()));
}

StageLog vqvae_stage1_train(MarkovCodebookModel& model, std::span<const Window> windows, const VqVaeConfig& config) {
  config.validate();
  check_windows(model.config(), windows);
  std::vector<Parameter*> params = model.encoder_parameters();
  for (Parameter* p : model.codebook_parameters()) params.push_back(p);
  for (Parameter* p : model.decoder_parameters()) params.push_back(p);
  return run_stage(config.autoencoder, windows.size(), kStage1Stream, params,
                   [&](const std::vector<std::size_t>& idx, AdamState& opt, std::span<Parameter* const> ps) {
                     Tape tape;
                     const SeriesBatch batch = make_batch(windows, idx);
                     VqStage1Terms terms = vqvae_stage1_loss(tape, model, batch, config.commitment);
                     optimizer_step(tape, terms.loss, ps, opt, config.autoencoder.clip_norm);
                     return StageRecord{0, terms.loss.item(), terms.recon.item(), terms.codebook.item(),
                                        terms.commitment.item(), 0.0};
                   });
}

StageLog vqvae_stage2_train(MarkovCodebookModel& model, std::span<const Window> windows, const VqVaeConfig& config) {
  config.validate();
  check_windows(model.config(), windows);
  // The encoder is frozen, so the targets are computed once.
  const SeriesBatch all = make_batch(windows);
  const auto paths = vq_index_paths(model, all);
  std::vector<Parameter*> params = model.prior_parameters();
  return run_stage(config.prior, windows.size(), kStage2Stream, params,
                   [&](const std::vector<std::size_t>& idx, AdamState& opt, std::span<Parameter* const> ps) {
                     Tape tape;
                     const SeriesBatch batch = make_batch(windows, idx);
                     std::vector<std::vector<std::size_t>> targets;
                     targets.reserve(idx.size());
                     for (std::size_t i : idx) targets.push_back(paths[i]);
                     Var loss = vqvae_stage2_loss(tape, model, batch, targets);
                     optimizer_step(tape, loss, ps, opt, config.prior.clip_norm);
                     return StageRecord{0, loss.item(), 0.0, 0.0, 0.0, 0.0};
                   });
}

}  // namespace dlm
