#include "dlm/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "dlm/error.hpp"

namespace dlm {

namespace {

void check_predictions(const Matrix& x, std::span<const Matrix> predictions) {
  if (predictions.empty()) throw ContractError("metrics: need at least one prediction");
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].rows() != x.rows() || predictions[i].cols() != x.cols()) {
      throw DimensionError("metrics: prediction " + std::to_string(i) + " has shape " + shape_string(predictions[i]) +
                           ", target " + shape_string(x));
    }
  }
}

std::pair<double, double> mean_and_variance(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, var / static_cast<double>(v.size())};
}

}  // namespace

Matrix mean_trajectory(std::span<const Matrix> predictions) {
  if (predictions.empty()) throw ContractError("metrics: need at least one prediction");
  Matrix m = predictions.front();
  for (std::size_t i = 1; i < predictions.size(); ++i) m += predictions[i];
  return m / static_cast<double>(predictions.size());
}

double rmse(const Matrix& x, std::span<const Matrix> predictions) {
  check_predictions(x, predictions);
  const Matrix err = x - mean_trajectory(predictions);
  return std::sqrt(err.rowwise().squaredNorm().mean());
}

double mae(const Matrix& x, std::span<const Matrix> predictions) {
  check_predictions(x, predictions);
  const Matrix err = x - mean_trajectory(predictions);
  return err.rowwise().norm().mean();
}

nlohmann::ordered_json EvalReport::to_json(bool with_timing) const {
  nlohmann::ordered_json j;
  j["model_kind"] = model_kind;
  j["samples"] = samples;
  j["windows"] = rmse.size();
  j["units"] = raw_units ? "raw" : "normalized";
  j["rmse_mean"] = rmse_mean;
  j["rmse_variance"] = rmse_variance;
  j["mae_mean"] = mae_mean;
  j["mae_variance"] = mae_variance;
  if (with_timing) j["seconds_per_window"] = seconds_per_window;
  j["rmse"] = rmse;
  j["mae"] = mae;
  return j;
}

EvalReport evaluate(const std::string& kind, const TrajectorySampler& sampler, std::span<const Window> windows,
                    const EvalOptions& options) {
  if (options.samples < 1) throw ContractError("evaluate: N must be >= 1");
  if (windows.empty()) throw ContractError("evaluate: no windows");
  if (options.raw_units && options.obs_norm.mean.cols() != windows.front().x.cols()) {
    throw DimensionError("evaluate: normalization statistics do not match the observation dimension");
  }
  EvalReport report;
  report.model_kind = kind;
  report.samples = options.samples;
  report.raw_units = options.raw_units;
  double seconds = 0.0;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    Rng rng = Rng::derive(options.seed, {0xe7a1, w});
    const auto start = std::chrono::steady_clock::now();
    std::vector<Matrix> preds = sampler(windows[w], options.samples, rng);
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (static_cast<Index>(preds.size()) != options.samples) throw ContractError("evaluate: sampler returned wrong N");
    Matrix target = windows[w].x;
    if (options.raw_units) {
      target = options.obs_norm.denormalize(target);
      for (Matrix& p : preds) p = options.obs_norm.denormalize(p);
    }
    report.rmse.push_back(rmse(target, preds));
    report.mae.push_back(mae(target, preds));
  }
  std::tie(report.rmse_mean, report.rmse_variance) = mean_and_variance(report.rmse);
  std::tie(report.mae_mean, report.mae_variance) = mean_and_variance(report.mae);
  report.seconds_per_window = seconds / static_cast<double>(windows.size());
  return report;
}

EvalReport evaluate_model(const std::string& kind, const MarkovCodebookModel& model, std::span<const Window> windows,
                          const EvalOptions& options) {
  const ModelConfig& cfg = model.config();
  for (const Window& w : windows) {
    if (w.x.cols() != cfg.obs_dim || w.u.cols() != cfg.cmd_dim) {
      throw ContractError("evaluate: model expects d=" + std::to_string(cfg.obs_dim) + ", q=" +
                          std::to_string(cfg.cmd_dim) + " but data has d=" + std::to_string(w.x.cols()) +
                          ", q=" + std::to_string(w.u.cols()));
    }
  }
  return evaluate(
      kind,
      [&](const Window& w, Index n, Rng& rng) { return model.generate(w.u, n, rng, options.emit_noise); }, windows,
      options);
}

EvalReport evaluate_hmm(const HmmParams& params, std::span<const Window> windows, const EvalOptions& options) {
  for (const Window& w : windows) {
    if (w.x.cols() != params.obs_dim()) {
      throw ContractError("evaluate: hmm expects d=" + std::to_string(params.obs_dim()) + " but data has d=" +
                          std::to_string(w.x.cols()));
    }
  }
  return evaluate(
      "hmm",
      [&](const Window& w, Index n, Rng& rng) { return hmm_generate(params, w.steps(), n, rng, options.emit_noise); },
      windows, options);
}

UsageReport usage_from_paths(const std::vector<std::vector<std::size_t>>& paths, Index states) {
  if (paths.empty()) throw ContractError("usage: no paths");
  const std::size_t steps = paths.front().size();
  UsageReport out;
  out.counts = Matrix::Zero(states, static_cast<Index>(steps));
  for (const auto& path : paths) {
    if (path.size() != steps) throw DimensionError("usage: paths of different lengths");
    for (std::size_t t = 0; t < steps; ++t) {
      if (path[t] >= static_cast<std::size_t>(states)) throw DimensionError("usage: index out of range");
      out.counts(static_cast<Index>(path[t]), static_cast<Index>(t)) += 1.0;
    }
  }
  out.most_selected.resize(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Index best = 0;
    for (Index k = 1; k < states; ++k) {
      if (out.counts(k, static_cast<Index>(t)) > out.counts(best, static_cast<Index>(t))) best = k;
    }
    out.most_selected[t] = static_cast<std::size_t>(best);
  }
  return out;
}

UsageReport codebook_usage(const MarkovCodebookModel& model, const Matrix& u, Index n, Rng& rng) {
  return usage_from_paths(model.sample_paths(u, n, rng), model.config().codebooks);
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ContractError("quantile: no values");
  if (!(p >= 0.0 && p <= 1.0)) throw ContractError("quantile: p must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

TrajectoryBands trajectory_bands(std::span<const Matrix> trajectories, double low_p, double high_p) {
  TrajectoryBands b;
  b.mean = mean_trajectory(trajectories);
  const Index steps = b.mean.rows();
  const Index d = b.mean.cols();
  b.low.resize(steps, d);
  b.high.resize(steps, d);
  std::vector<double> column(trajectories.size());
  for (Index t = 0; t < steps; ++t) {
    for (Index j = 0; j < d; ++j) {
      for (std::size_t i = 0; i < trajectories.size(); ++i) column[i] = trajectories[i](t, j);
      // Widened to contain the mean, which a skewed sample or rounding can
      // otherwise push past a quantile.
      b.low(t, j) = std::min(quantile(column, low_p), b.mean(t, j));
      b.high(t, j) = std::max(quantile(column, high_p), b.mean(t, j));
    }
  }
  return b;
}

}  // namespace dlm
