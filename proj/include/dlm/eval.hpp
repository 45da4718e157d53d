#pragma once

// Sample-based forecast evaluation and latent-usage analysis.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlm/data.hpp"
#include "dlm/hmm.hpp"
#include "dlm/model.hpp"

namespace dlm {

// Errors of the pointwise mean of the predictions (each T x d) against x:
// rmse = sqrt(mean_t ||x_t - xbar_t||^2), mae = mean_t ||x_t - xbar_t||.
double rmse(const Matrix& x, std::span<const Matrix> predictions);
double mae(const Matrix& x, std::span<const Matrix> predictions);
Matrix mean_trajectory(std::span<const Matrix> predictions);

struct EvalReport {
  std::string model_kind;
  Index samples = 0;  // N trajectories per window
  std::vector<double> rmse;
  std::vector<double> mae;
  double rmse_mean = 0.0;
  double rmse_variance = 0.0;  // population variance over windows
  double mae_mean = 0.0;
  double mae_variance = 0.0;
  bool raw_units = false;
  double seconds_per_window = 0.0;

  // Wall-clock time is only serialized on request so reports of identical
  // runs are byte-identical.
  nlohmann::ordered_json to_json(bool with_timing = false) const;
};

struct EvalOptions {
  Index samples = 100;
  std::uint64_t seed = 0;
  bool emit_noise = false;
  // Denormalize targets and predictions before scoring.
  bool raw_units = false;
  Normalization obs_norm;
};

// Draws N trajectories of x (T x d) given a window's commands.
using TrajectorySampler = std::function<std::vector<Matrix>(const Window&, Index n, Rng& rng)>;

// Each window gets its own stream derived from (seed, window index).
EvalReport evaluate(const std::string& kind, const TrajectorySampler& sampler, std::span<const Window> windows,
                    const EvalOptions& options);
EvalReport evaluate_model(const std::string& kind, const MarkovCodebookModel& model, std::span<const Window> windows,
                          const EvalOptions& options);
EvalReport evaluate_hmm(const HmmParams& params, std::span<const Window> windows, const EvalOptions& options);

struct UsageReport {
  std::vector<std::size_t> most_selected;  // length T
  Matrix counts;                           // K x T
};

// Visit counts of latent index paths; ties resolve to the lowest index.
UsageReport usage_from_paths(const std::vector<std::vector<std::size_t>>& paths, Index states);
UsageReport codebook_usage(const MarkovCodebookModel& model, const Matrix& u, Index n, Rng& rng);

// Linear-interpolation quantile of unsorted values (the usual "type 7").
double quantile(std::vector<double> values, double p);

struct TrajectoryBands {
  Matrix mean;  // T x d
  Matrix low;   // T x d
  Matrix high;  // T x d
};

// Pointwise mean and quantile bands; the bands always contain the mean.
TrajectoryBands trajectory_bands(std::span<const Matrix> trajectories, double low_p = 0.025, double high_p = 0.975);

}  // namespace dlm
