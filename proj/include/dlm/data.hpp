#pragma once

// Dataset ingestion, normalization, the synthetic regime-switching
// generator, and windowing.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dlm/autodiff.hpp"
#include "dlm/series.hpp"

namespace dlm {

// Per-column z-score statistics (population standard deviation).
struct Normalization {
  Matrix mean;  // 1 x n
  Matrix std;   // 1 x n

  static Normalization identity(Index columns);
  // Columns with zero spread get std 1 so they map to 0.
  static Normalization fit(const std::vector<const Matrix*>& parts);

  Matrix normalize(const Matrix& m) const;
  Matrix denormalize(const Matrix& m) const;
};

// One contiguous sequence. labels holds ground-truth regimes when known.
struct Segment {
  Matrix x;  // T x d
  Matrix u;  // T x q
  std::vector<int> labels;
  std::vector<std::string> timestamps;

  Index steps() const { return x.rows(); }
};

struct Dataset {
  std::vector<std::string> obs_columns;
  std::vector<std::string> cmd_columns;
  std::vector<Segment> train;
  std::vector<Segment> validation;
  // Statistics of the training split; identity until fit_normalization().
  Normalization obs_norm;
  Normalization cmd_norm;
  bool normalized = false;

  Index obs_dim() const { return static_cast<Index>(obs_columns.size()); }
  Index cmd_dim() const { return static_cast<Index>(cmd_columns.size()); }

  // Computes statistics from the training split and z-scores both splits.
  void fit_normalization();
  // Applies previously stored statistics to raw data.
  void apply_normalization(const Normalization& obs, const Normalization& cmd);
};

struct EttOptions {
  int train_months = 12;
  int validation_months = 4;
  bool normalize = true;
};

// ETTh1 layout: date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT. Observation OT,
// commands the six load columns. Training covers the first train_months
// calendar months, validation the following validation_months.
Dataset load_ett_csv(const std::string& path, const EttOptions& options = {});

struct SynthConfig {
  Index sequences = 600;
  Index steps = 96;
  std::uint64_t seed = 0;
  // Trailing share of sequences used for validation.
  double validation_fraction = 1.0 / 6.0;
  // Command dynamics: u_t = rho u_{t-1} + sqrt(1 - rho^2) eps, unit stationary variance.
  double command_rho = 0.97;
  // Buckets of u1 selecting the regime the chain is pulled toward.
  double bucket_edge = 0.43;
  double target_stay = 0.95;   // current regime already equals the target
  double move_to_target = 0.3;
  double move_to_other = 0.05;
  std::array<double, 3> regime_means{-1.5, 0.0, 1.5};
  std::array<double, 3> ar_coefficients{0.5, 0.8, 0.3};
  std::array<double, 3> noise_scales{0.2, 0.1, 0.3};

  void validate() const;
};

// Target regime for command value u1.
int synth_bucket(const SynthConfig& config, double u1);
// Regime transition matrix used when the command bucket is `bucket`.
Matrix synth_transition_matrix(const SynthConfig& config, int bucket);
// Observations: x_t = m_{r_t} + a_t with a_t = phi_{r_t} a_{t-1} + s_{r_t} eps_t.
// Commands: u1 drives the regime chain, u2 is an unrelated smooth signal.
// Raw values; call fit_normalization() to z-score.
Dataset synth_regime_data(const SynthConfig& config);

// Sliding windows of length T inside every segment, every `stride` steps.
// Throws ContractError if a segment is shorter than T.
std::vector<Window> make_windows(const std::vector<Segment>& segments, Index steps, Index stride);

// CSV round-trip of a Dataset: sequence,split,t,<cmd columns>,<obs columns>,regime.
// Values carry 17 significant digits.
void write_series_csv(const Dataset& data, const std::string& path);
Dataset load_series_csv(const std::string& path);

// Picks the loader from the header: ETT files start with "date".
Dataset load_dataset(const std::string& path);

}  // namespace dlm
