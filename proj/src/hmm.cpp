#include "dlm/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dlm/error.hpp"

namespace dlm {

namespace {

void check_sequences(std::span<const Matrix> sequences, Index obs_dim) {
  if (sequences.empty()) throw ContractError("hmm: no sequences");
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (sequences[i].rows() < 1) throw ContractError("hmm: sequence " + std::to_string(i) + " is empty");
    if (sequences[i].cols() != obs_dim) {
      throw DimensionError("hmm: sequence " + std::to_string(i) + " has " + std::to_string(sequences[i].cols()) +
                           " columns, expected " + std::to_string(obs_dim));
    }
  }
}

// Scaled forward pass. alpha rows are normalized filtering distributions;
// returns log p(x).
double forward(const HmmParams& p, const Matrix& log_b, Matrix& alpha, Matrix& b, std::vector<double>& scale) {
  const Index steps = log_b.rows();
  const Index k = p.states();
  alpha.resize(steps, k);
  b.resize(steps, k);
  scale.assign(static_cast<std::size_t>(steps), 0.0);
  double ll = 0.0;
  for (Index t = 0; t < steps; ++t) {
    const double m = log_b.row(t).maxCoeff();
    b.row(t) = (log_b.row(t).array() - m).exp().matrix();
    if (t == 0) {
      alpha.row(0) = p.initial.array() * b.row(0).array();
    } else {
      alpha.row(t) = (alpha.row(t - 1) * p.transition).array() * b.row(t).array();
    }
    const double c = alpha.row(t).sum();
    if (!(c > 0.0) || !std::isfinite(c)) throw NumericError("hmm: forward recursion underflowed at t=" + std::to_string(t));
    alpha.row(t) /= c;
    scale[static_cast<std::size_t>(t)] = c;
    ll += std::log(c) + m;
  }
  return ll;
}

}  // namespace

void HmmParams::validate(double tol) const {
  const Index k = states();
  if (k < 1) throw ContractError("hmm: no states");
  if (transition.rows() != k || transition.cols() != k || means.rows() != k || variances.rows() != 1 ||
      variances.cols() != k || initial.rows() != 1) {
    throw DimensionError("hmm: inconsistent parameter shapes");
  }
  if ((initial.array() < 0.0).any() || std::abs(initial.sum() - 1.0) > tol) {
    throw ContractError("hmm: initial distribution does not sum to 1");
  }
  for (Index j = 0; j < k; ++j) {
    if ((transition.row(j).array() < 0.0).any() || std::abs(transition.row(j).sum() - 1.0) > tol) {
      throw ContractError("hmm: transition row " + std::to_string(j) + " does not sum to 1");
    }
  }
  if (!(variances.array() > 0.0).all()) throw ContractError("hmm: variances must be positive");
}

Matrix hmm_emission_log_density(const HmmParams& params, const Matrix& x) {
  if (x.cols() != params.obs_dim()) throw DimensionError("hmm: observation dimension mismatch");
  const Index k = params.states();
  const double d = static_cast<double>(x.cols());
  Matrix out(x.rows(), k);
  for (Index s = 0; s < k; ++s) {
    const double var = params.variances(0, s);
    const double norm = -0.5 * d * std::log(2.0 * std::numbers::pi * var);
    for (Index t = 0; t < x.rows(); ++t) {
      out(t, s) = norm - 0.5 * (x.row(t) - params.means.row(s)).squaredNorm() / var;
    }
  }
  return out;
}

double hmm_log_likelihood(const HmmParams& params, const Matrix& x) {
  Matrix alpha, b;
  std::vector<double> scale;
  return forward(params, hmm_emission_log_density(params, x), alpha, b, scale);
}

double hmm_log_likelihood(const HmmParams& params, std::span<const Matrix> sequences) {
  double total = 0.0;
  for (const Matrix& x : sequences) total += hmm_log_likelihood(params, x);
  return total;
}

HmmPosteriors hmm_posteriors(const HmmParams& params, const Matrix& x) {
  const Index steps = x.rows();
  const Index k = params.states();
  Matrix alpha, b;
  std::vector<double> scale;
  HmmPosteriors out;
  out.log_likelihood = forward(params, hmm_emission_log_density(params, x), alpha, b, scale);

  Matrix beta(steps, k);
  beta.row(steps - 1).setOnes();
  out.pair_counts = Matrix::Zero(k, k);
  for (Index t = steps - 1; t >= 1; --t) {
    const Eigen::RowVectorXd weighted = (b.row(t).array() * beta.row(t).array()).matrix();
    const double c = scale[static_cast<std::size_t>(t)];
    // xi(j, k) = alpha_{t-1}(j) A(j, k) b_t(k) beta_t(k) / c_t
    out.pair_counts.array() +=
        (alpha.row(t - 1).transpose() * weighted).array() * params.transition.array() / c;
    beta.row(t - 1) = (params.transition * weighted.transpose()).transpose() / c;
  }
  out.state = (alpha.array() * beta.array()).matrix();
  for (Index t = 0; t < steps; ++t) out.state.row(t) /= out.state.row(t).sum();
  return out;
}

void HmmFitConfig::validate() const {
  if (states < 1) throw ContractError("hmm: states must be >= 1");
  if (iterations < 1) throw ContractError("hmm: iterations must be >= 1");
  if (!(variance_floor > 0.0)) throw ContractError("hmm: variance floor must be positive");
  if (!(tolerance >= 0.0)) throw ContractError("hmm: tolerance must be >= 0");
}

HmmParams hmm_initialize(std::span<const Matrix> sequences, const HmmFitConfig& config) {
  config.validate();
  const Index d = sequences.empty() ? 0 : sequences.front().cols();
  check_sequences(sequences, d);
  const Index k = config.states;

  Index total = 0;
  for (const Matrix& s : sequences) total += s.rows();
  Matrix pooled(total, d);
  Index row = 0;
  for (const Matrix& s : sequences) {
    pooled.middleRows(row, s.rows()) = s;
    row += s.rows();
  }
  const Eigen::RowVectorXd mean = pooled.colwise().mean();
  const double var = std::max(config.variance_floor, (pooled.rowwise() - mean).squaredNorm() /
                                                         static_cast<double>(total * d));

  Rng rng = Rng::derive(config.seed, {0x4d4d});
  Matrix means(k, d);
  Eigen::VectorXd nearest = Eigen::VectorXd::Constant(total, std::numeric_limits<double>::infinity());
  means.row(0) = pooled.row(static_cast<Index>(rng.below(static_cast<std::size_t>(total))));
  for (Index s = 1; s < k; ++s) {
    for (Index i = 0; i < total; ++i) nearest(i) = std::min(nearest(i), (pooled.row(i) - means.row(s - 1)).squaredNorm());
    const double mass = nearest.sum();
    Index pick = static_cast<Index>(rng.below(static_cast<std::size_t>(total)));
    if (mass > 0.0) {
      double target = rng.uniform() * mass;
      for (Index i = 0; i < total; ++i) {
        target -= nearest(i);
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    }
    means.row(s) = pooled.row(pick);
  }
  for (int it = 0; it < 10; ++it) {
    Matrix sums = Matrix::Zero(k, d);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Index i = 0; i < total; ++i) {
      Index best = 0;
      (means.rowwise() - pooled.row(i)).rowwise().squaredNorm().minCoeff(&best);
      sums.row(best) += pooled.row(i);
      counts(best) += 1.0;
    }
    for (Index s = 0; s < k; ++s) {
      if (counts(s) > 0.0) means.row(s) = sums.row(s) / counts(s);
    }
  }

  HmmParams p;
  p.initial = Matrix::Constant(1, k, 1.0 / static_cast<double>(k));
  p.transition = Matrix::Constant(k, k, k > 1 ? 0.1 / static_cast<double>(k - 1) : 1.0);
  if (k > 1) p.transition.diagonal().setConstant(0.9);
  p.means = means;
  p.variances = Matrix::Constant(1, k, var);
  return p;
}

HmmFitResult hmm_em_fit(std::span<const Matrix> sequences, const HmmFitConfig& config) {
  HmmFitResult result;
  result.params = hmm_initialize(sequences, config);
  HmmParams& p = result.params;
  const Index k = p.states();
  const Index d = p.obs_dim();

  for (int it = 0; it < config.iterations; ++it) {
    Matrix initial = Matrix::Zero(1, k);
    Matrix pairs = Matrix::Zero(k, k);
    Eigen::RowVectorXd occupancy = Eigen::RowVectorXd::Zero(k);
    Matrix weighted_sum = Matrix::Zero(k, d);
    double ll = 0.0;
    std::vector<HmmPosteriors> post;
    post.reserve(sequences.size());
    for (const Matrix& x : sequences) {
      post.push_back(hmm_posteriors(p, x));
      const HmmPosteriors& q = post.back();
      ll += q.log_likelihood;
      initial += q.state.row(0);
      pairs += q.pair_counts;
      occupancy += q.state.colwise().sum();
      weighted_sum += q.state.transpose() * x;
    }
    result.log_likelihoods.push_back(ll);
    if (it > 0 && config.tolerance > 0.0 && ll - result.log_likelihoods[result.log_likelihoods.size() - 2] < config.tolerance) {
      break;
    }

    p.initial = initial / static_cast<double>(sequences.size());
    for (Index j = 0; j < k; ++j) {
      const double row = pairs.row(j).sum();
      if (row > 0.0) p.transition.row(j) = pairs.row(j) / row;
    }
    Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(k);
    for (Index s = 0; s < k; ++s) {
      if (occupancy(s) <= 0.0) continue;
      p.means.row(s) = weighted_sum.row(s) / occupancy(s);
    }
    for (std::size_t i = 0; i < sequences.size(); ++i) {
      const Matrix& x = sequences[i];
      for (Index s = 0; s < k; ++s) {
        sq(s) += (post[i].state.col(s).array() * (x.rowwise() - p.means.row(s)).rowwise().squaredNorm().array()).sum();
      }
    }
    for (Index s = 0; s < k; ++s) {
      if (occupancy(s) <= 0.0) continue;
      const double v = sq(s) / (occupancy(s) * static_cast<double>(d));
      if (v < config.variance_floor) {
        result.warnings.push_back("iteration " + std::to_string(it + 1) + ": variance of state " + std::to_string(s) +
                                  " collapsed to " + std::to_string(v) + "; clamped to the floor " +
                                  std::to_string(config.variance_floor));
        p.variances(0, s) = config.variance_floor;
      } else {
        p.variances(0, s) = v;
      }
    }
  }
  if (static_cast<int>(result.log_likelihoods.size()) == config.iterations) {
    result.log_likelihoods.push_back(hmm_log_likelihood(p, sequences));
  }
  return result;
}

std::vector<std::vector<std::size_t>> hmm_sample_paths(const HmmParams& params, Index steps, Index n, Rng& rng) {
  params.validate(1e-6);
  if (steps < 1 || n < 1) throw ContractError("hmm: need T >= 1 and N >= 1");
  auto draw = [&rng](const auto& probs) {
    const double u = rng.uniform();
    double acc = 0.0;
    const Index last = probs.size() - 1;
    for (Index k = 0; k < last; ++k) {
      acc += probs(k);
      if (u < acc) return static_cast<std::size_t>(k);
    }
    return static_cast<std::size_t>(last);
  };
  std::vector<std::vector<std::size_t>> paths(static_cast<std::size_t>(n));
  for (auto& path : paths) {
    path.reserve(static_cast<std::size_t>(steps));
    path.push_back(draw(params.initial.row(0)));
    for (Index t = 1; t < steps; ++t) path.push_back(draw(params.transition.row(static_cast<Index>(path.back()))));
  }
  return paths;
}

std::vector<Matrix> hmm_generate(const HmmParams& params, Index steps, Index n, Rng& rng, bool emit_noise) {
  const auto paths = hmm_sample_paths(params, steps, n, rng);
  std::vector<Matrix> out;
  out.reserve(paths.size());
  for (const auto& path : paths) {
    Matrix x(steps, params.obs_dim());
    for (Index t = 0; t < steps; ++t) {
      const Index s = static_cast<Index>(path[static_cast<std::size_t>(t)]);
      x.row(t) = params.means.row(s);
      if (emit_noise) {
        const double sd = std::sqrt(params.variances(0, s));
        for (Index j = 0; j < x.cols(); ++j) x(t, j) += sd * rng.normal();
      }
    }
    out.push_back(std::move(x));
  }
  return out;
}

Archive hmm_to_archive(const HmmParams& params, const HmmFitConfig& config, std::span<const double> log_likelihoods,
                       const nlohmann::json& extra) {
  Archive a;
  a.kind = "hmm";
  a.meta["hmm"] = {{"states", params.states()},
                   {"obs_dim", params.obs_dim()},
                   {"iterations", config.iterations},
                   {"variance_floor", config.variance_floor},
                   {"tolerance", config.tolerance},
                   {"seed", config.seed}};
  a.meta["log_likelihoods"] = std::vector<double>(log_likelihoods.begin(), log_likelihoods.end());
  a.meta["extra"] = extra;
  a.add("hmm.initial", params.initial);
  a.add("hmm.transition", params.transition);
  a.add("hmm.means", params.means);
  a.add("hmm.variances", params.variances);
  return a;
}

HmmParams hmm_from_archive(const Archive& archive) {
  if (archive.kind != "hmm") throw FormatError("checkpoint holds a '" + archive.kind + "' model, not an hmm");
  HmmParams p;
  p.initial = archive.get("hmm.initial");
  p.transition = archive.get("hmm.transition");
  p.means = archive.get("hmm.means");
  p.variances = archive.get("hmm.variances");
  try {
    p.validate(1e-6);
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint holds invalid hmm parameters: ") + e.what());
  }
  return p;
}

}  // namespace dlm
