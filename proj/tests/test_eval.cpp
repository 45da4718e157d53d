#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dlm/error.hpp"
#include "dlm/eval.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace dlm;
using namespace dlm::testing;

TEST_CASE("metric hand examples") {
  const Matrix x{{0.0}, {0.0}};
  const std::vector<Matrix> preds{Matrix{{1.0}, {1.0}}, Matrix{{-1.0}, {3.0}}};
  CHECK(mean_trajectory(preds) == Matrix{{0.0}, {2.0}});
  CHECK(rmse(x, preds) == std::sqrt(2.0));
  CHECK(mae(x, preds) == 1.0);
}

TEST_CASE("perfect and offset predictions") {
  Rng rng(1);
  const Matrix x = random_matrix(9, 1, rng);
  CHECK(rmse(x, std::vector<Matrix>{x, x}) == 0.0);
  CHECK(mae(x, std::vector<Matrix>{x}) == 0.0);
  for (double c : {0.5, -2.0, 3.25}) {
    // Trajectories scattered symmetrically around x + c.
    const Matrix noise = random_matrix(9, 1, rng);
    const std::vector<Matrix> preds{(x.array() + c).matrix() + noise, (x.array() + c).matrix() - noise};
    CHECK(rmse(x, preds) == doctest::Approx(std::abs(c)).epsilon(1e-14));
    CHECK(mae(x, preds) == doctest::Approx(std::abs(c)).epsilon(1e-14));
  }
  // Multivariate: the norm of the per-step error vector.
  const Matrix x2 = Matrix::Zero(3, 2);
  const std::vector<Matrix> p2{Matrix::Constant(3, 2, 1.0)};
  CHECK(rmse(x2, p2) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(mae(x2, p2) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(rmse(x, std::vector<Matrix>{}), ContractError);
  CHECK_THROWS_AS(mae(x, std::vector<Matrix>{Matrix::Zero(8, 1)}), DimensionError);
}

TEST_CASE("evaluation aggregates per-window metrics") {
  Rng rng(2);
  std::vector<Window> windows;
  for (int i = 0; i < 7; ++i) windows.push_back(Window{random_matrix(10, 1, rng), random_matrix(10, 2, rng)});
  // N = 1 deterministic sampler: the report equals single-trajectory errors.
  auto constant = [](const Window& w, Index n, Rng&) {
    return std::vector<Matrix>(static_cast<std::size_t>(n), Matrix::Constant(w.steps(), 1, 0.3));
  };
  EvalOptions opt;
  opt.samples = 1;
  const EvalReport r = evaluate("const", constant, windows, opt);
  REQUIRE(r.rmse.size() == 7);
  double mean = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < 7; ++i) {
    const Matrix diff = (windows[i].x.array() - 0.3).matrix();
    CHECK(r.rmse[i] == doctest::Approx(std::sqrt(diff.squaredNorm() / 10.0)).epsilon(1e-14));
    CHECK(r.mae[i] == doctest::Approx(diff.cwiseAbs().sum() / 10.0).epsilon(1e-14));
    mean += r.rmse[i];
  }
  mean /= 7.0;
  for (double v : r.rmse) sq += (v - mean) * (v - mean);
  CHECK(std::abs(r.rmse_mean - mean) < 1e-12);
  CHECK(std::abs(r.rmse_variance - sq / 7.0) < 1e-12);
  CHECK(r.rmse_variance >= 0.0);
  CHECK(r.samples == 1);

  SUBCASE("raw units") {
    opt.raw_units = true;
    opt.obs_norm = Normalization{Matrix{{5.0}}, Matrix{{2.0}}};
    const EvalReport raw = evaluate("const", constant, windows, opt);
    CHECK(raw.raw_units);
    CHECK(raw.rmse[3] == doctest::Approx(2.0 * r.rmse[3]).epsilon(1e-14));
    opt.obs_norm = Normalization::identity(2);
    CHECK_THROWS_AS(evaluate("const", constant, windows, opt), DimensionError);
  }
  SUBCASE("errors") {
    opt.samples = 0;
    CHECK_THROWS_AS(evaluate("const", constant, windows, opt), ContractError);
    opt.samples = 2;
    auto wrong_n = [](const Window& w, Index, Rng&) { return std::vector<Matrix>{w.x}; };
    CHECK_THROWS_AS(evaluate("bad", wrong_n, windows, opt), ContractError);
    CHECK_THROWS_AS(evaluate("const", constant, std::vector<Window>{}, opt), ContractError);
  }
}

TEST_CASE("evaluation is pure and serializes deterministically") {
  const Dataset d = small_synth();
  const auto windows = make_windows(d.validation, 12, 12);
  MarkovCodebookModel model(small_model());
  EvalOptions opt;
  opt.samples = 5;
  opt.seed = 3;
  const EvalReport a = evaluate_model("joint", model, windows, opt);
  const EvalReport b = evaluate_model("joint", model, windows, opt);
  CHECK(a.rmse == b.rmse);
  CHECK(a.to_json().dump() == b.to_json().dump());
  CHECK_FALSE(a.to_json().contains("seconds_per_window"));
  CHECK(a.to_json(true).contains("seconds_per_window"));
  CHECK(a.to_json()["model_kind"] == "joint");
  CHECK(a.to_json()["samples"] == 5);

  // Windows draw from their own streams: a subset reproduces the prefix.
  const std::vector<Window> first(windows.begin(), windows.begin() + 2);
  const EvalReport c = evaluate_model("joint", model, first, opt);
  CHECK(c.rmse[0] == a.rmse[0]);
  CHECK(c.rmse[1] == a.rmse[1]);

  opt.seed = 4;
  CHECK(evaluate_model("joint", model, windows, opt).rmse != a.rmse);

  MarkovCodebookModel wide(small_model(2, 2));
  CHECK_THROWS_AS(evaluate_model("joint", wide, windows, opt), ContractError);

  HmmParams p;
  p.initial = Matrix{{0.5, 0.5}};
  p.transition = Matrix{{0.9, 0.1}, {0.1, 0.9}};
  p.means = Matrix{{-1.0}, {1.0}};
  p.variances = Matrix{{0.5, 0.5}};
  const EvalReport h1 = evaluate_hmm(p, windows, opt);
  const EvalReport h2 = evaluate_hmm(p, windows, opt);
  CHECK(h1.model_kind == "hmm");
  CHECK(h1.to_json().dump() == h2.to_json().dump());
  p.means = Matrix{{-1.0, 0.0}, {1.0, 0.0}};
  CHECK_THROWS_AS(evaluate_hmm(p, windows, opt), ContractError);
}

TEST_CASE("usage counts") {
  SUBCASE("from explicit paths") {
    const std::vector<std::vector<std::size_t>> paths{{0, 1, 2}, {0, 2, 2}, {1, 2, 1}, {1, 1, 0}};
    const UsageReport u = usage_from_paths(paths, 3);
    CHECK(u.counts == Matrix{{2, 0, 1}, {2, 2, 1}, {0, 2, 2}});
    // Ties go to the lowest index.
    CHECK(u.most_selected == std::vector<std::size_t>{0, 1, 2});
    CHECK_THROWS_AS(usage_from_paths({{0, 3}}, 3), DimensionError);
    CHECK_THROWS_AS(usage_from_paths({{0, 1}, {0}}, 3), DimensionError);
    CHECK_THROWS_AS(usage_from_paths({}, 3), ContractError);
  }
  SUBCASE("sampled columns sum to N") {
    MarkovCodebookModel model(small_model());
    Rng rng(4);
    const Matrix u = random_matrix(9, 2, rng);
    const UsageReport r = codebook_usage(model, u, 250, rng);
    CHECK(r.counts.rows() == 3);
    CHECK(r.counts.cols() == 9);
    CHECK((r.counts.colwise().sum().array() == 250.0).all());
    CHECK((r.counts.array() >= 0.0).all());
    CHECK((r.counts.array() == r.counts.array().round()).all());
  }
  SUBCASE("deterministic alternating chain") {
    ModelConfig c = small_model();
    c.codebooks = 2;
    MarkovCodebookModel model(c);
    model.parameter("prior.initial_head.weight").value.setZero();
    model.parameter("prior.transition_head.weight").value.setZero();
    model.parameter("prior.initial_head.bias").value = Matrix{{80.0, 0.0}};
    model.parameter("prior.transition_head.bias").value = Matrix{{0.0, 80.0, 80.0, 0.0}};
    Rng rng(5);
    const UsageReport r = codebook_usage(model, Matrix::Zero(6, 2), 40, rng);
    CHECK(r.most_selected == std::vector<std::size_t>{0, 1, 0, 1, 0, 1});
    for (Index t = 0; t < 6; ++t) CHECK(r.counts(t % 2, t) == 40.0);
  }
}

TEST_CASE("quantiles and bands") {
  CHECK(quantile({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
  CHECK(quantile({4, 1, 3, 2}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({10, 1, 2, 3, 4, 5, 6, 7, 8, 9}, 0.1) == doctest::Approx(1.9));
  CHECK(quantile({7}, 0.975) == 7.0);
  CHECK(quantile({3, 1, 2}, 0.0) == 1.0);
  CHECK(quantile({3, 1, 2}, 1.0) == 3.0);
  CHECK_THROWS_AS(quantile({}, 0.5), ContractError);
  CHECK_THROWS_AS(quantile({1.0}, 1.5), ContractError);

  Rng rng(6);
  std::vector<Matrix> trajs;
  for (int i = 0; i < 100; ++i) trajs.push_back(random_matrix(20, 2, rng, -3.0, 3.0));
  const TrajectoryBands b = trajectory_bands(trajs);
  CHECK(b.mean == mean_trajectory(trajs));
  CHECK((b.low.array() <= b.mean.array()).all());
  CHECK((b.mean.array() <= b.high.array()).all());
  std::vector<double> col;
  for (const Matrix& m : trajs) col.push_back(m(4, 1));
  CHECK(b.low(4, 1) == quantile(col, 0.025));
  CHECK(b.high(4, 1) == quantile(col, 0.975));

  // A skewed sample whose mean exceeds the upper quantile.
  std::vector<Matrix> skewed(99, Matrix::Zero(1, 1));
  skewed.push_back(Matrix::Constant(1, 1, 1000.0));
  const TrajectoryBands s = trajectory_bands(skewed);
  CHECK(s.mean(0, 0) == 10.0);
  CHECK(s.high(0, 0) == 10.0);
  CHECK(s.low(0, 0) == 0.0);
  // Identical trajectories: all three coincide even when summing rounds.
  std::vector<Matrix> same(100, Matrix::Constant(1, 1, 0.000745865123));
  const TrajectoryBands e = trajectory_bands(same);
  CHECK(e.low(0, 0) <= e.mean(0, 0));
  CHECK(e.mean(0, 0) <= e.high(0, 0));
}
