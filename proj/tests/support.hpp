#pragma once

// Test-only oracles: central finite differences and randomized inputs.

#include <algorithm>
#include <functional>
#include <initializer_list>
#include <vector>

#include "dlm/autodiff.hpp"
#include "dlm/rng.hpp"

namespace dlm::testing {

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
  }
  return m;
}

// d f / d x by central differences, one coordinate at a time.
inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, Matrix x, double h = 1e-6) {
  Matrix g(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index c = 0; c < x.cols(); ++c) {
      const double saved = x(r, c);
      x(r, c) = saved + h;
      const double up = f(x);
      x(r, c) = saved - h;
      const double down = f(x);
      x(r, c) = saved;
      g(r, c) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||), with exact zero treated as agreement.
inline double relative_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

inline Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

using Builder = std::function<Var(Tape&, std::vector<Var>&)>;

// Compares reverse-mode gradients of sum(out * R) for a random projection R
// against central differences, for every input.
inline double worst_gradient_error(const Builder& build, std::vector<Matrix> inputs, Rng& rng) {
  Matrix projection;
  {
    Tape t;
    std::vector<Var> vars;
    for (const auto& m : inputs) vars.push_back(t.constant(m));
    Var out = build(t, vars);
    projection = random_matrix(out.rows(), out.cols(), rng);
  }
  double worst = 0.0;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    Tape t;
    std::vector<Var> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      vars.push_back(i == which ? t.variable(inputs[i]) : t.constant(inputs[i]));
    }
    Var leaf = vars[which];
    Var loss = sum(build(t, vars) * t.constant(projection));
    t.backward(loss);
    Matrix analytic = leaf.grad();

    auto f = [&](const Matrix& m) {
      Tape ft(false);
      std::vector<Var> fv;
      for (std::size_t i = 0; i < inputs.size(); ++i) fv.push_back(ft.constant(i == which ? m : inputs[i]));
      return sum(build(ft, fv) * ft.constant(projection)).item();
    };
    Matrix numeric = numeric_gradient(f, inputs[which]);
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

// Largest relative error between reverse-mode parameter gradients of a 1x1
// loss and central differences, over every listed parameter.
inline double worst_parameter_gradient_error(const std::function<Var(Tape&)>& loss,
                                             const std::vector<Parameter*>& params, double h = 1e-6) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape t;
    t.backward(loss(t));
  }
  double worst = 0.0;
  for (Parameter* p : params) {
    const Matrix analytic = p->grad;
    const Matrix saved = p->value;
    auto f = [&](const Matrix& m) {
      p->value = m;
      Tape ft(false);
      const double v = loss(ft).item();
      p->value = saved;
      return v;
    };
    worst = std::max(worst, relative_error(analytic, numeric_gradient(f, saved, h)));
  }
  return worst;
}

}  // namespace dlm::testing
