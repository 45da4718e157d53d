#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "dlm/autodiff.hpp"
#include "dlm/error.hpp"
#include "dlm/optim.hpp"
#include "op_cases.hpp"
#include "support.hpp"

using namespace dlm;
using dlm::testing::numeric_gradient;
using dlm::testing::random_matrix;
using dlm::testing::relative_error;

using dlm::testing::mat;
using dlm::testing::worst_gradient_error;
using Builder = dlm::testing::Builder;

TEST_CASE("matmul examples") {
  Tape t;
  Var a = t.constant(Matrix::Identity(2, 2));
  Var b = t.constant(mat({{3, 1}, {2, 4}}));
  CHECK(matmul(a, b).value() == mat({{3, 1}, {2, 4}}));

  Var x = t.variable(mat({{1, 2}}));
  Var y = t.constant(mat({{3}, {4}}));
  Var c = matmul(x, y);
  CHECK(c.item() == 11.0);
  t.backward(sum(c));
  CHECK(x.grad() == mat({{3, 4}}));

  auto f = [&](const Matrix& m) { return (m * mat({{3}, {4}})).sum(); };
  CHECK(relative_error(numeric_gradient(f, mat({{1, 2}})), mat({{3, 4}})) < 1e-9);
}

TEST_CASE("matmul shape mismatch reports both shapes") {
  Tape t;
  Var a = t.constant(Matrix::Zero(2, 3));
  Var b = t.constant(Matrix::Zero(2, 3));
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("elementwise examples") {
  Tape t;
  CHECK(tanh(t.constant(Matrix::Zero(2, 3))).value().isZero());
  Var x = t.constant(mat({{0.5, 2.0}}));
  CHECK((exp(log(x)).value() - mat({{0.5, 2.0}})).cwiseAbs().maxCoeff() < 1e-15);

  Var z = t.variable(Matrix::Zero(1, 1));
  t.backward(sigmoid(z));
  CHECK(z.grad()(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("elementwise domain and shape errors") {
  Tape t;
  CHECK_THROWS_AS(log(t.constant(mat({{1.0, 0.0}}))), DomainError);
  CHECK_THROWS_AS(log(t.constant(mat({{-1.0}}))), DomainError);
  CHECK_THROWS_AS(div(t.constant(mat({{1.0, 2.0}})), t.constant(mat({{1.0, 0.0}}))), DomainError);
  CHECK_THROWS_AS(add(t.constant(Matrix::Zero(2, 3)), t.constant(Matrix::Zero(3, 2))), DimensionError);
  // scalar and row/column broadcasts are fine
  CHECK(add(t.constant(Matrix::Zero(2, 3)), t.constant(Matrix::Ones(1, 1))).value() == Matrix::Ones(2, 3));
  CHECK(mul(t.constant(Matrix::Ones(2, 3)), t.constant(mat({{1, 2, 3}}))).value().row(1) == mat({{1, 2, 3}}));
}

TEST_CASE("softmax examples and properties") {
  Tape t;
  Var s = softmax(t.constant(Matrix::Constant(1, 4, -3.7)));
  CHECK((s.value().array() - 0.25).abs().maxCoeff() < 1e-15);

  Var p = softmax(t.constant(mat({{0.0, std::log(3.0)}})));
  CHECK(p.value()(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(p.value()(0, 1) == doctest::Approx(0.75).epsilon(1e-14));

  CHECK_THROWS_AS(softmax(t.constant(Matrix(1, 0))), DimensionError);

  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Index k = 1 + static_cast<Index>(rng.below(12));
    Matrix x = random_matrix(1, k, rng, -20.0, 20.0);
    Matrix a = softmax(t.constant(x)).value();
    Matrix b = softmax(t.constant((x.array() + 1000.0).matrix())).value();
    CHECK(std::abs(a.sum() - 1.0) < 1e-12);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.array() > 0.0).all());
  }
}

TEST_CASE("logsumexp examples and bounds") {
  Tape t;
  CHECK(logsumexp(t.constant(mat({{2.5}}))).item() == 2.5);
  CHECK(logsumexp(t.constant(Matrix::Constant(1, 5, 1.5))).item() ==
        doctest::Approx(1.5 + std::log(5.0)).epsilon(1e-15));
  CHECK(logsumexp(t.constant(mat({{0.0, std::log(3.0)}}))).item() == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK_THROWS_AS(logsumexp(t.constant(Matrix(1, 0))), DimensionError);

  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const Index k = 1 + static_cast<Index>(rng.below(10));
    Matrix x = random_matrix(1, k, rng, -50.0, 50.0);
    const double lse = logsumexp(t.constant(x)).item();
    CHECK(lse >= x.maxCoeff());
    CHECK(lse <= x.maxCoeff() + std::log(static_cast<double>(k)) + 1e-12);
  }
}

TEST_CASE("backward closed forms") {
  SUBCASE("square") {
    Tape t;
    Var x = t.variable(mat({{3.0}}));
    t.backward(square(x));
    CHECK(x.grad()(0, 0) == 6.0);
  }
  SUBCASE("softmax cross-entropy") {
    Tape t;
    Matrix logits = mat({{0.3, -1.2, 2.0, 0.1}});
    Matrix onehot = mat({{0, 0, 1, 0}});
    Var x = t.variable(logits);
    t.backward(-sum(log_softmax(x) * t.constant(onehot)));
    Matrix expected = softmax(t.constant(logits)).value() - onehot;
    CHECK((x.grad() - expected).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("non-scalar loss") {
    Tape t;
    Var x = t.variable(Matrix::Ones(2, 2));
    CHECK_THROWS_AS(t.backward(x * 2.0), ContractError);
  }
}

TEST_CASE("gradient accumulation and reset") {
  Parameter p("w", mat({{2.0}}));
  Parameter unused("u", mat({{1.0, 1.0}}));
  Tape t;
  Var w = t.param(p);
  t.param(unused);
  Var loss = square(w) * 3.0;
  t.backward(loss);
  CHECK(p.grad(0, 0) == 12.0);
  t.backward(loss);
  CHECK(p.grad(0, 0) == 24.0);
  CHECK(unused.grad.isZero());
  p.zero_grad();
  CHECK(p.grad(0, 0) == 0.0);
}

TEST_CASE("non-finite values fail fast") {
  Tape t;
  try {
    exp(t.constant(mat({{1000.0}})));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("exp") != std::string::npos);
  }
  Var x = t.variable(mat({{1e-320}}));
  Var y = log(x);
  try {
    t.backward(y);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
}

TEST_CASE("every op matches central finite differences") {
  Rng rng(2024);
  const double tol = 1e-5;
  for (auto& c : dlm::testing::op_gradient_cases(rng)) {
    CAPTURE(c.name);
    CHECK(worst_gradient_error(c.build, c.inputs, rng) < tol);
  }
}

TEST_CASE("straight_through forwards the quantized value and copies gradients to the input") {
  Tape t;
  Var z = t.variable(mat({{0.2, -0.4}}));
  Var e = t.variable(mat({{1.0, 0.0}}));
  Var out = straight_through(z, e);
  CHECK(out.value() == mat({{1.0, 0.0}}));
  t.backward(sum(out));
  CHECK(z.grad() == mat({{1.0, 1.0}}));
  CHECK(e.grad().isZero());
}

TEST_CASE("adam examples") {
  SUBCASE("zero gradient is a fixed point") {
    Parameter p("p", mat({{1.0, -2.0}}));
    std::vector<Parameter*> ps{&p};
    AdamState s;
    for (int i = 0; i < 5; ++i) adam_step(ps, s);
    CHECK(p.value == mat({{1.0, -2.0}}));
    CHECK(s.first_moment[0].isZero());
    CHECK(s.second_moment[0].isZero());
    CHECK(s.step_count == 5);
  }
  SUBCASE("first step moves by the learning rate against the gradient sign") {
    Parameter p("p", mat({{0.0, 0.0, 0.0}}));
    p.grad = mat({{3.0, -0.01, 250.0}});
    std::vector<Parameter*> ps{&p};
    AdamState s;
    s.learning_rate = 0.1;
    adam_step(ps, s);
    CHECK(p.value(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(p.value(0, 1) == doctest::Approx(0.1).epsilon(1e-4));
    CHECK(p.value(0, 2) == doctest::Approx(-0.1).epsilon(1e-6));
  }
  SUBCASE("minimizes a convex quadratic") {
    Parameter x("x", mat({{0.0}}));
    std::vector<Parameter*> ps{&x};
    AdamState s;
    s.learning_rate = 0.05;
    for (int i = 0; i < 2000; ++i) {
      zero_grad(ps);
      Tape t;
      t.backward(square(t.param(x) - 5.0));
      adam_step(ps, s);
    }
    CHECK(std::abs(x.value(0, 0) - 5.0) < 0.01);
  }
  SUBCASE("non-finite gradient leaves everything untouched") {
    Parameter a("a", mat({{1.0}}));
    Parameter b("b", mat({{2.0}}));
    a.grad = mat({{0.5}});
    b.grad = mat({{std::numeric_limits<double>::quiet_NaN()}});
    std::vector<Parameter*> ps{&a, &b};
    AdamState s;
    CHECK_THROWS_AS(adam_step(ps, s), NumericError);
    CHECK(a.value(0, 0) == 1.0);
    CHECK(s.step_count == 0);
    CHECK(s.first_moment[0].isZero());
  }
}

TEST_CASE("second moments stay non-negative") {
  Rng rng(5);
  Parameter p("p", random_matrix(4, 3, rng));
  std::vector<Parameter*> ps{&p};
  AdamState s;
  for (int i = 0; i < 50; ++i) {
    p.grad = random_matrix(4, 3, rng, -10.0, 10.0);
    adam_step(ps, s);
    CHECK((s.second_moment[0].array() >= 0.0).all());
  }
}

TEST_CASE("clip_grad_norm bounds the joint norm") {
  Parameter a("a", Matrix::Zero(1, 2));
  Parameter b("b", Matrix::Zero(1, 1));
  a.grad = mat({{3.0, 0.0}});
  b.grad = mat({{4.0}});
  std::vector<Parameter*> ps{&a, &b};
  CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
  CHECK(std::hypot(a.grad(0, 0), b.grad(0, 0)) == doctest::Approx(1.0));
}
