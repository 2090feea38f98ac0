#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "dtr/solve.hpp"

using namespace dtr;

TEST_CASE("least squares: constant fit") {
  Eigen::MatrixXd X(2, 1);
  X << 1, 1;
  Eigen::VectorXd y(2);
  y << 2, 2;
  auto fit = solve_least_squares(X, y);
  CHECK(fit.coefficients(0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(fit.residual_variance == doctest::Approx(0.0));
}

TEST_CASE("least squares: hand-solved normal equations") {
  // X'X b = X'y with X = [[1,0],[1,1],[1,2]], y = (1,2,4):
  // [[3,3],[3,5]] b = [7,10]  =>  b = (5/6, 3/2).
  Eigen::MatrixXd X(3, 2);
  X << 1, 0, 1, 1, 1, 2;
  Eigen::VectorXd y(3);
  y << 1, 2, 4;
  auto fit = solve_least_squares(X, y);
  CHECK(fit.coefficients(0) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(fit.coefficients(1) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(fit.diagnostics.rank == 2);
}

TEST_CASE("least squares: zero response gives zero coefficients") {
  Eigen::MatrixXd X(3, 2);
  X << 1, 0, 1, 1, 1, 2;
  auto fit = solve_least_squares(X, Eigen::VectorXd::Zero(3));
  CHECK(fit.coefficients.norm() == 0.0);
}

TEST_CASE("least squares: rank-deficient design returns minimal-norm solution") {
  Eigen::MatrixXd X(2, 2);
  X << 1, 1, 1, 1;
  Eigen::VectorXd y(2);
  y << 2, 2;
  auto fit = solve_least_squares(X, y);
  CHECK(fit.diagnostics.rank == 1);
  CHECK(fit.coefficients(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.coefficients(1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("least squares: dimension and finiteness errors") {
  Eigen::MatrixXd X(2, 1);
  X << 1, 1;
  CHECK_THROWS_AS(solve_least_squares(X, Eigen::VectorXd::Zero(3)), Error);
  Eigen::VectorXd bad(2);
  bad << 1.0, std::nan("");
  CHECK_THROWS_AS(solve_least_squares(X, bad), Error);
}

TEST_CASE("least squares agrees with the normal equations on full-rank problems") {
  std::mt19937 gen(11);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::MatrixXd X(40, 4);
    Eigen::VectorXd y(40);
    for (int i = 0; i < 40; ++i) {
      X(i, 0) = 1;
      for (int j = 1; j < 4; ++j) X(i, j) = nd(gen);
      y(i) = nd(gen);
    }
    auto fit = solve_least_squares(X, y);
    Eigen::VectorXd via_normal = solve_linear_system(X.transpose() * X, X.transpose() * y);
    CHECK((fit.coefficients - via_normal).norm() <= 1e-8 * (1 + via_normal.norm()));
  }
}

TEST_CASE("least squares scaling equivariance") {
  std::mt19937 gen(13);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd X(30, 3);
  Eigen::VectorXd y(30);
  for (int i = 0; i < 30; ++i) {
    X(i, 0) = 1;
    X(i, 1) = nd(gen);
    X(i, 2) = nd(gen);
    y(i) = nd(gen);
  }
  const double c = 2.5;
  auto fit = solve_least_squares(X, y);
  auto scaled = solve_least_squares(X, (c * y).eval());
  for (int j = 0; j < 3; ++j) {
    CHECK(scaled.coefficients(j) == doctest::Approx(c * fit.coefficients(j)).epsilon(1e-12));
  }
}

TEST_CASE("linear system: identity and diagonal") {
  Eigen::VectorXd b(2);
  b << 3, -4;
  CHECK((solve_linear_system(Eigen::MatrixXd::Identity(2, 2), b) - b).norm() == 0.0);

  Eigen::MatrixXd A(2, 2);
  A << 2, 0, 0, 4;
  Eigen::VectorXd rhs(2);
  rhs << 2, 8;
  Eigen::VectorXd x = solve_linear_system(A, rhs);
  CHECK(x(0) == doctest::Approx(1.0));
  CHECK(x(1) == doctest::Approx(2.0));
}

TEST_CASE("linear system: residual check on random well-conditioned systems") {
  std::mt19937 gen(17);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::MatrixXd A =
        Eigen::MatrixXd::NullaryExpr(5, 5, [&](Eigen::Index, Eigen::Index) { return nd(gen); });
    A += 5.0 * Eigen::MatrixXd::Identity(5, 5);  // keep it comfortably invertible
    Eigen::VectorXd b = Eigen::VectorXd::NullaryExpr(5, [&](Eigen::Index) { return nd(gen); });
    Eigen::VectorXd x = solve_linear_system(A, b);
    CHECK((A * x - b).lpNorm<Eigen::Infinity>() <= 1e-8 * (1 + b.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("linear system: singular and ill-conditioned inputs are errors") {
  Eigen::MatrixXd S(2, 2);
  S << 1, 1, 1, 1;
  Eigen::VectorXd b(2);
  b << 1, 1;
  CHECK_THROWS_AS(solve_linear_system(S, b), Error);

  Eigen::MatrixXd I2(2, 2);
  I2 << 1, 1, 1, 1 + 1e-14;
  CHECK_THROWS_AS(solve_linear_system(I2, b), Error);
}

TEST_CASE("logistic: intercept-only fits the sample log-odds") {
  // Closed form: logit of the sample mean; 3 ones of 4 gives log 3.
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(4, 1);
  Eigen::VectorXi a(4);
  a << 1, 1, 1, 0;
  auto fit = fit_logistic(X, a);
  CHECK(fit.coefficients(0) == doctest::Approx(std::log(3.0)).epsilon(1e-6));
  CHECK(fit.diagnostics.converged);
}

TEST_CASE("logistic: balanced intercept-only is exactly zero") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(4, 1);
  Eigen::VectorXi a(4);
  a << 1, 0, 1, 0;
  auto fit = fit_logistic(X, a);
  CHECK(fit.coefficients(0) == 0.0);
}

TEST_CASE("logistic: perfect separation warns but stays finite under ridge") {
  // Monotone likelihood: the unpenalized MLE diverges, so the ridge optimum
  // must be large; assert the warning and the magnitude.
  Eigen::MatrixXd X(6, 2);
  Eigen::VectorXi a(6);
  for (int i = 0; i < 6; ++i) {
    X(i, 0) = 1;
    X(i, 1) = i < 3 ? -1.0 - i : 1.0 + (i - 3);
    a(i) = i < 3 ? 0 : 1;
  }
  auto fit = fit_logistic(X, a);
  CHECK(fit.diagnostics.separation_warning);
  CHECK(std::isfinite(fit.coefficients(1)));
  CHECK(fit.coefficients(1) > 10.0);
}

TEST_CASE("logistic: stationarity re-checked independently of the solver loop") {
  std::mt19937 gen(23);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd X(200, 3);
  Eigen::VectorXi a(200);
  for (int i = 0; i < 200; ++i) {
    X(i, 0) = 1;
    X(i, 1) = nd(gen);
    X(i, 2) = nd(gen);
    const double p = expit(0.3 + 0.8 * X(i, 1) - 0.5 * X(i, 2));
    a(i) = std::bernoulli_distribution(p)(gen) ? 1 : 0;
  }
  auto fit = fit_logistic(X, a);
  CHECK(logistic_gradient(X, a, fit.coefficients, 1e-8).norm() <= 1e-10);
}

TEST_CASE("logistic: response must be binary") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(3, 1);
  Eigen::VectorXi a(3);
  a << 0, 1, 2;
  CHECK_THROWS_AS(fit_logistic(X, a), Error);
}
