#include "dtr/solve.hpp"

#include <cmath>
#include <limits>

namespace dtr {

namespace {
constexpr const char* kModule = "numsolve";
constexpr double kConditionLimit = 1e12;
constexpr double kLogisticTol = 1e-10;
constexpr int kLogisticMaxIter = 100;

Error err(const std::string& message) { return Error(kModule, message); }

void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& X, const char* what) {
  if (!X.allFinite()) throw err(std::string(what) + " contains non-finite values");
}

}  // namespace

LeastSquaresFit solve_least_squares(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                    const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (X.rows() < 1 || X.cols() < 1) throw err("least squares needs n >= 1 and p >= 1");
  if (X.rows() != y.size()) {
    throw err("dimension mismatch: X has " + format_int(X.rows()) + " rows, y has " +
              format_int(y.size()));
  }
  require_finite(X, "design matrix");
  require_finite(y, "response");

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
  LeastSquaresFit fit;
  fit.coefficients = cod.solve(y);
  fit.diagnostics.rank = cod.rank();

  const auto& R = cod.matrixQTZ();
  double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < fit.diagnostics.rank; ++i) {
    const double d = std::abs(R(i, i));
    dmax = std::max(dmax, d);
    dmin = std::min(dmin, d);
  }
  fit.diagnostics.condition_estimate =
      (fit.diagnostics.rank == 0 || dmin == 0.0) ? std::numeric_limits<double>::infinity()
                                                 : dmax / dmin;

  const Eigen::VectorXd residual = y - X * fit.coefficients;
  const Eigen::Index dof = X.rows() - fit.diagnostics.rank;
  fit.residual_variance = dof > 0 ? residual.squaredNorm() / static_cast<double>(dof) : 0.0;
  fit.diagnostics.gradient_norm = (X.transpose() * residual).norm();
  fit.diagnostics.iterations = 1;
  fit.diagnostics.converged = true;
  return fit;
}

Eigen::VectorXd solve_linear_system(const Eigen::Ref<const Eigen::MatrixXd>& A,
                                    const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (A.rows() != A.cols()) throw err("linear system matrix must be square");
  if (A.rows() != b.size()) {
    throw err("dimension mismatch: A is " + format_int(A.rows()) + "x" + format_int(A.cols()) +
              ", b has " + format_int(b.size()));
  }
  require_finite(A, "system matrix");
  require_finite(b, "right-hand side");

  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (lu.rank() < A.rows()) {
    throw err("singular system (rank " + format_int(lu.rank()) + " of " + format_int(A.rows()) +
              ")");
  }
  const double rcond = lu.rcond();
  if (!(rcond > 1.0 / kConditionLimit)) {
    throw err("ill-conditioned system (condition estimate " + format_double(1.0 / rcond) + ")");
  }
  Eigen::VectorXd x = lu.solve(b);
  const double resid = (A * x - b).lpNorm<Eigen::Infinity>();
  if (!(resid <= 1e-8 * (1.0 + b.lpNorm<Eigen::Infinity>()))) {
    throw err("solution residual " + format_double(resid) + " exceeds tolerance");
  }
  return x;
}

Eigen::VectorXd logistic_gradient(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                  const Eigen::Ref<const Eigen::VectorXi>& a,
                                  const Eigen::Ref<const Eigen::VectorXd>& b, double ridge) {
  const Eigen::VectorXd eta = X * b;
  Eigen::VectorXd p(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) p(i) = expit(eta(i));
  return X.transpose() * (a.cast<double>() - p) - ridge * b;
}

namespace {

double penalized_loglik(const Eigen::Ref<const Eigen::MatrixXd>& X,
                        const Eigen::Ref<const Eigen::VectorXi>& a,
                        const Eigen::VectorXd& b, double ridge) {
  const Eigen::VectorXd eta = X * b;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // a*eta - log(1 + exp(eta)), written stably for either sign of eta
    const double e = eta(i);
    ll += a(i) * e - (e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e)));
  }
  return ll - 0.5 * ridge * b.squaredNorm();
}

}  // namespace

LogisticFit fit_logistic(const Eigen::Ref<const Eigen::MatrixXd>& X,
                         const Eigen::Ref<const Eigen::VectorXi>& a, double ridge) {
  if (X.rows() != a.size()) throw err("dimension mismatch between design and response");
  require_finite(X, "design matrix");
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) != 0 && a(i) != 1) throw err("logistic response must be 0/1");
  }

  const Eigen::Index p = X.cols();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  double ll = penalized_loglik(X, a, b, ridge);

  LogisticFit fit;
  fit.diagnostics.rank = p;
  int iter = 0;
  double gnorm = logistic_gradient(X, a, b, ridge).norm();
  Eigen::MatrixXd H(p, p);
  while (gnorm > 1e-12 && iter < kLogisticMaxIter) {
    ++iter;
    const Eigen::VectorXd eta = X * b;
    Eigen::VectorXd w(eta.size());
    Eigen::VectorXd pr(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      pr(i) = expit(eta(i));
      w(i) = pr(i) * (1.0 - pr(i));
    }
    H = X.transpose() * w.asDiagonal() * X;
    H.diagonal().array() += ridge;
    const Eigen::VectorXd g = X.transpose() * (a.cast<double>() - pr) - ridge * b;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success) throw err("logistic information matrix not factorizable");
    Eigen::VectorXd step = ldlt.solve(g);

    // Halve the step until the penalized likelihood stops decreasing. The
    // slack must sit well above the summation rounding of ll (which grows
    // with n and |ll|) while staying far below any genuine overshoot.
    const double slack = 1e-10 * (1.0 + std::abs(ll));
    double scale = 1.0;
    Eigen::VectorXd b_next = b + step;
    double ll_next = penalized_loglik(X, a, b_next, ridge);
    int halvings = 0;
    while (!(ll_next >= ll - slack) && halvings < 40) {
      scale *= 0.5;
      b_next = b + scale * step;
      ll_next = penalized_loglik(X, a, b_next, ridge);
      ++halvings;
    }
    if (halvings == 40) break;  // stalled at the likelihood's rounding floor
    const bool no_motion = (b_next - b).lpNorm<Eigen::Infinity>() <=
                           1e-15 * (1.0 + b.lpNorm<Eigen::Infinity>());
    b = b_next;
    ll = ll_next;
    gnorm = logistic_gradient(X, a, b, ridge).norm();
    if (no_motion) break;
  }

  fit.coefficients = b;
  fit.diagnostics.iterations = iter;
  fit.diagnostics.gradient_norm = gnorm;
  fit.diagnostics.converged = gnorm <= kLogisticTol;
  if (!fit.diagnostics.converged) {
    throw err("logistic fit did not converge (gradient norm " + format_double(gnorm) + " after " +
              format_int(iter) + " iterations)");
  }

  {
    const Eigen::VectorXd eta = X * b;
    bool perfectly_classified = true;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double margin = (a(i) == 1 ? eta(i) : -eta(i));
      if (margin <= 0.0) {
        perfectly_classified = false;
        break;
      }
    }
    fit.diagnostics.separation_warning =
        perfectly_classified && b.lpNorm<Eigen::Infinity>() > 8.0;

    Eigen::VectorXd w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double pi = expit(eta(i));
      w(i) = pi * (1.0 - pi);
    }
    Eigen::MatrixXd info = X.transpose() * w.asDiagonal() * X;
    info.diagonal().array() += ridge;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
    fit.diagnostics.condition_estimate =
        lu.rcond() > 0 ? 1.0 / lu.rcond() : std::numeric_limits<double>::infinity();
    fit.diagnostics.rank = lu.rank();
  }
  return fit;
}

}  // namespace dtr
