#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "dtr/common.hpp"

namespace dtr {

struct SolveDiagnostics {
  Eigen::Index rank = 0;
  double condition_estimate = 0.0;
  int iterations = 0;
  bool converged = true;
  double gradient_norm = 0.0;
  bool separation_warning = false;
};

struct LeastSquaresFit {
  Eigen::VectorXd coefficients;
  double residual_variance = 0.0;  // RSS / (n - rank), 0 when saturated
  SolveDiagnostics diagnostics;
};

// Minimizes ||y - X b||_2 via a rank-revealing orthogonal decomposition.
// Rank-deficient X yields the minimal-norm solution with rank flagged in the
// diagnostics. Deterministic; inputs must be finite.
LeastSquaresFit solve_least_squares(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                    const Eigen::Ref<const Eigen::VectorXd>& y);

// Square system via pivoted LU. Throws on singular or ill-conditioned input
// (condition estimate above 1e12); never regularizes silently.
Eigen::VectorXd solve_linear_system(const Eigen::Ref<const Eigen::MatrixXd>& A,
                                    const Eigen::Ref<const Eigen::VectorXd>& b);

struct LogisticFit {
  Eigen::VectorXd coefficients;
  SolveDiagnostics diagnostics;
};

inline double expit(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// Ridge-penalized Bernoulli maximum likelihood with logit link, fitted by
// iteratively reweighted least squares (damped Newton). Converged means the
// penalized score norm fell to 1e-10 within 100 iterations. Quasi-separation
// is reported as a warning; the ridge keeps the fit finite.
LogisticFit fit_logistic(const Eigen::Ref<const Eigen::MatrixXd>& X,
                         const Eigen::Ref<const Eigen::VectorXi>& a, double ridge = 1e-8);

// Penalized score Xᵀ(a - p) - ridge*b; exposed so callers can re-check
// stationarity independently of the solver loop.
Eigen::VectorXd logistic_gradient(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                  const Eigen::Ref<const Eigen::VectorXi>& a,
                                  const Eigen::Ref<const Eigen::VectorXd>& b, double ridge);

}  // namespace dtr
