#pragma once

#include "dtr/regime.hpp"
#include "dtr/solve.hpp"

namespace dtr {

inline constexpr double kPropensityTrim = 0.01;

struct PropensityFit {
  Eigen::VectorXd phi;
  Eigen::VectorXd fitted;  // trimmed to [kPropensityTrim, 1 - kPropensityTrim]
  SolveDiagnostics diagnostics;
};

// Logistic fit of the stage-k decision on the propensity design. Hard error
// when the stage has no decision variation.
PropensityFit fit_propensity(const TrajectoryDataset& dataset, int stage,
                             const StageModelSpec& spec);

struct AStageFit {
  int stage = 0;
  Eigen::VectorXd psi;   // contrast coefficients
  Eigen::VectorXd beta;  // baseline coefficients
  Eigen::VectorXd phi;   // propensity coefficients
  SolveDiagnostics system_diagnostics;
  SolveDiagnostics propensity_diagnostics;
};

class ARegime final : public FittedRegime {
 public:
  ARegime(ModelSpec models, std::vector<TreatmentSpace> spaces, Schema schema,
          std::uint64_t schema_fingerprint, std::vector<AStageFit> fits)
      : FittedRegime("alearn", std::move(models), std::move(spaces), std::move(schema),
                     schema_fingerprint),
        fits_(std::move(fits)) {}

  const AStageFit& stage_fit(int stage) const {
    return fits_.at(static_cast<std::size_t>(stage - 1));
  }

  double contrast_value(const Schema& schema, const History& h, int stage) const;
  double propensity_value(const Schema& schema, const History& h, int stage) const;

  int decide(const Schema& schema, const History& h, int stage, double u) const override;
  std::vector<std::pair<std::string, double>> named_coefficients() const override;
  double decision_score(const Schema& schema, const History& h, int stage) const override {
    return contrast_value(schema, h, stage);
  }
  double propensity_at(const Schema& schema, const History& h, int stage) const override {
    return propensity_value(schema, h, stage);
  }

 private:
  std::vector<AStageFit> fits_;
};

// Decision implied by fitted contrast coefficients; sub-tolerance contrasts
// count as zero and recommend 0.
int a_decision(const Eigen::Ref<const Eigen::VectorXd>& psi, double contrast);

// Solves the stacked estimating equations for (psi, beta): the contrast
// equation weighted by c(h)*(a - pi) and the baseline equation weighted by
// b(h). Linear contrast and baseline make the system square and linear. The
// returned pseudo-outcome applies the advantage correction
// V~ + (d(h) - a) * psi' c(h).
std::pair<AStageFit, Eigen::VectorXd> fit_a_stage(const TrajectoryDataset& dataset, int stage,
                                                  const Eigen::Ref<const Eigen::VectorXd>& pseudo_outcome,
                                                  const StageModelSpec& spec,
                                                  const PropensityFit& propensity);

// Backward pass K..1 starting from the observed Y. Binary stages only.
ARegime fit_a_regime(const TrajectoryDataset& dataset, const ModelSpec& models);

}  // namespace dtr
