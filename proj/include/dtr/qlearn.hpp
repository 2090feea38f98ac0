#pragma once

#include <limits>

#include "dtr/regime.hpp"
#include "dtr/solve.hpp"

namespace dtr {

// Stage-k least-squares fit of the posited Q model: baseline block plus one
// dummy-coded contrast block per non-reference action level.
struct QStageFit {
  int stage = 0;
  Eigen::VectorXd baseline_coef;
  std::vector<Eigen::VectorXd> contrast_coefs;  // levels()[1..], in order
  SolveDiagnostics diagnostics;

  Eigen::VectorXd eta() const;  // concatenated (baseline, contrasts)
};

class QRegime final : public FittedRegime {
 public:
  QRegime(ModelSpec models, std::vector<TreatmentSpace> spaces, Schema schema,
          std::uint64_t schema_fingerprint, std::vector<QStageFit> fits)
      : FittedRegime("qlearn", std::move(models), std::move(spaces), std::move(schema),
                     schema_fingerprint),
        fits_(std::move(fits)) {}

  const QStageFit& stage_fit(int stage) const {
    return fits_.at(static_cast<std::size_t>(stage - 1));
  }

  // Fitted Q at each level of the stage space, in level order.
  Eigen::VectorXd q_values(const Schema& schema, const History& h, int stage) const;

  int decide(const Schema& schema, const History& h, int stage, double u) const override;
  std::vector<std::pair<std::string, double>> named_coefficients() const override;
  double decision_score(const Schema& schema, const History& h, int stage) const override;
  double propensity_at(const Schema&, const History&, int) const override {
    return std::numeric_limits<double>::quiet_NaN();
  }

 private:
  std::vector<QStageFit> fits_;
};

// One backward-induction step: regress the pseudo-outcome on
// [baseline | dummy-coded contrasts], then propagate the rowwise max of the
// fitted Q as the next pseudo-outcome. For the final stage the pseudo-outcome
// is the observed Y.
std::pair<QStageFit, Eigen::VectorXd> fit_q_stage(const TrajectoryDataset& dataset, int stage,
                                                  const Eigen::Ref<const Eigen::VectorXd>& pseudo_outcome,
                                                  const StageModelSpec& spec);

// Full backward pass k = K..1.
QRegime fit_q_regime(const TrajectoryDataset& dataset, const ModelSpec& models);

}  // namespace dtr
