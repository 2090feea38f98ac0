#include "dtr/alearn.hpp"

#include <algorithm>
#include <limits>

namespace dtr {

namespace {
constexpr const char* kModule = "alearn";

Error err(const std::string& message) { return Error(kModule, message); }

void require_binary(const TreatmentSpace& space, int stage) {
  if (!space.is_binary()) {
    throw err("stage " + format_int(stage) +
              " space is not binary {0,1}; A-learning handles binary decisions only");
  }
}

}  // namespace

int a_decision(const Eigen::Ref<const Eigen::VectorXd>& psi, double contrast) {
  return contrast > kTieTol * (1.0 + psi.lpNorm<1>()) ? 1 : 0;
}

PropensityFit fit_propensity(const TrajectoryDataset& dataset, int stage,
                             const StageModelSpec& spec) {
  require_binary(dataset.space(stage), stage);
  check_terms(spec.propensity_terms, dataset.schema(), stage);
  const Eigen::VectorXi& a = dataset.actions(stage);
  const Eigen::Index ones = (a.array() == 1).count();
  if (ones == 0 || ones == a.size()) {
    throw err("degenerate propensity at stage " + format_int(stage) +
              ": all observed decisions are " + format_int(a(0)));
  }

  const Eigen::MatrixXd P = build_design(dataset, spec.propensity_terms);
  LogisticFit lf = fit_logistic(P, a);

  PropensityFit out;
  out.phi = lf.coefficients;
  out.diagnostics = lf.diagnostics;
  Eigen::VectorXd eta = P * lf.coefficients;
  out.fitted.resize(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    out.fitted(i) = std::clamp(expit(eta(i)), kPropensityTrim, 1.0 - kPropensityTrim);
  }
  return out;
}

std::pair<AStageFit, Eigen::VectorXd> fit_a_stage(const TrajectoryDataset& dataset, int stage,
                                                  const Eigen::Ref<const Eigen::VectorXd>& pseudo_outcome,
                                                  const StageModelSpec& spec,
                                                  const PropensityFit& propensity) {
  require_binary(dataset.space(stage), stage);
  if (pseudo_outcome.size() != dataset.size()) {
    throw err("pseudo-outcome length does not match dataset size");
  }
  if (!pseudo_outcome.allFinite()) throw err("pseudo-outcome contains non-finite values");
  check_terms(spec.contrast_terms, dataset.schema(), stage);
  check_terms(spec.baseline_terms, dataset.schema(), stage);

  const Eigen::MatrixXd C = build_design(dataset, spec.contrast_terms);
  const Eigen::MatrixXd B = build_design(dataset, spec.baseline_terms);
  const Eigen::VectorXd a = dataset.actions(stage).cast<double>();
  const Eigen::VectorXd w = a - propensity.fitted;  // (a_i - pi_i)

  const Eigen::Index pc = C.cols();
  const Eigen::Index pb = B.cols();

  // Stacked system in x = (psi, beta):
  //   sum_i c_i w_i (V_i - a_i psi'c_i - beta'b_i) = 0
  //   sum_i b_i     (V_i - a_i psi'c_i - beta'b_i) = 0
  Eigen::MatrixXd M(pc + pb, pc + pb);
  Eigen::VectorXd r(pc + pb);
  const Eigen::VectorXd wa = w.array() * a.array();
  M.topLeftCorner(pc, pc) = C.transpose() * wa.asDiagonal() * C;
  M.topRightCorner(pc, pb) = C.transpose() * w.asDiagonal() * B;
  M.bottomLeftCorner(pb, pc) = B.transpose() * a.asDiagonal() * C;
  M.bottomRightCorner(pb, pb) = B.transpose() * B;
  r.head(pc) = C.transpose() * (w.array() * pseudo_outcome.array()).matrix();
  r.tail(pb) = B.transpose() * pseudo_outcome;

  SolveDiagnostics sys_diag;
  Eigen::VectorXd x;
  try {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    sys_diag.rank = lu.rank();
    sys_diag.condition_estimate =
        lu.rcond() > 0 ? 1.0 / lu.rcond() : std::numeric_limits<double>::infinity();
    x = solve_linear_system(M, r);
  } catch (const Error& e) {
    throw err("stacked estimating equations at stage " + format_int(stage) + ": " + e.what() +
              " (collinear contrast/baseline designs or no propensity variation)");
  }

  AStageFit fit;
  fit.stage = stage;
  fit.psi = x.head(pc);
  fit.beta = x.tail(pb);
  fit.phi = propensity.phi;
  fit.system_diagnostics = sys_diag;
  fit.propensity_diagnostics = propensity.diagnostics;

  // Advantage correction: rows already treated optimally pass through.
  const Eigen::VectorXd contrast = C * fit.psi;
  Eigen::VectorXd next = pseudo_outcome;
  for (Eigen::Index i = 0; i < next.size(); ++i) {
    const double d = a_decision(fit.psi, contrast(i));
    next(i) += (d - a(i)) * contrast(i);
  }
  return {std::move(fit), std::move(next)};
}

ARegime fit_a_regime(const TrajectoryDataset& dataset, const ModelSpec& models) {
  if (models.num_stages() != dataset.num_stages()) {
    throw err("model covers " + format_int(models.num_stages()) + " stages, data has " +
              format_int(dataset.num_stages()));
  }
  const int num_stages = dataset.num_stages();
  for (int k = 1; k <= num_stages; ++k) require_binary(dataset.space(k), k);

  std::vector<AStageFit> fits(static_cast<std::size_t>(num_stages));
  Eigen::VectorXd pseudo = dataset.outcomes();
  for (int k = num_stages; k >= 1; --k) {
    try {
      PropensityFit prop = fit_propensity(dataset, k, models.stage(k));
      auto [fit, next] = fit_a_stage(dataset, k, pseudo, models.stage(k), prop);
      fits[static_cast<std::size_t>(k - 1)] = std::move(fit);
      pseudo = std::move(next);
    } catch (const Error& e) {
      throw err("stage " + format_int(k) + " failed: " + e.what());
    }
  }
  return ARegime(models, dataset.spaces(), dataset.schema(), dataset.schema_fingerprint(),
                 std::move(fits));
}

double ARegime::contrast_value(const Schema& schema, const History& h, int stage) const {
  const AStageFit& fit = stage_fit(stage);
  return eval_terms(schema, h, models().stage(stage).contrast_terms).dot(fit.psi);
}

double ARegime::propensity_value(const Schema& schema, const History& h, int stage) const {
  const AStageFit& fit = stage_fit(stage);
  const double eta = eval_terms(schema, h, models().stage(stage).propensity_terms).dot(fit.phi);
  return std::clamp(expit(eta), kPropensityTrim, 1.0 - kPropensityTrim);
}

int ARegime::decide(const Schema& schema, const History& h, int stage, double) const {
  return a_decision(stage_fit(stage).psi, contrast_value(schema, h, stage));
}

std::vector<std::pair<std::string, double>> ARegime::named_coefficients() const {
  std::vector<std::pair<std::string, double>> out;
  for (int k = 1; k <= num_stages(); ++k) {
    const AStageFit& fit = stage_fit(k);
    const StageModelSpec& spec = models().stage(k);
    const std::string prefix = "s" + format_int(k) + ".";
    for (std::size_t j = 0; j < spec.contrast_terms.size(); ++j) {
      out.emplace_back(prefix + "psi:" + format_term(spec.contrast_terms[j]),
                       fit.psi(static_cast<Eigen::Index>(j)));
    }
    for (std::size_t j = 0; j < spec.baseline_terms.size(); ++j) {
      out.emplace_back(prefix + "beta:" + format_term(spec.baseline_terms[j]),
                       fit.beta(static_cast<Eigen::Index>(j)));
    }
    for (std::size_t j = 0; j < spec.propensity_terms.size(); ++j) {
      out.emplace_back(prefix + "phi:" + format_term(spec.propensity_terms[j]),
                       fit.phi(static_cast<Eigen::Index>(j)));
    }
  }
  return out;
}

}  // namespace dtr
