#include "dtr/qlearn.hpp"

namespace dtr {

namespace {
constexpr const char* kModule = "qlearn";

Error err(const std::string& message) { return Error(kModule, message); }

// Q value per level for every row: column j holds Q(h_i, level_j).
Eigen::MatrixXd value_matrix(const Eigen::MatrixXd& B, const Eigen::MatrixXd& C,
                             const QStageFit& fit, int num_levels) {
  Eigen::MatrixXd values(B.rows(), num_levels);
  const Eigen::VectorXd base = B * fit.baseline_coef;
  values.col(0) = base;
  for (int l = 1; l < num_levels; ++l) {
    values.col(l) = base + C * fit.contrast_coefs[static_cast<std::size_t>(l - 1)];
  }
  return values;
}

}  // namespace

Eigen::VectorXd QStageFit::eta() const {
  Eigen::Index total = baseline_coef.size();
  for (const auto& c : contrast_coefs) total += c.size();
  Eigen::VectorXd out(total);
  out.head(baseline_coef.size()) = baseline_coef;
  Eigen::Index at = baseline_coef.size();
  for (const auto& c : contrast_coefs) {
    out.segment(at, c.size()) = c;
    at += c.size();
  }
  return out;
}

std::pair<QStageFit, Eigen::VectorXd> fit_q_stage(const TrajectoryDataset& dataset, int stage,
                                                  const Eigen::Ref<const Eigen::VectorXd>& pseudo_outcome,
                                                  const StageModelSpec& spec) {
  if (pseudo_outcome.size() != dataset.size()) {
    throw err("pseudo-outcome length " + format_int(pseudo_outcome.size()) +
              " does not match dataset size " + format_int(dataset.size()));
  }
  if (!pseudo_outcome.allFinite()) throw err("pseudo-outcome contains non-finite values");
  check_terms(spec.baseline_terms, dataset.schema(), stage);
  check_terms(spec.contrast_terms, dataset.schema(), stage);

  const TreatmentSpace& space = dataset.space(stage);
  const Eigen::MatrixXd B = build_design(dataset, spec.baseline_terms);
  const Eigen::MatrixXd C = build_design(dataset, spec.contrast_terms);
  const Eigen::Index n = dataset.size();
  const Eigen::Index pb = B.cols();
  const Eigen::Index pc = C.cols();
  const int levels = space.num_levels();

  Eigen::MatrixXd X(n, pb + (levels - 1) * pc);
  X.leftCols(pb) = B;
  const Eigen::VectorXi& a = dataset.actions(stage);
  for (int l = 1; l < levels; ++l) {
    const int code = space.levels()[static_cast<std::size_t>(l)];
    Eigen::VectorXd indicator(n);
    for (Eigen::Index i = 0; i < n; ++i) indicator(i) = a(i) == code ? 1.0 : 0.0;
    X.middleCols(pb + (l - 1) * pc, pc) = indicator.asDiagonal() * C;
  }

  LeastSquaresFit ls = solve_least_squares(X, pseudo_outcome);

  QStageFit fit;
  fit.stage = stage;
  fit.baseline_coef = ls.coefficients.head(pb);
  for (int l = 1; l < levels; ++l) {
    fit.contrast_coefs.push_back(ls.coefficients.segment(pb + (l - 1) * pc, pc));
  }
  fit.diagnostics = ls.diagnostics;

  const Eigen::MatrixXd values = value_matrix(B, C, fit, levels);
  return {std::move(fit), values.rowwise().maxCoeff()};
}

QRegime fit_q_regime(const TrajectoryDataset& dataset, const ModelSpec& models) {
  if (models.num_stages() != dataset.num_stages()) {
    throw err("model covers " + format_int(models.num_stages()) + " stages, data has " +
              format_int(dataset.num_stages()));
  }
  const int num_stages = dataset.num_stages();
  std::vector<QStageFit> fits(static_cast<std::size_t>(num_stages));
  Eigen::VectorXd pseudo = dataset.outcomes();
  for (int k = num_stages; k >= 1; --k) {
    try {
      auto [fit, next] = fit_q_stage(dataset, k, pseudo, models.stage(k));
      fits[static_cast<std::size_t>(k - 1)] = std::move(fit);
      pseudo = std::move(next);
    } catch (const Error& e) {
      throw err("stage " + format_int(k) + " failed: " + e.what());
    }
  }
  return QRegime(models, dataset.spaces(), dataset.schema(), dataset.schema_fingerprint(),
                 std::move(fits));
}

Eigen::VectorXd QRegime::q_values(const Schema& schema, const History& h, int stage) const {
  const QStageFit& fit = stage_fit(stage);
  const StageModelSpec& spec = models().stage(stage);
  const double base = eval_terms(schema, h, spec.baseline_terms).dot(fit.baseline_coef);
  const Eigen::RowVectorXd c = eval_terms(schema, h, spec.contrast_terms);
  const int levels = space(stage).num_levels();
  Eigen::VectorXd values(levels);
  values(0) = base;
  for (int l = 1; l < levels; ++l) {
    values(l) = base + c.dot(fit.contrast_coefs[static_cast<std::size_t>(l - 1)]);
  }
  return values;
}

int QRegime::decide(const Schema& schema, const History& h, int stage, double) const {
  const Eigen::VectorXd values = q_values(schema, h, stage);
  const Eigen::Index best = argmax_with_ties(values);
  return space(stage).levels()[static_cast<std::size_t>(best)];
}

double QRegime::decision_score(const Schema& schema, const History& h, int stage) const {
  const Eigen::VectorXd values = q_values(schema, h, stage);
  if (values.size() == 2) return values(1) - values(0);  // signed contrast
  const Eigen::Index best = argmax_with_ties(values);
  double runner_up = -std::numeric_limits<double>::infinity();
  for (Eigen::Index l = 0; l < values.size(); ++l) {
    if (l != best) runner_up = std::max(runner_up, values(l));
  }
  return values(best) - runner_up;
}

std::vector<std::pair<std::string, double>> QRegime::named_coefficients() const {
  std::vector<std::pair<std::string, double>> out;
  for (int k = 1; k <= num_stages(); ++k) {
    const QStageFit& fit = stage_fit(k);
    const StageModelSpec& spec = models().stage(k);
    const std::string prefix = "s" + format_int(k) + ".";
    for (std::size_t j = 0; j < spec.baseline_terms.size(); ++j) {
      out.emplace_back(prefix + "baseline:" + format_term(spec.baseline_terms[j]),
                       fit.baseline_coef(static_cast<Eigen::Index>(j)));
    }
    const auto& levels = space(k).levels();
    for (std::size_t l = 1; l < levels.size(); ++l) {
      for (std::size_t j = 0; j < spec.contrast_terms.size(); ++j) {
        out.emplace_back(prefix + "contrast[" + format_int(levels[l]) + "]:" +
                             format_term(spec.contrast_terms[j]),
                         fit.contrast_coefs[l - 1](static_cast<Eigen::Index>(j)));
      }
    }
  }
  return out;
}

}  // namespace dtr
