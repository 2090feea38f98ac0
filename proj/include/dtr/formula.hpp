#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

#include "dtr/dataset.hpp"

namespace dtr {

// A realized history: covariates for stages 1..m (ordered per schema) and the
// decisions already taken. Actions may cover fewer stages than covariates
// (one fewer when querying the next decision).
struct History {
  std::vector<Eigen::VectorXd> covariates;
  std::vector<int> actions;

  int covariate_stages() const { return static_cast<int>(covariates.size()); }
  int action_stages() const { return static_cast<int>(actions.size()); }
};

History history_at(const TrajectoryDataset& dataset, Eigen::Index i, int upto_stage);

// One multiplicative factor of a model term: a stage-k covariate reference.
struct Factor {
  int stage = 0;
  std::string name;

  friend bool operator==(const Factor& a, const Factor& b) {
    return a.stage == b.stage && a.name == b.name;
  }
  friend bool operator<(const Factor& a, const Factor& b) {
    return a.stage != b.stage ? a.stage < b.stage : a.name < b.name;
  }
};

// Product of history covariates; the empty product is the intercept. Factors
// are kept sorted, and repeated factors encode powers.
struct Term {
  std::vector<Factor> factors;

  bool is_intercept() const { return factors.empty(); }
  friend bool operator==(const Term& a, const Term& b) { return a.factors == b.factors; }
  friend bool operator<(const Term& a, const Term& b) { return a.factors < b.factors; }
};

using TermList = std::vector<Term>;

// Grammar: formula := term ("+" term)*; term := factor ("*" factor)*;
// factor := "1" | "s"<k>"."<name>. Whitespace is insignificant. The result is
// canonical: factors sorted within terms, terms sorted, duplicates rejected,
// intercept factors collapsed. References beyond `stage` are rejected.
TermList parse_formula(const std::string& text, int stage);

std::string format_term(const Term& term);
std::string format_terms(const TermList& terms);

// Every referenced covariate must exist in the schema at or before `stage`.
void check_terms(const TermList& terms, const Schema& schema, int stage);

// Design matrix: entry (i, j) is the product of term j's factor values on row
// i; the intercept column is all ones.
Eigen::MatrixXd build_design(const TrajectoryDataset& dataset, const TermList& terms);

Eigen::RowVectorXd eval_terms(const Schema& schema, const History& h, const TermList& terms);

// Posited stage-k models: Q_k = baseline + decision * contrast, and the
// propensity linear predictor.
struct StageModelSpec {
  int stage = 0;
  TermList baseline_terms;
  TermList contrast_terms;
  TermList propensity_terms;
};

struct ModelSpec {
  std::vector<StageModelSpec> stages;

  int num_stages() const { return static_cast<int>(stages.size()); }
  const StageModelSpec& stage(int k) const { return stages.at(static_cast<std::size_t>(k - 1)); }
};

// Model file: JSON {"stages": [{"baseline": "...", "contrast": "...",
// "propensity": "..."}, ...]}.
ModelSpec load_model_file(const std::string& path);
void save_model_file(const ModelSpec& spec, const std::string& path);
ModelSpec model_from_strings(
    const std::vector<std::array<std::string, 3>>& per_stage_formulas);

void check_model(const ModelSpec& spec, const Schema& schema);

}  // namespace dtr
