#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dtr/regime.hpp"

namespace dtr {

// Linear predictor over realized history: covariate product terms plus
// direct coefficients on past decisions.
struct LinearPredictor {
  TermList terms;
  Eigen::VectorXd coef;
  std::map<int, double> action_coefs;  // stage -> coefficient on a_stage

  double eval(const Schema& schema, const History& h) const;
};

// Law of one stage-1 coordinate: Gaussian, or a finite grid with
// probabilities (uniform when omitted).
struct CovariateLaw {
  std::string name;
  bool is_grid = false;
  double mean = 0.0;
  double sd = 1.0;
  std::vector<double> grid;
  std::vector<double> probs;
};

// One coordinate of the stage k -> k+1 transition: linear map of history and
// actions plus Gaussian noise.
struct TransitionCoord {
  std::string name;
  LinearPredictor map;
  double sd = 0.0;
};

// Generative model with known truth: confounded binary assignment, linear
// transitions, and an outcome that decomposes into a decision-free baseline
// plus one contrast block per stage:
//   Y = baseline'(h) + sum_k a_k * gamma_k' c_k(h) + noise.
struct ScenarioSpec {
  int num_stages = 0;
  std::vector<CovariateLaw> initial;
  std::vector<std::vector<TransitionCoord>> transitions;  // entry k-1 emits stage k+1
  std::vector<LinearPredictor> behavior;                  // logit of P(a_k = 1 | history)
  TermList outcome_baseline_terms;
  Eigen::VectorXd outcome_baseline_coef;
  std::vector<TermList> contrast_terms;        // per stage
  std::vector<Eigen::VectorXd> contrast_coef;  // gamma_k
  double outcome_sd = 0.0;
  // True when no covariate feeding any contrast term is downstream of a
  // decision; then the stagewise sign rule is globally optimal.
  bool contrast_args_exogenous = false;

  Schema schema() const;
  std::vector<TreatmentSpace> spaces() const;  // binary at every stage
  // Validates shapes, term references, probabilities, and the exogeneity
  // flag (checked structurally against the transition graph).
  void check() const;
  bool all_grid_initial() const;
  bool deterministic() const;  // all transition and outcome noise zero
};

ScenarioSpec load_scenario_file(const std::string& path);

// The scenario's own assignment mechanism, wrapped as a (stochastic) regime.
class BehaviorRegime final : public Regime {
 public:
  explicit BehaviorRegime(const ScenarioSpec& spec)
      : behavior_(spec.behavior), num_stages_(spec.num_stages) {}

  int decide(const Schema& schema, const History& h, int stage, double u) const override;
  int num_stages() const override { return num_stages_; }

 private:
  std::vector<LinearPredictor> behavior_;
  int num_stages_;
};

// Exact-match lookup regime over enumerated histories; the output form of
// dp_oracle. Throws when queried off the table.
class TabulatedRegime final : public Regime {
 public:
  struct Entry {
    History history;
    int stage;
    int action;
  };

  explicit TabulatedRegime(int num_stages) : num_stages_(num_stages) {}

  void insert(const History& h, int stage, int action);
  int decide(const Schema& schema, const History& h, int stage, double u) const override;
  int num_stages() const override { return num_stages_; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::map<std::string, int> table_;
  std::vector<Entry> entries_;
  int num_stages_;
};

// n i.i.d. trajectories under the behavior policy. Bitwise reproducible for a
// given (spec, n, seed): trajectory i consumes only substream i, so results
// do not depend on generation order or thread count.
TrajectoryDataset simulate(const ScenarioSpec& spec, Eigen::Index n, std::uint64_t seed,
                           int threads = 1);

// The row that simulate(spec, n, seed) produces at `index`, regenerated alone.
Trajectory simulate_one(const ScenarioSpec& spec, std::uint64_t seed, Eigen::Index index);

struct McValue {
  double value = 0.0;
  double se = 0.0;
};

// Mean outcome when decisions follow `regime` (not the behavior policy),
// estimated from m forward replicates. A shared seed yields common random
// numbers across regimes.
McValue mc_value(const ScenarioSpec& spec, const Regime& regime, Eigen::Index m,
                 std::uint64_t seed, int threads = 1);

// Stagewise sign rule of the true contrasts. Only valid (and only permitted)
// when contrast arguments are exogenous; otherwise use dp_oracle.
SignRuleRegime true_regime(const ScenarioSpec& spec);

struct DpResult {
  std::shared_ptr<TabulatedRegime> regime;
  double value = 0.0;
};

// Exhaustive backward induction over every (history, action) cell. Requires
// grid-valued initial covariates and deterministic transitions; errors above
// `cell_cap` enumerated cells.
DpResult dp_oracle(const ScenarioSpec& spec, std::size_t cell_cap = 1000000);

// One trajectory per (initial cell x action sequence); covers every
// state-action cell of a finite deterministic scenario exactly once.
TrajectoryDataset exhaustive_dataset(const ScenarioSpec& spec, std::size_t cell_cap = 1000000);

// Exact expected outcome of a regime on a finite deterministic scenario
// (weighted enumeration, no Monte Carlo error).
double exact_value(const ScenarioSpec& spec, const Regime& regime,
                   std::size_t cell_cap = 1000000);

}  // namespace dtr
