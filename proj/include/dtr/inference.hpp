#pragma once

#include <string>
#include <vector>

#include "dtr/regime.hpp"

namespace dtr {

enum class Method { kQlearn, kAlearn };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct CoefficientInterval {
  std::string name;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool contains_point = true;
};

struct StabilityEntry {
  std::string probe_id;
  int stage = 0;
  int recommended = 0;
  double agreement = 0.0;  // fraction of bootstrap regimes that agree
};

struct EstimateReport {
  std::string method;
  int requested_B = 0;
  int effective_B = 0;   // successful resamples
  int failed_resamples = 0;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::vector<CoefficientInterval> coefficients;
  std::vector<StabilityEntry> stability;
  std::vector<std::string> notes;
};

// Nonparametric bootstrap over trajectories: B resamples with replacement of
// the sorted-by-id dataset, a refit per resample, percentile intervals per
// coefficient, and per-probe recommendation agreement. Deterministic per
// seed. Resamples that fail to fit are excluded and counted; more than 10%
// failures is a hard error.
EstimateReport bootstrap(const TrajectoryDataset& dataset, Method method,
                         const ModelSpec& models, int B, double alpha,
                         const std::vector<ProbeHistory>& probes, std::uint64_t seed,
                         int threads = 1);

// Report file round trip plus a human-readable rendering.
void save_report_file(const EstimateReport& report, const std::string& path,
                      const std::string& config_hash);
EstimateReport load_report_file(const std::string& path);
std::string render_report(const EstimateReport& report);

struct ScreenResult {
  Term term;
  double coefficient = 0.0;
  double se = 0.0;
  double score = 0.0;  // |coefficient| / se
  bool flagged = false;
};

// Marginal screening: least squares of Y on all candidate terms plus an
// intercept; candidates ranked by |t|-type score, flagged at the threshold.
// Aliased (collinear) candidates are a hard error naming the group.
std::vector<ScreenResult> screen_covariates(const TrajectoryDataset& dataset,
                                            const TermList& candidates, double threshold);

}  // namespace dtr
