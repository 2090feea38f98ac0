#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dtr/formula.hpp"

namespace dtr {

// Gaps at or below this relative tolerance count as ties, which resolve to
// the smallest action code. Makes "zero contrast recommends 0" hold under
// floating-point fits, where an exactly-null contrast comes back ~1e-16.
inline constexpr double kTieTol = 1e-9;

// Index into `values` of the winning level: largest value, ties (within
// kTieTol*(1+|max|)) broken toward the earliest level.
Eigen::Index argmax_with_ties(const Eigen::Ref<const Eigen::VectorXd>& values);

// A regime maps realized history to a stage decision. `u` is a uniform draw
// in [0,1) consumed only by stochastic regimes (the behavior policy);
// deterministic rules ignore it.
class Regime {
 public:
  virtual ~Regime() = default;
  virtual int decide(const Schema& schema, const History& h, int stage, double u) const = 0;
  virtual int num_stages() const = 0;
};

class ConstantRegime final : public Regime {
 public:
  ConstantRegime(int num_stages, int code)
      : codes_(static_cast<std::size_t>(num_stages), code) {}
  explicit ConstantRegime(std::vector<int> codes) : codes_(std::move(codes)) {}

  int decide(const Schema&, const History&, int stage, double) const override {
    return codes_.at(static_cast<std::size_t>(stage - 1));
  }
  int num_stages() const override { return static_cast<int>(codes_.size()); }

 private:
  std::vector<int> codes_;
};

// Stagewise sign rule 1{gamma_k' c_k(h) > 0} over binary stages.
class SignRuleRegime final : public Regime {
 public:
  SignRuleRegime(std::vector<TermList> contrast_terms, std::vector<Eigen::VectorXd> gamma);

  int decide(const Schema& schema, const History& h, int stage, double) const override;
  int num_stages() const override { return static_cast<int>(terms_.size()); }

 private:
  std::vector<TermList> terms_;
  std::vector<Eigen::VectorXd> gamma_;
};

// A regime estimated from data; carries the training schema so queries can be
// checked against it, and serializes to the regime file format.
class FittedRegime : public Regime {
 public:
  FittedRegime(std::string method, ModelSpec models, std::vector<TreatmentSpace> spaces,
               Schema schema, std::uint64_t schema_fingerprint)
      : method_(std::move(method)),
        models_(std::move(models)),
        spaces_(std::move(spaces)),
        schema_(std::move(schema)),
        schema_fingerprint_(schema_fingerprint) {}

  const std::string& method() const { return method_; }
  const ModelSpec& models() const { return models_; }
  const std::vector<TreatmentSpace>& spaces() const { return spaces_; }
  const TreatmentSpace& space(int stage) const {
    return spaces_.at(static_cast<std::size_t>(stage - 1));
  }
  const Schema& train_schema() const { return schema_; }
  std::uint64_t schema_fingerprint() const { return schema_fingerprint_; }
  int num_stages() const override { return static_cast<int>(spaces_.size()); }

  // Flattened (name, value) parameter list in a fixed order; bootstrap
  // intervals and the regime file both use these names.
  virtual std::vector<std::pair<std::string, double>> named_coefficients() const = 0;

  // Signed contrast (A-learning, binary Q) or best-vs-runner-up gap
  // (multi-level Q) at a queried history.
  virtual double decision_score(const Schema& schema, const History& h, int stage) const = 0;

  // Estimated data support at the history; NaN when no propensity was fitted.
  virtual double propensity_at(const Schema& schema, const History& h, int stage) const = 0;

 private:
  std::string method_;
  ModelSpec models_;
  std::vector<TreatmentSpace> spaces_;
  Schema schema_;
  std::uint64_t schema_fingerprint_ = 0;
};

// Recommends the decision for the stage following the realized history
// (covariates through stage k, actions through k-1). Throws on histories that
// do not cover the needed stages.
int recommend_next(const Regime& regime, const Schema& schema, const History& h);

struct ProbeHistory {
  std::string id;
  History history;
};

// Probe file: a truncated data CSV ending at a covariate block, i.e.
// id,s1_<name>,...[,a1,s2_<name>,...]. A probe supplies the history for the
// stage after its last action column. Covariates may appear in any order but
// must match the schema names exactly per stage.
std::vector<ProbeHistory> load_probe_csv(const std::string& path, const Schema& schema);

// Regime file: JSON with method tag, per-stage named coefficient blocks,
// treatment spaces, and the training-data schema fingerprint.
void save_regime_file(const FittedRegime& regime, const std::string& path);
std::unique_ptr<FittedRegime> load_regime_file(const std::string& path);

}  // namespace dtr
