#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "dtr/common.hpp"

namespace dtr {

// Finite ordered set of integer decision codes for one stage.
class TreatmentSpace {
 public:
  TreatmentSpace() = default;
  explicit TreatmentSpace(std::vector<int> levels);

  static TreatmentSpace binary() { return TreatmentSpace({0, 1}); }

  const std::vector<int>& levels() const { return levels_; }
  int num_levels() const { return static_cast<int>(levels_.size()); }
  bool contains(int code) const;
  bool is_binary() const { return levels_.size() == 2 && levels_[0] == 0 && levels_[1] == 1; }
  int reference_level() const { return levels_.front(); }

  bool operator==(const TreatmentSpace& other) const { return levels_ == other.levels_; }

 private:
  std::vector<int> levels_;
};

// Covariate names per stage, in column order. Names follow
// [A-Za-z_][A-Za-z0-9_]* so CSV headers never need quoting.
struct Schema {
  std::vector<std::vector<std::string>> stage_covariates;

  int num_stages() const { return static_cast<int>(stage_covariates.size()); }
  const std::vector<std::string>& names(int stage) const {  // stage is 1-based
    return stage_covariates.at(static_cast<std::size_t>(stage - 1));
  }
  // Index of a covariate within its stage block, or -1.
  int index_of(int stage, const std::string& name) const;

  bool operator==(const Schema& other) const {
    return stage_covariates == other.stage_covariates;
  }
};

bool valid_identifier(const std::string& name);

// One stage of a single record: named covariates plus the decision taken.
struct StageObservation {
  std::vector<std::pair<std::string, double>> covariates;
  int action = 0;
};

// A full multi-stage record (S_1, a_1, ..., S_K, a_K, Y).
struct Trajectory {
  std::string id;
  std::vector<StageObservation> stages;
  double outcome = 0.0;
};

struct Violation {
  std::string trajectory_id;
  int stage = 0;  // 0 = record level
  std::string field;
  std::string message;
};

// Immutable multi-stage dataset. Stored column-wise (one covariate matrix and
// action vector per stage) so design matrices are cheap to assemble; rows are
// materialized on demand. Safe to share read-only across threads.
class TrajectoryDataset {
 public:
  TrajectoryDataset() = default;

  // Builds from records. Spaces may be omitted, in which case each stage's
  // space is the set of observed codes (at least two are required). Throws on
  // shapes that cannot be represented (varying K, covariate name mismatches);
  // value-level problems are left for validate().
  static TrajectoryDataset from_rows(const std::vector<Trajectory>& rows,
                                     std::vector<TreatmentSpace> spaces = {});

  Eigen::Index size() const { return outcome_.size(); }
  int num_stages() const { return schema_.num_stages(); }
  const Schema& schema() const { return schema_; }
  const std::vector<TreatmentSpace>& spaces() const { return spaces_; }
  const TreatmentSpace& space(int stage) const {
    return spaces_.at(static_cast<std::size_t>(stage - 1));
  }

  // stage is 1-based throughout.
  const Eigen::MatrixXd& covariates(int stage) const {
    return stage_covariates_.at(static_cast<std::size_t>(stage - 1));
  }
  const Eigen::VectorXi& actions(int stage) const {
    return stage_actions_.at(static_cast<std::size_t>(stage - 1));
  }
  const Eigen::VectorXd& outcomes() const { return outcome_; }
  const std::vector<std::string>& ids() const { return ids_; }

  Trajectory row(Eigen::Index i) const;

  // New dataset containing rows[indices[j]] in order; used by resampling.
  TrajectoryDataset select(const std::vector<Eigen::Index>& indices) const;

  std::uint64_t schema_fingerprint() const;

  bool operator==(const TrajectoryDataset& other) const;

 private:
  Schema schema_;
  std::vector<TreatmentSpace> spaces_;
  std::vector<Eigen::MatrixXd> stage_covariates_;
  std::vector<Eigen::VectorXi> stage_actions_;
  Eigen::VectorXd outcome_;
  std::vector<std::string> ids_;
};

// Value-level invariant checks: finite covariates and outcomes, actions inside
// the declared spaces. Violations are data, not faults.
std::vector<Violation> validate(const TrajectoryDataset& dataset);

// Record-level checks on raw rows before columnar assembly: stage counts,
// covariate name sets, finiteness, action membership when spaces are given.
std::vector<Violation> validate(const std::vector<Trajectory>& rows,
                                const std::vector<TreatmentSpace>& spaces = {});

// CSV ingestion/emission. Header is exactly
//   id,s1_<name>,...,a1,...,sK_<name>,...,aK,y
// with floats in shortest round-trip form. Any malformation rejects the file.
TrajectoryDataset load_csv(const std::string& path, int num_stages,
                           std::vector<TreatmentSpace> declared_spaces = {});
void save_csv(const TrajectoryDataset& dataset, const std::string& path);

std::string csv_header(const Schema& schema);

}  // namespace dtr
