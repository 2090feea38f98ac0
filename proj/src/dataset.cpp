#include "dtr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace dtr {

namespace {
constexpr const char* kModule = "trajectories";

Error err(const std::string& message) { return Error(kModule, message); }
}  // namespace

TreatmentSpace::TreatmentSpace(std::vector<int> levels) : levels_(std::move(levels)) {
  if (levels_.size() < 2) throw err("treatment space needs at least 2 levels");
  if (!std::is_sorted(levels_.begin(), levels_.end())) {
    throw err("treatment space levels must be sorted ascending");
  }
  if (std::adjacent_find(levels_.begin(), levels_.end()) != levels_.end()) {
    throw err("treatment space levels must be unique");
  }
}

bool TreatmentSpace::contains(int code) const {
  return std::binary_search(levels_.begin(), levels_.end(), code);
}

int Schema::index_of(int stage, const std::string& name) const {
  const auto& v = names(stage);
  auto it = std::find(v.begin(), v.end(), name);
  return it == v.end() ? -1 : static_cast<int>(it - v.begin());
}

bool valid_identifier(const std::string& name) {
  if (name.empty()) return false;
  auto head = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; };
  auto tail = [&](char c) { return head(c) || (c >= '0' && c <= '9'); };
  if (!head(name[0])) return false;
  return std::all_of(name.begin() + 1, name.end(), tail);
}

TrajectoryDataset TrajectoryDataset::from_rows(const std::vector<Trajectory>& rows,
                                               std::vector<TreatmentSpace> spaces) {
  if (rows.empty()) throw err("dataset needs at least one trajectory");
  const int num_stages = static_cast<int>(rows.front().stages.size());
  if (num_stages < 1) throw err("trajectories need at least one stage");

  Schema schema;
  schema.stage_covariates.resize(static_cast<std::size_t>(num_stages));
  for (int k = 0; k < num_stages; ++k) {
    for (const auto& [name, value] : rows.front().stages[static_cast<std::size_t>(k)].covariates) {
      (void)value;
      schema.stage_covariates[static_cast<std::size_t>(k)].push_back(name);
    }
  }

  TrajectoryDataset d;
  d.schema_ = schema;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  d.outcome_.resize(n);
  d.ids_.reserve(rows.size());
  for (int k = 0; k < num_stages; ++k) {
    const auto cols = static_cast<Eigen::Index>(schema.stage_covariates[static_cast<std::size_t>(k)].size());
    d.stage_covariates_.emplace_back(n, cols);
    d.stage_actions_.emplace_back(n);
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    const Trajectory& t = rows[static_cast<std::size_t>(i)];
    if (static_cast<int>(t.stages.size()) != num_stages) {
      throw err("trajectory '" + t.id + "' has " + format_int(static_cast<int>(t.stages.size())) +
                " stages, expected " + format_int(num_stages));
    }
    d.ids_.push_back(t.id);
    d.outcome_(i) = t.outcome;
    for (int k = 0; k < num_stages; ++k) {
      const auto& obs = t.stages[static_cast<std::size_t>(k)];
      const auto& names = schema.stage_covariates[static_cast<std::size_t>(k)];
      if (obs.covariates.size() != names.size()) {
        throw err("trajectory '" + t.id + "' stage " + format_int(k + 1) +
                  " covariate set differs from schema");
      }
      for (std::size_t j = 0; j < names.size(); ++j) {
        if (obs.covariates[j].first != names[j]) {
          throw err("trajectory '" + t.id + "' stage " + format_int(k + 1) +
                    " covariate set differs from schema (saw '" + obs.covariates[j].first +
                    "', expected '" + names[j] + "')");
        }
        d.stage_covariates_[static_cast<std::size_t>(k)](i, static_cast<Eigen::Index>(j)) =
            obs.covariates[j].second;
      }
      d.stage_actions_[static_cast<std::size_t>(k)](i) = obs.action;
    }
  }

  if (!spaces.empty()) {
    if (static_cast<int>(spaces.size()) != num_stages) {
      throw err("declared spaces cover " + format_int(static_cast<int>(spaces.size())) +
                " stages, expected " + format_int(num_stages));
    }
    d.spaces_ = std::move(spaces);
  } else {
    for (int k = 0; k < num_stages; ++k) {
      std::set<int> observed;
      const auto& a = d.stage_actions_[static_cast<std::size_t>(k)];
      for (Eigen::Index i = 0; i < n; ++i) observed.insert(a(i));
      if (observed.size() < 2) {
        throw err("stage " + format_int(k + 1) +
                  " has fewer than 2 observed action levels; declare a treatment space explicitly");
      }
      d.spaces_.emplace_back(std::vector<int>(observed.begin(), observed.end()));
    }
  }
  return d;
}

Trajectory TrajectoryDataset::row(Eigen::Index i) const {
  Trajectory t;
  t.id = ids_.at(static_cast<std::size_t>(i));
  t.outcome = outcome_(i);
  for (int k = 1; k <= num_stages(); ++k) {
    StageObservation obs;
    const auto& names = schema_.names(k);
    for (std::size_t j = 0; j < names.size(); ++j) {
      obs.covariates.emplace_back(names[j], covariates(k)(i, static_cast<Eigen::Index>(j)));
    }
    obs.action = actions(k)(i);
    t.stages.push_back(std::move(obs));
  }
  return t;
}

TrajectoryDataset TrajectoryDataset::select(const std::vector<Eigen::Index>& indices) const {
  for (Eigen::Index i : indices) {
    if (i < 0 || i >= size()) {
      throw err("select index " + format_int(i) + " out of range [0, " + format_int(size()) + ")");
    }
  }
  TrajectoryDataset d;
  d.schema_ = schema_;
  d.spaces_ = spaces_;
  const Eigen::Index m = static_cast<Eigen::Index>(indices.size());
  d.outcome_.resize(m);
  d.ids_.reserve(indices.size());
  for (int k = 0; k < num_stages(); ++k) {
    d.stage_covariates_.emplace_back(m, stage_covariates_[static_cast<std::size_t>(k)].cols());
    d.stage_actions_.emplace_back(m);
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::Index i = indices[static_cast<std::size_t>(j)];
    d.ids_.push_back(ids_.at(static_cast<std::size_t>(i)));
    d.outcome_(j) = outcome_(i);
    for (int k = 0; k < num_stages(); ++k) {
      d.stage_covariates_[static_cast<std::size_t>(k)].row(j) =
          stage_covariates_[static_cast<std::size_t>(k)].row(i);
      d.stage_actions_[static_cast<std::size_t>(k)](j) =
          stage_actions_[static_cast<std::size_t>(k)](i);
    }
  }
  return d;
}

std::uint64_t TrajectoryDataset::schema_fingerprint() const {
  std::string canon = "K=" + format_int(num_stages()) + ";";
  for (int k = 1; k <= num_stages(); ++k) {
    canon += "s" + format_int(k) + ":";
    for (const auto& name : schema_.names(k)) canon += name + ",";
    canon += "|a:";
    for (int level : space(k).levels()) canon += format_int(level) + ",";
    canon += ";";
  }
  return fnv1a(canon);
}

bool TrajectoryDataset::operator==(const TrajectoryDataset& other) const {
  if (!(schema_ == other.schema_) || spaces_ != other.spaces_ || ids_ != other.ids_) return false;
  if (outcome_.size() != other.outcome_.size()) return false;
  if ((outcome_.array() != other.outcome_.array()).any()) return false;
  for (std::size_t k = 0; k < stage_covariates_.size(); ++k) {
    if ((stage_covariates_[k].array() != other.stage_covariates_[k].array()).any()) return false;
    if ((stage_actions_[k].array() != other.stage_actions_[k].array()).any()) return false;
  }
  return true;
}

std::vector<Violation> validate(const TrajectoryDataset& dataset) {
  std::vector<Violation> out;
  const Eigen::Index n = dataset.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::string& id = dataset.ids()[static_cast<std::size_t>(i)];
    if (!std::isfinite(dataset.outcomes()(i))) {
      out.push_back({id, 0, "y", "outcome is not finite"});
    }
    for (int k = 1; k <= dataset.num_stages(); ++k) {
      const auto& names = dataset.schema().names(k);
      for (std::size_t j = 0; j < names.size(); ++j) {
        const double v = dataset.covariates(k)(i, static_cast<Eigen::Index>(j));
        if (!std::isfinite(v)) {
          out.push_back({id, k, names[j], "covariate is not finite"});
        }
      }
      const int a = dataset.actions(k)(i);
      if (!dataset.space(k).contains(a)) {
        out.push_back({id, k, "a" + format_int(k),
                       "action " + format_int(a) + " outside treatment space"});
      }
    }
  }
  return out;
}

std::vector<Violation> validate(const std::vector<Trajectory>& rows,
                                const std::vector<TreatmentSpace>& spaces) {
  std::vector<Violation> out;
  if (rows.empty()) {
    out.push_back({"", 0, "dataset", "dataset needs at least one trajectory"});
    return out;
  }
  const int num_stages = static_cast<int>(rows.front().stages.size());

  std::vector<std::set<std::string>> reference_names(static_cast<std::size_t>(num_stages));
  for (int k = 0; k < num_stages; ++k) {
    for (const auto& [name, value] : rows.front().stages[static_cast<std::size_t>(k)].covariates) {
      (void)value;
      reference_names[static_cast<std::size_t>(k)].insert(name);
    }
  }

  for (const Trajectory& t : rows) {
    if (static_cast<int>(t.stages.size()) != num_stages) {
      out.push_back({t.id, 0, "stages",
                     "has " + format_int(static_cast<int>(t.stages.size())) +
                         " stages, expected " + format_int(num_stages)});
      continue;
    }
    if (!std::isfinite(t.outcome)) out.push_back({t.id, 0, "y", "outcome is not finite"});
    for (int k = 0; k < num_stages; ++k) {
      const auto& obs = t.stages[static_cast<std::size_t>(k)];
      std::set<std::string> names;
      for (const auto& [name, value] : obs.covariates) {
        names.insert(name);
        if (!std::isfinite(value)) {
          out.push_back({t.id, k + 1, name, "covariate is not finite"});
        }
      }
      if (names != reference_names[static_cast<std::size_t>(k)]) {
        out.push_back({t.id, k + 1, "covariates",
                       "covariate names differ from trajectory '" + rows.front().id + "'"});
      }
      if (!spaces.empty() && k < static_cast<int>(spaces.size()) &&
          !spaces[static_cast<std::size_t>(k)].contains(obs.action)) {
        out.push_back({t.id, k + 1, "a" + format_int(k + 1),
                       "action " + format_int(obs.action) + " outside treatment space"});
      }
    }
  }
  return out;
}

std::string csv_header(const Schema& schema) {
  std::string h = "id";
  for (int k = 1; k <= schema.num_stages(); ++k) {
    for (const auto& name : schema.names(k)) {
      h += ",s" + format_int(k) + "_" + name;
    }
    h += ",a" + format_int(k);
  }
  h += ",y";
  return h;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

double parse_cell_double(const std::string& cell, const std::string& where) {
  bool ok = false;
  const double v = parse_double(cell, &ok);
  if (!ok) throw err("non-numeric cell at " + where + ": '" + cell + "'");
  if (!std::isfinite(v)) throw err("non-finite value at " + where + ": '" + cell + "'");
  return v;
}

int parse_cell_action(const std::string& cell, const std::string& where) {
  if (cell.empty()) throw err("missing value at " + where);
  int v = 0;
  auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
    throw err("action cell is not an integer at " + where + ": '" + cell + "'");
  }
  return v;
}

}  // namespace

TrajectoryDataset load_csv(const std::string& path, int num_stages,
                           std::vector<TreatmentSpace> declared_spaces) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw err("cannot open '" + path + "'");
  std::string header_line;
  if (!std::getline(in, header_line)) throw err("empty file '" + path + "'");
  if (!header_line.empty() && header_line.back() == '\r') header_line.pop_back();

  const std::vector<std::string> header = split_line(header_line);
  if (header.empty() || header[0] != "id") {
    throw err("malformed header: first column must be 'id'");
  }

  Schema schema;
  schema.stage_covariates.resize(static_cast<std::size_t>(num_stages));
  // Column roles, in order: covariate (stage, index) / action stage / outcome.
  int stage = 1;
  std::size_t col = 1;
  for (; col < header.size(); ++col) {
    const std::string& h = header[col];
    if (h == "y") break;
    const std::string action_name = "a" + format_int(stage);
    if (h == action_name) {
      if (stage > num_stages) throw err("malformed header: unexpected column '" + h + "'");
      ++stage;
      continue;
    }
    const std::string prefix = "s" + format_int(stage) + "_";
    if (stage <= num_stages && h.rfind(prefix, 0) == 0) {
      const std::string name = h.substr(prefix.size());
      if (!valid_identifier(name)) {
        throw err("malformed header: invalid covariate name '" + h + "'");
      }
      auto& names = schema.stage_covariates[static_cast<std::size_t>(stage - 1)];
      if (std::find(names.begin(), names.end(), name) != names.end()) {
        throw err("malformed header: duplicate covariate '" + h + "'");
      }
      names.push_back(name);
      continue;
    }
    throw err("malformed header: unexpected column '" + h + "' (expected " +
              (stage <= num_stages ? prefix + "<name> or " + action_name : std::string("y")) +
              ")");
  }
  if (stage != num_stages + 1) {
    throw err("malformed header: found " + format_int(stage - 1) + " action columns, expected " +
              format_int(num_stages));
  }
  if (col + 1 != header.size() || header[col] != "y") {
    throw err("malformed header: last column must be 'y'");
  }

  if (!declared_spaces.empty() &&
      static_cast<int>(declared_spaces.size()) != num_stages) {
    throw err("declared spaces cover " + format_int(static_cast<int>(declared_spaces.size())) +
              " stages, expected " + format_int(num_stages));
  }

  std::vector<Trajectory> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size()) {
      throw err("line " + format_int(static_cast<long long>(line_no)) + " has " +
                format_int(static_cast<long long>(cells.size())) + " cells, expected " +
                format_int(static_cast<long long>(header.size())));
    }
    Trajectory t;
    t.id = cells[0];
    if (t.id.empty()) throw err("line " + format_int(static_cast<long long>(line_no)) + ": empty id");
    std::size_t c = 1;
    for (int k = 1; k <= num_stages; ++k) {
      StageObservation obs;
      for (const auto& name : schema.stage_covariates[static_cast<std::size_t>(k - 1)]) {
        const std::string where =
            "line " + format_int(static_cast<long long>(line_no)) + ", column " + header[c];
        obs.covariates.emplace_back(name, parse_cell_double(cells[c], where));
        ++c;
      }
      const std::string where =
          "line " + format_int(static_cast<long long>(line_no)) + ", column " + header[c];
      obs.action = parse_cell_action(cells[c], where);
      ++c;
      if (!declared_spaces.empty() &&
          !declared_spaces[static_cast<std::size_t>(k - 1)].contains(obs.action)) {
        throw err("action outside treatment space at " + where + " (code " +
                  format_int(obs.action) + ")");
      }
      t.stages.push_back(std::move(obs));
    }
    const std::string where = "line " + format_int(static_cast<long long>(line_no)) + ", column y";
    t.outcome = parse_cell_double(cells[c], where);
    rows.push_back(std::move(t));
  }
  if (rows.empty()) throw err("no data rows in '" + path + "'");

  TrajectoryDataset d = TrajectoryDataset::from_rows(rows, std::move(declared_spaces));
  auto violations = validate(d);
  if (!violations.empty()) {
    const Violation& v = violations.front();
    throw err("invalid dataset: trajectory '" + v.trajectory_id + "' stage " +
              format_int(v.stage) + " field " + v.field + ": " + v.message);
  }
  return d;
}

void save_csv(const TrajectoryDataset& dataset, const std::string& path) {
  auto violations = validate(dataset);
  if (!violations.empty()) {
    const Violation& v = violations.front();
    throw err("refusing to save invalid dataset: trajectory '" + v.trajectory_id + "' field " +
              v.field + ": " + v.message);
  }
  for (const auto& id : dataset.ids()) {
    if (id.find(',') != std::string::npos || id.find('\n') != std::string::npos || id.empty()) {
      throw err("id '" + id + "' cannot be written to CSV");
    }
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw err("cannot write '" + path + "'");
  out << csv_header(dataset.schema()) << "\n";
  const Eigen::Index n = dataset.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    out << dataset.ids()[static_cast<std::size_t>(i)];
    for (int k = 1; k <= dataset.num_stages(); ++k) {
      const auto& cov = dataset.covariates(k);
      for (Eigen::Index j = 0; j < cov.cols(); ++j) {
        out << ',' << format_double(cov(i, j));
      }
      out << ',' << format_int(dataset.actions(k)(i));
    }
    out << ',' << format_double(dataset.outcomes()(i)) << "\n";
  }
  if (!out) throw err("write failed for '" + path + "'");
}

}  // namespace dtr
