#include "dtr/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <set>
#include <thread>

#include "dtr/rng.hpp"
#include "dtr/solve.hpp"
#include "json.hpp"

namespace dtr {

namespace {
constexpr const char* kModule = "scenario";

Error err(const std::string& message) { return Error(kModule, message); }

// Contiguous chunks over [0, n); results must be written by index so the
// outcome is independent of the thread count. Worker exceptions are captured
// and rethrown on the calling thread.
void parallel_for(Eigen::Index n, int threads,
                  const std::function<void(Eigen::Index, Eigen::Index)>& run_chunk) {
  threads = std::max(1, threads);
  if (threads == 1 || n < 2 * threads) {
    run_chunk(0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  const Eigen::Index chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const Eigen::Index lo = t * chunk;
    const Eigen::Index hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&run_chunk, &errors, t, lo, hi] {
      try {
        run_chunk(lo, hi);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

double LinearPredictor::eval(const Schema& schema, const History& h) const {
  double v = terms.empty() ? 0.0 : eval_terms(schema, h, terms).dot(coef);
  for (const auto& [stage, c] : action_coefs) {
    if (stage > h.action_stages()) {
      throw err("predictor references a" + format_int(stage) + " before it is decided");
    }
    v += c * h.actions[static_cast<std::size_t>(stage - 1)];
  }
  return v;
}

Schema ScenarioSpec::schema() const {
  Schema s;
  s.stage_covariates.resize(static_cast<std::size_t>(num_stages));
  for (const auto& law : initial) s.stage_covariates[0].push_back(law.name);
  for (std::size_t t = 0; t < transitions.size(); ++t) {
    for (const auto& coord : transitions[t]) {
      s.stage_covariates[t + 1].push_back(coord.name);
    }
  }
  return s;
}

std::vector<TreatmentSpace> ScenarioSpec::spaces() const {
  return std::vector<TreatmentSpace>(static_cast<std::size_t>(num_stages),
                                     TreatmentSpace::binary());
}

bool ScenarioSpec::all_grid_initial() const {
  return std::all_of(initial.begin(), initial.end(),
                     [](const CovariateLaw& law) { return law.is_grid; });
}

bool ScenarioSpec::deterministic() const {
  if (outcome_sd != 0.0) return false;
  for (const auto& stage : transitions) {
    for (const auto& coord : stage) {
      if (coord.sd != 0.0) return false;
    }
  }
  return true;
}

void ScenarioSpec::check() const {
  if (num_stages < 1) throw err("scenario needs at least one stage");
  if (static_cast<int>(transitions.size()) != num_stages - 1) {
    throw err("scenario needs exactly K-1 transition blocks");
  }
  if (static_cast<int>(behavior.size()) != num_stages) {
    throw err("scenario needs one behavior predictor per stage");
  }
  if (static_cast<int>(contrast_terms.size()) != num_stages ||
      static_cast<int>(contrast_coef.size()) != num_stages) {
    throw err("scenario needs one contrast block per stage");
  }

  const Schema s = schema();
  for (int k = 1; k <= num_stages; ++k) {
    std::set<std::string> seen;
    for (const auto& name : s.names(k)) {
      if (!valid_identifier(name)) throw err("invalid covariate name '" + name + "'");
      if (!seen.insert(name).second) {
        throw err("duplicate covariate name '" + name + "' at stage " + format_int(k));
      }
    }
  }

  for (const auto& law : initial) {
    if (law.is_grid) {
      if (law.grid.empty()) throw err("grid law for '" + law.name + "' is empty");
      if (law.probs.size() != law.grid.size()) {
        throw err("grid law for '" + law.name + "' needs one probability per point");
      }
      double total = 0.0;
      for (double p : law.probs) {
        if (p < 0.0) throw err("negative probability in grid law for '" + law.name + "'");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-9) {
        throw err("grid probabilities for '" + law.name + "' sum to " + format_double(total));
      }
    } else if (law.sd < 0.0) {
      throw err("negative sd for initial covariate '" + law.name + "'");
    }
  }

  auto check_predictor = [&](const LinearPredictor& p, int stage, int max_action_stage,
                             const std::string& what) {
    if (static_cast<Eigen::Index>(p.terms.size()) != p.coef.size()) {
      throw err(what + ": " + format_int(static_cast<int>(p.terms.size())) + " terms but " +
                format_int(p.coef.size()) + " coefficients");
    }
    check_terms(p.terms, s, stage);
    for (const auto& [astage, c] : p.action_coefs) {
      (void)c;
      if (astage < 1 || astage > max_action_stage) {
        throw err(what + ": action reference a" + format_int(astage) + " out of range");
      }
    }
  };

  for (int k = 1; k <= num_stages; ++k) {
    check_predictor(behavior[static_cast<std::size_t>(k - 1)], k, k - 1,
                    "behavior policy at stage " + format_int(k));
  }
  for (std::size_t t = 0; t < transitions.size(); ++t) {
    const int k = static_cast<int>(t) + 1;
    for (const auto& coord : transitions[t]) {
      if (coord.sd < 0.0) throw err("negative sd for transition covariate '" + coord.name + "'");
      check_predictor(coord.map, k, k, "transition to stage " + format_int(k + 1));
    }
  }
  if (static_cast<Eigen::Index>(outcome_baseline_terms.size()) != outcome_baseline_coef.size()) {
    throw err("outcome baseline: term/coefficient length mismatch");
  }
  check_terms(outcome_baseline_terms, s, num_stages);
  if (outcome_sd < 0.0) throw err("negative outcome sd");
  for (int k = 1; k <= num_stages; ++k) {
    const auto& terms = contrast_terms[static_cast<std::size_t>(k - 1)];
    if (static_cast<Eigen::Index>(terms.size()) !=
        contrast_coef[static_cast<std::size_t>(k - 1)].size()) {
      throw err("contrast block " + format_int(k) + ": term/coefficient length mismatch");
    }
    check_terms(terms, s, k);
  }

  if (contrast_args_exogenous) {
    // Taint propagation through the transition graph: a covariate is
    // action-dependent if its map takes an action coefficient or reads a
    // tainted covariate.
    std::set<std::pair<int, std::string>> tainted;
    for (std::size_t t = 0; t < transitions.size(); ++t) {
      const int stage = static_cast<int>(t) + 2;
      for (const auto& coord : transitions[t]) {
        bool dirty = false;
        for (const auto& [astage, c] : coord.map.action_coefs) {
          (void)astage;
          if (c != 0.0) dirty = true;
        }
        for (const auto& term : coord.map.terms) {
          for (const auto& f : term.factors) {
            if (tainted.count({f.stage, f.name})) dirty = true;
          }
        }
        if (dirty) tainted.insert({stage, coord.name});
      }
    }
    for (int k = 1; k <= num_stages; ++k) {
      for (const auto& term : contrast_terms[static_cast<std::size_t>(k - 1)]) {
        for (const auto& f : term.factors) {
          if (tainted.count({f.stage, f.name})) {
            throw err("contrast_args_exogenous is set but contrast at stage " + format_int(k) +
                      " reads action-dependent covariate 's" + format_int(f.stage) + "." +
                      f.name + "'");
          }
        }
      }
    }
  }
}

int BehaviorRegime::decide(const Schema& schema, const History& h, int stage, double u) const {
  const double p = expit(behavior_.at(static_cast<std::size_t>(stage - 1)).eval(schema, h));
  return u < p ? 1 : 0;
}

namespace {

std::string history_key(const History& h, int stage) {
  std::string key;
  auto put_int = [&key](int v) {
    char buf[sizeof(int)];
    std::memcpy(buf, &v, sizeof(int));
    key.append(buf, sizeof(int));
  };
  auto put_double = [&key](double v) {
    char buf[sizeof(double)];
    std::memcpy(buf, &v, sizeof(double));
    key.append(buf, sizeof(double));
  };
  put_int(stage);
  for (int k = 0; k < stage; ++k) {
    const auto& cov = h.covariates.at(static_cast<std::size_t>(k));
    put_int(static_cast<int>(cov.size()));
    for (Eigen::Index j = 0; j < cov.size(); ++j) put_double(cov(j));
  }
  for (int k = 0; k + 1 < stage; ++k) put_int(h.actions.at(static_cast<std::size_t>(k)));
  return key;
}

}  // namespace

void TabulatedRegime::insert(const History& h, int stage, int action) {
  History trimmed;
  trimmed.covariates.assign(h.covariates.begin(), h.covariates.begin() + stage);
  trimmed.actions.assign(h.actions.begin(), h.actions.begin() + (stage - 1));
  table_[history_key(trimmed, stage)] = action;
  entries_.push_back({std::move(trimmed), stage, action});
}

int TabulatedRegime::decide(const Schema&, const History& h, int stage, double) const {
  auto it = table_.find(history_key(h, stage));
  if (it == table_.end()) {
    throw err("tabulated regime is undefined on the queried stage-" + format_int(stage) +
              " history");
  }
  return it->second;
}

namespace {

// Deterministic part of the outcome given a complete history.
double outcome_mean(const ScenarioSpec& spec, const Schema& schema, const History& h) {
  double y = spec.outcome_baseline_terms.empty()
                 ? 0.0
                 : eval_terms(schema, h, spec.outcome_baseline_terms).dot(spec.outcome_baseline_coef);
  for (int k = 1; k <= spec.num_stages; ++k) {
    const auto& terms = spec.contrast_terms[static_cast<std::size_t>(k - 1)];
    if (terms.empty()) continue;
    const double c = eval_terms(schema, h, terms).dot(spec.contrast_coef[static_cast<std::size_t>(k - 1)]);
    y += h.actions[static_cast<std::size_t>(k - 1)] * c;
  }
  return y;
}

// Substream layout for trajectory i: stage-k covariate j draws at
// (i, k, j), the stage-k action draw at (i, k, d_k), and the outcome draw at
// (i, K+1, 0).
struct ForwardResult {
  History h;
  double y = 0.0;
};

ForwardResult forward_one(const ScenarioSpec& spec, const Schema& schema, const Regime& regime,
                          std::uint64_t seed, Eigen::Index index) {
  const auto i = static_cast<std::uint64_t>(index);
  ForwardResult out;
  History& h = out.h;

  Eigen::VectorXd s1(static_cast<Eigen::Index>(spec.initial.size()));
  for (std::size_t j = 0; j < spec.initial.size(); ++j) {
    const CovariateLaw& law = spec.initial[j];
    const std::uint64_t k = rng::key(seed, i, 1, j);
    if (law.is_grid) {
      const double u = rng::uniform(k);
      double cum = 0.0;
      std::size_t pick = law.grid.size() - 1;
      for (std::size_t g = 0; g < law.grid.size(); ++g) {
        cum += law.probs[g];
        if (u < cum) {
          pick = g;
          break;
        }
      }
      s1(static_cast<Eigen::Index>(j)) = law.grid[pick];
    } else {
      s1(static_cast<Eigen::Index>(j)) = law.mean + law.sd * rng::normal(k);
    }
  }
  h.covariates.push_back(std::move(s1));

  for (int stage = 1; stage <= spec.num_stages; ++stage) {
    const auto d = static_cast<std::uint64_t>(h.covariates.back().size());
    const double u = rng::uniform(rng::key(seed, i, static_cast<std::uint64_t>(stage), d));
    const int a = regime.decide(schema, h, stage, u);
    h.actions.push_back(a);
    if (stage < spec.num_stages) {
      const auto& coords = spec.transitions[static_cast<std::size_t>(stage - 1)];
      Eigen::VectorXd next(static_cast<Eigen::Index>(coords.size()));
      for (std::size_t j = 0; j < coords.size(); ++j) {
        double v = coords[j].map.eval(schema, h);
        if (coords[j].sd > 0.0) {
          v += coords[j].sd *
               rng::normal(rng::key(seed, i, static_cast<std::uint64_t>(stage + 1), j));
        }
        next(static_cast<Eigen::Index>(j)) = v;
      }
      h.covariates.push_back(std::move(next));
    }
  }

  out.y = outcome_mean(spec, schema, h);
  if (spec.outcome_sd > 0.0) {
    out.y += spec.outcome_sd *
             rng::normal(rng::key(seed, i, static_cast<std::uint64_t>(spec.num_stages + 1), 0));
  }
  return out;
}

Trajectory to_trajectory(const ScenarioSpec& spec, const Schema& schema, const ForwardResult& r,
                         Eigen::Index index) {
  Trajectory t;
  t.id = format_int(index + 1);
  t.outcome = r.y;
  for (int k = 1; k <= spec.num_stages; ++k) {
    StageObservation obs;
    const auto& names = schema.names(k);
    for (std::size_t j = 0; j < names.size(); ++j) {
      obs.covariates.emplace_back(names[j],
                                  r.h.covariates[static_cast<std::size_t>(k - 1)](
                                      static_cast<Eigen::Index>(j)));
    }
    obs.action = r.h.actions[static_cast<std::size_t>(k - 1)];
    t.stages.push_back(std::move(obs));
  }
  return t;
}

}  // namespace

TrajectoryDataset simulate(const ScenarioSpec& spec, Eigen::Index n, std::uint64_t seed,
                           int threads) {
  spec.check();
  if (n < 1) throw err("simulate needs n >= 1");
  const Schema schema = spec.schema();
  const BehaviorRegime behavior(spec);
  std::vector<Trajectory> rows(static_cast<std::size_t>(n));
  parallel_for(n, threads, [&](Eigen::Index lo, Eigen::Index hi) {
    for (Eigen::Index idx = lo; idx < hi; ++idx) {
      rows[static_cast<std::size_t>(idx)] =
          to_trajectory(spec, schema, forward_one(spec, schema, behavior, seed, idx), idx);
    }
  });
  return TrajectoryDataset::from_rows(rows, spec.spaces());
}

Trajectory simulate_one(const ScenarioSpec& spec, std::uint64_t seed, Eigen::Index index) {
  spec.check();
  const Schema schema = spec.schema();
  const BehaviorRegime behavior(spec);
  return to_trajectory(spec, schema, forward_one(spec, schema, behavior, seed, index), index);
}

McValue mc_value(const ScenarioSpec& spec, const Regime& regime, Eigen::Index m,
                 std::uint64_t seed, int threads) {
  spec.check();
  if (m < 2) throw err("mc_value needs m >= 2");
  const Schema schema = spec.schema();
  std::vector<double> ys(static_cast<std::size_t>(m));
  parallel_for(m, threads, [&](Eigen::Index lo, Eigen::Index hi) {
    for (Eigen::Index idx = lo; idx < hi; ++idx) {
      ys[static_cast<std::size_t>(idx)] = forward_one(spec, schema, regime, seed, idx).y;
    }
  });
  double sum = 0.0;
  for (double y : ys) sum += y;
  const double mean = sum / static_cast<double>(m);
  double ss = 0.0;
  for (double y : ys) ss += (y - mean) * (y - mean);
  const double var = ss / static_cast<double>(m - 1);
  return {mean, std::sqrt(var / static_cast<double>(m))};
}

SignRuleRegime true_regime(const ScenarioSpec& spec) {
  spec.check();
  if (!spec.contrast_args_exogenous) {
    throw err("true_regime requires contrast_args_exogenous; stagewise sign optimality is not "
              "guaranteed here, use dp_oracle");
  }
  return SignRuleRegime(spec.contrast_terms, spec.contrast_coef);
}

namespace {

struct CellEnumerator {
  const ScenarioSpec& spec;
  const Schema& schema;
  std::vector<Eigen::VectorXd> cells;
  std::vector<double> probs;

  explicit CellEnumerator(const ScenarioSpec& s, const Schema& sch) : spec(s), schema(sch) {
    if (!spec.all_grid_initial()) {
      throw err("finite enumeration requires grid-valued initial covariates");
    }
    if (!spec.deterministic()) {
      throw err("finite enumeration requires zero transition and outcome noise");
    }
    Eigen::VectorXd point(static_cast<Eigen::Index>(spec.initial.size()));
    expand(0, 1.0, point);
  }

  void expand(std::size_t j, double p, Eigen::VectorXd& point) {
    if (j == spec.initial.size()) {
      cells.push_back(point);
      probs.push_back(p);
      return;
    }
    const CovariateLaw& law = spec.initial[j];
    for (std::size_t g = 0; g < law.grid.size(); ++g) {
      point(static_cast<Eigen::Index>(j)) = law.grid[g];
      expand(j + 1, p * law.probs[g], point);
    }
  }
};

void advance_deterministic(const ScenarioSpec& spec, const Schema& schema, History& h,
                           int stage) {
  const auto& coords = spec.transitions[static_cast<std::size_t>(stage - 1)];
  Eigen::VectorXd next(static_cast<Eigen::Index>(coords.size()));
  for (std::size_t j = 0; j < coords.size(); ++j) {
    next(static_cast<Eigen::Index>(j)) = coords[j].map.eval(schema, h);
  }
  h.covariates.push_back(std::move(next));
}

double dp_visit(const ScenarioSpec& spec, const Schema& schema, History& h, int stage,
                TabulatedRegime& table) {
  if (stage > spec.num_stages) return outcome_mean(spec, schema, h);
  Eigen::VectorXd values(2);
  for (int a = 0; a <= 1; ++a) {
    h.actions.push_back(a);
    if (stage < spec.num_stages) advance_deterministic(spec, schema, h, stage);
    values(a) = dp_visit(spec, schema, h, stage + 1, table);
    if (stage < spec.num_stages) h.covariates.pop_back();
    h.actions.pop_back();
  }
  const int best = static_cast<int>(argmax_with_ties(values));
  table.insert(h, stage, best);
  return values(best);
}

std::size_t enumeration_size(const ScenarioSpec& spec, std::size_t n_cells) {
  std::size_t paths = 1;
  for (int k = 0; k < spec.num_stages; ++k) {
    if (paths > (1ULL << 40)) break;
    paths *= 2;
  }
  return n_cells * paths;
}

}  // namespace

DpResult dp_oracle(const ScenarioSpec& spec, std::size_t cell_cap) {
  spec.check();
  const Schema schema = spec.schema();
  CellEnumerator cells(spec, schema);
  if (enumeration_size(spec, cells.cells.size()) > cell_cap) {
    throw err("state space exceeds the enumeration cap of " +
              format_int(static_cast<long long>(cell_cap)) + " cells");
  }
  DpResult out;
  out.regime = std::make_shared<TabulatedRegime>(spec.num_stages);
  double value = 0.0;
  for (std::size_t c = 0; c < cells.cells.size(); ++c) {
    History h;
    h.covariates.push_back(cells.cells[c]);
    value += cells.probs[c] * dp_visit(spec, schema, h, 1, *out.regime);
  }
  out.value = value;
  return out;
}

namespace {

void exhaustive_visit(const ScenarioSpec& spec, const Schema& schema, History& h, int stage,
                      std::vector<Trajectory>& rows) {
  if (stage > spec.num_stages) {
    ForwardResult r;
    r.h = h;
    r.y = outcome_mean(spec, schema, h);
    rows.push_back(to_trajectory(spec, schema, r, static_cast<Eigen::Index>(rows.size())));
    return;
  }
  for (int a = 0; a <= 1; ++a) {
    h.actions.push_back(a);
    if (stage < spec.num_stages) advance_deterministic(spec, schema, h, stage);
    exhaustive_visit(spec, schema, h, stage + 1, rows);
    if (stage < spec.num_stages) h.covariates.pop_back();
    h.actions.pop_back();
  }
}

}  // namespace

TrajectoryDataset exhaustive_dataset(const ScenarioSpec& spec, std::size_t cell_cap) {
  spec.check();
  const Schema schema = spec.schema();
  CellEnumerator cells(spec, schema);
  if (enumeration_size(spec, cells.cells.size()) > cell_cap) {
    throw err("state space exceeds the enumeration cap of " +
              format_int(static_cast<long long>(cell_cap)) + " cells");
  }
  std::vector<Trajectory> rows;
  for (const auto& cell : cells.cells) {
    History h;
    h.covariates.push_back(cell);
    exhaustive_visit(spec, schema, h, 1, rows);
  }
  return TrajectoryDataset::from_rows(rows, spec.spaces());
}

double exact_value(const ScenarioSpec& spec, const Regime& regime, std::size_t cell_cap) {
  spec.check();
  const Schema schema = spec.schema();
  CellEnumerator cells(spec, schema);
  if (enumeration_size(spec, cells.cells.size()) > cell_cap) {
    throw err("state space exceeds the enumeration cap of " +
              format_int(static_cast<long long>(cell_cap)) + " cells");
  }
  double value = 0.0;
  for (std::size_t c = 0; c < cells.cells.size(); ++c) {
    History h;
    h.covariates.push_back(cells.cells[c]);
    for (int stage = 1; stage <= spec.num_stages; ++stage) {
      const int a = regime.decide(schema, h, stage, 0.5);
      h.actions.push_back(a);
      if (stage < spec.num_stages) advance_deterministic(spec, schema, h, stage);
    }
    value += cells.probs[c] * outcome_mean(spec, schema, h);
  }
  return value;
}

namespace {

LinearPredictor predictor_from_json(const nlohmann::json& j, int stage, int max_action_stage,
                                    const std::string& what) {
  LinearPredictor p;
  const std::string text = j.contains("terms") ? j.at("terms").get<std::string>() : "";
  if (!text.empty()) p.terms = parse_formula(text, stage);
  std::vector<double> coef;
  if (j.contains("coef")) coef = j.at("coef").get<std::vector<double>>();
  if (coef.size() != p.terms.size()) {
    throw err(what + ": " + format_int(static_cast<int>(p.terms.size())) + " terms but " +
              format_int(static_cast<int>(coef.size())) + " coefficients");
  }
  p.coef = Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
  if (j.contains("actions")) {
    for (const auto& [key, value] : j.at("actions").items()) {
      const int astage = std::stoi(key);
      if (astage < 1 || astage > max_action_stage) {
        throw err(what + ": action reference a" + key + " out of range");
      }
      p.action_coefs[astage] = value.get<double>();
    }
  }
  return p;
}

}  // namespace

ScenarioSpec load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw err("cannot open scenario file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw err("scenario file '" + path + "' is not valid JSON: " + e.what());
  }

  ScenarioSpec spec;
  try {
    spec.num_stages = j.at("k").get<int>();
    if (spec.num_stages < 1) throw err("scenario file: k must be >= 1");

    for (const auto& law_json : j.at("initial")) {
      CovariateLaw law;
      law.name = law_json.at("name").get<std::string>();
      if (law_json.contains("grid")) {
        law.is_grid = true;
        law.grid = law_json.at("grid").get<std::vector<double>>();
        if (law_json.contains("probs")) {
          law.probs = law_json.at("probs").get<std::vector<double>>();
        } else if (!law.grid.empty()) {
          law.probs.assign(law.grid.size(), 1.0 / static_cast<double>(law.grid.size()));
        }
      } else {
        law.mean = law_json.value("mean", 0.0);
        law.sd = law_json.value("sd", 1.0);
      }
      spec.initial.push_back(std::move(law));
    }

    if (j.contains("transitions")) {
      for (const auto& stage_json : j.at("transitions")) {
        std::vector<TransitionCoord> coords;
        const int stage = static_cast<int>(spec.transitions.size()) + 1;
        for (const auto& coord_json : stage_json) {
          TransitionCoord coord;
          coord.name = coord_json.at("name").get<std::string>();
          coord.map = predictor_from_json(coord_json, stage, stage,
                                          "transition covariate '" + coord.name + "'");
          coord.sd = coord_json.value("sd", 0.0);
          coords.push_back(std::move(coord));
        }
        spec.transitions.push_back(std::move(coords));
      }
    }

    {
      int stage = 1;
      for (const auto& b : j.at("behavior")) {
        spec.behavior.push_back(
            predictor_from_json(b, stage, stage - 1, "behavior policy at stage " + format_int(stage)));
        ++stage;
      }
    }

    const auto& outcome = j.at("outcome");
    {
      const auto& baseline = outcome.at("baseline");
      const std::string text = baseline.contains("terms") ? baseline.at("terms").get<std::string>() : "";
      if (!text.empty()) spec.outcome_baseline_terms = parse_formula(text, spec.num_stages);
      std::vector<double> coef;
      if (baseline.contains("coef")) coef = baseline.at("coef").get<std::vector<double>>();
      if (coef.size() != spec.outcome_baseline_terms.size()) {
        throw err("outcome baseline: term/coefficient length mismatch");
      }
      spec.outcome_baseline_coef =
          Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
    }
    {
      int stage = 1;
      for (const auto& c : outcome.at("contrasts")) {
        const std::string text = c.contains("terms") ? c.at("terms").get<std::string>() : "";
        TermList terms;
        if (!text.empty()) terms = parse_formula(text, stage);
        std::vector<double> coef;
        if (c.contains("coef")) coef = c.at("coef").get<std::vector<double>>();
        if (coef.size() != terms.size()) {
          throw err("contrast block " + format_int(stage) + ": term/coefficient length mismatch");
        }
        spec.contrast_terms.push_back(std::move(terms));
        spec.contrast_coef.push_back(
            Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size())));
        ++stage;
      }
    }
    spec.outcome_sd = outcome.value("sd", 0.0);
    spec.contrast_args_exogenous = j.value("contrast_args_exogenous", false);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw err("scenario file '" + path + "': " + e.what());
  }

  spec.check();
  return spec;
}

}  // namespace dtr
