#include "dtr/regime.hpp"

#include <cmath>
#include <fstream>

#include "dtr/alearn.hpp"
#include "dtr/qlearn.hpp"
#include "json.hpp"

namespace dtr {

namespace {
constexpr const char* kModule = "regime";

Error err(const std::string& message) { return Error(kModule, message); }
}  // namespace

Eigen::Index argmax_with_ties(const Eigen::Ref<const Eigen::VectorXd>& values) {
  Eigen::Index best = 0;
  double vmax = values(0);
  for (Eigen::Index l = 1; l < values.size(); ++l) {
    if (values(l) > vmax) {
      vmax = values(l);
      best = l;
    }
  }
  const double band = kTieTol * (1.0 + std::abs(vmax));
  for (Eigen::Index l = 0; l < best; ++l) {
    if (values(l) >= vmax - band) return l;
  }
  return best;
}

SignRuleRegime::SignRuleRegime(std::vector<TermList> contrast_terms,
                               std::vector<Eigen::VectorXd> gamma)
    : terms_(std::move(contrast_terms)), gamma_(std::move(gamma)) {
  if (terms_.size() != gamma_.size()) throw err("sign rule needs one gamma block per stage");
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    if (static_cast<Eigen::Index>(terms_[k].size()) != gamma_[k].size()) {
      throw err("sign rule stage " + format_int(static_cast<int>(k + 1)) +
                ": term/coefficient length mismatch");
    }
  }
}

int SignRuleRegime::decide(const Schema& schema, const History& h, int stage, double) const {
  const auto& terms = terms_.at(static_cast<std::size_t>(stage - 1));
  const auto& gamma = gamma_.at(static_cast<std::size_t>(stage - 1));
  const double contrast = eval_terms(schema, h, terms).dot(gamma);
  return a_decision(gamma, contrast);
}

int recommend_next(const Regime& regime, const Schema& schema, const History& h) {
  const int stage = h.action_stages() + 1;
  if (stage > regime.num_stages()) {
    throw err("history already covers all " + format_int(regime.num_stages()) + " stages");
  }
  if (h.covariate_stages() < stage) {
    throw err("incomplete history: stage " + format_int(stage) + " covariates missing");
  }
  return regime.decide(schema, h, stage, 0.0);
}

std::vector<ProbeHistory> load_probe_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw err("cannot open probe file '" + path + "'");
  std::string header_line;
  if (!std::getline(in, header_line)) throw err("empty probe file '" + path + "'");
  if (!header_line.empty() && header_line.back() == '\r') header_line.pop_back();

  std::vector<std::string> header;
  {
    std::string cur;
    for (char c : header_line) {
      if (c == ',') {
        header.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    header.push_back(cur);
  }
  if (header.empty() || header[0] != "id") {
    throw err("probe file header must start with 'id'");
  }

  // Column roles: (stage, covariate index within schema) or action stage.
  struct Column {
    int stage;
    int index;  // -1 for an action column
  };
  std::vector<Column> columns;
  int stage = 1;
  std::vector<std::vector<bool>> seen(schema.stage_covariates.size());
  for (std::size_t k = 0; k < seen.size(); ++k) {
    seen[k].assign(schema.stage_covariates[k].size(), false);
  }
  int last_action_stage = 0;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h == "a" + format_int(stage)) {
      for (std::size_t j = 0; j < seen[static_cast<std::size_t>(stage - 1)].size(); ++j) {
        if (!seen[static_cast<std::size_t>(stage - 1)][j]) {
          throw err("probe file is missing covariate 's" + format_int(stage) + "_" +
                    schema.names(stage)[j] + "'");
        }
      }
      columns.push_back({stage, -1});
      last_action_stage = stage;
      ++stage;
      if (stage > schema.num_stages()) {
        throw err("probe file covers actions for every stage; nothing left to recommend");
      }
      continue;
    }
    const std::string prefix = "s" + format_int(stage) + "_";
    if (h.rfind(prefix, 0) == 0) {
      const std::string name = h.substr(prefix.size());
      const int idx = schema.index_of(stage, name);
      if (idx < 0) throw err("probe file column '" + h + "' is not in the training schema");
      if (seen[static_cast<std::size_t>(stage - 1)][static_cast<std::size_t>(idx)]) {
        throw err("probe file has duplicate column '" + h + "'");
      }
      seen[static_cast<std::size_t>(stage - 1)][static_cast<std::size_t>(idx)] = true;
      columns.push_back({stage, idx});
      continue;
    }
    throw err("unexpected probe file column '" + h + "'");
  }
  const int probe_stage = last_action_stage + 1;
  for (std::size_t j = 0; j < seen[static_cast<std::size_t>(probe_stage - 1)].size(); ++j) {
    if (!seen[static_cast<std::size_t>(probe_stage - 1)][j]) {
      throw err("probe file is missing covariate 's" + format_int(probe_stage) + "_" +
                schema.names(probe_stage)[j] + "'");
    }
  }

  std::vector<ProbeHistory> probes;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        cells.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    cells.push_back(cur);
    if (cells.size() != header.size()) {
      throw err("probe line " + format_int(static_cast<long long>(line_no)) + " has " +
                format_int(static_cast<long long>(cells.size())) + " cells, expected " +
                format_int(static_cast<long long>(header.size())));
    }
    ProbeHistory probe;
    probe.id = cells[0];
    History& h = probe.history;
    for (int k = 1; k <= probe_stage; ++k) {
      h.covariates.emplace_back(
          static_cast<Eigen::Index>(schema.names(k).size()));
    }
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const std::string& cell = cells[c + 1];
      const Column& col = columns[c];
      if (col.index < 0) {
        bool ok = false;
        const double v = parse_double(cell, &ok);
        const int a = static_cast<int>(v);
        if (!ok || static_cast<double>(a) != v) {
          throw err("probe line " + format_int(static_cast<long long>(line_no)) +
                    ": action cell '" + cell + "' is not an integer");
        }
        h.actions.push_back(a);
      } else {
        bool ok = false;
        const double v = parse_double(cell, &ok);
        if (!ok || !std::isfinite(v)) {
          throw err("probe line " + format_int(static_cast<long long>(line_no)) +
                    ": bad numeric cell '" + cell + "'");
        }
        h.covariates[static_cast<std::size_t>(col.stage - 1)](col.index) = v;
      }
    }
    probes.push_back(std::move(probe));
  }
  if (probes.empty()) throw err("no probe rows in '" + path + "'");
  return probes;
}

namespace {

nlohmann::json schema_to_json(const Schema& schema) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& names : schema.stage_covariates) stages.push_back(names);
  return stages;
}

Schema schema_from_json(const nlohmann::json& j) {
  Schema schema;
  for (const auto& names : j) {
    schema.stage_covariates.push_back(names.get<std::vector<std::string>>());
  }
  return schema;
}

nlohmann::json coef_block(const TermList& terms, const Eigen::VectorXd& coef) {
  nlohmann::json out;
  out["terms"] = format_terms(terms);
  out["coef"] = std::vector<double>(coef.data(), coef.data() + coef.size());
  return out;
}

Eigen::VectorXd coef_from_json(const nlohmann::json& j, const TermList& terms,
                               const std::string& what) {
  const auto values = j.at("coef").get<std::vector<double>>();
  if (values.size() != terms.size()) {
    throw err(what + ": coefficient count " + format_int(static_cast<int>(values.size())) +
              " does not match term count " + format_int(static_cast<int>(terms.size())));
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

void save_regime_file(const FittedRegime& regime, const std::string& path) {
  nlohmann::json j;
  j["method"] = regime.method();
  j["schema_fingerprint"] = to_hex(regime.schema_fingerprint());
  j["schema"] = schema_to_json(regime.train_schema());
  nlohmann::json stages = nlohmann::json::array();

  if (const auto* q = dynamic_cast<const QRegime*>(&regime)) {
    for (int k = 1; k <= regime.num_stages(); ++k) {
      const QStageFit& fit = q->stage_fit(k);
      const StageModelSpec& spec = regime.models().stage(k);
      nlohmann::json s;
      s["stage"] = k;
      s["space"] = regime.space(k).levels();
      s["baseline"] = coef_block(spec.baseline_terms, fit.baseline_coef);
      nlohmann::json blocks = nlohmann::json::array();
      const auto& levels = regime.space(k).levels();
      for (std::size_t l = 1; l < levels.size(); ++l) {
        nlohmann::json blk = coef_block(spec.contrast_terms, fit.contrast_coefs[l - 1]);
        blk["level"] = levels[l];
        blocks.push_back(blk);
      }
      s["contrasts"] = blocks;
      stages.push_back(s);
    }
  } else if (const auto* a = dynamic_cast<const ARegime*>(&regime)) {
    for (int k = 1; k <= regime.num_stages(); ++k) {
      const AStageFit& fit = a->stage_fit(k);
      const StageModelSpec& spec = regime.models().stage(k);
      nlohmann::json s;
      s["stage"] = k;
      s["space"] = regime.space(k).levels();
      s["psi"] = coef_block(spec.contrast_terms, fit.psi);
      s["beta"] = coef_block(spec.baseline_terms, fit.beta);
      s["phi"] = coef_block(spec.propensity_terms, fit.phi);
      stages.push_back(s);
    }
  } else {
    throw err("unknown fitted regime type");
  }
  j["stages"] = stages;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw err("cannot write regime file '" + path + "'");
  out << j.dump(2) << "\n";
}

std::unique_ptr<FittedRegime> load_regime_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw err("cannot open regime file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw err("regime file '" + path + "' is not valid JSON: " + e.what());
  }

  try {
    const std::string method = j.at("method").get<std::string>();
    Schema schema = schema_from_json(j.at("schema"));
    const std::uint64_t fingerprint = std::stoull(j.at("schema_fingerprint").get<std::string>(),
                                                  nullptr, 16);
    const auto& stages = j.at("stages");
    if (!stages.is_array() || stages.empty()) throw err("regime file has no stages");

    std::vector<TreatmentSpace> spaces;
    ModelSpec models;
    const int num_stages = static_cast<int>(stages.size());

    auto terms_of = [&](const nlohmann::json& block, int stage) {
      return parse_formula(block.at("terms").get<std::string>(), stage);
    };

    if (method == "qlearn") {
      std::vector<QStageFit> fits;
      for (int k = 1; k <= num_stages; ++k) {
        const auto& s = stages[static_cast<std::size_t>(k - 1)];
        spaces.emplace_back(s.at("space").get<std::vector<int>>());
        StageModelSpec spec;
        spec.stage = k;
        spec.baseline_terms = terms_of(s.at("baseline"), k);
        QStageFit fit;
        fit.stage = k;
        fit.baseline_coef = coef_from_json(s.at("baseline"), spec.baseline_terms, "baseline");
        const auto& blocks = s.at("contrasts");
        if (blocks.empty()) throw err("qlearn regime stage needs at least one contrast block");
        spec.contrast_terms = terms_of(blocks.front(), k);
        for (const auto& blk : blocks) {
          fit.contrast_coefs.push_back(coef_from_json(blk, spec.contrast_terms, "contrast"));
        }
        if (fit.contrast_coefs.size() + 1 != spaces.back().levels().size()) {
          throw err("contrast block count does not match treatment space");
        }
        spec.propensity_terms = parse_formula("1", k);  // not used by qlearn regimes
        models.stages.push_back(std::move(spec));
        fits.push_back(std::move(fit));
      }
      return std::make_unique<QRegime>(std::move(models), std::move(spaces), std::move(schema),
                                       fingerprint, std::move(fits));
    }
    if (method == "alearn") {
      std::vector<AStageFit> fits;
      for (int k = 1; k <= num_stages; ++k) {
        const auto& s = stages[static_cast<std::size_t>(k - 1)];
        spaces.emplace_back(s.at("space").get<std::vector<int>>());
        StageModelSpec spec;
        spec.stage = k;
        spec.contrast_terms = terms_of(s.at("psi"), k);
        spec.baseline_terms = terms_of(s.at("beta"), k);
        spec.propensity_terms = terms_of(s.at("phi"), k);
        AStageFit fit;
        fit.stage = k;
        fit.psi = coef_from_json(s.at("psi"), spec.contrast_terms, "psi");
        fit.beta = coef_from_json(s.at("beta"), spec.baseline_terms, "beta");
        fit.phi = coef_from_json(s.at("phi"), spec.propensity_terms, "phi");
        models.stages.push_back(std::move(spec));
        fits.push_back(std::move(fit));
      }
      return std::make_unique<ARegime>(std::move(models), std::move(spaces), std::move(schema),
                                       fingerprint, std::move(fits));
    }
    throw err("unknown method tag '" + method + "' in regime file");
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw err("regime file '" + path + "': " + e.what());
  }
}

}  // namespace dtr
