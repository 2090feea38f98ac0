#include "dtr/formula.hpp"

#include <algorithm>
#include <array>
#include <fstream>

#include "json.hpp"

namespace dtr {

namespace {
constexpr const char* kModule = "formula";

Error err(const std::string& message) { return Error(kModule, message); }

struct Parser {
  const std::string& text;
  std::size_t pos = 0;
  int stage;

  void skip_ws() {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  }

  [[noreturn]] void fail(const std::string& what) {
    throw err("syntax error at position " + format_int(static_cast<long long>(pos + 1)) + ": " +
              what);
  }

  bool eof() {
    skip_ws();
    return pos >= text.size();
  }

  bool accept(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  // factor := "1" | "s"<digits>"."<identifier>; returns false for intercept.
  bool parse_factor(Factor* out) {
    skip_ws();
    if (pos >= text.size()) fail("expected factor");
    if (text[pos] == '1') {
      ++pos;
      return false;
    }
    if (text[pos] != 's') fail("expected '1' or 's<stage>.<name>'");
    std::size_t p = pos + 1;
    std::size_t digits = 0;
    int k = 0;
    while (p < text.size() && text[p] >= '0' && text[p] <= '9') {
      k = k * 10 + (text[p] - '0');
      ++p;
      ++digits;
    }
    if (digits == 0 || p >= text.size() || text[p] != '.') {
      fail("expected '1' or 's<stage>.<name>'");
    }
    ++p;
    std::size_t name_start = p;
    while (p < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[p])) || text[p] == '_')) {
      ++p;
    }
    const std::string name = text.substr(name_start, p - name_start);
    if (!valid_identifier(name)) fail("invalid covariate name");
    if (k < 1) fail("stage index must be positive");
    if (k > stage) {
      throw err("future-stage reference 's" + format_int(k) + "." + name + "' at stage " +
                format_int(stage));
    }
    pos = p;
    out->stage = k;
    out->name = name;
    return true;
  }

  Term parse_term() {
    Term term;
    Factor f;
    if (parse_factor(&f)) term.factors.push_back(f);
    while (accept('*')) {
      if (parse_factor(&f)) term.factors.push_back(f);
      // extra "1" factors collapse
    }
    std::sort(term.factors.begin(), term.factors.end());
    return term;
  }

  TermList parse() {
    TermList terms;
    terms.push_back(parse_term());
    while (accept('+')) terms.push_back(parse_term());
    if (!eof()) fail("unexpected character '" + std::string(1, text[pos]) + "'");
    std::sort(terms.begin(), terms.end());
    auto dup = std::adjacent_find(terms.begin(), terms.end());
    if (dup != terms.end()) throw err("duplicate term '" + format_term(*dup) + "'");
    return terms;
  }
};

}  // namespace

History history_at(const TrajectoryDataset& dataset, Eigen::Index i, int upto_stage) {
  History h;
  for (int k = 1; k <= upto_stage; ++k) {
    h.covariates.push_back(dataset.covariates(k).row(i).transpose());
  }
  for (int k = 1; k < upto_stage; ++k) {
    h.actions.push_back(dataset.actions(k)(i));
  }
  return h;
}

TermList parse_formula(const std::string& text, int stage) {
  Parser p{text, 0, stage};
  return p.parse();
}

std::string format_term(const Term& term) {
  if (term.is_intercept()) return "1";
  std::string out;
  for (std::size_t i = 0; i < term.factors.size(); ++i) {
    if (i > 0) out += "*";
    out += "s" + format_int(term.factors[i].stage) + "." + term.factors[i].name;
  }
  return out;
}

std::string format_terms(const TermList& terms) {
  std::string out;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (i > 0) out += " + ";
    out += format_term(terms[i]);
  }
  return out;
}

void check_terms(const TermList& terms, const Schema& schema, int stage) {
  for (const Term& term : terms) {
    for (const Factor& f : term.factors) {
      if (f.stage > stage) {
        throw err("future-stage reference 's" + format_int(f.stage) + "." + f.name +
                  "' at stage " + format_int(stage));
      }
      if (f.stage > schema.num_stages() || schema.index_of(f.stage, f.name) < 0) {
        throw err("unknown covariate 's" + format_int(f.stage) + "." + f.name + "'");
      }
    }
  }
}

Eigen::MatrixXd build_design(const TrajectoryDataset& dataset, const TermList& terms) {
  const Eigen::Index n = dataset.size();
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(terms.size()));
  for (std::size_t j = 0; j < terms.size(); ++j) {
    Eigen::VectorXd col = Eigen::VectorXd::Ones(n);
    for (const Factor& f : terms[j].factors) {
      const int idx = dataset.schema().index_of(f.stage, f.name);
      if (f.stage > dataset.num_stages() || idx < 0) {
        throw err("unknown covariate 's" + format_int(f.stage) + "." + f.name + "'");
      }
      col.array() *= dataset.covariates(f.stage).col(idx).array();
    }
    X.col(static_cast<Eigen::Index>(j)) = col;
  }
  return X;
}

Eigen::RowVectorXd eval_terms(const Schema& schema, const History& h, const TermList& terms) {
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(terms.size()));
  for (std::size_t j = 0; j < terms.size(); ++j) {
    double v = 1.0;
    for (const Factor& f : terms[j].factors) {
      const int idx = schema.index_of(f.stage, f.name);
      if (idx < 0) {
        throw err("unknown covariate 's" + format_int(f.stage) + "." + f.name + "'");
      }
      if (f.stage > h.covariate_stages()) {
        throw err("history does not cover stage " + format_int(f.stage) + " (needed by 's" +
                  format_int(f.stage) + "." + f.name + "')");
      }
      v *= h.covariates[static_cast<std::size_t>(f.stage - 1)](idx);
    }
    row(static_cast<Eigen::Index>(j)) = v;
  }
  return row;
}

namespace {

StageModelSpec stage_spec_from_strings(int stage, const std::string& baseline,
                                       const std::string& contrast,
                                       const std::string& propensity) {
  StageModelSpec s;
  s.stage = stage;
  s.baseline_terms = parse_formula(baseline, stage);
  s.contrast_terms = parse_formula(contrast, stage);
  s.propensity_terms = parse_formula(propensity, stage);
  return s;
}

}  // namespace

ModelSpec model_from_strings(
    const std::vector<std::array<std::string, 3>>& per_stage_formulas) {
  ModelSpec spec;
  for (std::size_t k = 0; k < per_stage_formulas.size(); ++k) {
    const auto& f = per_stage_formulas[k];
    spec.stages.push_back(
        stage_spec_from_strings(static_cast<int>(k + 1), f[0], f[1], f[2]));
  }
  return spec;
}

ModelSpec load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw err("cannot open model file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw err("model file '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.contains("stages") || !j["stages"].is_array() || j["stages"].empty()) {
    throw err("model file '" + path + "' needs a non-empty 'stages' array");
  }
  ModelSpec spec;
  int k = 1;
  for (const auto& stage : j["stages"]) {
    for (const char* key : {"baseline", "contrast", "propensity"}) {
      if (!stage.contains(key) || !stage[key].is_string()) {
        throw err("model file stage " + format_int(k) + " needs string field '" + key + "'");
      }
    }
    spec.stages.push_back(stage_spec_from_strings(k, stage["baseline"].get<std::string>(),
                                                  stage["contrast"].get<std::string>(),
                                                  stage["propensity"].get<std::string>()));
    ++k;
  }
  return spec;
}

void save_model_file(const ModelSpec& spec, const std::string& path) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : spec.stages) {
    stages.push_back({{"baseline", format_terms(s.baseline_terms)},
                      {"contrast", format_terms(s.contrast_terms)},
                      {"propensity", format_terms(s.propensity_terms)}});
  }
  nlohmann::json j{{"stages", stages}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw err("cannot write model file '" + path + "'");
  out << j.dump(2) << "\n";
}

void check_model(const ModelSpec& spec, const Schema& schema) {
  if (spec.num_stages() != schema.num_stages()) {
    throw err("model covers " + format_int(spec.num_stages()) + " stages, data has " +
              format_int(schema.num_stages()));
  }
  for (const auto& s : spec.stages) {
    check_terms(s.baseline_terms, schema, s.stage);
    check_terms(s.contrast_terms, schema, s.stage);
    check_terms(s.propensity_terms, schema, s.stage);
  }
}

}  // namespace dtr
