// Command-line front end: simulate, fit, recommend, evaluate, bootstrap,
// screen, report. Every subcommand is a pure function of its input files,
// flags, and seed; reruns produce byte-identical outputs.

#include <fstream>
#include <iostream>
#include <map>
#include <memory>

#include "CLI11.hpp"
#include "dtr/alearn.hpp"
#include "dtr/inference.hpp"
#include "dtr/qlearn.hpp"
#include "dtr/scenario.hpp"
#include "json.hpp"

namespace {

struct Options {
  std::string data, model, scenario, regime, covariates, probes, terms, out;
  std::string method = "qlearn";
  long long n = 1000;
  long long replicates = 10000;
  int B = 200;
  double alpha = 0.05;
  double threshold = 2.0;
  std::uint64_t seed = 0;
  int threads = 1;
};

// Canonical flag string; hashing it gives the config fingerprint recorded in
// every output so reruns are verifiable. The output path is deliberately
// excluded: the fingerprint names the computation, not where it lands.
std::string config_string(const std::string& subcommand, const Options& o) {
  std::string s = subcommand;
  auto add = [&s](const std::string& key, const std::string& value) {
    if (!value.empty()) s += " --" + key + "=" + value;
  };
  add("data", o.data);
  add("model", o.model);
  add("scenario", o.scenario);
  add("regime", o.regime);
  add("covariates", o.covariates);
  add("probes", o.probes);
  add("terms", o.terms);
  add("method", o.method);
  add("n", dtr::format_int(o.n));
  add("replicates", dtr::format_int(o.replicates));
  add("B", dtr::format_int(o.B));
  add("alpha", dtr::format_double(o.alpha));
  add("threshold", dtr::format_double(o.threshold));
  add("seed", dtr::format_int(static_cast<long long>(o.seed)));
  return s;
}

// Stage count is encoded in the CSV header as the number of a<k> columns.
int infer_stage_count(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw dtr::Error("cli", "cannot open '" + path + "'");
  std::string header;
  if (!std::getline(in, header)) throw dtr::Error("cli", "empty file '" + path + "'");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  int k = 0;
  std::string cell;
  std::vector<std::string> cells;
  for (char c : header) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  for (const auto& h : cells) {
    if (h == "a" + dtr::format_int(k + 1)) ++k;
  }
  if (k == 0) throw dtr::Error("cli", "no action columns found in '" + path + "'");
  return k;
}

nlohmann::json meta_json(const std::string& config_hash) {
  return {{"tool", std::string(dtr::kToolName) + " " + dtr::kToolVersion},
          {"config", config_hash}};
}

void write_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw dtr::Error("cli", "cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

std::unique_ptr<dtr::Regime> resolve_regime(const std::string& spec_text,
                                            const dtr::ScenarioSpec* scenario) {
  if (spec_text == "behavior") {
    if (!scenario) throw dtr::Error("cli", "--regime behavior needs --scenario");
    return std::make_unique<dtr::BehaviorRegime>(*scenario);
  }
  if (spec_text == "true") {
    if (!scenario) throw dtr::Error("cli", "--regime true needs --scenario");
    return std::make_unique<dtr::SignRuleRegime>(dtr::true_regime(*scenario));
  }
  if (spec_text.rfind("const:", 0) == 0) {
    if (!scenario) throw dtr::Error("cli", "--regime const:<code> needs --scenario");
    const int code = std::stoi(spec_text.substr(6));
    return std::make_unique<dtr::ConstantRegime>(scenario->num_stages, code);
  }
  std::unique_ptr<dtr::FittedRegime> fitted = dtr::load_regime_file(spec_text);
  if (scenario) {
    const dtr::Schema expected = scenario->schema();
    if (!(fitted->train_schema() == expected)) {
      throw dtr::Error("cli", "regime '" + spec_text +
                                  "' was trained on a different covariate schema than the "
                                  "scenario generates");
    }
  }
  return fitted;
}

int run_simulate(const Options& o, const std::string& config_hash) {
  const dtr::ScenarioSpec spec = dtr::load_scenario_file(o.scenario);
  const dtr::TrajectoryDataset d = dtr::simulate(spec, o.n, o.seed, o.threads);
  dtr::save_csv(d, o.out);
  std::cerr << "simulate: wrote " << d.size() << " trajectories to " << o.out
            << " (config " << config_hash << ")\n";
  return 0;
}

int run_fit(const Options& o, const std::string& config_hash) {
  const dtr::ModelSpec models = dtr::load_model_file(o.model);
  const dtr::TrajectoryDataset d = dtr::load_csv(o.data, models.num_stages());
  dtr::check_model(models, d.schema());
  std::unique_ptr<dtr::FittedRegime> regime;
  if (dtr::method_from_name(o.method) == dtr::Method::kQlearn) {
    regime = std::make_unique<dtr::QRegime>(dtr::fit_q_regime(d, models));
  } else {
    regime = std::make_unique<dtr::ARegime>(dtr::fit_a_regime(d, models));
  }
  dtr::save_regime_file(*regime, o.out);
  std::cerr << "fit: " << o.method << " on " << d.size() << " trajectories -> " << o.out
            << " (config " << config_hash << ")\n";
  return 0;
}

int run_recommend(const Options& o, const std::string& config_hash) {
  const std::unique_ptr<dtr::FittedRegime> regime = dtr::load_regime_file(o.regime);
  const dtr::Schema& schema = regime->train_schema();
  const std::vector<dtr::ProbeHistory> probes = dtr::load_probe_csv(o.covariates, schema);

  std::ofstream out(o.out, std::ios::binary);
  if (!out) throw dtr::Error("cli", "cannot write '" + o.out + "'");
  out << "# " << dtr::kToolName << " " << dtr::kToolVersion << " config=" << config_hash << "\n";
  out << "id,stage,recommended_action,contrast_or_qgap,propensity_at_history\n";
  for (const auto& probe : probes) {
    const int stage = probe.history.action_stages() + 1;
    const int action = dtr::recommend_next(*regime, schema, probe.history);
    const double score = regime->decision_score(schema, probe.history, stage);
    const double support = regime->propensity_at(schema, probe.history, stage);
    out << probe.id << ',' << stage << ',' << action << ',' << dtr::format_double(score) << ','
        << dtr::format_double(support) << "\n";
  }
  std::cerr << "recommend: " << probes.size() << " probes -> " << o.out << " (config "
            << config_hash << ")\n";
  return 0;
}

int run_evaluate(const Options& o, const std::string& config_hash) {
  const dtr::ScenarioSpec spec = dtr::load_scenario_file(o.scenario);
  const std::unique_ptr<dtr::Regime> regime = resolve_regime(o.regime, &spec);
  const dtr::McValue v = dtr::mc_value(spec, *regime, o.replicates, o.seed, o.threads);
  nlohmann::json j;
  j["meta"] = meta_json(config_hash);
  j["scenario"] = o.scenario;
  j["regime"] = o.regime;
  j["replicates"] = o.replicates;
  j["seed"] = o.seed;
  j["value"] = v.value;
  j["se"] = v.se;
  write_json(j, o.out);
  std::cerr << "evaluate: value " << dtr::format_double(v.value) << " (se "
            << dtr::format_double(v.se) << ") -> " << o.out << "\n";
  return 0;
}

int run_bootstrap(const Options& o, const std::string& config_hash) {
  const dtr::ModelSpec models = dtr::load_model_file(o.model);
  const dtr::TrajectoryDataset d = dtr::load_csv(o.data, models.num_stages());
  dtr::check_model(models, d.schema());
  std::vector<dtr::ProbeHistory> probes;
  if (!o.probes.empty()) probes = dtr::load_probe_csv(o.probes, d.schema());
  const dtr::EstimateReport report =
      dtr::bootstrap(d, dtr::method_from_name(o.method), models, o.B, o.alpha, probes, o.seed,
                     o.threads);
  dtr::save_report_file(report, o.out, config_hash);
  std::cerr << "bootstrap: B=" << o.B << " (" << report.failed_resamples << " failed) -> "
            << o.out << "\n";
  return 0;
}

int run_screen(const Options& o, const std::string& config_hash) {
  const int stages = infer_stage_count(o.data);
  const dtr::TrajectoryDataset d = dtr::load_csv(o.data, stages);
  const dtr::TermList candidates = dtr::parse_formula(o.terms, stages);
  const auto results = dtr::screen_covariates(d, candidates, o.threshold);
  nlohmann::json j;
  j["meta"] = meta_json(config_hash);
  j["threshold"] = o.threshold;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : results) {
    arr.push_back({{"term", dtr::format_term(r.term)},
                   {"coefficient", r.coefficient},
                   {"se", r.se},
                   {"score", r.score},
                   {"flagged", r.flagged}});
  }
  j["results"] = arr;
  j["notes"] = {"marginal t-ranking against the final outcome; selection randomness is not "
                "propagated to later inference"};
  write_json(j, o.out);
  std::cerr << "screen: " << results.size() << " terms -> " << o.out << "\n";
  return 0;
}

int run_report(const Options& o, const std::string&) {
  const dtr::EstimateReport report = dtr::load_report_file(o.data);
  const std::string text = dtr::render_report(report);
  if (o.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(o.out, std::ios::binary);
    if (!out) throw dtr::Error("cli", "cannot write '" + o.out + "'");
    out << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Estimation of individualized multi-stage decision rules from "
               "observational trajectories"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", o.seed, "RNG seed (default 0)");
    cmd->add_option("--threads", o.threads, "worker cap; never changes results");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "draw a dataset from a scenario");
  simulate->add_option("--scenario", o.scenario)->required();
  simulate->add_option("--n", o.n, "number of trajectories");
  simulate->add_option("--out", o.out)->required();
  add_common(simulate);

  CLI::App* fit = app.add_subcommand("fit", "estimate a regime from a dataset");
  fit->add_option("--data", o.data)->required();
  fit->add_option("--model", o.model)->required();
  fit->add_option("--method", o.method)->check(CLI::IsMember({"qlearn", "alearn"}));
  fit->add_option("--out", o.out)->required();
  add_common(fit);

  CLI::App* recommend = app.add_subcommand("recommend", "apply a regime to probe histories");
  recommend->add_option("--regime", o.regime)->required();
  recommend->add_option("--covariates", o.covariates, "probe CSV")->required();
  recommend->add_option("--out", o.out)->required();
  add_common(recommend);

  CLI::App* evaluate = app.add_subcommand("evaluate", "Monte Carlo value of a regime");
  evaluate->add_option("--scenario", o.scenario)->required();
  evaluate->add_option("--regime", o.regime, "regime file, or true|behavior|const:<code>")
      ->required();
  evaluate->add_option("--replicates", o.replicates);
  evaluate->add_option("--out", o.out)->required();
  add_common(evaluate);

  CLI::App* bootstrap = app.add_subcommand("bootstrap", "resampling intervals and stability");
  bootstrap->add_option("--data", o.data)->required();
  bootstrap->add_option("--model", o.model)->required();
  bootstrap->add_option("--method", o.method)->check(CLI::IsMember({"qlearn", "alearn"}));
  bootstrap->add_option("--B", o.B);
  bootstrap->add_option("--alpha", o.alpha);
  bootstrap->add_option("--probes", o.probes, "probe CSV for stability fractions");
  bootstrap->add_option("--out", o.out)->required();
  add_common(bootstrap);

  CLI::App* screen = app.add_subcommand("screen", "rank candidate decision-relevant terms");
  screen->add_option("--data", o.data)->required();
  screen->add_option("--terms", o.terms, "candidate terms, e.g. \"s1.x + s2.z\"")->required();
  screen->add_option("--threshold", o.threshold);
  screen->add_option("--out", o.out)->required();
  add_common(screen);

  CLI::App* report = app.add_subcommand("report", "render a bootstrap report as text");
  report->add_option("--data", o.data, "report JSON from the bootstrap subcommand")->required();
  report->add_option("--out", o.out, "output text file (stdout when omitted)");
  add_common(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  const std::string config_hash = dtr::to_hex(dtr::fnv1a(config_string(sub, o)));
  std::cerr << dtr::kToolName << " " << sub << " seed=" << o.seed << " config=" << config_hash
            << "\n";

  try {
    if (sub == "simulate") return run_simulate(o, config_hash);
    if (sub == "fit") return run_fit(o, config_hash);
    if (sub == "recommend") return run_recommend(o, config_hash);
    if (sub == "evaluate") return run_evaluate(o, config_hash);
    if (sub == "bootstrap") return run_bootstrap(o, config_hash);
    if (sub == "screen") return run_screen(o, config_hash);
    if (sub == "report") return run_report(o, config_hash);
  } catch (const dtr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
