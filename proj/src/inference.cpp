#include "dtr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "dtr/alearn.hpp"
#include "dtr/qlearn.hpp"
#include "dtr/rng.hpp"
#include "dtr/solve.hpp"
#include "json.hpp"

namespace dtr {

namespace {
constexpr const char* kModule = "inference";

Error err(const std::string& message) { return Error(kModule, message); }

std::unique_ptr<FittedRegime> fit_method(const TrajectoryDataset& dataset, Method method,
                                         const ModelSpec& models) {
  if (method == Method::kQlearn) {
    return std::make_unique<QRegime>(fit_q_regime(dataset, models));
  }
  return std::make_unique<ARegime>(fit_a_regime(dataset, models));
}

// Type-7 (linear interpolation) empirical quantile on sorted values.
double quantile_sorted(const std::vector<double>& sorted, double q) {
  const std::size_t m = sorted.size();
  if (m == 1) return sorted[0];
  const double h = q * static_cast<double>(m - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= m) return sorted[m - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

void run_chunks(int count, int threads, const std::function<void(int, int)>& run_chunk) {
  threads = std::max(1, threads);
  if (threads == 1 || count < 2 * threads) {
    run_chunk(0, count);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  const int chunk = (count + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int lo = t * chunk;
    const int hi = std::min(count, lo + chunk);
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

std::string method_name(Method m) { return m == Method::kQlearn ? "qlearn" : "alearn"; }

Method method_from_name(const std::string& name) {
  if (name == "qlearn") return Method::kQlearn;
  if (name == "alearn") return Method::kAlearn;
  throw err("unknown method '" + name + "' (expected qlearn or alearn)");
}

EstimateReport bootstrap(const TrajectoryDataset& dataset, Method method,
                         const ModelSpec& models, int B, double alpha,
                         const std::vector<ProbeHistory>& probes, std::uint64_t seed,
                         int threads) {
  if (B < 50) throw err("bootstrap needs B >= 50");
  if (!(alpha > 0.0 && alpha < 1.0)) throw err("alpha must lie in (0,1)");

  // Resampling indexes the canonical sorted-by-id order, so the report does
  // not depend on input row order.
  const Eigen::Index n = dataset.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return dataset.ids()[static_cast<std::size_t>(a)] < dataset.ids()[static_cast<std::size_t>(b)];
  });
  const TrajectoryDataset base = dataset.select(order);
  const Schema& schema = base.schema();

  const std::unique_ptr<FittedRegime> point = fit_method(base, method, models);
  const auto point_coefs = point->named_coefficients();

  std::vector<int> point_recs;
  for (const auto& probe : probes) {
    point_recs.push_back(recommend_next(*point, schema, probe.history));
  }

  const std::size_t p = point_coefs.size();
  std::vector<std::vector<double>> draws(static_cast<std::size_t>(B));
  std::vector<std::vector<int>> rec_draws(static_cast<std::size_t>(B));
  std::vector<char> ok(static_cast<std::size_t>(B), 0);

  run_chunks(B, threads, [&](int lo, int hi) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (int b = lo; b < hi; ++b) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double u = rng::uniform(seed, static_cast<std::uint64_t>(b + 1), 0,
                                      static_cast<std::uint64_t>(j));
        idx[static_cast<std::size_t>(j)] =
            std::min<Eigen::Index>(n - 1, static_cast<Eigen::Index>(u * static_cast<double>(n)));
      }
      try {
        const TrajectoryDataset resampled = base.select(idx);
        const std::unique_ptr<FittedRegime> fit = fit_method(resampled, method, models);
        const auto coefs = fit->named_coefficients();
        std::vector<double> values(p);
        for (std::size_t j = 0; j < p; ++j) values[j] = coefs[j].second;
        draws[static_cast<std::size_t>(b)] = std::move(values);
        std::vector<int> recs;
        recs.reserve(probes.size());
        for (const auto& probe : probes) {
          recs.push_back(recommend_next(*fit, schema, probe.history));
        }
        rec_draws[static_cast<std::size_t>(b)] = std::move(recs);
        ok[static_cast<std::size_t>(b)] = 1;
      } catch (const Error&) {
        ok[static_cast<std::size_t>(b)] = 0;
      }
    }
  });

  const int failed = B - static_cast<int>(std::count(ok.begin(), ok.end(), char{1}));
  if (10 * failed > B) {
    throw err("bootstrap unstable: " + format_int(failed) + " of " + format_int(B) +
              " resamples failed to fit");
  }

  EstimateReport report;
  report.method = method_name(method);
  report.requested_B = B;
  report.effective_B = B - failed;
  report.failed_resamples = failed;
  report.alpha = alpha;
  report.seed = seed;
  report.notes.push_back("percentile intervals from " + format_int(B - failed) +
                         " trajectory resamples; no distributional assumptions");

  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(report.effective_B));
    for (int b = 0; b < B; ++b) {
      if (ok[static_cast<std::size_t>(b)]) values.push_back(draws[static_cast<std::size_t>(b)][j]);
    }
    std::sort(values.begin(), values.end());
    CoefficientInterval ci;
    ci.name = point_coefs[j].first;
    ci.estimate = point_coefs[j].second;
    ci.lower = quantile_sorted(values, alpha / 2.0);
    ci.upper = quantile_sorted(values, 1.0 - alpha / 2.0);
    ci.contains_point = ci.lower <= ci.estimate && ci.estimate <= ci.upper;
    report.coefficients.push_back(std::move(ci));
  }

  for (std::size_t q = 0; q < probes.size(); ++q) {
    int agree = 0;
    for (int b = 0; b < B; ++b) {
      if (ok[static_cast<std::size_t>(b)] &&
          rec_draws[static_cast<std::size_t>(b)][q] == point_recs[q]) {
        ++agree;
      }
    }
    StabilityEntry entry;
    entry.probe_id = probes[q].id;
    entry.stage = probes[q].history.action_stages() + 1;
    entry.recommended = point_recs[q];
    entry.agreement = report.effective_B > 0
                          ? static_cast<double>(agree) / static_cast<double>(report.effective_B)
                          : 0.0;
    report.stability.push_back(std::move(entry));
  }
  return report;
}

void save_report_file(const EstimateReport& report, const std::string& path,
                      const std::string& config_hash) {
  nlohmann::json j;
  j["meta"] = {{"tool", std::string(kToolName) + " " + kToolVersion}, {"config", config_hash}};
  j["method"] = report.method;
  j["B"] = report.requested_B;
  j["effective_B"] = report.effective_B;
  j["failed_resamples"] = report.failed_resamples;
  j["alpha"] = report.alpha;
  j["seed"] = report.seed;
  nlohmann::json coefs = nlohmann::json::array();
  for (const auto& c : report.coefficients) {
    coefs.push_back({{"name", c.name},
                     {"estimate", c.estimate},
                     {"lower", c.lower},
                     {"upper", c.upper},
                     {"contains_point", c.contains_point}});
  }
  j["coefficients"] = coefs;
  nlohmann::json stab = nlohmann::json::array();
  for (const auto& s : report.stability) {
    stab.push_back({{"probe_id", s.probe_id},
                    {"stage", s.stage},
                    {"recommended", s.recommended},
                    {"agreement", s.agreement}});
  }
  j["stability"] = stab;
  j["notes"] = report.notes;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw err("cannot write report file '" + path + "'");
  out << j.dump(2) << "\n";
}

EstimateReport load_report_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw err("cannot open report file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw err("report file '" + path + "' is not valid JSON: " + e.what());
  }
  EstimateReport report;
  try {
    report.method = j.at("method").get<std::string>();
    report.requested_B = j.at("B").get<int>();
    report.effective_B = j.at("effective_B").get<int>();
    report.failed_resamples = j.at("failed_resamples").get<int>();
    report.alpha = j.at("alpha").get<double>();
    report.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& c : j.at("coefficients")) {
      report.coefficients.push_back({c.at("name").get<std::string>(),
                                     c.at("estimate").get<double>(), c.at("lower").get<double>(),
                                     c.at("upper").get<double>(),
                                     c.at("contains_point").get<bool>()});
    }
    for (const auto& s : j.at("stability")) {
      report.stability.push_back({s.at("probe_id").get<std::string>(), s.at("stage").get<int>(),
                                  s.at("recommended").get<int>(),
                                  s.at("agreement").get<double>()});
    }
    if (j.contains("notes")) report.notes = j.at("notes").get<std::vector<std::string>>();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw err("report file '" + path + "': " + e.what());
  }
  return report;
}

std::string render_report(const EstimateReport& report) {
  std::ostringstream out;
  out << "method: " << report.method << "   B: " << report.requested_B
      << " (failed: " << report.failed_resamples << ")   level: "
      << format_double(100.0 * (1.0 - report.alpha)) << "%   seed: " << report.seed << "\n\n";

  std::size_t width = 11;
  for (const auto& c : report.coefficients) width = std::max(width, c.name.size());
  out << std::string(width, ' ') << "  " << "    estimate" << "       lower" << "       upper\n";
  char buf[64];
  for (const auto& c : report.coefficients) {
    out << c.name << std::string(width - c.name.size(), ' ') << "  ";
    std::snprintf(buf, sizeof(buf), "%12.6f%12.6f%12.6f", c.estimate, c.lower, c.upper);
    out << buf << (c.contains_point ? "" : "  [interval misses point estimate]") << "\n";
  }
  if (!report.stability.empty()) {
    out << "\nrecommendation stability\n";
    for (const auto& s : report.stability) {
      std::snprintf(buf, sizeof(buf), "%.4f", s.agreement);
      out << "  probe " << s.probe_id << " (stage " << s.stage << "): action " << s.recommended
          << ", agreement " << buf << "\n";
    }
  }
  for (const auto& note : report.notes) out << "\nnote: " << note << "\n";
  return out.str();
}

std::vector<ScreenResult> screen_covariates(const TrajectoryDataset& dataset,
                                            const TermList& candidates, double threshold) {
  if (candidates.empty()) throw err("no candidate terms to screen");
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    for (std::size_t j = i + 1; j < candidates.size(); ++j) {
      if (candidates[i] == candidates[j]) {
        throw err("aliased candidates: term '" + format_term(candidates[i]) +
                  "' is listed more than once");
      }
    }
  }
  for (const Term& t : candidates) {
    check_terms({t}, dataset.schema(), dataset.num_stages());
  }

  const Eigen::Index n = dataset.size();
  const auto p = static_cast<Eigen::Index>(candidates.size()) + 1;
  if (n <= p) throw err("need more rows than candidate terms");

  Eigen::MatrixXd X(n, p);
  X.col(0).setOnes();
  X.rightCols(p - 1) = build_design(dataset, candidates);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < p) {
    // Columns outside the pivoted basis are linear combinations of the rest.
    std::string aliased;
    const auto perm = qr.colsPermutation().indices();
    for (Eigen::Index r = qr.rank(); r < p; ++r) {
      const Eigen::Index col = perm(r);
      if (col == 0) {
        aliased += aliased.empty() ? "<intercept>" : ", <intercept>";
      } else {
        const std::string name = format_term(candidates[static_cast<std::size_t>(col - 1)]);
        aliased += aliased.empty() ? name : ", " + name;
      }
    }
    throw err("aliased candidates (rank " + format_int(qr.rank()) + " of " + format_int(p) +
              "): " + aliased);
  }

  const Eigen::VectorXd beta = qr.solve(dataset.outcomes());
  const Eigen::VectorXd residual = dataset.outcomes() - X * beta;
  const double sigma2 = residual.squaredNorm() / static_cast<double>(n - p);
  const Eigen::MatrixXd xtx_inv =
      (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(p, p));

  std::vector<ScreenResult> results;
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j) + 1;
    ScreenResult r;
    r.term = candidates[j];
    r.coefficient = beta(col);
    r.se = std::sqrt(sigma2 * xtx_inv(col, col));
    r.score = r.se > 0.0 ? std::abs(r.coefficient) / r.se
                         : std::numeric_limits<double>::infinity();
    r.flagged = r.score >= threshold;
    results.push_back(std::move(r));
  }
  std::sort(results.begin(), results.end(), [](const ScreenResult& a, const ScreenResult& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.term < b.term;
  });
  return results;
}

}  // namespace dtr
