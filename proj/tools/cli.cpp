#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "recur/data.hpp"
#include "recur/estimators.hpp"
#include "recur/inference.hpp"
#include "recur/nuisance.hpp"
#include "recur/random.hpp"
#include "recur/report.hpp"
#include "recur/simulation.hpp"

namespace recur::cli {

namespace {

/// Failure carrying an exit code and a structured error document.
struct Failure {
  int code;
  std::string document;
  std::string summary;
};

Failure failure(int code, const std::string& kind, const std::string& message,
                const std::vector<std::string>& details = {},
                const ValidationReport* validation = nullptr) {
  return {code, render_error(kind, message, details, validation), kind + ": " + message};
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(item, what));
  if (out.empty()) throw DataError(what + " is empty");
  return out;
}

std::vector<int> parse_arms(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "0" || item == "1") {
      const int a = item == "1" ? 1 : 0;
      if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
    } else {
      throw std::invalid_argument("arms must be 0 and/or 1, got '" + item + "'");
    }
  }
  if (out.empty()) throw std::invalid_argument("no arms requested");
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Misspecification> parse_misspecs(const std::string& text) {
  std::vector<Misspecification> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto m = parse_misspecification(item);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  if (out.empty()) throw std::invalid_argument("no misspecification settings requested");
  return out;
}

void write_text(const std::string& path, const std::string& text, std::ostream& fallback) {
  if (path.empty()) {
    fallback << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

std::string sibling_oracle_path(const std::string& out) {
  const auto slash = out.find_last_of('/');
  const auto dot = out.find_last_of('.');
  const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
  return (has_ext ? out.substr(0, dot) : out) + ".oracle.json";
}

// --- estimate ---

struct EstimateArgs {
  std::string subjects;
  std::string events;
  std::string grid;
  std::optional<double> tau;
  std::string arms = "0,1";
  std::string estimator = "onestep";
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  std::string variance = "sandwich";
  std::size_t bootstrap_reps = 500;
  bool frozen_bootstrap = false;
  double eps = 0.01;
  double cf_cap = 1000.0;
  double alpha = 0.05;
  std::string out;
  bool no_crossfit = false;
  std::string misspec = "none";
};

std::string cmd_estimate(const EstimateArgs& a) {
  Dataset ds;
  try {
    ds = read_dataset_files(a.subjects, a.events);
  } catch (const DataError& e) {
    throw failure(kInvalidInput, "data", e.what());
  }
  if (ds.empty()) throw failure(kInvalidInput, "data", "no subjects");

  EstimationConfig cfg;
  try {
    const double tau = a.tau.value_or(ds.max_followup());
    cfg.grid = LandmarkGrid(parse_list(a.grid, "--grid"), tau);
    cfg.arms = parse_arms(a.arms);
  } catch (const std::exception& e) {
    throw failure(kInvalidInput, "usage", e.what());
  }
  cfg.estimator = parse_estimator(a.estimator);
  cfg.folds = a.folds;
  cfg.crossfit = !a.no_crossfit;
  cfg.seed = a.seed;
  cfg.fit.eps = a.eps;
  cfg.fit.cf_cap = a.cf_cap;
  cfg.fit.misspec = parse_misspecification(a.misspec);
  const auto method = parse_variance_method(a.variance);

  ValidationLimits limits;
  limits.arms = cfg.arms;
  const auto validation = validate(ds, cfg.grid, limits);
  if (validation.has_errors()) {
    throw failure(kInvalidInput, "validation", "input violates the data assumptions", {}, &validation);
  }
  if (validation.has_positivity()) {
    throw failure(kPositivity, "positivity", "a requested (arm, stratum) cell is empty", {}, &validation);
  }

  std::optional<CrossFitNuisance> nz;
  EstimationResult est;
  try {
    nz = cfg.crossfit
             ? CrossFitNuisance::cross_fit(ds, cfg.folds, cfg.seed, cfg.arms, cfg.grid.times(), cfg.fit)
             : CrossFitNuisance::full_sample(ds, cfg.arms, cfg.grid.times(), cfg.fit);
    est = estimate_with(ds, cfg, *nz);
  } catch (const PositivityError& e) {
    throw failure(kPositivity, "positivity", "estimated pi * K(tau) does not exceed eps", e.cells(),
                  &validation);
  } catch (const CoverageError& e) {
    throw failure(kPositivity, "positivity", e.what(), {}, &validation);
  }

  InferenceReport inf;
  if (method == VarianceMethod::sandwich) {
    inf = sandwich_inference(est, a.alpha);
  } else {
    BootstrapOptions b;
    b.replicates = a.bootstrap_reps;
    b.seed = derive_seed(a.seed, 0xB0075);
    b.refit_nuisance = !a.frozen_bootstrap;
    inf = inference_from(est, bootstrap_covariance(ds, cfg, est, b), method, a.alpha);
  }

  Report report;
  auto& p = report.provenance;
  p.seed = a.seed;
  p.folds = cfg.crossfit ? cfg.folds : 1;
  p.crossfit = cfg.crossfit;
  p.eps = a.eps;
  p.cf_cap = a.cf_cap;
  p.alpha = a.alpha;
  p.estimator = to_string(cfg.estimator);
  p.variance = to_string(method);
  p.bootstrap_reps = method == VarianceMethod::bootstrap ? a.bootstrap_reps : 0;
  p.bootstrap_refit = !a.frozen_bootstrap;
  p.n = ds.size();
  p.tau = cfg.grid.tau();
  p.landmarks = cfg.grid.times();
  p.arms = cfg.arms;
  report.inference = std::move(inf);
  for (int arm : cfg.arms) {
    WhileAliveCurve curve;
    curve.arm = arm;
    curve.times = cfg.grid.times();
    const auto mu = mu_curve_double_ipw(ds, arm, *nz, a.eps);
    const auto eta = eta_curve_ipw2(ds, arm, *nz, a.eps);
    for (double t : curve.times) {
      try {
        curve.ratio.emplace_back(while_alive_ratio(mu, eta, t));
      } catch (const std::domain_error&) {
        curve.ratio.emplace_back(std::nullopt);
      }
    }
    report.while_alive.push_back(std::move(curve));
  }
  report.truncations = est.truncations;
  report.dropped_weights = est.dropped_weights;
  report.validation = validation;
  return render_report(report);
}

// --- simulate ---

struct SimulateArgs {
  std::string scenario;
  std::size_t reps = 100;
  std::size_t n = 500;
  std::uint64_t seed = 0;
  std::string misspec = "none";
  std::string estimator = "onestep";
  std::string grid;
  std::size_t folds = 5;
  bool no_crossfit = false;
  double eps = 0.01;
  double cf_cap = 1000.0;
  double alpha = 0.05;
  std::string variance = "sandwich";
  std::size_t bootstrap_reps = 200;
  std::string out;
  std::string oracle_out;
};

void cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  Scenario sc;
  try {
    sc = load_scenario(a.scenario);
  } catch (const ScenarioError& e) {
    throw failure(kInvalidInput, "scenario", e.what());
  }
  ExperimentOptions opts;
  opts.n = a.n;
  opts.replicates = a.reps;
  opts.seed = a.seed;
  opts.estimator = parse_estimator(a.estimator);
  opts.folds = a.folds;
  opts.crossfit = !a.no_crossfit;
  opts.eps = a.eps;
  opts.cf_cap = a.cf_cap;
  opts.alpha = a.alpha;
  opts.bootstrap = parse_variance_method(a.variance) == VarianceMethod::bootstrap;
  opts.bootstrap_reps = a.bootstrap_reps;
  try {
    opts.misspecs = parse_misspecs(a.misspec);
    if (!a.grid.empty()) opts.landmarks = parse_list(a.grid, "--grid");
  } catch (const std::exception& e) {
    throw failure(kInvalidInput, "usage", e.what());
  }
  ExperimentResult res;
  try {
    res = robustness_experiment(sc, opts);
  } catch (const ScenarioError& e) {
    throw failure(kInvalidInput, "scenario", e.what());
  } catch (const CoverageError& e) {
    throw failure(kPositivity, "positivity", e.what());
  }
  std::ostringstream csv;
  write_experiment_csv(csv, res.rows);
  write_text(a.out, csv.str(), out);
  std::string oracle_path = a.oracle_out;
  if (oracle_path.empty() && !a.out.empty()) oracle_path = sibling_oracle_path(a.out);
  if (!oracle_path.empty()) {
    write_text(oracle_path, oracle_json(scenario_name(sc), res.truth), out);
  }
}

// --- report ---

struct ReportArgs {
  std::string in;
  std::string format = "json";
  std::string out;
};

std::string cmd_report(const ReportArgs& a) {
  std::string text;
  try {
    text = read_text(a.in);
    return a.format == "text" ? report_table(text) : canonical_report(text);
  } catch (const DataError& e) {
    throw failure(kInvalidInput, "data", e.what());
  } catch (const ReportError& e) {
    throw failure(kInvalidInput, "report", e.what());
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Efficient estimation of recurrent-event means and survival along landmark times"};
  app.name("recur");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  EstimateArgs ea;
  auto* est = app.add_subcommand("estimate", "Estimate mu and eta on observed data");
  est->add_option("--subjects", ea.subjects, "subjects.csv (id,A,X,delta,covariates...)")->required();
  est->add_option("--events", ea.events, "events.csv (id,time)")->required();
  est->add_option("--grid", ea.grid, "Landmark times t1,t2,...")->required();
  est->add_option("--tau", ea.tau, "Horizon tau for positivity checks (default: max follow-up)");
  est->add_option("--arms", ea.arms, "Arms to report")->capture_default_str();
  est->add_option("--estimator", ea.estimator,
                  "onestep, ipw1, ipw2, ipw3, ipw4, double_ipw or su_mod")->capture_default_str();
  est->add_option("--folds", ea.folds, "Cross-fitting folds")->capture_default_str()->check(CLI::Range(2, 1000000));
  est->add_option("--seed", ea.seed, "Seed for folds and bootstrap")->capture_default_str();
  est->add_option("--variance", ea.variance, "sandwich or bootstrap")->capture_default_str();
  est->add_option("--bootstrap-reps", ea.bootstrap_reps, "Bootstrap replicates")->capture_default_str()->check(CLI::Range(2, 100000000));
  est->add_flag("--frozen-bootstrap", ea.frozen_bootstrap, "Resample influence rows with nuisances frozen");
  est->add_option("--eps", ea.eps, "Weight truncation / positivity threshold")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  est->add_option("--cf-cap", ea.cf_cap, "Cap on F / H")->capture_default_str()->check(CLI::PositiveNumber);
  est->add_option("--alpha", ea.alpha, "Level of the Wald intervals")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  est->add_option("--out", ea.out, "Report path (default: stdout)");
  est->add_flag("--no-crossfit", ea.no_crossfit, "Fit nuisances on the full sample");
  est->add_option("--misspec", ea.misspec, "none, pi_k, f_h or both")->capture_default_str();

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Run a simulation study against the oracle");
  sim->add_option("--scenario", sa.scenario, "Scenario JSON file")->required();
  sim->add_option("--reps", sa.reps, "Replicates")->capture_default_str()->check(CLI::Range(1, 100000000));
  sim->add_option("--n", sa.n, "Sample size per replicate")->capture_default_str()->check(CLI::Range(1, 100000000));
  sim->add_option("--seed", sa.seed, "Master seed")->capture_default_str();
  sim->add_option("--misspec", sa.misspec, "Comma list of none, pi_k, f_h, both")->capture_default_str();
  sim->add_option("--estimator", sa.estimator, "Estimator")->capture_default_str();
  sim->add_option("--grid", sa.grid, "Landmark times (default: the scenario's)");
  sim->add_option("--folds", sa.folds, "Cross-fitting folds")->capture_default_str()->check(CLI::Range(2, 1000000));
  sim->add_flag("--no-crossfit", sa.no_crossfit, "Fit nuisances on the full sample");
  sim->add_option("--eps", sa.eps, "Weight truncation threshold")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  sim->add_option("--cf-cap", sa.cf_cap, "Cap on F / H")->capture_default_str()->check(CLI::PositiveNumber);
  sim->add_option("--alpha", sa.alpha, "Level of the Wald intervals")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  sim->add_option("--variance", sa.variance, "sandwich or bootstrap")->capture_default_str();
  sim->add_option("--bootstrap-reps", sa.bootstrap_reps, "Bootstrap replicates per dataset")->capture_default_str()->check(CLI::Range(2, 100000000));
  sim->add_option("--out", sa.out, "Results CSV (default: stdout)");
  sim->add_option("--oracle-out", sa.oracle_out, "Oracle JSON (default: next to --out)");

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "Re-read a report and print it");
  rep->add_option("--in", ra.in, "Report JSON")->required();
  rep->add_option("--format", ra.format, "json or text")->capture_default_str()->check(CLI::IsMember({"json", "text"}));
  rep->add_option("--out", ra.out, "Output path (default: stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kInvalidInput;
  }

  CLI::App* active = est->parsed() ? est : sim->parsed() ? sim : rep;
  std::string out_path;
  try {
    if (active == est) {
      out_path = ea.out;
      write_text(ea.out, cmd_estimate(ea), out);
    } else if (active == sim) {
      out_path = sa.out;
      cmd_simulate(sa, out);
    } else {
      out_path = ra.out;
      write_text(ra.out, cmd_report(ra), out);
    }
    return kOk;
  } catch (const Failure& f) {
    err << "recur: " << f.summary << '\n';
    if (active != sim) {
      try {
        write_text(out_path, f.document, out);
      } catch (const std::exception&) {
        out << f.document;
      }
    } else {
      out << f.document;
    }
    return f.code;
  } catch (const std::invalid_argument& e) {
    // bad option values (unknown estimator, variance, misspec)
    err << "recur: " << e.what() << "\n\n" << active->help();
    return kInvalidInput;
  } catch (const std::exception& e) {
    err << "recur: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace recur::cli
