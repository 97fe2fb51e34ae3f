#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "recur/data.hpp"
#include "recur/estimators.hpp"
#include "recur/inference.hpp"
#include "recur/nuisance.hpp"
#include "recur/stepfun.hpp"

namespace recur {

/// Invalid scenario document or parameters.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Discrete-time law on a finite grid. Per stratum and arm, T* has hazard
/// h_k at grid point g_k (raised to 1 - (1 - h)^z under frailty z), C* has
/// hazard c_k, and the unstopped recurrent process puts Poisson(lambda z
/// (g_k - g_{k-1})) events at g_k. Mass left after the grid means T* or C*
/// lies beyond tau.
struct LatticeStratum {
  std::vector<std::string> covariates;
  double prob = 1.0;
  double pi1 = 0.5;
  std::array<std::vector<double>, 2> failure_hazard;
  std::array<std::vector<double>, 2> censor_hazard;
  std::array<double, 2> event_rate{0.0, 0.0};
};

struct LatticeScenario {
  std::string name = "lattice";
  double tau = 1.0;
  std::vector<double> grid;
  std::vector<LatticeStratum> strata;
  std::vector<double> frailty_values{1.0};
  std::vector<double> frailty_probs{1.0};
  double eps = 0.01;                 // positivity margin enforced by simulate
  std::vector<double> landmarks;     // default grid for experiments

  bool has_frailty() const;
  /// Throws ScenarioError on shape or range problems.
  void validate() const;
  /// validate() plus the simulation contract: T* <= tau and
  /// pi(a; l) K*(tau; a, l) > eps for every stratum and arm.
  void validate_for_simulation() const;
};

/// Continuous-time scenario without covariates: T* = min(Exp(r_a), tau),
/// C* ~ Exp(c_a), Poisson recurrent events at rate lambda_a.
struct ContinuousScenario {
  std::string name = "continuous";
  double tau = 1.0;
  double pi1 = 0.5;
  std::array<double, 2> failure_rate{1.0, 1.0};
  std::array<double, 2> censor_rate{0.1, 0.1};
  std::array<double, 2> event_rate{1.0, 1.0};
  double eps = 0.01;
  std::vector<double> landmarks;

  void validate() const;
};

using Scenario = std::variant<LatticeScenario, ContinuousScenario>;

/// JSON scenario document; "kind" is "lattice" (default) or "continuous".
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);
std::string scenario_name(const Scenario& s);
double scenario_tau(const Scenario& s);
const std::vector<double>& scenario_landmarks(const Scenario& s);

struct FullDataRecord {
  std::string id;
  std::size_t stratum = 0;
  std::vector<std::string> covariates;
  double frailty = 1.0;
  int arm = 0;
  std::array<double, 2> failure{0.0, 0.0};    // T*_a, +inf beyond tau
  std::array<double, 2> censoring{0.0, 0.0};  // C*_a, +inf beyond tau
  std::array<std::vector<double>, 2> unstopped;  // N**_a event times

  /// Phi: X = min(T*_A, C*_A), Delta = I(T*_A <= C*_A), events of N**_A up to X.
  SubjectRecord observe() const;
};

struct Simulation {
  std::vector<FullDataRecord> full;
  Dataset observed;
};

Simulation simulate(const LatticeScenario& sc, std::size_t n, std::uint64_t seed);
Simulation simulate(const ContinuousScenario& sc, std::size_t n, std::uint64_t seed);
Simulation simulate(const Scenario& sc, std::size_t n, std::uint64_t seed);

/// Counterfactual mu*_a, eta*_a at the landmarks, indexed [arm][landmark].
struct OracleTruth {
  std::vector<double> landmarks;
  std::array<std::vector<double>, 2> mu;
  std::array<std::vector<double>, 2> eta;
  /// Independent closed form of mu; empty when it does not apply (frailty).
  std::array<std::vector<double>, 2> mu_closed_form;

  double value(const Component& c) const;
  std::vector<double> vector(std::span<const Component> layout) const;
};

/// Exhaustive summation over the lattice.
OracleTruth oracle_truth(const LatticeScenario& sc, std::span<const double> landmarks);
/// Closed forms eta = exp(-r t), mu = lambda (1 - exp(-r t)) / r.
OracleTruth oracle_truth(const ContinuousScenario& sc, std::span<const double> landmarks);
/// Monte Carlo oracle from `draws` full-data draws.
OracleTruth monte_carlo_truth(const ContinuousScenario& sc, std::span<const double> landmarks,
                              std::size_t draws, std::uint64_t seed);
OracleTruth oracle_truth(const Scenario& sc, std::span<const double> landmarks);

/// H*(.; a, l), K*(.; a, l) and F*(u, t; a, l) for one lattice cell.
StepFunction oracle_failure_survival(const LatticeScenario& sc, std::size_t stratum, int arm);
StepFunction oracle_censoring_survival(const LatticeScenario& sc, std::size_t stratum, int arm);
std::shared_ptr<const OutcomeRegression> oracle_outcome(const LatticeScenario& sc,
                                                        std::size_t stratum, int arm);

/// theta_0 indexed by scenario stratum order.
NuisanceSet oracle_nuisance(const LatticeScenario& sc, std::span<const double> landmarks);
/// theta_0 indexed by the strata of `ds` (matched on covariate pattern).
NuisanceSet oracle_nuisance(const LatticeScenario& sc, const Dataset& ds,
                            std::span<const double> landmarks);

/// zeta*_a(u, t) = E{N*_a(u) | T*_a > t}, marginal over L; 0 when P(T*_a > t) = 0.
double oracle_zeta(const LatticeScenario& sc, int arm, double u, double t);

/// E_0[uncentered EIF evaluated at `bar`] by exact enumeration of the
/// observed-data lattice; `bar` is indexed by scenario stratum order.
double expected_eif(const LatticeScenario& sc, Kind kind, int arm, double t,
                    const NuisanceSet& bar, double eps);

struct ExperimentOptions {
  std::size_t n = 500;
  std::size_t replicates = 100;
  std::uint64_t seed = 0;
  std::vector<Misspecification> misspecs{Misspecification::none};
  Estimator estimator = Estimator::onestep;
  std::vector<double> landmarks;  // empty: the scenario's
  std::size_t folds = 5;
  bool crossfit = true;
  double eps = 0.01;
  double cf_cap = 1000.0;
  double alpha = 0.05;
  /// Sandwich by default; bootstrap refits every replicate `bootstrap_reps` times.
  bool bootstrap = false;
  std::size_t bootstrap_reps = 200;
};

struct ExperimentRow {
  std::string scenario;
  std::string misspec;
  std::string component;
  double landmark = 0.0;
  double truth = 0.0;
  double bias = 0.0;      // median of (estimate - truth)
  double se = 0.0;        // Monte Carlo standard deviation of the estimate
  double coverage = 0.0;  // share of Wald intervals containing the truth
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  OracleTruth truth;
  /// Estimates per misspec, replicate and component (layout order).
  std::vector<std::vector<std::vector<double>>> estimates;
  std::vector<Component> layout;
};

/// Paired design: every misspecification is fit on the same replicate
/// datasets, replicate r drawn with derive_seed(seed, r).
ExperimentResult robustness_experiment(const Scenario& sc, const ExperimentOptions& opts);

void write_experiment_csv(std::ostream& out, const std::vector<ExperimentRow>& rows);
/// {"scenario", "landmarks", "mu_0": [...], ...} oracle document.
std::string oracle_json(const std::string& scenario, const OracleTruth& truth);

}  // namespace recur
