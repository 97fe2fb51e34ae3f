#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "recur/data.hpp"
#include "recur/matrix.hpp"
#include "recur/nuisance.hpp"
#include "recur/stepfun.hpp"

namespace recur {

enum class Kind { mu, eta };

/// One entry of the stacked estimand: kind, arm and landmark index.
struct Component {
  Kind kind = Kind::mu;
  int arm = 0;
  std::size_t landmark = 0;
};

/// "mu_0", "eta_1", ...
std::string component_name(const Component& c);

/// Per landmark: mu for each arm, then eta for each arm.
std::vector<Component> component_layout(std::span<const int> arms, std::size_t landmarks,
                                        bool mu = true, bool eta = true);

/// min(1/k, 1/eps), with 0 when k = 0.
inline double capped_inverse(double k, double eps) {
  if (k <= 0.0) return 0.0;
  const double r = 1.0 / k;
  const double cap = 1.0 / eps;
  return r < cap ? r : cap;
}

// --- per-subject terms; `cell` is the nuisance cell (arm, stratum of rec) ---

double phi_mu(const SubjectRecord& rec, int arm, double t, const CellNuisance& cell, double eps);
double phi_eta(const SubjectRecord& rec, int arm, double t, const CellNuisance& cell, double eps);

/// int_{domain} g(u) dM_C(u) / K(u) over the cell's censoring hazard. The
/// subject's own censoring atom enters as g(X) / K(X-), which equals
/// g(X) {1 - dLambda_C(X)} / K(X) and stays finite when K(X) = 0.
double censoring_integral(const SubjectRecord& rec, const CellNuisance& cell, double eps,
                          const std::function<double(double)>& g, const Interval& domain);

/// Uncentered class element phi - (I(A=a) - pi) h1 + int h2 dM_C over (0, tau].
double class_element(const SubjectRecord& rec, Kind kind, int arm, double t,
                     const CellNuisance& cell, double eps, double h1,
                     const std::function<double(double)>& h2);

/// Efficient influence functions centred at psi (pass 0 for the uncentered value).
double eif_mu(const SubjectRecord& rec, int arm, double t, const CellNuisance& cell, double eps,
              double psi);
double eif_eta(const SubjectRecord& rec, int arm, double t, const CellNuisance& cell, double eps,
               double psi);
/// g-computation form H(t) - psi - I/pi int_(0,t] H(t)/H(u) {dN_T - Y dLambda_T}/K(u-).
double eif_eta_gcomp(const SubjectRecord& rec, int arm, double t, const CellNuisance& cell,
                     double eps, double psi);

/// I/pi int_(0,t] dN(u) / K(u-).
double double_ipw_term(const SubjectRecord& rec, int arm, double t, const CellNuisance& cell,
                       double eps);
/// Modified augmented (Su-type) estimating function, uncentered.
double su_modified_term(const SubjectRecord& rec, int arm, double t, const CellNuisance& cell,
                        double eps);
/// I/pi {w I(X > t) + int_(t,tau] dM_C / K}, the augmented IPW numerator.
double ipw2_eta_term(const SubjectRecord& rec, int arm, double t, const CellNuisance& cell,
                     double eps);

// --- estimation pipeline ---

enum class Estimator { onestep, ipw1, ipw2, ipw3, ipw4, double_ipw, su_mod };

std::string to_string(Estimator e);
/// Throws std::invalid_argument on an unknown name.
Estimator parse_estimator(const std::string& name);

class PositivityError : public std::runtime_error {
 public:
  explicit PositivityError(std::vector<std::string> cells);
  const std::vector<std::string>& cells() const { return cells_; }

 private:
  std::vector<std::string> cells_;
};

struct EstimationConfig {
  LandmarkGrid grid;
  std::vector<int> arms{0, 1};
  Estimator estimator = Estimator::onestep;
  std::size_t folds = 5;
  bool crossfit = true;
  std::uint64_t seed = 0;
  FitOptions fit;
  bool include_mu = true;
  bool include_eta = true;
  bool check_positivity = true;
};

struct EstimationResult {
  std::vector<Component> layout;
  std::vector<double> initial;    // solves the estimating equations
  std::vector<double> projected;  // after isotonize
  /// n x p rows of the linearised estimating function (mean zero by construction).
  Matrix influence;
  std::size_t truncations = 0;
  std::size_t dropped_weights = 0;
};

/// Cells (a, l) used by some subject where pi(a; l) K(tau; a, l) <= eps.
std::vector<std::string> positivity_breaches(const Dataset& ds, const CrossFitNuisance& nuisance,
                                             std::span<const int> arms, double tau, double eps);

/// Fits nuisances (cross-fit unless cfg.crossfit is false) and estimates.
EstimationResult estimate(const Dataset& ds, const EstimationConfig& cfg);
/// Estimates with given nuisances.
EstimationResult estimate_with(const Dataset& ds, const EstimationConfig& cfg,
                               const CrossFitNuisance& nuisance);

// --- post-processing and functionals ---

/// Least-squares nondecreasing fit with equal weights (pool adjacent violators).
std::vector<double> pava(std::span<const double> y);

/// Per (kind, arm): clip (eta to [0,1], mu to [0,inf)), then project mu onto
/// nondecreasing and eta onto nonincreasing sequences across landmarks.
std::vector<double> isotonize(std::span<const Component> layout, std::span<const double> values);

/// sum over jumps u of mu in (0, t] of dmu(u) / eta(u). Throws
/// std::domain_error if eta(u) = 0 at a jump of mu.
double while_alive_ratio(const StepFunction& mu, const StepFunction& eta, double t);

/// mu(t_k) = sum_{j<k} eta(t_j) {zeta(t_{j+1}, t_j) - zeta(t_j, t_j)} with t_0 = 0
/// and eta(t_0) = 1; `eta` holds eta(t_1..t_m).
std::vector<double> landmark_mu_decomposition(std::span<const double> eta,
                                              const std::function<double(double, double)>& zeta,
                                              std::span<const double> landmarks);

/// Curves over all observed jump times (used for the while-alive ratio).
StepFunction mu_curve_double_ipw(const Dataset& ds, int arm, const CrossFitNuisance& nuisance,
                                 double eps);
StepFunction eta_curve_ipw2(const Dataset& ds, int arm, const CrossFitNuisance& nuisance,
                            double eps);

}  // namespace recur
