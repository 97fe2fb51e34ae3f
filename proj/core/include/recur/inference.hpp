#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "recur/data.hpp"
#include "recur/estimators.hpp"
#include "recur/matrix.hpp"
#include "recur/nuisance.hpp"

namespace recur {

/// E_n[D D^T] over the rows of `influence` (n x p). Divide the diagonal by n
/// for the variance of the estimate.
Matrix sandwich_covariance(const Matrix& influence);

/// z such that P(Z <= z) = p for a standard normal Z.
double normal_quantile(double p);

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
};

/// estimate -/+ z_{1 - alpha/2} se.
ConfidenceInterval wald_interval(double estimate, double se, double alpha);

struct BootstrapOptions {
  std::size_t replicates = 500;
  std::uint64_t seed = 0;
  /// Refit and re-cross-fit nuisances per replicate; false resamples the
  /// influence rows with nuisances frozen (approximate).
  bool refit_nuisance = true;
  std::size_t max_redraws = 20;
};

/// Covariance across replicates of the initial estimates (divisor B - 1).
/// With refit, a replicate whose resample leaves an (arm, stratum) cell
/// empty, or whose folds miss a cell, is redrawn; after max_redraws
/// consecutive failures std::runtime_error is thrown.
Matrix bootstrap_covariance(const Dataset& ds, const EstimationConfig& cfg,
                            const EstimationResult& base, const BootstrapOptions& opts);

enum class VarianceMethod { sandwich, bootstrap };

std::string to_string(VarianceMethod m);
VarianceMethod parse_variance_method(const std::string& name);

struct InferenceReport {
  std::vector<Component> layout;
  std::vector<double> estimate;  // projected
  std::vector<double> initial;
  std::vector<double> se;
  std::vector<ConfidenceInterval> ci;
  Matrix covariance;  // of the estimate
  VarianceMethod method = VarianceMethod::sandwich;
  double alpha = 0.05;
};

/// Sandwich inference straight from the estimation result.
InferenceReport sandwich_inference(const EstimationResult& est, double alpha);
/// Inference from an externally computed covariance of the estimate.
InferenceReport inference_from(const EstimationResult& est, Matrix covariance,
                               VarianceMethod method, double alpha);

/// Second-order remainders at one landmark for one arm. r5 does not depend
/// on t and is repeated.
struct RemainderTerms {
  double t = 0.0;
  double r1 = 0.0;
  double r2 = 0.0;
  double r3 = 0.0;
  double r4 = 0.0;
  double r5 = 0.0;
  double exact_mu = 0.0;   // E0[D_mu(thetabar)] + mu(thetabar) - mu0
  double exact_eta = 0.0;
};

/// Product-of-errors norms (L2 over `stratum_weights`) and exact remainders
/// comparing `estimate` against `truth`; both sets index the same strata and
/// must carry outcome profiles on the grid's landmarks.
std::vector<RemainderTerms> evaluate_remainder(const NuisanceSet& estimate,
                                               const NuisanceSet& truth,
                                               const LandmarkGrid& grid, int arm,
                                               std::span<const double> stratum_weights,
                                               double eps);

}  // namespace recur
