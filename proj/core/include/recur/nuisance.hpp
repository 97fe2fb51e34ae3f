#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "recur/data.hpp"
#include "recur/stepfun.hpp"

namespace recur {

/// Which at-risk process produced a hazard: Y(u) = I(X >= u), or the
/// modified Y†(u) that drops failures tied at u from the censoring risk set.
enum class AtRisk { standard, modified };

struct HazardEstimate {
  std::vector<double> times;
  std::vector<double> increments;
  std::vector<std::size_t> events;   // empty when derived from a survival curve
  std::vector<std::size_t> at_risk;  // likewise
  AtRisk kind = AtRisk::standard;

  StepFunction cumulative() const;
  StepFunction survival() const;
  double increment_at(double u) const;
};

/// Censoring hazard with the Y† risk set: increments #censored(u) / #Y†(u).
HazardEstimate censoring_hazard(std::span<const double> followup, std::span<const std::uint8_t> failed);
/// Failure hazard with the Y risk set: increments #failed(u) / #{X >= u}.
HazardEstimate failure_hazard(std::span<const double> followup, std::span<const std::uint8_t> failed);
/// Hazard induced by a survival curve, dL(u) = -dS(u) / S(u-), 0/0 = 0.
HazardEstimate induced_hazard(const StepFunction& survival, AtRisk kind);

struct SurvivalFit {
  HazardEstimate hazard;
  StepFunction survival;
};

inline constexpr std::size_t kAllStrata = std::numeric_limits<std::size_t>::max();

/// pi(1; l) per stratum from the given rows; NaN for strata with no rows.
std::vector<double> fit_propensity(const Dataset& ds, std::span<const std::size_t> rows);
/// Same over the whole dataset; throws std::invalid_argument on an empty stratum.
std::vector<double> fit_propensity(const Dataset& ds);

/// Product-limit fits on the (arm, stratum) cell of `rows`; kAllStrata pools
/// strata. Throws std::invalid_argument on an empty cell.
SurvivalFit fit_censoring(const Dataset& ds, std::span<const std::size_t> rows, int arm,
                          std::size_t stratum);
SurvivalFit fit_failure(const Dataset& ds, std::span<const std::size_t> rows, int arm,
                        std::size_t stratum);

/// Outcome regression F(u, t) = E{ Delta / K(X-) I(X > u) N(t) | A = a, L = l }.
class OutcomeRegression {
 public:
  virtual ~OutcomeRegression() = default;
  /// u -> F(u, t). Adds the number of capped profile points to *truncated.
  virtual StepFunction profile(double t, std::size_t* truncated = nullptr) const = 0;
  /// t -> F(0, t).
  virtual StepFunction origin_curve() const = 0;
  double operator()(double u, double t) const { return profile(t)(u); }
};

/// Cell average of w_i I(X_i > u) N_i(t) with w_i = Delta_i / K(X_i-) capped
/// at 1/eps, then capped at cf_cap * H(u) and set to 0 where H(u) = 0.
/// Evaluated lazily from the stored members.
class EmpiricalOutcomeRegression final : public OutcomeRegression {
 public:
  struct Member {
    double followup = 0.0;
    double weight = 0.0;
    std::vector<double> events;
  };

  EmpiricalOutcomeRegression(std::vector<Member> members, StepFunction failure_survival,
                             double cf_cap);

  StepFunction profile(double t, std::size_t* truncated = nullptr) const override;
  StepFunction origin_curve() const override;
  std::size_t cell_size() const { return members_.size(); }

 private:
  std::vector<Member> members_;
  std::vector<double> breakpoints_;
  StepFunction h_;
  double cap_;
};

/// IPCW weight Delta / K(X-), capped at 1/eps. A failure with K(X-) = 0 gets
/// weight 0 and increments *dropped.
double ipcw_weight(const SubjectRecord& rec, const StepFunction& censoring_survival, double eps,
                   std::size_t* dropped = nullptr);

/// F fit on one cell using the given censoring survival for the weights.
std::shared_ptr<const EmpiricalOutcomeRegression> fit_outcome(
    const Dataset& ds, std::span<const std::size_t> rows, int arm, std::size_t stratum,
    const StepFunction& censoring_survival, const StepFunction& failure_survival, double eps,
    double cf_cap);

/// Nuisances for one (arm, stratum) cell, with F pre-evaluated along the
/// landmark grid.
struct CellNuisance {
  double propensity = 1.0;  // pi(a; l) for this cell's arm
  StepFunction censoring_survival{1.0};
  HazardEstimate censoring_hazard;  // same jump times as censoring_survival
  StepFunction failure_survival{1.0};
  HazardEstimate failure_hazard;
  std::vector<double> landmarks;
  std::vector<StepFunction> outcome_profiles;  // u -> F(u, landmarks[j])
  StepFunction outcome_origin{0.0};            // t -> F(0, t)
  std::shared_ptr<const OutcomeRegression> outcome;

  const StepFunction& outcome_profile(double t) const;
};

/// Assembles a cell from arbitrary (pi, K, H, F); hazards are induced.
CellNuisance make_cell(double propensity, const StepFunction& censoring_survival,
                       const StepFunction& failure_survival,
                       std::shared_ptr<const OutcomeRegression> outcome,
                       std::span<const double> landmarks, std::size_t* truncated = nullptr);

class NuisanceSet {
 public:
  NuisanceSet() = default;
  NuisanceSet(std::size_t strata, std::vector<double> landmarks);

  void set(int arm, std::size_t stratum, CellNuisance cell);
  bool has(int arm, std::size_t stratum) const;
  /// Throws std::out_of_range if the cell was not fitted.
  const CellNuisance& cell(int arm, std::size_t stratum) const;
  std::size_t stratum_count() const { return strata_; }
  const std::vector<double>& landmarks() const { return landmarks_; }

  std::size_t truncations = 0;     // capped F profile points
  std::size_t dropped_weights = 0; // failures with K(X-) = 0

 private:
  std::size_t strata_ = 0;
  std::vector<double> landmarks_;
  std::vector<std::optional<CellNuisance>> cells_;
};

enum class Misspecification { none, pi_k, f_h, both };

std::string to_string(Misspecification m);
/// Throws std::invalid_argument on an unknown name.
Misspecification parse_misspecification(const std::string& name);

struct FitOptions {
  double eps = 0.01;      // eps': weight truncation and positivity threshold
  double cf_cap = 1000.0; // C'_F
  /// pi_k: pi = 1/2 and K = 1 in the estimating function (F still uses the
  /// fitted K for its weights). f_h: F and H fit within arm, ignoring L.
  Misspecification misspec = Misspecification::none;
};

/// Fits every nonempty (arm, stratum) cell of `rows` for the requested arms.
NuisanceSet fit_nuisance(const Dataset& ds, std::span<const std::size_t> rows,
                         std::span<const int> arms, std::span<const double> landmarks,
                         const FitOptions& opts);

/// A training complement lacks a cell some subject in the fold needs.
class CoverageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Balanced fold assignment: subjects are shuffled within (stratum, arm)
/// cells, cells are concatenated in order and position i goes to fold i mod k.
std::vector<std::size_t> assign_folds(const Dataset& ds, std::size_t folds, std::uint64_t seed);

class CrossFitNuisance {
 public:
  /// DML2 cross-fitting; folds >= 2 and <= n. Throws CoverageError naming the
  /// fold and cell when a training complement misses a needed cell.
  static CrossFitNuisance cross_fit(const Dataset& ds, std::size_t folds, std::uint64_t seed,
                                    std::span<const int> arms, std::span<const double> landmarks,
                                    const FitOptions& opts);
  /// One fit on the full sample used for every subject.
  static CrossFitNuisance full_sample(const Dataset& ds, std::span<const int> arms,
                                      std::span<const double> landmarks, const FitOptions& opts);
  /// Wraps a fixed nuisance set (oracle or perturbed) for all subjects.
  static CrossFitNuisance fixed(const Dataset& ds, NuisanceSet set);

  std::size_t fold_count() const { return fits_.size(); }
  std::size_t fold_of(std::size_t i) const { return fold_of_[i]; }
  const std::vector<std::size_t>& fold_assignment() const { return fold_of_; }
  const NuisanceSet& fold(std::size_t f) const { return fits_[f]; }
  const NuisanceSet& for_subject(std::size_t i) const { return fits_[fold_of_[i]]; }
  bool crossfit() const { return crossfit_; }
  std::size_t truncations() const;
  std::size_t dropped_weights() const;

 private:
  std::vector<std::size_t> fold_of_;
  std::vector<NuisanceSet> fits_;
  bool crossfit_ = false;
};

}  // namespace recur
