#include "recur/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "recur/parallel.hpp"
#include "recur/random.hpp"

namespace recur {

// --- hazards ---

StepFunction HazardEstimate::cumulative() const {
  return StepFunction::from_increments(0.0, times, increments);
}

StepFunction HazardEstimate::survival() const { return product_integral(times, increments); }

double HazardEstimate::increment_at(double u) const {
  const auto it = std::lower_bound(times.begin(), times.end(), u);
  if (it == times.end() || *it != u) return 0.0;
  return increments[static_cast<std::size_t>(it - times.begin())];
}

namespace {

struct TimeCounts {
  double time;
  std::size_t failures;
  std::size_t censorings;
};

std::vector<TimeCounts> tabulate(std::span<const double> x, std::span<const std::uint8_t> failed) {
  if (x.size() != failed.size()) throw std::invalid_argument("hazard: size mismatch");
  std::map<double, TimeCounts> by_time;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto& c = by_time.try_emplace(x[i], TimeCounts{x[i], 0, 0}).first->second;
    if (failed[i] != 0) {
      ++c.failures;
    } else {
      ++c.censorings;
    }
  }
  std::vector<TimeCounts> out;
  out.reserve(by_time.size());
  for (const auto& [t, c] : by_time) out.push_back(c);
  return out;
}

}  // namespace

HazardEstimate censoring_hazard(std::span<const double> followup,
                                std::span<const std::uint8_t> failed) {
  const auto table = tabulate(followup, failed);
  HazardEstimate h;
  h.kind = AtRisk::modified;
  std::size_t beyond = followup.size();  // #{X >= u} before visiting u
  for (const auto& c : table) {
    // Y†(u) = #{X > u} + #{X = u, delta = 0}
    const std::size_t risk = beyond - c.failures;
    if (c.censorings > 0) {
      h.times.push_back(c.time);
      h.events.push_back(c.censorings);
      h.at_risk.push_back(risk);
      h.increments.push_back(static_cast<double>(c.censorings) / static_cast<double>(risk));
    }
    beyond -= c.failures + c.censorings;
  }
  return h;
}

HazardEstimate failure_hazard(std::span<const double> followup,
                              std::span<const std::uint8_t> failed) {
  const auto table = tabulate(followup, failed);
  HazardEstimate h;
  h.kind = AtRisk::standard;
  std::size_t risk = followup.size();
  for (const auto& c : table) {
    if (c.failures > 0) {
      h.times.push_back(c.time);
      h.events.push_back(c.failures);
      h.at_risk.push_back(risk);
      h.increments.push_back(static_cast<double>(c.failures) / static_cast<double>(risk));
    }
    risk -= c.failures + c.censorings;
  }
  return h;
}

HazardEstimate induced_hazard(const StepFunction& survival, AtRisk kind) {
  HazardEstimate h;
  h.kind = kind;
  const auto times = survival.jump_times();
  const auto values = survival.jump_values();
  h.times.assign(times.begin(), times.end());
  h.increments.resize(times.size());
  double before = survival.initial_value();
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double drop = before - values[k];
    h.increments[k] = before == 0.0 ? 0.0 : drop / before;
    before = values[k];
  }
  return h;
}

// --- cell fits ---

namespace {

std::vector<std::size_t> cell_rows(const Dataset& ds, std::span<const std::size_t> rows, int arm,
                                   std::size_t stratum) {
  std::vector<std::size_t> out;
  for (std::size_t i : rows) {
    if (ds[i].arm != arm) continue;
    if (stratum != kAllStrata && ds.stratum_of(i) != stratum) continue;
    out.push_back(i);
  }
  return out;
}

void collect(const Dataset& ds, const std::vector<std::size_t>& rows, std::vector<double>& x,
             std::vector<std::uint8_t>& d) {
  x.clear();
  d.clear();
  for (std::size_t i : rows) {
    x.push_back(ds[i].followup);
    d.push_back(ds[i].failed ? 1 : 0);
  }
}

SurvivalFit fit_cell(const Dataset& ds, std::span<const std::size_t> rows, int arm,
                     std::size_t stratum, bool censoring) {
  const auto members = cell_rows(ds, rows, arm, stratum);
  if (members.empty()) {
    throw std::invalid_argument("empty cell: arm " + std::to_string(arm) + ", stratum " +
                                (stratum == kAllStrata ? std::string("(pooled)")
                                                       : ds.stratum_label(stratum)));
  }
  std::vector<double> x;
  std::vector<std::uint8_t> d;
  collect(ds, members, x, d);
  SurvivalFit fit;
  fit.hazard = censoring ? censoring_hazard(x, d) : failure_hazard(x, d);
  fit.survival = fit.hazard.survival();
  return fit;
}

}  // namespace

std::vector<double> fit_propensity(const Dataset& ds, std::span<const std::size_t> rows) {
  std::vector<double> total(ds.stratum_count(), 0.0);
  std::vector<double> treated(ds.stratum_count(), 0.0);
  for (std::size_t i : rows) {
    total[ds.stratum_of(i)] += 1.0;
    if (ds[i].arm == 1) treated[ds.stratum_of(i)] += 1.0;
  }
  std::vector<double> p(ds.stratum_count());
  for (std::size_t s = 0; s < p.size(); ++s) {
    p[s] = total[s] > 0.0 ? treated[s] / total[s] : std::numeric_limits<double>::quiet_NaN();
  }
  return p;
}

std::vector<double> fit_propensity(const Dataset& ds) {
  const auto rows = ds.all_rows();
  auto p = fit_propensity(ds, rows);
  for (std::size_t s = 0; s < p.size(); ++s) {
    if (std::isnan(p[s])) throw std::invalid_argument("empty stratum " + ds.stratum_label(s));
  }
  return p;
}

SurvivalFit fit_censoring(const Dataset& ds, std::span<const std::size_t> rows, int arm,
                          std::size_t stratum) {
  return fit_cell(ds, rows, arm, stratum, true);
}

SurvivalFit fit_failure(const Dataset& ds, std::span<const std::size_t> rows, int arm,
                        std::size_t stratum) {
  return fit_cell(ds, rows, arm, stratum, false);
}

// --- outcome regression ---

double ipcw_weight(const SubjectRecord& rec, const StepFunction& censoring_survival, double eps,
                   std::size_t* dropped) {
  if (!rec.failed) return 0.0;
  const double k = censoring_survival.left_limit(rec.followup);
  if (k <= 0.0) {
    if (dropped != nullptr) ++*dropped;
    return 0.0;
  }
  return std::min(1.0 / k, 1.0 / eps);
}

EmpiricalOutcomeRegression::EmpiricalOutcomeRegression(std::vector<Member> members,
                                                       StepFunction failure_survival,
                                                       double cf_cap)
    : members_(std::move(members)), h_(std::move(failure_survival)), cap_(cf_cap) {
  for (const auto& m : members_) breakpoints_.push_back(m.followup);
  const auto hj = h_.jump_times();
  breakpoints_.insert(breakpoints_.end(), hj.begin(), hj.end());
  std::sort(breakpoints_.begin(), breakpoints_.end());
  breakpoints_.erase(std::unique(breakpoints_.begin(), breakpoints_.end()), breakpoints_.end());
  breakpoints_.erase(std::remove_if(breakpoints_.begin(), breakpoints_.end(),
                                    [](double u) { return u <= 0.0; }),
                     breakpoints_.end());
}

StepFunction EmpiricalOutcomeRegression::profile(double t, std::size_t* truncated) const {
  if (members_.empty()) return StepFunction(0.0);
  const double n = static_cast<double>(members_.size());
  // G(u) = sum over X_i > u of c_i; drop[k] collects c_i with X_i = breakpoints_[k]
  std::vector<double> drop(breakpoints_.size(), 0.0);
  double total = 0.0;
  for (const auto& m : members_) {
    if (m.weight == 0.0) continue;
    const auto count = static_cast<double>(
        std::upper_bound(m.events.begin(), m.events.end(), t) - m.events.begin());
    if (count == 0.0) continue;
    const double c = m.weight * count / n;
    total += c;
    const auto k = static_cast<std::size_t>(
        std::lower_bound(breakpoints_.begin(), breakpoints_.end(), m.followup) -
        breakpoints_.begin());
    drop[k] += c;
  }
  const auto bounded = [&](double g, double h) {
    if (h == 0.0) return 0.0;
    const double limit = cap_ * h;
    if (g > limit) {
      if (truncated != nullptr) ++*truncated;
      return limit;
    }
    return g;
  };
  const double initial = bounded(total, h_(0.0));
  std::vector<double> values(breakpoints_.size());
  double g = total;
  for (std::size_t k = 0; k < breakpoints_.size(); ++k) {
    g -= drop[k];
    if (g < 0.0) g = 0.0;
    values[k] = bounded(g, h_(breakpoints_[k]));
  }
  return StepFunction(initial, breakpoints_, std::move(values));
}

StepFunction EmpiricalOutcomeRegression::origin_curve() const {
  const double n = static_cast<double>(members_.size());
  std::map<double, double> inc;
  for (const auto& m : members_) {
    if (m.weight == 0.0) continue;
    for (double e : m.events) inc[e] += m.weight / n;
  }
  const double limit = h_(0.0) == 0.0 ? 0.0 : cap_ * h_(0.0);
  std::vector<double> times;
  std::vector<double> values;
  double level = 0.0;
  for (const auto& [t, d] : inc) {
    level += d;
    times.push_back(t);
    values.push_back(std::min(level, limit));
  }
  return StepFunction(0.0, std::move(times), std::move(values));
}

namespace {

std::vector<EmpiricalOutcomeRegression::Member> ipcw_members(
    const Dataset& ds, const std::vector<std::size_t>& rows,
    const std::function<const StepFunction&(std::size_t)>& k_of, double eps,
    std::size_t* dropped) {
  std::vector<EmpiricalOutcomeRegression::Member> out;
  out.reserve(rows.size());
  for (std::size_t i : rows) {
    const auto& r = ds[i];
    out.push_back({r.followup, ipcw_weight(r, k_of(i), eps, dropped), r.event_times});
  }
  return out;
}

}  // namespace

std::shared_ptr<const EmpiricalOutcomeRegression> fit_outcome(
    const Dataset& ds, std::span<const std::size_t> rows, int arm, std::size_t stratum,
    const StepFunction& censoring_survival, const StepFunction& failure_survival, double eps,
    double cf_cap) {
  const auto members = cell_rows(ds, rows, arm, stratum);
  auto m = ipcw_members(
      ds, members, [&](std::size_t) -> const StepFunction& { return censoring_survival; }, eps,
      nullptr);
  return std::make_shared<EmpiricalOutcomeRegression>(std::move(m), failure_survival, cf_cap);
}

// --- cells and sets ---

const StepFunction& CellNuisance::outcome_profile(double t) const {
  const auto it = std::lower_bound(landmarks.begin(), landmarks.end(), t);
  if (it == landmarks.end() || *it != t) {
    throw std::out_of_range("outcome profile not prepared for t = " + format_double(t));
  }
  return outcome_profiles[static_cast<std::size_t>(it - landmarks.begin())];
}

namespace {

CellNuisance assemble(double propensity, StepFunction k, HazardEstimate lc, StepFunction h,
                      HazardEstimate lt, std::shared_ptr<const OutcomeRegression> outcome,
                      std::span<const double> landmarks, std::size_t* truncated) {
  CellNuisance cell;
  cell.propensity = propensity;
  cell.censoring_survival = std::move(k);
  cell.censoring_hazard = std::move(lc);
  cell.failure_survival = std::move(h);
  cell.failure_hazard = std::move(lt);
  cell.landmarks.assign(landmarks.begin(), landmarks.end());
  if (outcome) {
    for (double t : landmarks) cell.outcome_profiles.push_back(outcome->profile(t, truncated));
    cell.outcome_origin = outcome->origin_curve();
  } else {
    cell.outcome_profiles.assign(landmarks.size(), StepFunction(0.0));
  }
  cell.outcome = std::move(outcome);
  return cell;
}

}  // namespace

CellNuisance make_cell(double propensity, const StepFunction& censoring_survival,
                       const StepFunction& failure_survival,
                       std::shared_ptr<const OutcomeRegression> outcome,
                       std::span<const double> landmarks, std::size_t* truncated) {
  return assemble(propensity, censoring_survival, induced_hazard(censoring_survival, AtRisk::modified),
                  failure_survival, induced_hazard(failure_survival, AtRisk::standard),
                  std::move(outcome), landmarks, truncated);
}

NuisanceSet::NuisanceSet(std::size_t strata, std::vector<double> landmarks)
    : strata_(strata), landmarks_(std::move(landmarks)), cells_(2 * strata) {}

void NuisanceSet::set(int arm, std::size_t stratum, CellNuisance cell) {
  cells_.at(static_cast<std::size_t>(arm) * strata_ + stratum) = std::move(cell);
}

bool NuisanceSet::has(int arm, std::size_t stratum) const {
  if (arm < 0 || arm > 1 || stratum >= strata_) return false;
  return cells_[static_cast<std::size_t>(arm) * strata_ + stratum].has_value();
}

const CellNuisance& NuisanceSet::cell(int arm, std::size_t stratum) const {
  if (!has(arm, stratum)) {
    throw std::out_of_range("no nuisance fit for arm " + std::to_string(arm) + ", stratum " +
                            std::to_string(stratum));
  }
  return *cells_[static_cast<std::size_t>(arm) * strata_ + stratum];
}

std::string to_string(Misspecification m) {
  switch (m) {
    case Misspecification::none: return "none";
    case Misspecification::pi_k: return "pi_k";
    case Misspecification::f_h: return "f_h";
    case Misspecification::both: return "both";
  }
  return "none";
}

Misspecification parse_misspecification(const std::string& name) {
  if (name == "none") return Misspecification::none;
  if (name == "pi_k") return Misspecification::pi_k;
  if (name == "f_h") return Misspecification::f_h;
  if (name == "both") return Misspecification::both;
  throw std::invalid_argument("unknown misspecification '" + name + "'");
}

NuisanceSet fit_nuisance(const Dataset& ds, std::span<const std::size_t> rows,
                         std::span<const int> arms, std::span<const double> landmarks,
                         const FitOptions& opts) {
  const bool wrong_pk = opts.misspec == Misspecification::pi_k || opts.misspec == Misspecification::both;
  const bool wrong_fh = opts.misspec == Misspecification::f_h || opts.misspec == Misspecification::both;
  NuisanceSet set(ds.stratum_count(), {landmarks.begin(), landmarks.end()});
  const auto p1 = fit_propensity(ds, rows);

  for (int a : arms) {
    std::vector<std::vector<std::size_t>> by_stratum(ds.stratum_count());
    for (std::size_t i : rows) {
      if (ds[i].arm == a) by_stratum[ds.stratum_of(i)].push_back(i);
    }
    std::vector<std::optional<SurvivalFit>> k_fit(ds.stratum_count());
    for (std::size_t s = 0; s < ds.stratum_count(); ++s) {
      if (!by_stratum[s].empty()) k_fit[s] = fit_censoring(ds, by_stratum[s], a, s);
    }

    // pooled F and H for the f_h misspecification
    std::shared_ptr<const OutcomeRegression> pooled_f;
    std::optional<SurvivalFit> pooled_h;
    if (wrong_fh) {
      std::vector<std::size_t> arm_rows;
      for (const auto& v : by_stratum) arm_rows.insert(arm_rows.end(), v.begin(), v.end());
      std::sort(arm_rows.begin(), arm_rows.end());
      if (!arm_rows.empty()) {
        pooled_h = fit_failure(ds, arm_rows, a, kAllStrata);
        auto members = ipcw_members(
            ds, arm_rows,
            [&](std::size_t i) -> const StepFunction& { return k_fit[ds.stratum_of(i)]->survival; },
            opts.eps, &set.dropped_weights);
        pooled_f = std::make_shared<EmpiricalOutcomeRegression>(std::move(members),
                                                                pooled_h->survival, opts.cf_cap);
      }
    }

    for (std::size_t s = 0; s < ds.stratum_count(); ++s) {
      if (by_stratum[s].empty()) continue;
      const auto& kf = *k_fit[s];
      SurvivalFit hf = wrong_fh ? *pooled_h : fit_failure(ds, by_stratum[s], a, s);
      std::shared_ptr<const OutcomeRegression> f;
      if (wrong_fh) {
        f = pooled_f;
      } else {
        auto members = ipcw_members(
            ds, by_stratum[s], [&](std::size_t) -> const StepFunction& { return kf.survival; },
            opts.eps, &set.dropped_weights);
        f = std::make_shared<EmpiricalOutcomeRegression>(std::move(members), hf.survival,
                                                         opts.cf_cap);
      }
      const double pi = a == 1 ? p1[s] : 1.0 - p1[s];
      CellNuisance cell =
          wrong_pk ? assemble(0.5, StepFunction(1.0), HazardEstimate{{}, {}, {}, {}, AtRisk::modified},
                              hf.survival, hf.hazard, f, landmarks, &set.truncations)
                   : assemble(pi, kf.survival, kf.hazard, hf.survival, hf.hazard, f, landmarks,
                              &set.truncations);
      set.set(a, s, std::move(cell));
    }
  }
  return set;
}

// --- cross-fitting ---

std::vector<std::size_t> assign_folds(const Dataset& ds, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("cross-fitting needs at least 2 folds");
  if (folds > ds.size()) throw std::invalid_argument("more folds than subjects");
  Rng rng(derive_seed(seed, 0xF01D));
  std::vector<std::size_t> order;
  order.reserve(ds.size());
  for (std::size_t s = 0; s < ds.stratum_count(); ++s) {
    for (int a = 0; a <= 1; ++a) {
      std::vector<std::size_t> cell;
      for (std::size_t i : ds.stratum_members(s)) {
        if (ds[i].arm == a) cell.push_back(i);
      }
      rng.shuffle(cell);
      order.insert(order.end(), cell.begin(), cell.end());
    }
  }
  std::vector<std::size_t> fold(ds.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) fold[order[pos]] = pos % folds;
  return fold;
}

CrossFitNuisance CrossFitNuisance::cross_fit(const Dataset& ds, std::size_t folds,
                                             std::uint64_t seed, std::span<const int> arms,
                                             std::span<const double> landmarks,
                                             const FitOptions& opts) {
  CrossFitNuisance out;
  out.crossfit_ = true;
  out.fold_of_ = assign_folds(ds, folds, seed);
  std::vector<std::vector<std::size_t>> training(folds);
  std::vector<std::vector<std::size_t>> holdout(folds);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t f = 0; f < folds; ++f) {
      (f == out.fold_of_[i] ? holdout[f] : training[f]).push_back(i);
    }
  }
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::uint8_t> covered(2 * ds.stratum_count(), 0);
    for (std::size_t i : training[f]) {
      covered[static_cast<std::size_t>(ds[i].arm) * ds.stratum_count() + ds.stratum_of(i)] = 1;
    }
    for (std::size_t i : holdout[f]) {
      for (int a : arms) {
        if (!covered[static_cast<std::size_t>(a) * ds.stratum_count() + ds.stratum_of(i)]) {
          throw CoverageError("fold " + std::to_string(f + 1) + ": training complement has no arm " +
                              std::to_string(a) + " subjects in stratum " +
                              ds.stratum_label(ds.stratum_of(i)));
        }
      }
    }
  }
  out.fits_.resize(folds);
  parallel_for(folds, [&](std::size_t f) {
    out.fits_[f] = fit_nuisance(ds, training[f], arms, landmarks, opts);
  });
  return out;
}

CrossFitNuisance CrossFitNuisance::full_sample(const Dataset& ds, std::span<const int> arms,
                                               std::span<const double> landmarks,
                                               const FitOptions& opts) {
  CrossFitNuisance out;
  out.fold_of_.assign(ds.size(), 0);
  const auto rows = ds.all_rows();
  out.fits_.push_back(fit_nuisance(ds, rows, arms, landmarks, opts));
  return out;
}

CrossFitNuisance CrossFitNuisance::fixed(const Dataset& ds, NuisanceSet set) {
  CrossFitNuisance out;
  out.fold_of_.assign(ds.size(), 0);
  out.fits_.push_back(std::move(set));
  return out;
}

std::size_t CrossFitNuisance::truncations() const {
  std::size_t total = 0;
  for (const auto& f : fits_) total += f.truncations;
  return total;
}

std::size_t CrossFitNuisance::dropped_weights() const {
  std::size_t total = 0;
  for (const auto& f : fits_) total += f.dropped_weights;
  return total;
}

}  // namespace recur
