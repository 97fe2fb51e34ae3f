#include "recur/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "recur/identities.hpp"
#include "recur/parallel.hpp"

namespace recur {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double indicator(bool b) { return b ? 1.0 : 0.0; }

/// Delta / K(X-) with the cap; zero for censored subjects.
double weight(const SubjectRecord& rec, const CellNuisance& cell, double eps) {
  if (!rec.failed) return 0.0;
  return capped_inverse(cell.censoring_survival.left_limit(rec.followup), eps);
}

double propensity_augmentation(bool treated, double p, double regression) {
  return -(indicator(treated) - p) / p * regression;
}

}  // namespace

std::string component_name(const Component& c) {
  return std::string(c.kind == Kind::mu ? "mu_" : "eta_") + std::to_string(c.arm);
}

std::vector<Component> component_layout(std::span<const int> arms, std::size_t landmarks,
                                        bool mu, bool eta) {
  std::vector<Component> out;
  for (std::size_t j = 0; j < landmarks; ++j) {
    if (mu) {
      for (int a : arms) out.push_back({Kind::mu, a, j});
    }
    if (eta) {
      for (int a : arms) out.push_back({Kind::eta, a, j});
    }
  }
  return out;
}

// --- per-subject terms ---

double phi_mu(const SubjectRecord& rec, int arm, double t, const CellNuisance& cell, double eps) {
  if (rec.arm != arm) return 0.0;
  return weight(rec, cell, eps) * static_cast<double>(rec.events_through(t)) / cell.propensity;
}

double phi_eta(const SubjectRecord& rec, int arm, double t, const CellNuisance& cell, double eps) {
  if (rec.arm != arm) return 0.0;
  return weight(rec, cell, eps) * indicator(rec.followup > t) / cell.propensity;
}

double censoring_integral(const SubjectRecord& rec, const CellNuisance& cell, double eps,
                          const std::function<double(double)>& g, const Interval& domain) {
  const auto& k = cell.censoring_survival;
  const auto& lc = cell.censoring_hazard;
  const double x = rec.followup;
  CompensatedSum total;
  if (!rec.failed && domain.contains(x)) total.add(g(x) * capped_inverse(k.left_limit(x), eps));
  for (std::size_t j = 0; j < lc.times.size(); ++j) {
    const double u = lc.times[j];
    if (u >= x) break;
    if (lc.increments[j] == 0.0 || !domain.contains(u)) continue;
    total.add(-g(u) * lc.increments[j] * capped_inverse(k(u), eps));
  }
  return total.value();
}

double class_element(const SubjectRecord& rec, Kind kind, int arm, double t,
                     const CellNuisance& cell, double eps, double h1,
                     const std::function<double(double)>& h2) {
  const double phi = kind == Kind::mu ? phi_mu(rec, arm, t, cell, eps) : phi_eta(rec, arm, t, cell, eps);
  double value = phi - (indicator(rec.arm == arm) - cell.propensity) * h1;
  // literal N_C - Y† dLambda_C integral
  const double x = rec.followup;
  const auto& lc = cell.censoring_hazard;
  if (!rec.failed) value += h2(x);
  for (std::size_t j = 0; j < lc.times.size(); ++j) {
    const double u = lc.times[j];
    if (u > x) break;
    if (lc.increments[j] == 0.0 || !y_dagger(x, rec.failed, u)) continue;
    value -= h2(u) * lc.increments[j];
  }
  return value;
}

double eif_mu(const SubjectRecord& rec, int arm, double t, const CellNuisance& cell, double eps,
              double psi) {
  const bool treated = rec.arm == arm;
  const double p = cell.propensity;
  const auto& profile = cell.outcome_profile(t);
  double value = propensity_augmentation(treated, p, profile(0.0));
  if (treated) {
    const auto& h = cell.failure_survival;
    const auto ratio = [&](double u) {
      const double hu = h(u);
      return hu == 0.0 ? 0.0 : profile(u) / hu;
    };
    const double ipw = weight(rec, cell, eps) * static_cast<double>(rec.events_through(t));
    value += (ipw + censoring_integral(rec, cell, eps, ratio, {0.0, kInf})) / p;
  }
  return value - psi;
}

double eif_eta(const SubjectRecord& rec, int arm, double t, const CellNuisance& cell, double eps,
               double psi) {
  const bool treated = rec.arm == arm;
  const double p = cell.propensity;
  const auto& h = cell.failure_survival;
  double value = propensity_augmentation(treated, p, h(t));
  if (treated) {
    const auto ratio = [&](double u) {
      const double hu = h(u);
      return hu == 0.0 ? 0.0 : h(std::max(t, u)) / hu;
    };
    const double ipw = weight(rec, cell, eps) * indicator(rec.followup > t);
    value += (ipw + censoring_integral(rec, cell, eps, ratio, {0.0, kInf})) / p;
  }
  return value - psi;
}

double eif_eta_gcomp(const SubjectRecord& rec, int arm, double t, const CellNuisance& cell,
                     double eps, double psi) {
  const auto& h = cell.failure_survival;
  const auto& k = cell.censoring_survival;
  const double ht = h(t);
  double value = ht;
  if (rec.arm == arm) {
    const double x = rec.followup;
    const auto& lt = cell.failure_hazard;
    CompensatedSum aug;
    if (rec.failed && x <= t) {
      const double hx = h(x);
      if (hx != 0.0) aug.add(ht / hx * capped_inverse(k.left_limit(x), eps));
    }
    for (std::size_t j = 0; j < lt.times.size(); ++j) {
      const double u = lt.times[j];
      if (u > t || u > x) break;
      const double hu = h(u);
      if (hu == 0.0 || lt.increments[j] == 0.0) continue;
      aug.add(-ht / hu * lt.increments[j] * capped_inverse(k.left_limit(u), eps));
    }
    value -= aug.value() / cell.propensity;
  }
  return value - psi;
}

double double_ipw_term(const SubjectRecord& rec, int arm, double t, const CellNuisance& cell,
                       double eps) {
  if (rec.arm != arm) return 0.0;
  const auto& k = cell.censoring_survival;
  CompensatedSum total;
  for (double e : rec.event_times) {
    if (e > t) break;
    total.add(capped_inverse(k.left_limit(e), eps));
  }
  return total.value() / cell.propensity;
}

double su_modified_term(const SubjectRecord& rec, int arm, double t, const CellNuisance& cell,
                        double eps) {
  const bool treated = rec.arm == arm;
  const double p = cell.propensity;
  const auto& f0 = cell.outcome_origin;
  const double ft = f0(t);
  double value = propensity_augmentation(treated, p, ft);
  if (treated) {
    const auto shift = [&](double u) { return u <= t ? ft - f0(u) : 0.0; };
    value += double_ipw_term(rec, arm, t, cell, eps) +
             censoring_integral(rec, cell, eps, shift, {0.0, t}) / p;
  }
  return value;
}

double ipw2_eta_term(const SubjectRecord& rec, int arm, double t, const CellNuisance& cell,
                     double eps) {
  if (rec.arm != arm) return 0.0;
  const double ipw = weight(rec, cell, eps) * indicator(rec.followup > t);
  const double aug = censoring_integral(rec, cell, eps, [](double) { return 1.0; }, {t, kInf});
  return (ipw + aug) / cell.propensity;
}

// --- estimator names ---

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::onestep: return "onestep";
    case Estimator::ipw1: return "ipw1";
    case Estimator::ipw2: return "ipw2";
    case Estimator::ipw3: return "ipw3";
    case Estimator::ipw4: return "ipw4";
    case Estimator::double_ipw: return "double_ipw";
    case Estimator::su_mod: return "su_mod";
  }
  return "onestep";
}

Estimator parse_estimator(const std::string& name) {
  for (Estimator e : {Estimator::onestep, Estimator::ipw1, Estimator::ipw2, Estimator::ipw3,
                      Estimator::ipw4, Estimator::double_ipw, Estimator::su_mod}) {
    if (to_string(e) == name) return e;
  }
  throw std::invalid_argument("unknown estimator '" + name + "'");
}

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += "; ";
    out += s;
  }
  return out;
}

}  // namespace

PositivityError::PositivityError(std::vector<std::string> cells)
    : std::runtime_error("positivity violated: " + join(cells)), cells_(std::move(cells)) {}

std::vector<std::string> positivity_breaches(const Dataset& ds, const CrossFitNuisance& nuisance,
                                             std::span<const int> arms, double tau, double eps) {
  std::vector<std::string> out;
  for (std::size_t f = 0; f < nuisance.fold_count(); ++f) {
    std::set<std::size_t> strata;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (nuisance.fold_of(i) == f) strata.insert(ds.stratum_of(i));
    }
    const std::string where =
        nuisance.fold_count() > 1 ? "fold " + std::to_string(f + 1) + ", " : std::string();
    const auto& set = nuisance.fold(f);
    for (int a : arms) {
      for (std::size_t s : strata) {
        const std::string cell = "arm " + std::to_string(a) + ", stratum " + ds.stratum_label(s);
        if (!set.has(a, s)) {
          out.push_back(where + cell + ": no fit");
          continue;
        }
        const auto& c = set.cell(a, s);
        const double v = c.propensity * c.censoring_survival(tau);
        if (!(v > eps)) {
          out.push_back(where + cell + ": pi*K(tau) = " + format_double(v) + " <= " +
                        format_double(eps));
        }
      }
    }
  }
  return out;
}

namespace {

struct Term {
  double g;
  double w;
};

Term evaluate(Estimator e, const SubjectRecord& rec, const Component& c, double t,
              const CellNuisance& cell, double eps) {
  const bool mu = c.kind == Kind::mu;
  const double hajek = rec.arm == c.arm ? 1.0 / cell.propensity : 0.0;
  switch (e) {
    case Estimator::onestep:
      return {mu ? eif_mu(rec, c.arm, t, cell, eps, 0.0) : eif_eta(rec, c.arm, t, cell, eps, 0.0), 1.0};
    case Estimator::ipw1:
      return {mu ? phi_mu(rec, c.arm, t, cell, eps) : phi_eta(rec, c.arm, t, cell, eps), 1.0};
    case Estimator::ipw2:
      return {mu ? double_ipw_term(rec, c.arm, t, cell, eps) : ipw2_eta_term(rec, c.arm, t, cell, eps), 1.0};
    case Estimator::ipw3:
      return {mu ? phi_mu(rec, c.arm, t, cell, eps) : phi_eta(rec, c.arm, t, cell, eps), hajek};
    case Estimator::ipw4:
      return {mu ? double_ipw_term(rec, c.arm, t, cell, eps) : ipw2_eta_term(rec, c.arm, t, cell, eps), hajek};
    case Estimator::double_ipw:
      return {double_ipw_term(rec, c.arm, t, cell, eps), 1.0};
    case Estimator::su_mod:
      return {su_modified_term(rec, c.arm, t, cell, eps), 1.0};
  }
  return {0.0, 1.0};
}

}  // namespace

EstimationResult estimate_with(const Dataset& ds, const EstimationConfig& cfg,
                               const CrossFitNuisance& nuisance) {
  const bool mu_only = cfg.estimator == Estimator::double_ipw || cfg.estimator == Estimator::su_mod;
  const bool want_eta = cfg.include_eta && !mu_only;
  if (!cfg.include_mu && !want_eta) throw std::invalid_argument("no components requested");
  if (ds.empty()) throw std::invalid_argument("empty dataset");
  const double eps = cfg.fit.eps;
  const auto& landmarks = cfg.grid.times();

  if (cfg.check_positivity) {
    auto breaches = positivity_breaches(ds, nuisance, cfg.arms, cfg.grid.tau(), eps);
    if (!breaches.empty()) throw PositivityError(std::move(breaches));
  }

  EstimationResult out;
  out.layout = component_layout(cfg.arms, landmarks.size(), cfg.include_mu, want_eta);
  const std::size_t n = ds.size();
  const std::size_t p = out.layout.size();
  Matrix g(n, p);
  Matrix w(n, p);
  parallel_for(n, [&](std::size_t i) {
    const auto& rec = ds[i];
    const auto& set = nuisance.for_subject(i);
    const std::size_t s = ds.stratum_of(i);
    for (std::size_t c = 0; c < p; ++c) {
      const auto& comp = out.layout[c];
      const auto term = evaluate(cfg.estimator, rec, comp, landmarks[comp.landmark],
                                 set.cell(comp.arm, s), eps);
      g(i, c) = term.g;
      w(i, c) = term.w;
    }
  });

  out.initial.resize(p);
  out.influence = Matrix(n, p);
  for (std::size_t c = 0; c < p; ++c) {
    CompensatedSum gs;
    CompensatedSum ws;
    for (std::size_t i = 0; i < n; ++i) {
      gs.add(g(i, c));
      ws.add(w(i, c));
    }
    if (!(ws.value() > 0.0)) {
      throw std::domain_error("degenerate normaliser for " + component_name(out.layout[c]));
    }
    const double psi = gs.value() / ws.value();
    const double mean_w = ws.value() / static_cast<double>(n);
    out.initial[c] = psi;
    for (std::size_t i = 0; i < n; ++i) {
      out.influence(i, c) = (g(i, c) - psi * w(i, c)) / mean_w;
    }
  }
  out.projected = isotonize(out.layout, out.initial);
  out.truncations = nuisance.truncations();
  out.dropped_weights = nuisance.dropped_weights();
  return out;
}

EstimationResult estimate(const Dataset& ds, const EstimationConfig& cfg) {
  const auto& landmarks = cfg.grid.times();
  if (cfg.crossfit) {
    const auto nz = CrossFitNuisance::cross_fit(ds, cfg.folds, cfg.seed, cfg.arms, landmarks, cfg.fit);
    return estimate_with(ds, cfg, nz);
  }
  const auto nz = CrossFitNuisance::full_sample(ds, cfg.arms, landmarks, cfg.fit);
  return estimate_with(ds, cfg, nz);
}

// --- post-processing ---

std::vector<double> pava(std::span<const double> y) {
  struct Block {
    double sum;
    std::size_t count;
    double mean() const { return sum / static_cast<double>(count); }
  };
  std::vector<Block> blocks;
  for (double v : y) {
    blocks.push_back({v, 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean() > blocks.back().mean()) {
      const Block top = blocks.back();
      blocks.pop_back();
      blocks.back().sum += top.sum;
      blocks.back().count += top.count;
    }
  }
  std::vector<double> out;
  out.reserve(y.size());
  for (const auto& b : blocks) out.insert(out.end(), b.count, b.mean());
  return out;
}

std::vector<double> isotonize(std::span<const Component> layout, std::span<const double> values) {
  if (layout.size() != values.size()) throw std::invalid_argument("isotonize: size mismatch");
  std::vector<double> out(values.begin(), values.end());
  for (Kind kind : {Kind::mu, Kind::eta}) {
    for (int arm = 0; arm <= 1; ++arm) {
      std::vector<std::size_t> idx;
      for (std::size_t c = 0; c < layout.size(); ++c) {
        if (layout[c].kind == kind && layout[c].arm == arm) idx.push_back(c);
      }
      std::sort(idx.begin(), idx.end(),
                [&](std::size_t a, std::size_t b) { return layout[a].landmark < layout[b].landmark; });
      std::vector<double> y;
      for (std::size_t c : idx) {
        const double v = values[c];
        y.push_back(kind == Kind::mu ? std::max(v, 0.0) : -std::clamp(v, 0.0, 1.0));
      }
      const auto fit = pava(y);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        out[idx[k]] = kind == Kind::mu ? fit[k] : -fit[k];
      }
    }
  }
  return out;
}

double while_alive_ratio(const StepFunction& mu, const StepFunction& eta, double t) {
  const auto times = mu.jump_times();
  const auto inc = mu.increments();
  CompensatedSum total;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double u = times[k];
    if (u > t) break;
    if (u <= 0.0 || inc[k] == 0.0) continue;
    const double e = eta(u);
    if (e == 0.0) {
      throw std::domain_error("while_alive_ratio: eta vanishes at a jump of mu (u = " +
                              format_double(u) + ")");
    }
    total.add(inc[k] / e);
  }
  return total.value();
}

std::vector<double> landmark_mu_decomposition(std::span<const double> eta,
                                              const std::function<double(double, double)>& zeta,
                                              std::span<const double> landmarks) {
  if (eta.size() != landmarks.size()) {
    throw std::invalid_argument("landmark_mu_decomposition: size mismatch");
  }
  std::vector<double> out(landmarks.size());
  double acc = 0.0;
  double prev_t = 0.0;
  double prev_eta = 1.0;
  for (std::size_t k = 0; k < landmarks.size(); ++k) {
    const double t = landmarks[k];
    acc += prev_eta * (zeta(t, prev_t) - zeta(prev_t, prev_t));
    out[k] = acc;
    prev_t = t;
    prev_eta = eta[k];
  }
  return out;
}

StepFunction mu_curve_double_ipw(const Dataset& ds, int arm, const CrossFitNuisance& nuisance,
                                 double eps) {
  const double n = static_cast<double>(ds.size());
  std::map<double, CompensatedSum> inc;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& rec = ds[i];
    if (rec.arm != arm) continue;
    const auto& cell = nuisance.for_subject(i).cell(arm, ds.stratum_of(i));
    for (double e : rec.event_times) {
      inc[e].add(capped_inverse(cell.censoring_survival.left_limit(e), eps) / cell.propensity / n);
    }
  }
  std::vector<double> times;
  std::vector<double> values;
  CompensatedSum level;
  for (const auto& [t, d] : inc) {
    level.add(d.value());
    times.push_back(t);
    values.push_back(level.value());
  }
  return StepFunction(0.0, std::move(times), std::move(values));
}

StepFunction eta_curve_ipw2(const Dataset& ds, int arm, const CrossFitNuisance& nuisance,
                            double eps) {
  const double n = static_cast<double>(ds.size());
  std::map<double, CompensatedSum> drop;
  CompensatedSum total;
  // every term is c * I(s > t), which drops by c at t = s
  const auto add = [&](double s, double c) {
    total.add(c);
    drop[s].add(c);
  };
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& rec = ds[i];
    if (rec.arm != arm) continue;
    const auto& cell = nuisance.for_subject(i).cell(arm, ds.stratum_of(i));
    const auto& k = cell.censoring_survival;
    const double scale = 1.0 / cell.propensity / n;
    const double own = rec.failed ? weight(rec, cell, eps)
                                  : capped_inverse(k.left_limit(rec.followup), eps);
    add(rec.followup, own * scale);
    const auto& lc = cell.censoring_hazard;
    for (std::size_t j = 0; j < lc.times.size(); ++j) {
      const double u = lc.times[j];
      if (u >= rec.followup) break;
      if (lc.increments[j] == 0.0) continue;
      add(u, -lc.increments[j] * capped_inverse(k(u), eps) * scale);
    }
  }
  std::vector<double> times;
  std::vector<double> values;
  const double initial = total.value();
  CompensatedSum level;
  level.add(initial);
  for (const auto& [t, d] : drop) {
    level.add(-d.value());
    times.push_back(t);
    values.push_back(level.value());
  }
  return StepFunction(initial, std::move(times), std::move(values));
}

}  // namespace recur
