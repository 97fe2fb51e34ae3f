#include "recur/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "recur/inference.hpp"
#include "recur/parallel.hpp"
#include "recur/random.hpp"

namespace recur {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool ok, const std::string& message) {
  if (!ok) throw ScenarioError(message);
}

bool finite_in(double v, double lo, double hi) { return std::isfinite(v) && v >= lo && v <= hi; }

void check_probabilities(const std::vector<double>& p, const std::string& what) {
  require(!p.empty(), what + ": empty");
  double total = 0.0;
  for (double v : p) {
    require(finite_in(v, 0.0, 1.0), what + ": entries must lie in [0, 1]");
    total += v;
  }
  require(std::fabs(total - 1.0) <= 1e-9, what + ": must sum to 1");
}

void check_landmarks(const std::vector<double>& lm, double tau) {
  for (std::size_t j = 0; j < lm.size(); ++j) {
    require(std::isfinite(lm[j]) && lm[j] > 0.0 && lm[j] <= tau,
            "landmarks must lie in (0, tau]");
    require(j == 0 || lm[j] > lm[j - 1], "landmarks must be strictly increasing");
  }
}

/// Largest grid point <= v (0 if none): the cumulative grid spacing.
double grid_floor(const std::vector<double>& grid, double v) {
  const auto it = std::upper_bound(grid.begin(), grid.end(), v);
  return it == grid.begin() ? 0.0 : *(it - 1);
}

double spacing(const std::vector<double>& grid, std::size_t k) {
  return grid[k] - (k == 0 ? 0.0 : grid[k - 1]);
}

double frailty_hazard(double h, double z) {
  if (h >= 1.0) return 1.0;
  return 1.0 - std::pow(1.0 - h, z);
}

/// Point masses of T* on the grid for frailty z, plus the mass beyond tau.
struct FailureLaw {
  std::vector<double> mass;
  double beyond = 0.0;
};

FailureLaw failure_law(const std::vector<double>& hazard, double z) {
  FailureLaw law;
  law.mass.resize(hazard.size());
  double surv = 1.0;
  for (std::size_t k = 0; k < hazard.size(); ++k) {
    const double h = frailty_hazard(hazard[k], z);
    law.mass[k] = surv * h;
    surv *= 1.0 - h;
  }
  law.beyond = surv;
  return law;
}

FailureLaw censoring_law(const std::vector<double>& hazard) { return failure_law(hazard, 1.0); }

/// F*(u, t) = sum_z p_z lambda z E{I(T* > u) G(t ^ T*) | z} for one cell.
class LatticeOutcomeRegression final : public OutcomeRegression {
 public:
  LatticeOutcomeRegression(std::vector<double> grid, double rate, std::vector<double> zs,
                           std::vector<double> pz, std::vector<FailureLaw> laws)
      : grid_(std::move(grid)), rate_(rate), zs_(std::move(zs)), pz_(std::move(pz)),
        laws_(std::move(laws)) {}

  double value(double u, double t) const {
    CompensatedSum total;
    for (std::size_t z = 0; z < zs_.size(); ++z) {
      const auto& law = laws_[z];
      CompensatedSum inner;
      for (std::size_t k = 0; k < grid_.size(); ++k) {
        if (grid_[k] <= u || law.mass[k] == 0.0) continue;
        inner.add(law.mass[k] * grid_floor(grid_, std::min(t, grid_[k])));
      }
      inner.add(law.beyond * grid_floor(grid_, t));
      total.add(pz_[z] * rate_ * zs_[z] * inner.value());
    }
    return total.value();
  }

  StepFunction profile(double t, std::size_t* /*truncated*/) const override {
    std::vector<double> values(grid_.size());
    for (std::size_t k = 0; k < grid_.size(); ++k) values[k] = value(grid_[k], t);
    return StepFunction(value(0.0, t), grid_, std::move(values));
  }

  StepFunction origin_curve() const override {
    std::vector<double> values(grid_.size());
    for (std::size_t k = 0; k < grid_.size(); ++k) values[k] = value(0.0, grid_[k]);
    return StepFunction(0.0, grid_, std::move(values));
  }

 private:
  std::vector<double> grid_;
  double rate_;
  std::vector<double> zs_;
  std::vector<double> pz_;
  std::vector<FailureLaw> laws_;
};

double arm_propensity(const LatticeStratum& s, int arm) { return arm == 1 ? s.pi1 : 1.0 - s.pi1; }

std::string subject_id(std::size_t i, std::size_t n) {
  std::string digits = std::to_string(i + 1);
  const std::size_t width = std::to_string(n).size();
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return "s" + digits;
}

}  // namespace

// --- scenario validation ---

bool LatticeScenario::has_frailty() const {
  return !(frailty_values.size() == 1 && frailty_values[0] == 1.0);
}

void LatticeScenario::validate() const {
  require(std::isfinite(tau) && tau > 0.0, "tau must be positive");
  require(!grid.empty(), "grid must be nonempty");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    require(std::isfinite(grid[k]) && grid[k] > 0.0, "grid points must be positive");
    require(k == 0 || grid[k] > grid[k - 1], "grid must be strictly increasing");
  }
  require(grid.back() <= tau, "grid exceeds tau");
  check_landmarks(landmarks, tau);
  require(!strata.empty(), "scenario needs at least one stratum");
  require(frailty_values.size() == frailty_probs.size(), "frailty values/probs differ in length");
  for (double z : frailty_values) require(std::isfinite(z) && z > 0.0, "frailty values must be positive");
  check_probabilities(frailty_probs, "frailty probs");
  require(finite_in(eps, 0.0, 1.0), "eps must lie in [0, 1]");
  std::vector<double> probs;
  std::set<std::vector<std::string>> patterns;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    const auto& st = strata[s];
    const std::string where = "stratum " + std::to_string(s);
    require(st.covariates.size() == strata[0].covariates.size(),
            where + ": covariate count differs");
    require(patterns.insert(st.covariates).second, where + ": duplicate covariate pattern");
    require(finite_in(st.pi1, 0.0, 1.0), where + ": pi1 must lie in [0, 1]");
    probs.push_back(st.prob);
    for (int a = 0; a < 2; ++a) {
      require(st.failure_hazard[a].size() == grid.size(), where + ": failure_hazard length");
      require(st.censor_hazard[a].size() == grid.size(), where + ": censor_hazard length");
      for (double h : st.failure_hazard[a]) require(finite_in(h, 0.0, 1.0), where + ": hazard outside [0, 1]");
      for (double h : st.censor_hazard[a]) require(finite_in(h, 0.0, 1.0), where + ": hazard outside [0, 1]");
      require(std::isfinite(st.event_rate[a]) && st.event_rate[a] >= 0.0,
              where + ": event_rate must be nonnegative");
    }
  }
  check_probabilities(probs, "stratum probs");
}

void LatticeScenario::validate_for_simulation() const {
  validate();
  for (std::size_t s = 0; s < strata.size(); ++s) {
    const auto& st = strata[s];
    if (st.prob == 0.0) continue;
    for (int a = 0; a < 2; ++a) {
      const std::string where = "stratum " + std::to_string(s) + ", arm " + std::to_string(a);
      const auto& h = st.failure_hazard[a];
      require(std::find(h.begin(), h.end(), 1.0) != h.end(),
              where + ": failure time support exceeds tau (no hazard equal to 1)");
      const double k_tau = censoring_law(st.censor_hazard[a]).beyond;
      const double margin = arm_propensity(st, a) * k_tau;
      require(margin > eps, where + ": positivity breach, pi * K(tau) = " + format_double(margin) +
                                " <= " + format_double(eps));
    }
  }
}

void ContinuousScenario::validate() const {
  require(std::isfinite(tau) && tau > 0.0, "tau must be positive");
  require(finite_in(pi1, 0.0, 1.0), "pi1 must lie in [0, 1]");
  require(finite_in(eps, 0.0, 1.0), "eps must lie in [0, 1]");
  check_landmarks(landmarks, tau);
  for (int a = 0; a < 2; ++a) {
    require(std::isfinite(failure_rate[a]) && failure_rate[a] > 0.0, "failure_rate must be positive");
    require(std::isfinite(censor_rate[a]) && censor_rate[a] >= 0.0, "censor_rate must be nonnegative");
    require(std::isfinite(event_rate[a]) && event_rate[a] >= 0.0, "event_rate must be nonnegative");
    const double pa = a == 1 ? pi1 : 1.0 - pi1;
    require(pa * std::exp(-censor_rate[a] * tau) > eps, "positivity breach in arm " + std::to_string(a));
  }
}

// --- scenario documents ---

namespace {

using nlohmann::json;

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

std::array<std::vector<double>, 2> per_arm_vectors(const json& j, const char* key) {
  require(j.contains(key), std::string("stratum missing '") + key + "'");
  const auto& v = j.at(key);
  require(v.is_array() && v.size() == 2, std::string("'") + key + "' must hold one array per arm");
  return {v[0].get<std::vector<double>>(), v[1].get<std::vector<double>>()};
}

std::array<double, 2> per_arm_scalars(const json& j, const char* key) {
  require(j.contains(key), std::string("missing '") + key + "'");
  const auto& v = j.at(key);
  if (v.is_number()) return {v.get<double>(), v.get<double>()};
  require(v.is_array() && v.size() == 2, std::string("'") + key + "' must be a number or a pair");
  return {v[0].get<double>(), v[1].get<double>()};
}

LatticeScenario parse_lattice(const json& j) {
  LatticeScenario sc;
  sc.name = get_or<std::string>(j, "name", sc.name);
  require(j.contains("tau"), "missing 'tau'");
  sc.tau = j.at("tau").get<double>();
  require(j.contains("grid"), "missing 'grid'");
  sc.grid = j.at("grid").get<std::vector<double>>();
  sc.eps = get_or<double>(j, "eps", sc.eps);
  sc.landmarks = get_or<std::vector<double>>(j, "landmarks", {});
  if (j.contains("frailty")) {
    const auto& f = j.at("frailty");
    sc.frailty_values = f.at("values").get<std::vector<double>>();
    sc.frailty_probs = f.at("probs").get<std::vector<double>>();
  }
  require(j.contains("strata") && j.at("strata").is_array(), "missing 'strata' array");
  for (const auto& s : j.at("strata")) {
    LatticeStratum st;
    st.covariates = get_or<std::vector<std::string>>(s, "covariates", {});
    st.prob = get_or<double>(s, "prob", 1.0);
    require(s.contains("pi1"), "stratum missing 'pi1'");
    st.pi1 = s.at("pi1").get<double>();
    st.failure_hazard = per_arm_vectors(s, "failure_hazard");
    st.censor_hazard = per_arm_vectors(s, "censor_hazard");
    st.event_rate = per_arm_scalars(s, "event_rate");
    sc.strata.push_back(std::move(st));
  }
  sc.validate();
  return sc;
}

ContinuousScenario parse_continuous(const json& j) {
  ContinuousScenario sc;
  sc.name = get_or<std::string>(j, "name", sc.name);
  require(j.contains("tau"), "missing 'tau'");
  sc.tau = j.at("tau").get<double>();
  sc.pi1 = get_or<double>(j, "pi1", sc.pi1);
  sc.eps = get_or<double>(j, "eps", sc.eps);
  sc.landmarks = get_or<std::vector<double>>(j, "landmarks", {});
  sc.failure_rate = per_arm_scalars(j, "failure_rate");
  sc.censor_rate = per_arm_scalars(j, "censor_rate");
  sc.event_rate = per_arm_scalars(j, "event_rate");
  sc.validate();
  return sc;
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
  try {
    const json j = json::parse(text);
    require(j.is_object(), "scenario must be a JSON object");
    const std::string kind = get_or<std::string>(j, "kind", "lattice");
    if (kind == "lattice") return parse_lattice(j);
    if (kind == "continuous") return parse_continuous(j);
    throw ScenarioError("unknown scenario kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("malformed scenario: ") + e.what());
  }
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string scenario_name(const Scenario& s) {
  return std::visit([](const auto& sc) { return sc.name; }, s);
}

double scenario_tau(const Scenario& s) {
  return std::visit([](const auto& sc) { return sc.tau; }, s);
}

const std::vector<double>& scenario_landmarks(const Scenario& s) {
  return std::visit([](const auto& sc) -> const std::vector<double>& { return sc.landmarks; }, s);
}

// --- generation ---

SubjectRecord FullDataRecord::observe() const {
  SubjectRecord rec;
  rec.id = id;
  rec.covariates = covariates;
  rec.arm = arm;
  const double t = failure[arm];
  const double c = censoring[arm];
  rec.followup = std::min(t, c);
  rec.failed = t <= c;
  for (double e : unstopped[arm]) {
    if (e <= rec.followup) rec.event_times.push_back(e);
  }
  return rec;
}

namespace {

Dataset observe_all(const std::vector<FullDataRecord>& full) {
  std::vector<SubjectRecord> recs;
  recs.reserve(full.size());
  for (const auto& f : full) recs.push_back(f.observe());
  return Dataset(std::move(recs));
}

double draw_grid_time(Rng& rng, const std::vector<double>& grid, const std::vector<double>& hazard,
                      double z) {
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double h = frailty_hazard(hazard[k], z);
    if (h > 0.0 && rng.uniform() < h) return grid[k];
  }
  return kInf;
}

}  // namespace

Simulation simulate(const LatticeScenario& sc, std::size_t n, std::uint64_t seed) {
  sc.validate_for_simulation();
  std::vector<double> probs;
  for (const auto& st : sc.strata) probs.push_back(st.prob);
  Rng rng(seed);
  Simulation out;
  out.full.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    FullDataRecord f;
    f.id = subject_id(i, n);
    f.stratum = rng.categorical(probs);
    const auto& st = sc.strata[f.stratum];
    f.covariates = st.covariates;
    f.frailty = sc.has_frailty() ? sc.frailty_values[rng.categorical(sc.frailty_probs)] : 1.0;
    f.arm = rng.uniform() < st.pi1 ? 1 : 0;
    for (int a = 0; a < 2; ++a) {
      f.failure[a] = draw_grid_time(rng, sc.grid, st.failure_hazard[a], f.frailty);
      f.censoring[a] = draw_grid_time(rng, sc.grid, st.censor_hazard[a], 1.0);
      const double rate = st.event_rate[a] * f.frailty;
      for (std::size_t k = 0; k < sc.grid.size(); ++k) {
        const auto count = rate > 0.0 ? rng.poisson(rate * spacing(sc.grid, k)) : 0;
        f.unstopped[a].insert(f.unstopped[a].end(), count, sc.grid[k]);
      }
    }
    out.full.push_back(std::move(f));
  }
  out.observed = observe_all(out.full);
  return out;
}

Simulation simulate(const ContinuousScenario& sc, std::size_t n, std::uint64_t seed) {
  sc.validate();
  Rng rng(seed);
  Simulation out;
  out.full.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    FullDataRecord f;
    f.id = subject_id(i, n);
    f.arm = rng.uniform() < sc.pi1 ? 1 : 0;
    for (int a = 0; a < 2; ++a) {
      f.failure[a] = std::min(rng.exponential(sc.failure_rate[a]), sc.tau);
      const double c = sc.censor_rate[a] > 0.0 ? rng.exponential(sc.censor_rate[a]) : kInf;
      f.censoring[a] = c > sc.tau ? kInf : c;
      const auto count = sc.event_rate[a] > 0.0 ? rng.poisson(sc.event_rate[a] * sc.tau) : 0;
      for (std::uint64_t e = 0; e < count; ++e) {
        double u = rng.uniform() * sc.tau;
        if (u <= 0.0) u = std::numeric_limits<double>::min();
        f.unstopped[a].push_back(u);
      }
      std::sort(f.unstopped[a].begin(), f.unstopped[a].end());
    }
    out.full.push_back(std::move(f));
  }
  out.observed = observe_all(out.full);
  return out;
}

Simulation simulate(const Scenario& sc, std::size_t n, std::uint64_t seed) {
  return std::visit([&](const auto& s) { return simulate(s, n, seed); }, sc);
}

// --- oracles ---

double OracleTruth::value(const Component& c) const {
  const auto a = static_cast<std::size_t>(c.arm);
  return c.kind == Kind::mu ? mu.at(a).at(c.landmark) : eta.at(a).at(c.landmark);
}

std::vector<double> OracleTruth::vector(std::span<const Component> layout) const {
  std::vector<double> out;
  for (const auto& c : layout) out.push_back(value(c));
  return out;
}

StepFunction oracle_failure_survival(const LatticeScenario& sc, std::size_t stratum, int arm) {
  const auto& hazard = sc.strata.at(stratum).failure_hazard[arm];
  std::vector<double> values(sc.grid.size(), 0.0);
  for (std::size_t z = 0; z < sc.frailty_values.size(); ++z) {
    double surv = 1.0;
    for (std::size_t k = 0; k < sc.grid.size(); ++k) {
      surv *= 1.0 - frailty_hazard(hazard[k], sc.frailty_values[z]);
      values[k] += sc.frailty_probs[z] * surv;
    }
  }
  return StepFunction(1.0, sc.grid, std::move(values));
}

StepFunction oracle_censoring_survival(const LatticeScenario& sc, std::size_t stratum, int arm) {
  const auto& hazard = sc.strata.at(stratum).censor_hazard[arm];
  std::vector<double> values(sc.grid.size());
  double surv = 1.0;
  for (std::size_t k = 0; k < sc.grid.size(); ++k) {
    surv *= 1.0 - hazard[k];
    values[k] = surv;
  }
  return StepFunction(1.0, sc.grid, std::move(values));
}

std::shared_ptr<const OutcomeRegression> oracle_outcome(const LatticeScenario& sc,
                                                        std::size_t stratum, int arm) {
  const auto& st = sc.strata.at(stratum);
  std::vector<FailureLaw> laws;
  for (double z : sc.frailty_values) laws.push_back(failure_law(st.failure_hazard[arm], z));
  return std::make_shared<LatticeOutcomeRegression>(sc.grid, st.event_rate[arm], sc.frailty_values,
                                                    sc.frailty_probs, std::move(laws));
}

namespace {

CellNuisance oracle_cell(const LatticeScenario& sc, std::size_t s, int a,
                         std::span<const double> landmarks) {
  return make_cell(arm_propensity(sc.strata[s], a), oracle_censoring_survival(sc, s, a),
                   oracle_failure_survival(sc, s, a), oracle_outcome(sc, s, a), landmarks);
}

}  // namespace

NuisanceSet oracle_nuisance(const LatticeScenario& sc, std::span<const double> landmarks) {
  NuisanceSet set(sc.strata.size(), {landmarks.begin(), landmarks.end()});
  for (std::size_t s = 0; s < sc.strata.size(); ++s) {
    for (int a = 0; a < 2; ++a) set.set(a, s, oracle_cell(sc, s, a, landmarks));
  }
  return set;
}

NuisanceSet oracle_nuisance(const LatticeScenario& sc, const Dataset& ds,
                            std::span<const double> landmarks) {
  NuisanceSet set(ds.stratum_count(), {landmarks.begin(), landmarks.end()});
  for (std::size_t s = 0; s < ds.stratum_count(); ++s) {
    const auto& pattern = ds.stratum_pattern(s);
    const auto it = std::find_if(sc.strata.begin(), sc.strata.end(),
                                 [&](const LatticeStratum& st) { return st.covariates == pattern; });
    if (it == sc.strata.end()) {
      throw ScenarioError("dataset stratum " + ds.stratum_label(s) + " is not in the scenario");
    }
    const auto idx = static_cast<std::size_t>(it - sc.strata.begin());
    for (int a = 0; a < 2; ++a) set.set(a, s, oracle_cell(sc, idx, a, landmarks));
  }
  return set;
}

OracleTruth oracle_truth(const LatticeScenario& sc, std::span<const double> landmarks) {
  sc.validate();
  OracleTruth out;
  out.landmarks.assign(landmarks.begin(), landmarks.end());
  for (int a = 0; a < 2; ++a) {
    for (double t : landmarks) {
      CompensatedSum mu;
      CompensatedSum eta;
      CompensatedSum closed;
      for (std::size_t s = 0; s < sc.strata.size(); ++s) {
        const auto& st = sc.strata[s];
        // direct enumeration over (z, T*): E N*(t) = E lambda z G(t ^ T*)
        CompensatedSum mu_s;
        CompensatedSum eta_s;
        for (std::size_t z = 0; z < sc.frailty_values.size(); ++z) {
          const double zv = sc.frailty_values[z];
          const auto law = failure_law(st.failure_hazard[a], zv);
          for (std::size_t k = 0; k < sc.grid.size(); ++k) {
            const double pk = sc.frailty_probs[z] * law.mass[k];
            mu_s.add(pk * st.event_rate[a] * zv * grid_floor(sc.grid, std::min(t, sc.grid[k])));
            if (sc.grid[k] > t) eta_s.add(pk);
          }
          const double pb = sc.frailty_probs[z] * law.beyond;
          mu_s.add(pb * st.event_rate[a] * zv * grid_floor(sc.grid, t));
          eta_s.add(pb);
        }
        mu.add(st.prob * mu_s.value());
        eta.add(st.prob * eta_s.value());
        if (!sc.has_frailty()) {
          // lambda sum_{g_k <= t} eta(g_k -) dg_k
          const auto h = oracle_failure_survival(sc, s, a);
          CompensatedSum c;
          for (std::size_t k = 0; k < sc.grid.size() && sc.grid[k] <= t; ++k) {
            c.add(h.left_limit(sc.grid[k]) * spacing(sc.grid, k));
          }
          closed.add(st.prob * st.event_rate[a] * c.value());
        }
      }
      out.mu[a].push_back(mu.value());
      out.eta[a].push_back(eta.value());
      if (!sc.has_frailty()) out.mu_closed_form[a].push_back(closed.value());
    }
  }
  return out;
}

OracleTruth oracle_truth(const ContinuousScenario& sc, std::span<const double> landmarks) {
  OracleTruth out;
  out.landmarks.assign(landmarks.begin(), landmarks.end());
  for (int a = 0; a < 2; ++a) {
    const double r = sc.failure_rate[a];
    for (double t : landmarks) {
      // T* = min(Exp(r), tau) has an atom at tau, so eta(tau) = 0
      const double eta = t >= sc.tau ? 0.0 : std::exp(-r * t);
      const double tt = std::min(t, sc.tau);
      const double mu = sc.event_rate[a] * (1.0 - std::exp(-r * tt)) / r;
      out.mu[a].push_back(mu);
      out.eta[a].push_back(eta);
      out.mu_closed_form[a].push_back(mu);
    }
  }
  return out;
}

OracleTruth monte_carlo_truth(const ContinuousScenario& sc, std::span<const double> landmarks,
                              std::size_t draws, std::uint64_t seed) {
  OracleTruth out;
  out.landmarks.assign(landmarks.begin(), landmarks.end());
  for (int a = 0; a < 2; ++a) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(a)));
    std::vector<CompensatedSum> mu(landmarks.size());
    std::vector<CompensatedSum> eta(landmarks.size());
    for (std::size_t d = 0; d < draws; ++d) {
      const double t_star = std::min(rng.exponential(sc.failure_rate[a]), sc.tau);
      // N*(t) = N**(t ^ T*): counts over disjoint landmark intervals
      double prev = 0.0;
      double count = 0.0;
      for (std::size_t j = 0; j < landmarks.size(); ++j) {
        const double hi = std::min(landmarks[j], t_star);
        if (hi > prev) {
          count += static_cast<double>(rng.poisson(sc.event_rate[a] * (hi - prev)));
          prev = hi;
        }
        mu[j].add(count);
        eta[j].add(t_star > landmarks[j] ? 1.0 : 0.0);
      }
    }
    for (std::size_t j = 0; j < landmarks.size(); ++j) {
      out.mu[a].push_back(mu[j].value() / static_cast<double>(draws));
      out.eta[a].push_back(eta[j].value() / static_cast<double>(draws));
    }
  }
  return out;
}

OracleTruth oracle_truth(const Scenario& sc, std::span<const double> landmarks) {
  return std::visit([&](const auto& s) { return oracle_truth(s, landmarks); }, sc);
}

double oracle_zeta(const LatticeScenario& sc, int arm, double u, double t) {
  CompensatedSum num;
  CompensatedSum den;
  for (std::size_t s = 0; s < sc.strata.size(); ++s) {
    const auto& st = sc.strata[s];
    for (std::size_t z = 0; z < sc.frailty_values.size(); ++z) {
      const double zv = sc.frailty_values[z];
      const double pz = st.prob * sc.frailty_probs[z];
      const auto law = failure_law(st.failure_hazard[arm], zv);
      for (std::size_t k = 0; k < sc.grid.size(); ++k) {
        if (sc.grid[k] <= t) continue;
        num.add(pz * law.mass[k] * st.event_rate[arm] * zv *
                grid_floor(sc.grid, std::min(u, sc.grid[k])));
        den.add(pz * law.mass[k]);
      }
      num.add(pz * law.beyond * st.event_rate[arm] * zv * grid_floor(sc.grid, u));
      den.add(pz * law.beyond);
    }
  }
  return den.value() == 0.0 ? 0.0 : num.value() / den.value();
}

double expected_eif(const LatticeScenario& sc, Kind kind, int arm, double t,
                    const NuisanceSet& bar, double eps) {
  CompensatedSum total;
  std::vector<double> times(sc.grid);
  times.push_back(kInf);
  for (std::size_t s = 0; s < sc.strata.size(); ++s) {
    const auto& st = sc.strata[s];
    const auto& cell = bar.cell(arm, s);
    for (int a = 0; a < 2; ++a) {
      const double pa = st.prob * arm_propensity(st, a);
      if (pa == 0.0) continue;
      const auto cens = censoring_law(st.censor_hazard[a]);
      for (std::size_t z = 0; z < sc.frailty_values.size(); ++z) {
        const double zv = sc.frailty_values[z];
        const auto fail = failure_law(st.failure_hazard[a], zv);
        for (std::size_t i = 0; i < times.size(); ++i) {
          const double pt = i < sc.grid.size() ? fail.mass[i] : fail.beyond;
          if (pt == 0.0) continue;
          for (std::size_t j = 0; j < times.size(); ++j) {
            const double pc = j < sc.grid.size() ? cens.mass[j] : cens.beyond;
            if (pc == 0.0) continue;
            const double prob = pa * sc.frailty_probs[z] * pt * pc;
            SubjectRecord rec;
            rec.arm = a;
            rec.followup = std::min(times[i], times[j]);
            rec.failed = times[i] <= times[j];
            if (!std::isfinite(rec.followup)) {
              throw ScenarioError("expected_eif: follow-up beyond tau has positive mass");
            }
            double value = kind == Kind::mu ? eif_mu(rec, arm, t, cell, eps, 0.0)
                                            : eif_eta(rec, arm, t, cell, eps, 0.0);
            if (kind == Kind::mu && a == arm && rec.failed) {
              // D is linear in N(t); E{N(t) | T*, C*, z} = lambda z G(t ^ X)
              const double mean_n =
                  st.event_rate[a] * zv * grid_floor(sc.grid, std::min(t, rec.followup));
              value += capped_inverse(cell.censoring_survival.left_limit(rec.followup), eps) /
                       cell.propensity * mean_n;
            }
            total.add(prob * value);
          }
        }
      }
    }
  }
  return total.value();
}

// --- experiments ---

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = compensated_mean(v);
  CompensatedSum ss;
  for (double x : v) ss.add((x - mean) * (x - mean));
  return std::sqrt(ss.value() / static_cast<double>(v.size() - 1));
}

}  // namespace

ExperimentResult robustness_experiment(const Scenario& sc, const ExperimentOptions& opts) {
  std::vector<double> landmarks = opts.landmarks.empty() ? scenario_landmarks(sc) : opts.landmarks;
  if (landmarks.empty()) throw ScenarioError("no landmarks given and the scenario has none");
  if (opts.misspecs.empty()) throw std::invalid_argument("no misspecification settings requested");
  if (opts.replicates == 0 || opts.n == 0) throw std::invalid_argument("reps and n must be positive");
  const LandmarkGrid grid(landmarks, scenario_tau(sc));

  ExperimentResult out;
  out.truth = oracle_truth(sc, landmarks);
  const bool mu_only = opts.estimator == Estimator::double_ipw || opts.estimator == Estimator::su_mod;
  const std::vector<int> arms{0, 1};
  out.layout = component_layout(arms, landmarks.size(), true, !mu_only);
  const std::size_t p = out.layout.size();
  const std::size_t nm = opts.misspecs.size();
  const std::size_t reps = opts.replicates;
  const auto truth = out.truth.vector(out.layout);

  out.estimates.assign(nm, std::vector<std::vector<double>>(reps));
  std::vector<std::vector<std::vector<std::uint8_t>>> covered(
      nm, std::vector<std::vector<std::uint8_t>>(reps));

  parallel_for(reps, [&](std::size_t r) {
    const auto sim = simulate(sc, opts.n, derive_seed(opts.seed, r));
    for (std::size_t m = 0; m < nm; ++m) {
      EstimationConfig cfg;
      cfg.grid = grid;
      cfg.arms = arms;
      cfg.estimator = opts.estimator;
      cfg.folds = opts.folds;
      cfg.crossfit = opts.crossfit;
      cfg.seed = derive_seed(opts.seed, r);
      cfg.fit.eps = opts.eps;
      cfg.fit.cf_cap = opts.cf_cap;
      cfg.fit.misspec = opts.misspecs[m];
      cfg.check_positivity = false;
      const auto est = estimate(sim.observed, cfg);
      InferenceReport inf;
      if (opts.bootstrap) {
        BootstrapOptions b;
        b.replicates = opts.bootstrap_reps;
        b.seed = derive_seed(cfg.seed, 0xB0075);
        inf = inference_from(est, bootstrap_covariance(sim.observed, cfg, est, b),
                             VarianceMethod::bootstrap, opts.alpha);
      } else {
        inf = sandwich_inference(est, opts.alpha);
      }
      out.estimates[m][r] = inf.estimate;
      auto& cov = covered[m][r];
      cov.resize(p);
      for (std::size_t c = 0; c < p; ++c) {
        cov[c] = inf.ci[c].lower <= truth[c] && truth[c] <= inf.ci[c].upper ? 1 : 0;
      }
    }
  });

  for (std::size_t m = 0; m < nm; ++m) {
    for (std::size_t c = 0; c < p; ++c) {
      std::vector<double> values;
      std::vector<double> errors;
      std::size_t hits = 0;
      for (std::size_t r = 0; r < reps; ++r) {
        values.push_back(out.estimates[m][r][c]);
        errors.push_back(out.estimates[m][r][c] - truth[c]);
        hits += covered[m][r][c];
      }
      ExperimentRow row;
      row.scenario = scenario_name(sc);
      row.misspec = to_string(opts.misspecs[m]);
      row.component = component_name(out.layout[c]);
      row.landmark = landmarks[out.layout[c].landmark];
      row.truth = truth[c];
      row.bias = median(errors);
      row.se = sample_sd(values);
      row.coverage = static_cast<double>(hits) / static_cast<double>(reps);
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

void write_experiment_csv(std::ostream& out, const std::vector<ExperimentRow>& rows) {
  out << "scenario,misspec,component,landmark,bias,se,coverage\n";
  for (const auto& r : rows) {
    out << r.scenario << ',' << r.misspec << ',' << r.component << ',' << format_double(r.landmark)
        << ',' << format_double(r.bias) << ',' << format_double(r.se) << ','
        << format_double(r.coverage) << '\n';
  }
}

std::string oracle_json(const std::string& scenario, const OracleTruth& truth) {
  nlohmann::ordered_json j;
  j["scenario"] = scenario;
  j["landmarks"] = truth.landmarks;
  for (int a = 0; a < 2; ++a) j["mu_" + std::to_string(a)] = truth.mu[a];
  for (int a = 0; a < 2; ++a) j["eta_" + std::to_string(a)] = truth.eta[a];
  return j.dump(2) + "\n";
}

}  // namespace recur
