#include <doctest.h>

#include <cmath>
#include <sstream>

#include "recur/nuisance.hpp"
#include "recur/simulation.hpp"

using namespace recur;

namespace {

Scenario load(const std::string& name) { return load_scenario(std::string(RECUR_TEST_DATA "/") + name); }

LatticeScenario lattice(const std::string& name) { return std::get<LatticeScenario>(load(name)); }

/// One stratum, grid 0.25..1, constant hazards.
LatticeScenario tiny(double fail, double cens, double rate) {
  LatticeScenario sc;
  sc.tau = 1.0;
  sc.grid = {0.25, 0.5, 0.75, 1.0};
  sc.landmarks = {0.5, 1.0};
  LatticeStratum st;
  st.covariates = {"x"};
  st.pi1 = 0.5;
  for (int a = 0; a < 2; ++a) {
    st.failure_hazard[a] = {fail, fail, fail, 1.0};
    st.censor_hazard[a].assign(4, cens);
    st.event_rate[a] = rate;
  }
  sc.strata = {st};
  return sc;
}

}  // namespace

TEST_CASE("simulation is deterministic and observed data follow the coarsening map") {
  const auto sc = lattice("lattice_frailty.json");
  const auto a = simulate(sc, 400, 12);
  const auto b = simulate(sc, 400, 12);
  REQUIRE(a.observed.size() == 400);
  for (std::size_t i = 0; i < 400; ++i) {
    const auto& f = a.full[i];
    const auto& o = a.observed[i];
    CHECK(o.id == b.observed[i].id);
    CHECK(o.followup == b.observed[i].followup);
    CHECK(o.event_times == b.observed[i].event_times);
    const double t = f.failure[f.arm];
    const double c = f.censoring[f.arm];
    CHECK(o.followup == std::min(t, c));
    CHECK(o.failed == (t <= c));
    CHECK(o.arm == f.arm);
    for (double e : o.event_times) CHECK(e <= o.followup);
    CHECK(o.event_times.size() <= f.unstopped[f.arm].size());
  }
}

TEST_CASE("no censoring hazard means every failure is observed") {
  const auto sim = simulate(tiny(0.3, 0.0, 1.0), 200, 1);
  for (const auto& r : sim.observed.records()) CHECK(r.failed);
}

TEST_CASE("ties between failure and censoring count as failures") {
  FullDataRecord f;
  f.id = "t";
  f.arm = 1;
  f.failure = {0.5, 0.5};
  f.censoring = {0.5, 0.5};
  f.unstopped = {std::vector<double>{0.25, 0.5, 0.75}, std::vector<double>{0.25, 0.5, 0.75}};
  const auto o = f.observe();
  CHECK(o.failed);
  CHECK(o.followup == 0.5);
  CHECK(o.event_times.size() == 2);
}

TEST_CASE("oracle edge cases") {
  auto quiet = tiny(0.0, 0.1, 0.0);
  for (int a = 0; a < 2; ++a) quiet.strata[0].failure_hazard[a] = {0.0, 0.0, 0.0, 0.0};
  const auto t0 = oracle_truth(quiet, quiet.landmarks);
  for (int a = 0; a < 2; ++a) {
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(t0.mu[a][j] == 0.0);
      CHECK(t0.eta[a][j] == 1.0);
    }
  }
  auto atom = tiny(0.0, 0.1, 1.0);
  for (int a = 0; a < 2; ++a) atom.strata[0].failure_hazard[a] = {1.0, 0.0, 0.0, 0.0};
  const std::vector<double> lm{0.2, 0.25};
  const auto t1 = oracle_truth(atom, lm);
  CHECK(t1.eta[0][0] == 1.0);
  CHECK(t1.eta[0][1] == 0.0);
}

TEST_CASE("lattice oracle matches the Poisson closed form") {
  const auto sc = lattice("lattice_poisson.json");
  const auto truth = oracle_truth(sc, sc.landmarks);
  for (int a = 0; a < 2; ++a) {
    REQUIRE(truth.mu_closed_form[a].size() == sc.landmarks.size());
    for (std::size_t j = 0; j < sc.landmarks.size(); ++j) {
      CHECK(std::fabs(truth.mu[a][j] - truth.mu_closed_form[a][j]) <= 1e-12);
    }
  }
  CHECK(oracle_truth(lattice("lattice_frailty.json"), sc.landmarks).mu_closed_form[0].empty());
}

TEST_CASE("continuous oracle matches Monte Carlo") {
  const auto sc = std::get<ContinuousScenario>(load("continuous.json"));
  const auto exact = oracle_truth(sc, sc.landmarks);
  const auto mc = monte_carlo_truth(sc, sc.landmarks, 200000, 3);
  for (int a = 0; a < 2; ++a) {
    for (std::size_t j = 0; j < sc.landmarks.size(); ++j) {
      CHECK(mc.eta[a][j] == doctest::Approx(exact.eta[a][j]).epsilon(0.01));
      CHECK(mc.mu[a][j] == doctest::Approx(exact.mu[a][j]).epsilon(0.02));
    }
  }
}

TEST_CASE("treatment is independent of potential outcomes given L") {
  const auto sc = lattice("lattice_frailty.json");
  const auto sim = simulate(sc, 100000, 99);
  for (std::size_t s = 0; s < sc.strata.size(); ++s) {
    double n[2] = {0, 0};
    double treated[2] = {0, 0};
    for (const auto& f : sim.full) {
      if (f.stratum != s) continue;
      const int early = f.failure[0] <= 0.5 ? 1 : 0;
      n[early] += 1;
      treated[early] += f.arm;
    }
    const double p0 = treated[0] / n[0];
    const double p1 = treated[1] / n[1];
    const double pool = (treated[0] + treated[1]) / (n[0] + n[1]);
    const double z = (p1 - p0) / std::sqrt(pool * (1 - pool) * (1 / n[0] + 1 / n[1]));
    CHECK(std::fabs(z) < 4.0);
    CHECK(pool == doctest::Approx(sc.strata[s].pi1).epsilon(0.03));
  }
}

TEST_CASE("fitted nuisances approach the oracle") {
  const auto sc = lattice("lattice_frailty.json");
  const auto sim = simulate(sc, 20000, 21);
  const auto& ds = sim.observed;
  const auto oracle = oracle_nuisance(sc, ds, sc.landmarks);
  const auto rows = ds.all_rows();
  for (std::size_t s = 0; s < ds.stratum_count(); ++s) {
    for (int a = 0; a < 2; ++a) {
      const auto k = fit_censoring(ds, rows, a, s).survival;
      const auto h = fit_failure(ds, rows, a, s).survival;
      // censoring at tau is never observed: every remaining failure ties with it
      for (double g : sc.grid) {
        if (g >= sc.tau) break;
        CHECK(std::fabs(k(g) - oracle.cell(a, s).censoring_survival(g)) < 0.03);
        CHECK(std::fabs(h(g) - oracle.cell(a, s).failure_survival(g)) < 0.03);
      }
    }
  }
}

TEST_CASE("oracle decomposition") {
  const auto sc = lattice("lattice_frailty.json");
  const auto truth = oracle_truth(sc, sc.grid);
  for (int a = 0; a < 2; ++a) {
    const auto mu = landmark_mu_decomposition(
        truth.eta[a], [&](double u, double t) { return oracle_zeta(sc, a, u, t); }, sc.grid);
    for (std::size_t j = 0; j < sc.grid.size(); ++j) CHECK(std::fabs(mu[j] - truth.mu[a][j]) <= 1e-10);
  }
}

TEST_CASE("scenario documents") {
  CHECK_THROWS_AS(parse_scenario(R"({"kind": "spline"})"), ScenarioError);
  CHECK_THROWS_AS(parse_scenario("{not json"), ScenarioError);
  CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.json"), ScenarioError);
  auto sc = tiny(0.1, 0.1, 1.0);
  sc.strata[0].failure_hazard[0] = {0.1, 0.1, 0.1, 0.1};
  CHECK_THROWS_AS(sc.validate_for_simulation(), ScenarioError);
  auto thin = tiny(0.1, 0.9, 1.0);
  CHECK_THROWS_AS(simulate(thin, 10, 1), ScenarioError);
  CHECK(scenario_name(load("continuous.json")) == "exponential_poisson");
}

TEST_CASE("small experiment writes one row per misspecification and component") {
  const Scenario sc = load("lattice_poisson.json");
  ExperimentOptions opts;
  opts.n = 300;
  opts.replicates = 3;
  opts.seed = 2;
  opts.folds = 2;
  opts.misspecs = {Misspecification::none, Misspecification::both};
  const auto res = robustness_experiment(sc, opts);
  CHECK(res.rows.size() == 2 * 4 * 3);
  std::ostringstream csv;
  write_experiment_csv(csv, res.rows);
  CHECK(csv.str().rfind("scenario,misspec,component,landmark,bias,se,coverage\n", 0) == 0);
  CHECK(csv.str().find(",both,") != std::string::npos);
  const auto again = robustness_experiment(sc, opts);
  CHECK(again.estimates == res.estimates);
}
