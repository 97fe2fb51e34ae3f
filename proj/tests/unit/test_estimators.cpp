#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "recur/estimators.hpp"
#include "recur/parallel.hpp"
#include "../support/fuzz.hpp"

using namespace recur;

namespace {

SubjectRecord rec(std::string id, int arm, double x, bool failed, std::vector<double> events = {}) {
  SubjectRecord r;
  r.id = std::move(id);
  r.arm = arm;
  r.followup = x;
  r.failed = failed;
  r.event_times = std::move(events);
  return r;
}

CellNuisance flat_cell(double p, StepFunction k = StepFunction(1.0), StepFunction h = StepFunction(1.0),
                       double f0 = 0.0, std::vector<double> landmarks = {1.0, 2.0, 3.0}) {
  auto f = std::make_shared<testing::GridOutcome>(
      std::vector<double>{1.0, 2.0, 3.0}, [f0](double u, double) { return u < 1.0 ? f0 : 0.0; });
  return make_cell(p, k, h, std::move(f), landmarks);
}

/// Same cell for every arm of a covariate-free dataset.
CrossFitNuisance fixed_nuisance(const Dataset& ds, const CellNuisance& one, const CellNuisance& zero,
                                std::vector<double> landmarks) {
  NuisanceSet set(ds.stratum_count(), std::move(landmarks));
  for (std::size_t s = 0; s < ds.stratum_count(); ++s) {
    set.set(0, s, zero);
    set.set(1, s, one);
  }
  return CrossFitNuisance::fixed(ds, std::move(set));
}

EstimationConfig config(Estimator e, std::vector<double> landmarks, double tau,
                        std::vector<int> arms = {0, 1}) {
  EstimationConfig cfg;
  cfg.grid = LandmarkGrid(std::move(landmarks), tau);
  cfg.arms = std::move(arms);
  cfg.estimator = e;
  cfg.check_positivity = false;
  cfg.fit.eps = 1e-9;
  return cfg;
}

}  // namespace

TEST_CASE("phi terms") {
  const auto cell = flat_cell(1.0);
  const auto r = rec("a", 1, 4.0, true, {0.5, 1.0, 2.0});
  CHECK(phi_mu(r, 1, 3.0, cell, 0.01) == 3.0);
  CHECK(phi_mu(r, 0, 3.0, cell, 0.01) == 0.0);
  CHECK(phi_mu(rec("b", 1, 4.0, false, {1.0}), 1, 3.0, cell, 0.01) == 0.0);
  CHECK(phi_eta(r, 1, 3.0, cell, 0.01) == 1.0);
  CHECK(phi_eta(r, 1, 4.0, cell, 0.01) == 0.0);
}

TEST_CASE("eif examples") {
  const auto cell = flat_cell(1.0);
  const auto r = rec("a", 1, 4.0, true, {0.5, 1.0, 2.0});
  CHECK(eif_mu(r, 1, 2.0, cell, 0.01, 0.7) == doctest::Approx(3.0 - 0.7));
  CHECK(eif_eta(r, 1, 2.0, cell, 0.01, 0.25) == doctest::Approx(0.75));

  const StepFunction h(1.0, {1.0}, {0.6});
  const auto half = flat_cell(0.5, StepFunction(1.0), h, 1.8);
  const auto other = rec("b", 0, 4.0, true, {0.5});
  CHECK(eif_mu(other, 1, 2.0, half, 0.01, 0.4) == doctest::Approx(-0.4 + 1.8));
  CHECK(eif_eta(other, 1, 2.0, half, 0.01, 0.4) == doctest::Approx(-0.4 + 0.6));
  CHECK(eif_eta_gcomp(other, 1, 2.0, half, 0.01, 0.4) == doctest::Approx(-0.4 + 0.6));

  const auto censored = rec("c", 1, 3.0, false);
  CHECK(eif_eta_gcomp(censored, 1, 2.0, flat_cell(0.5), 0.01, 0.1) == doctest::Approx(0.9));
}

TEST_CASE("class element with zero indices is phi") {
  const auto cell = flat_cell(0.4, StepFunction(1.0, {1.0, 2.0}, {0.7, 0.3}));
  const auto r = rec("a", 1, 2.5, true, {1.0, 2.0});
  const auto zero = [](double) { return 0.0; };
  CHECK(class_element(r, Kind::mu, 1, 3.0, cell, 0.01, 0.0, zero) == phi_mu(r, 1, 3.0, cell, 0.01));
  CHECK(class_element(r, Kind::eta, 1, 2.0, cell, 0.01, 0.0, zero) == phi_eta(r, 1, 2.0, cell, 0.01));
}

TEST_CASE("class element reproduces the IPW2 eta term") {
  Rng rng(31);
  const auto grid = testing::eighths(24);
  for (int rep = 0; rep < 300; ++rep) {
    const auto cell = testing::random_cell(rng, grid, {1.0}, 1e-3, 1e-3);
    const auto r = testing::random_record(rng, grid, 1);
    const double t = 1.0;
    const auto& k = cell.censoring_survival;
    const double p = cell.propensity;
    const auto h2 = [&](double u) { return u > t ? 1.0 / (p * k(u)) : 0.0; };
    const double lhs = ipw2_eta_term(r, 1, t, cell, 1e-9);
    CHECK(std::fabs(lhs - class_element(r, Kind::eta, 1, t, cell, 1e-9, 0.0, h2)) <= 1e-10);
  }
}

TEST_CASE("double-IPW and Su terms are class elements") {
  Rng rng(77);
  const auto grid = testing::eighths(24);
  const std::vector<double> lm{1.0, 2.0};
  for (int rep = 0; rep < 500; ++rep) {
    const auto cell = testing::random_cell(rng, grid, lm, 1e-4, 1e-4);
    const auto r = testing::random_record(rng, grid, rng.uniform() < 0.8 ? 1 : 0);
    const double t = lm[static_cast<std::size_t>(rng.below(2))];
    const double p = cell.propensity;
    const auto& k = cell.censoring_survival;
    const auto& f0 = cell.outcome_origin;
    const double treated = r.arm == 1 ? 1.0 : 0.0;
    const auto n_at = [&](double u) { return static_cast<double>(r.events_through(std::min(u, t))); };
    const auto schaubel = [&](double u) { return treated / p * n_at(u) / k(u); };
    const auto su = [&](double u) {
      const double shift = u <= t ? f0(t) - f0(u) : 0.0;
      return treated / p * (n_at(u) + shift) / k(u);
    };
    const double d = double_ipw_term(r, 1, t, cell, 1e-9) -
                     class_element(r, Kind::mu, 1, t, cell, 1e-9, 0.0, schaubel);
    CHECK(std::fabs(d) <= 1e-10);
    const double s = su_modified_term(r, 1, t, cell, 1e-9) -
                     class_element(r, Kind::mu, 1, t, cell, 1e-9, f0(t) / p, su);
    CHECK(std::fabs(s) <= 1e-10);
  }
}

TEST_CASE("two eta influence forms agree") {
  Rng rng(404);
  const auto grid = testing::eighths(32);
  const std::vector<double> lm{0.5, 1.5, 3.0};
  for (int rep = 0; rep < 1000; ++rep) {
    const auto cell = testing::random_cell(rng, grid, lm, 0.01, 1e-6);
    const auto r = testing::random_record(rng, grid, rng.uniform() < 0.9 ? 1 : 0);
    for (double t : lm) {
      const double a = eif_eta(r, 1, t, cell, 1e-9, 0.3);
      const double b = eif_eta_gcomp(r, 1, t, cell, 1e-9, 0.3);
      CHECK(std::fabs(a - b) <= 1e-10);
    }
  }
}

TEST_CASE("two eta influence forms agree relatively when K is tiny") {
  Rng rng(405);
  const auto grid = testing::eighths(32);
  const std::vector<double> lm{0.5, 1.5, 3.0};
  for (int rep = 0; rep < 1000; ++rep) {
    const auto cell = testing::random_cell(rng, grid, lm, 1e-6, 1e-6);
    const auto r = testing::random_record(rng, grid, 1);
    for (double t : lm) {
      const double a = eif_eta(r, 1, t, cell, 1e-9, 0.3);
      const double b = eif_eta_gcomp(r, 1, t, cell, 1e-9, 0.3);
      CHECK(std::fabs(a - b) <= 1e-10 * std::max(1.0, std::fabs(a)));
    }
  }
}

TEST_CASE("IPW1 on a two-subject sample") {
  const Dataset ds({rec("a", 1, 1.0, true), rec("b", 1, 3.0, true)});
  const auto cell = flat_cell(1.0, StepFunction(1.0), StepFunction(1.0), 0.0, {2.0});
  const auto nz = fixed_nuisance(ds, cell, cell, {2.0});
  const auto cfg = config(Estimator::ipw1, {2.0}, 3.0, {1});
  const auto res = estimate_with(ds, cfg, nz);
  REQUIRE(res.layout.size() == 2);
  CHECK(res.layout[1].kind == Kind::eta);
  CHECK(res.initial[1] == 0.5);
  CHECK(res.initial[0] == 0.0);
}

TEST_CASE("IPW3 normalizes by the realised arm share") {
  std::vector<SubjectRecord> rs;
  for (int i = 0; i < 8; ++i) rs.push_back(rec("s" + std::to_string(i), i < 2 ? 1 : 0, 0.5 + i * 0.5, true));
  const Dataset ds(rs);
  const auto cell = flat_cell(0.5, StepFunction(1.0), StepFunction(1.0), 0.0, {0.75});
  const auto nz = fixed_nuisance(ds, cell, cell, {0.75});
  const auto cfg1 = config(Estimator::ipw1, {0.75}, 4.0, {1});
  auto cfg3 = cfg1;
  cfg3.estimator = Estimator::ipw3;
  const double v1 = estimate_with(ds, cfg1, nz).initial[1];
  const double v3 = estimate_with(ds, cfg3, nz).initial[1];
  CHECK(v3 == doctest::Approx(v1 / (2.0 / 8.0) * 0.5));
}

TEST_CASE("IPW3 equals IPW1 when every subject has the arm") {
  const Dataset ds({rec("a", 1, 1.0, true), rec("b", 1, 3.0, true), rec("c", 1, 2.5, false)});
  const auto cell = flat_cell(1.0, StepFunction(1.0), StepFunction(1.0), 0.0, {2.0});
  const auto nz = fixed_nuisance(ds, cell, cell, {2.0});
  const auto cfg1 = config(Estimator::ipw1, {2.0}, 3.0, {1});
  auto cfg3 = cfg1;
  cfg3.estimator = Estimator::ipw3;
  CHECK(estimate_with(ds, cfg1, nz).initial == estimate_with(ds, cfg3, nz).initial);
}

TEST_CASE("degenerate normalizer") {
  const Dataset ds({rec("a", 0, 1.0, true), rec("b", 0, 3.0, true)});
  const auto cell = flat_cell(0.5, StepFunction(1.0), StepFunction(1.0), 0.0, {2.0});
  const auto nz = fixed_nuisance(ds, cell, cell, {2.0});
  CHECK_THROWS_AS(estimate_with(ds, config(Estimator::ipw3, {2.0}, 3.0, {1}), nz), std::domain_error);
}

TEST_CASE("double-IPW examples") {
  const Dataset ds({rec("a", 1, 3.0, true, {1.0, 2.0}), rec("b", 1, 3.0, true), rec("c", 0, 3.0, true, {1.0}),
                    rec("d", 0, 3.0, false)});
  const auto cell = flat_cell(0.5, StepFunction(1.0), StepFunction(1.0), 0.0, {2.5});
  const auto nz = fixed_nuisance(ds, cell, cell, {2.5});
  auto cfg = config(Estimator::double_ipw, {2.5}, 3.0, {1});
  const auto res = estimate_with(ds, cfg, nz);
  REQUIRE(res.layout.size() == 1);
  CHECK(res.initial[0] == 1.0);

  const Dataset quiet({rec("a", 1, 3.0, true), rec("b", 1, 1.0, false)});
  CHECK(estimate_with(quiet, cfg, fixed_nuisance(quiet, cell, cell, {2.5})).initial[0] == 0.0);

  const auto k = StepFunction(1.0, {0.5}, {0.5});
  CHECK(double_ipw_term(rec("a", 1, 2.0, false, {1.0}), 1, 1.5, flat_cell(1.0, k), 0.01) == 2.0);
  CHECK(double_ipw_term(rec("a", 1, 2.0, false, {1.0}), 1, 0.9, flat_cell(1.0, k), 0.01) == 0.0);
}

TEST_CASE("Su term without censoring") {
  const StepFunction h(1.0, {1.0}, {0.5});
  const auto cell = flat_cell(0.4, StepFunction(1.0), h, 1.2);
  const auto treated = rec("a", 1, 3.0, true, {0.5, 1.5});
  const auto control = rec("b", 0, 3.0, true, {0.5});
  CHECK(su_modified_term(treated, 1, 2.0, cell, 0.01) ==
        doctest::Approx(2.0 / 0.4 - 0.6 / 0.4 * 1.2));
  CHECK(su_modified_term(control, 1, 2.0, cell, 0.01) == doctest::Approx(0.4 / 0.4 * 1.2));

  const Dataset ds({treated, rec("c", 1, 2.5, false, {1.0, 2.0, 2.5})});
  const auto one = flat_cell(1.0, StepFunction(1.0), h, 1.2, {2.0});
  auto cfg = config(Estimator::su_mod, {2.0}, 3.0, {1});
  CHECK(estimate_with(ds, cfg, fixed_nuisance(ds, one, one, {2.0})).initial[0] == doctest::Approx(2.0));
}

TEST_CASE("one-step without censoring is the sample mean") {
  const Dataset ds({rec("a", 1, 3.0, true, {0.5, 1.5}), rec("b", 1, 1.0, true, {0.2}),
                    rec("c", 1, 2.5, true, {1.0, 2.0, 2.5})});
  const StepFunction h(1.0, {1.0, 2.5, 3.0}, {2.0 / 3.0, 1.0 / 3.0, 0.0});
  const auto cell = flat_cell(1.0, StepFunction(1.0), h, 0.9, {2.0});
  const auto res = estimate_with(ds, config(Estimator::onestep, {2.0}, 3.0, {1}),
                                 fixed_nuisance(ds, cell, cell, {2.0}));
  CHECK(res.initial[0] == doctest::Approx(5.0 / 3.0));
  CHECK(res.initial[1] == doctest::Approx(2.0 / 3.0));
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(std::fabs(compensated_mean(res.influence.column(c))) <= 1e-14);
  }
}

TEST_CASE("positivity breaches name cells") {
  const Dataset ds({rec("a", 1, 3.0, true), rec("b", 0, 3.0, true)});
  const auto bad = flat_cell(0.005);
  const auto ok = flat_cell(0.5);
  auto cfg = config(Estimator::onestep, {2.0}, 3.0);
  cfg.check_positivity = true;
  cfg.fit.eps = 0.01;
  try {
    estimate_with(ds, cfg, fixed_nuisance(ds, bad, ok, {2.0}));
    FAIL("expected PositivityError");
  } catch (const PositivityError& e) {
    REQUIRE(e.cells().size() == 1);
    CHECK(e.cells()[0].find("arm 1") != std::string::npos);
  }
}

TEST_CASE("estimator names") {
  for (auto e : {Estimator::onestep, Estimator::ipw1, Estimator::ipw2, Estimator::ipw3, Estimator::ipw4,
                 Estimator::double_ipw, Estimator::su_mod}) {
    CHECK(parse_estimator(to_string(e)) == e);
  }
  CHECK_THROWS_AS(parse_estimator("ipw9"), std::invalid_argument);
}

TEST_CASE("pava examples") {
  const auto fit = pava(std::vector<double>{0.2, 0.1, 0.4});
  CHECK(fit[0] == doctest::Approx(0.15));
  CHECK(fit[1] == doctest::Approx(0.15));
  CHECK(fit[2] == 0.4);
  const std::vector<double> mono{0.1, 0.2, 0.2, 0.9};
  CHECK(pava(mono) == mono);
}

TEST_CASE("pava is the least-squares monotone fit") {
  Rng rng(8);
  const double step = 0.05;
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> y(3);
    for (auto& v : y) v = std::round(rng.uniform() / step) * step;
    const auto fit = pava(y);
    CHECK(std::is_sorted(fit.begin(), fit.end()));
    double sse = 0.0;
    for (std::size_t i = 0; i < 3; ++i) sse += (fit[i] - y[i]) * (fit[i] - y[i]);
    double best = std::numeric_limits<double>::infinity();
    const double fine = step / 6.0;
    for (double a = 0.0; a <= 1.0 + 1e-9; a += fine) {
      for (double b = a; b <= 1.0 + 1e-9; b += fine) {
        for (double c = b; c <= 1.0 + 1e-9; c += fine) {
          best = std::min(best, (a - y[0]) * (a - y[0]) + (b - y[1]) * (b - y[1]) + (c - y[2]) * (c - y[2]));
        }
      }
    }
    CHECK(sse <= best + 1e-12);
    CHECK(pava(fit) == fit);
  }
}

TEST_CASE("isotonize clips then projects per arm") {
  const std::vector<int> arms{0, 1};
  const auto layout = component_layout(arms, 2);
  // layout: mu_0, mu_1, eta_0, eta_1 at landmark 0, then landmark 1
  const std::vector<double> v{0.5, -0.2, 0.9, 0.7, 0.3, 0.4, 1.1, 0.8};
  const auto out = isotonize(layout, v);
  CHECK(out[0] == doctest::Approx(0.4));
  CHECK(out[4] == doctest::Approx(0.4));
  CHECK(out[1] == 0.0);
  CHECK(out[5] == 0.4);
  CHECK(out[2] == doctest::Approx(0.95));
  CHECK(out[6] == doctest::Approx(0.95));
  CHECK(out[3] == doctest::Approx(0.75));
  CHECK(out[7] == doctest::Approx(0.75));
  const std::vector<double> fine{0.1, 0.2, 0.9, 0.8, 0.3, 0.4, 0.5, 0.6};
  CHECK(isotonize(layout, fine) == fine);
}

TEST_CASE("while-alive ratio") {
  const StepFunction mu(0.0, {1.0, 2.0}, {0.5, 1.5});
  CHECK(while_alive_ratio(mu, StepFunction(1.0), 2.0) == 1.5);
  CHECK(while_alive_ratio(StepFunction(0.0, {1.0}, {0.5}), StepFunction(1.0, {0.5}, {0.5}), 2.0) == 1.0);
  CHECK_THROWS_AS(while_alive_ratio(mu, StepFunction(1.0, {2.0}, {0.0}), 3.0), std::domain_error);
}

TEST_CASE("landmark decomposition examples") {
  const std::vector<double> lm{1.0, 2.0};
  const std::vector<double> eta{0.8, 0.5};
  const auto zero = landmark_mu_decomposition(eta, [](double, double) { return 0.0; }, lm);
  CHECK(zero == std::vector<double>{0.0, 0.0});
  const auto zeta = [](double u, double t) { return u * u + t; };
  const auto one = landmark_mu_decomposition(std::vector<double>{0.8}, zeta, std::vector<double>{1.0});
  CHECK(one[0] == doctest::Approx(1.0));
  const auto two = landmark_mu_decomposition(eta, zeta, lm);
  CHECK(two[1] == doctest::Approx(1.0 + 0.8 * (5.0 - 2.0)));
}
