#include <doctest.h>

#include <cmath>
#include <map>
#include <stdexcept>

#include "recur/nuisance.hpp"

using namespace recur;

namespace {

SubjectRecord rec(std::string id, int arm, double x, bool failed, std::vector<double> events = {},
                  std::string cov = "0") {
  SubjectRecord r;
  r.id = std::move(id);
  r.arm = arm;
  r.followup = x;
  r.failed = failed;
  r.event_times = std::move(events);
  r.covariates = {std::move(cov)};
  return r;
}

Dataset cell(const std::vector<std::pair<double, bool>>& xd) {
  std::vector<SubjectRecord> rs;
  for (std::size_t i = 0; i < xd.size(); ++i) {
    rs.push_back(rec("s" + std::to_string(i), 1, xd[i].first, xd[i].second));
  }
  return Dataset(std::move(rs));
}

}  // namespace

TEST_CASE("propensity is the stratum proportion") {
  const Dataset ds({rec("a", 1, 1, true, {}, "x"), rec("b", 1, 1, true, {}, "x"),
                    rec("c", 1, 1, true, {}, "x"), rec("d", 0, 1, true, {}, "x"),
                    rec("e", 1, 1, true, {}, "y"), rec("f", 1, 1, true, {}, "y")});
  const auto pi = fit_propensity(ds);
  CHECK(pi[0] == 0.75);
  CHECK(pi[1] == 1.0);
  const std::vector<std::size_t> rows{0, 3};
  const auto part = fit_propensity(ds, rows);
  CHECK(part[0] == 0.5);
  CHECK(std::isnan(part[1]));
}

TEST_CASE("censoring hazard uses the modified risk set") {
  const Dataset a = cell({{1, true}, {2, false}, {3, true}});
  const auto fit = fit_censoring(a, a.all_rows(), 1, kAllStrata);
  CHECK(fit.hazard.increment_at(2.0) == 0.5);
  CHECK(fit.survival(2.0) == 0.5);
  CHECK(fit.hazard.kind == AtRisk::modified);

  const Dataset b = cell({{2, true}, {2, false}});
  const auto tie = fit_censoring(b, b.all_rows(), 1, kAllStrata);
  CHECK(tie.hazard.increment_at(2.0) == 1.0);
  CHECK(tie.survival(2.0) == 0.0);

  const Dataset c = cell({{1, true}, {2, true}});
  const auto none = fit_censoring(c, c.all_rows(), 1, kAllStrata);
  CHECK(none.survival.constant());
  CHECK(none.survival(5.0) == 1.0);
}

TEST_CASE("failure hazard uses the standard risk set") {
  const Dataset a = cell({{1, true}, {2, false}, {3, true}});
  const auto fit = fit_failure(a, a.all_rows(), 1, kAllStrata);
  CHECK(fit.hazard.increment_at(1.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(fit.hazard.increment_at(3.0) == 1.0);
  CHECK(fit.survival(3.0) == 0.0);

  const Dataset b = cell({{2, true}, {2, false}});
  const auto tie = fit_failure(b, b.all_rows(), 1, kAllStrata);
  CHECK(tie.hazard.increment_at(2.0) == 0.5);
  CHECK(tie.survival(2.0) == 0.5);

  const Dataset c = cell({{1, false}, {2, false}});
  CHECK(fit_failure(c, c.all_rows(), 1, kAllStrata).survival.constant());
}

TEST_CASE("fits reject empty cells") {
  const Dataset a = cell({{1, true}});
  CHECK_THROWS_AS(fit_censoring(a, a.all_rows(), 0, kAllStrata), std::invalid_argument);
  CHECK_THROWS_AS(fit_failure(a, a.all_rows(), 0, 0), std::invalid_argument);
}

TEST_CASE("induced hazard inverts the product integral") {
  const StepFunction s(1.0, {1.0, 2.0, 4.0}, {0.8, 0.4, 0.0});
  const auto h = induced_hazard(s, AtRisk::standard);
  CHECK(h.increment_at(1.0) == doctest::Approx(0.2));
  CHECK(h.increment_at(2.0) == doctest::Approx(0.5));
  CHECK(h.increment_at(4.0) == 1.0);
  const auto back = h.survival();
  CHECK(back(2.0) == doctest::Approx(0.4));
  CHECK(back(4.0) == 0.0);
}

TEST_CASE("outcome regression averages weighted counts") {
  const Dataset ds({rec("a", 1, 5.0, true, {1.0, 2.0}), rec("b", 1, 1.0, true, {0.5})});
  const auto rows = ds.all_rows();
  const auto h = fit_failure(ds, rows, 1, 0).survival;
  const auto f = fit_outcome(ds, rows, 1, 0, StepFunction(1.0), h, 0.01, 1000.0);
  CHECK((*f)(2.0, 3.0) == doctest::Approx(1.0));
  CHECK((*f)(0.0, 3.0) == doctest::Approx(1.5));
  CHECK((*f)(5.0, 3.0) == 0.0);
  CHECK((*f)(7.0, 3.0) == 0.0);
  CHECK(f->origin_curve()(3.0) == doctest::Approx(1.5));
}

TEST_CASE("outcome regression is zero without failures") {
  const Dataset ds({rec("a", 1, 5.0, false, {1.0}), rec("b", 1, 1.0, false, {0.5})});
  const auto rows = ds.all_rows();
  const auto f = fit_outcome(ds, rows, 1, 0, StepFunction(1.0), StepFunction(1.0), 0.01, 1000.0);
  CHECK((*f)(0.0, 3.0) == 0.0);
}

TEST_CASE("ipcw weights") {
  const StepFunction k(1.0, {1.0, 2.0}, {0.5, 0.0});
  std::size_t dropped = 0;
  CHECK(ipcw_weight(rec("a", 1, 1.5, true), k, 0.01, &dropped) == 2.0);
  CHECK(ipcw_weight(rec("b", 1, 1.0, true), k, 0.01, &dropped) == 1.0);
  CHECK(ipcw_weight(rec("c", 1, 1.5, false), k, 0.01, &dropped) == 0.0);
  CHECK(dropped == 0);
  CHECK(ipcw_weight(rec("d", 1, 3.0, true), k, 0.01, &dropped) == 0.0);
  CHECK(dropped == 1);
  CHECK(ipcw_weight(rec("e", 1, 1.5, true), k, 0.8) == 1.25);
}

TEST_CASE("fold assignment") {
  std::vector<SubjectRecord> rs;
  for (int i = 0; i < 10; ++i) rs.push_back(rec("s" + std::to_string(i), i % 2, 1.0 + i, true));
  const Dataset ds(std::move(rs));
  const auto f1 = assign_folds(ds, 2, 42);
  const auto f2 = assign_folds(ds, 2, 42);
  CHECK(f1 == f2);
  std::map<std::size_t, int> sizes;
  for (auto f : f1) ++sizes[f];
  CHECK(sizes[0] == 5);
  CHECK(sizes[1] == 5);

  const std::vector<int> arms{0, 1};
  const std::vector<double> lm{1.0};
  CHECK_THROWS_AS(CrossFitNuisance::cross_fit(ds, 1, 1, arms, lm, {}), std::invalid_argument);
  CHECK_THROWS_AS(CrossFitNuisance::cross_fit(ds, 11, 1, arms, lm, {}), std::invalid_argument);
}

TEST_CASE("leave-one-out needs coverage") {
  std::vector<SubjectRecord> rs;
  for (int i = 0; i < 6; ++i) rs.push_back(rec("s" + std::to_string(i), i % 2, 1.0 + i, true));
  const Dataset ds(std::move(rs));
  const std::vector<int> arms{0, 1};
  const std::vector<double> lm{1.0};
  const auto loo = CrossFitNuisance::cross_fit(ds, 6, 3, arms, lm, {});
  CHECK(loo.fold_count() == 6);

  std::vector<SubjectRecord> thin{rec("a", 1, 1.0, true), rec("b", 0, 2.0, true),
                                  rec("c", 0, 3.0, true)};
  const Dataset sparse(std::move(thin));
  CHECK_THROWS_AS(CrossFitNuisance::cross_fit(sparse, 3, 3, arms, lm, {}), CoverageError);
}

TEST_CASE("misspecification names") {
  for (auto m : {Misspecification::none, Misspecification::pi_k, Misspecification::f_h,
                 Misspecification::both}) {
    CHECK(parse_misspecification(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_misspecification("bogus"), std::invalid_argument);
}
