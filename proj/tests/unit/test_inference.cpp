#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "recur/inference.hpp"
#include "recur/simulation.hpp"

using namespace recur;

namespace {

/// F scaled by a constant factor.
class ScaledOutcome final : public OutcomeRegression {
 public:
  ScaledOutcome(std::shared_ptr<const OutcomeRegression> base, double factor)
      : base_(std::move(base)), factor_(factor) {}
  StepFunction profile(double t, std::size_t* truncated) const override {
    return scale(base_->profile(t, truncated));
  }
  StepFunction origin_curve() const override { return scale(base_->origin_curve()); }

 private:
  StepFunction scale(const StepFunction& f) const {
    std::vector<double> v(f.jump_values().begin(), f.jump_values().end());
    for (auto& x : v) x *= factor_;
    return StepFunction(f.initial_value() * factor_,
                        std::vector<double>(f.jump_times().begin(), f.jump_times().end()), v);
  }
  std::shared_ptr<const OutcomeRegression> base_;
  double factor_;
};

NuisanceSet perturb(const NuisanceSet& truth, double dpi, double fscale, double kshift) {
  NuisanceSet out(truth.stratum_count(), truth.landmarks());
  for (int a = 0; a < 2; ++a) {
    for (std::size_t s = 0; s < truth.stratum_count(); ++s) {
      const auto& c = truth.cell(a, s);
      StepFunction k = c.censoring_survival;
      if (kshift != 0.0) {
        std::vector<double> v(k.jump_values().begin(), k.jump_values().end());
        for (auto& x : v) x *= 1.0 - kshift;
        k = StepFunction(1.0, std::vector<double>(k.jump_times().begin(), k.jump_times().end()), v);
      }
      auto f = std::make_shared<ScaledOutcome>(c.outcome, fscale);
      out.set(a, s, make_cell(c.propensity + dpi, k, c.failure_survival, f, truth.landmarks()));
    }
  }
  return out;
}

LatticeScenario poisson_scenario() {
  return std::get<LatticeScenario>(load_scenario(RECUR_TEST_DATA "/lattice_poisson.json"));
}

}  // namespace

TEST_CASE("sandwich covariance") {
  Matrix d(2, 1);
  d(0, 0) = -1.0;
  d(1, 0) = 1.0;
  CHECK(sandwich_covariance(d)(0, 0) == 1.0);

  EstimationResult est;
  est.layout = {{Kind::mu, 1, 0}};
  est.initial = {0.5};
  est.projected = {0.5};
  est.influence = d;
  const auto rep = sandwich_inference(est, 0.05);
  CHECK(rep.se[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(rep.ci[0].lower == doctest::Approx(0.5 - 1.959963984540054 / std::sqrt(2.0)));

  const auto zero = sandwich_covariance(Matrix(5, 3));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(zero(i, j) == 0.0);
  }
}

TEST_CASE("normal quantile and wald interval") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
  const auto ci = wald_interval(1.0, 0.5, 0.1);
  CHECK(ci.lower == doctest::Approx(1.0 - 1.6448536269514722 * 0.5));
  CHECK_THROWS_AS(wald_interval(1.0, 0.5, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(wald_interval(1.0, 0.5, 1.0), std::invalid_argument);
}

TEST_CASE("variance method names") {
  CHECK(parse_variance_method("bootstrap") == VarianceMethod::bootstrap);
  CHECK(to_string(VarianceMethod::sandwich) == "sandwich");
  CHECK_THROWS(parse_variance_method("jackknife"));
}

TEST_CASE("bootstrap of a single subject is degenerate") {
  SubjectRecord r;
  r.id = "only";
  r.arm = 1;
  r.followup = 2.0;
  r.failed = true;
  r.event_times = {0.5};
  const Dataset ds({r});
  EstimationConfig cfg;
  cfg.grid = LandmarkGrid({1.0}, 2.0);
  cfg.arms = {1};
  cfg.estimator = Estimator::ipw1;
  cfg.crossfit = false;
  const auto base = estimate(ds, cfg);
  BootstrapOptions opts;
  opts.replicates = 2;
  opts.seed = 3;
  const auto cov = bootstrap_covariance(ds, cfg, base, opts);
  for (std::size_t i = 0; i < cov.rows(); ++i) {
    for (std::size_t j = 0; j < cov.cols(); ++j) CHECK(cov(i, j) == 0.0);
  }
}

TEST_CASE("bootstrap is reproducible") {
  const auto sim = simulate(poisson_scenario(), 300, 5);
  EstimationConfig cfg;
  cfg.grid = LandmarkGrid({0.3, 0.6}, 1.0);
  cfg.folds = 2;
  cfg.seed = 9;
  const auto base = estimate(sim.observed, cfg);
  BootstrapOptions opts;
  opts.replicates = 10;
  opts.seed = 4;
  const auto a = bootstrap_covariance(sim.observed, cfg, base, opts);
  const auto b = bootstrap_covariance(sim.observed, cfg, base, opts);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    CHECK(a(i, i) > 0.0);
    for (std::size_t j = 0; j < a.cols(); ++j) CHECK(a(i, j) == b(i, j));
  }
  opts.refit_nuisance = false;
  const auto frozen = bootstrap_covariance(sim.observed, cfg, base, opts);
  CHECK(frozen(0, 0) > 0.0);
}

TEST_CASE("remainders vanish at the truth") {
  const auto sc = poisson_scenario();
  const auto truth = oracle_nuisance(sc, sc.landmarks);
  const LandmarkGrid grid(sc.landmarks, sc.tau);
  const std::vector<double> w{0.5, 0.5};
  for (int a = 0; a < 2; ++a) {
    for (const auto& r : evaluate_remainder(truth, truth, grid, a, w, 1e-9)) {
      CHECK(r.r1 == 0.0);
      CHECK(r.r2 == 0.0);
      CHECK(r.r3 == 0.0);
      CHECK(r.r4 == 0.0);
      CHECK(r.r5 == 0.0);
      CHECK(std::fabs(r.exact_mu) <= 1e-15);
      CHECK(std::fabs(r.exact_eta) <= 1e-15);
    }
  }
}

TEST_CASE("propensity-only error leaves the censoring terms at zero") {
  const auto sc = poisson_scenario();
  const auto truth = oracle_nuisance(sc, sc.landmarks);
  const LandmarkGrid grid(sc.landmarks, sc.tau);
  const std::vector<double> w{0.5, 0.5};
  const auto bar = perturb(truth, 0.05, 1.0, 0.0);
  for (const auto& r : evaluate_remainder(bar, truth, grid, 1, w, 1e-9)) {
    CHECK(r.r3 == 0.0);
    CHECK(r.r4 == 0.0);
    CHECK(r.r5 == 0.0);
    CHECK(r.r1 == 0.0);
    CHECK(std::fabs(r.exact_mu) <= 1e-15);
  }
  const auto both = perturb(truth, 0.05, 1.0, 0.1);
  CHECK(evaluate_remainder(both, truth, grid, 1, w, 1e-9)[0].r5 == 0.0);
}

TEST_CASE("remainder is second order") {
  const auto sc = poisson_scenario();
  const auto truth = oracle_nuisance(sc, sc.landmarks);
  const LandmarkGrid grid(sc.landmarks, sc.tau);
  const std::vector<double> w{0.5, 0.5};
  std::vector<double> r1;
  std::vector<double> exact;
  for (double d : {0.1, 0.05, 0.025}) {
    const auto r = evaluate_remainder(perturb(truth, d, 1.0 + d, 0.0), truth, grid, 0, w, 1e-9);
    r1.push_back(r[1].r1);
    exact.push_back(r[1].exact_mu);
  }
  CHECK(r1[0] / r1[1] == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(r1[1] / r1[2] == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(exact[0] / exact[1] == doctest::Approx(4.0).epsilon(0.15));
  CHECK(exact[1] / exact[2] == doctest::Approx(4.0).epsilon(0.15));
}
