#include "recur/inference.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

#include "recur/parallel.hpp"
#include "recur/random.hpp"

namespace recur {

Matrix sandwich_covariance(const Matrix& influence) {
  const std::size_t n = influence.rows();
  const std::size_t p = influence.cols();
  Matrix out(p, p);
  if (n == 0) return out;
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = a; b < p; ++b) {
      CompensatedSum s;
      for (std::size_t i = 0; i < n; ++i) s.add(influence(i, a) * influence(i, b));
      out(a, b) = out(b, a) = s.value() / static_cast<double>(n);
    }
  }
  return out;
}

double normal_quantile(double p) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, p);
}

ConfidenceInterval wald_interval(double estimate, double se, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  return {estimate - z * se, estimate + z * se};
}

namespace {

Matrix replicate_covariance(const std::vector<std::vector<double>>& reps, std::size_t p) {
  const std::size_t b = reps.size();
  std::vector<double> mean(p);
  for (std::size_t c = 0; c < p; ++c) {
    CompensatedSum s;
    for (const auto& r : reps) s.add(r[c]);
    mean[c] = s.value() / static_cast<double>(b);
  }
  Matrix out(p, p);
  for (std::size_t x = 0; x < p; ++x) {
    for (std::size_t y = x; y < p; ++y) {
      CompensatedSum s;
      for (const auto& r : reps) s.add((r[x] - mean[x]) * (r[y] - mean[y]));
      out(x, y) = out(y, x) = s.value() / static_cast<double>(b - 1);
    }
  }
  return out;
}

bool cells_complete(const Dataset& ds, std::span<const int> arms) {
  for (std::size_t s = 0; s < ds.stratum_count(); ++s) {
    for (int a : arms) {
      const auto& members = ds.stratum_members(s);
      const bool any = std::any_of(members.begin(), members.end(),
                                   [&](std::size_t i) { return ds[i].arm == a; });
      if (!any) return false;
    }
  }
  return true;
}

}  // namespace

Matrix bootstrap_covariance(const Dataset& ds, const EstimationConfig& cfg,
                            const EstimationResult& base, const BootstrapOptions& opts) {
  if (opts.replicates < 2) throw std::invalid_argument("bootstrap needs at least 2 replicates");
  const std::size_t n = ds.size();
  const std::size_t p = base.layout.size();
  if (n == 0) throw std::invalid_argument("empty dataset");
  std::vector<std::vector<double>> reps(opts.replicates);

  parallel_for(opts.replicates, [&](std::size_t b) {
    const std::uint64_t stream = derive_seed(opts.seed, b);
    if (!opts.refit_nuisance) {
      Rng rng(stream);
      std::vector<CompensatedSum> acc(p);
      for (std::size_t k = 0; k < n; ++k) {
        const auto row = base.influence.row(static_cast<std::size_t>(rng.below(n)));
        for (std::size_t c = 0; c < p; ++c) acc[c].add(row[c]);
      }
      reps[b].resize(p);
      for (std::size_t c = 0; c < p; ++c) {
        reps[b][c] = base.initial[c] + acc[c].value() / static_cast<double>(n);
      }
      return;
    }
    EstimationConfig local = cfg;
    local.check_positivity = false;
    std::string last;
    for (std::size_t attempt = 0; attempt <= opts.max_redraws; ++attempt) {
      const std::uint64_t seed = derive_seed(stream, attempt);
      Rng rng(seed);
      std::vector<std::size_t> rows(n);
      for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
      const Dataset resample = ds.select(rows);
      if (!cells_complete(resample, cfg.arms)) {
        last = "empty (arm, stratum) cell";
        continue;
      }
      local.seed = derive_seed(seed, 0xB007);
      try {
        auto est = estimate(resample, local);
        if (est.layout.size() != p) throw std::logic_error("bootstrap layout mismatch");
        reps[b] = std::move(est.initial);
        return;
      } catch (const CoverageError& e) {
        last = e.what();
      }
    }
    throw std::runtime_error("bootstrap replicate " + std::to_string(b) + ": gave up after " +
                             std::to_string(opts.max_redraws) + " redraws (" + last + ")");
  });
  return replicate_covariance(reps, p);
}

std::string to_string(VarianceMethod m) {
  return m == VarianceMethod::sandwich ? "sandwich" : "bootstrap";
}

VarianceMethod parse_variance_method(const std::string& name) {
  if (name == "sandwich") return VarianceMethod::sandwich;
  if (name == "bootstrap") return VarianceMethod::bootstrap;
  throw std::invalid_argument("unknown variance method '" + name + "'");
}

InferenceReport inference_from(const EstimationResult& est, Matrix covariance,
                               VarianceMethod method, double alpha) {
  const std::size_t p = est.layout.size();
  if (covariance.rows() != p || covariance.cols() != p) {
    throw std::invalid_argument("covariance has the wrong shape");
  }
  InferenceReport out;
  out.layout = est.layout;
  out.estimate = est.projected;
  out.initial = est.initial;
  out.method = method;
  out.alpha = alpha;
  for (std::size_t c = 0; c < p; ++c) {
    const double se = std::sqrt(std::max(covariance(c, c), 0.0));
    out.se.push_back(se);
    out.ci.push_back(wald_interval(out.estimate[c], se, alpha));
  }
  out.covariance = std::move(covariance);
  return out;
}

InferenceReport sandwich_inference(const EstimationResult& est, double alpha) {
  Matrix cov = sandwich_covariance(est.influence);
  const double n = static_cast<double>(est.influence.rows());
  for (std::size_t a = 0; a < cov.rows(); ++a) {
    for (std::size_t b = 0; b < cov.cols(); ++b) cov(a, b) /= n;
  }
  return inference_from(est, std::move(cov), VarianceMethod::sandwich, alpha);
}

// --- remainders ---

namespace {

std::vector<double> merged_times(std::initializer_list<const StepFunction*> fs) {
  std::set<double> t{0.0};
  for (const auto* f : fs) {
    for (double u : f->jump_times()) t.insert(u);
  }
  return {t.begin(), t.end()};
}

/// sup over points of |bar - truth| / truth, skipping points where truth is 0.
double sup_relative(const std::vector<double>& points, const std::function<double(double)>& bar,
                    const std::function<double(double)>& truth) {
  double out = 0.0;
  for (double u : points) {
    const double t0 = truth(u);
    if (t0 == 0.0) continue;
    out = std::max(out, std::fabs(bar(u) - t0) / std::fabs(t0));
  }
  return out;
}

struct Rho {
  const StepFunction& k;
  const StepFunction& kbar;
  double eps;
  double at(double u) const { return k(u) * capped_inverse(kbar(u), eps); }
  double before(double u) const {
    return k.left_limit(u) * capped_inverse(kbar.left_limit(u), eps);
  }
};

double weighted_l2(std::span<const double> w, const std::vector<double>& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i] * x[i];
  return std::sqrt(s);
}

}  // namespace

std::vector<RemainderTerms> evaluate_remainder(const NuisanceSet& estimate,
                                               const NuisanceSet& truth,
                                               const LandmarkGrid& grid, int arm,
                                               std::span<const double> stratum_weights,
                                               double eps) {
  const std::size_t strata = truth.stratum_count();
  if (estimate.stratum_count() != strata || stratum_weights.size() != strata) {
    throw std::invalid_argument("evaluate_remainder: stratum count mismatch");
  }
  std::vector<std::size_t> used;
  for (std::size_t s = 0; s < strata; ++s) {
    if (stratum_weights[s] > 0.0) used.push_back(s);
  }
  std::vector<double> w(strata, 0.0);
  for (std::size_t s : used) w[s] = stratum_weights[s];

  // t-free pieces
  std::vector<double> dpi(strata, 0.0);
  std::vector<double> tv(strata, 0.0);
  std::vector<double> sup_h(strata, 0.0);
  std::vector<std::vector<double>> rho_times(strata);
  for (std::size_t s : used) {
    const auto& bar = estimate.cell(arm, s);
    const auto& tr = truth.cell(arm, s);
    dpi[s] = bar.propensity - tr.propensity;
    const Rho rho{tr.censoring_survival, bar.censoring_survival, eps};
    rho_times[s] = merged_times({&tr.censoring_survival, &bar.censoring_survival});
    for (double u : rho_times[s]) {
      if (u > 0.0) tv[s] += std::fabs(rho.at(u) - rho.before(u));
    }
    const auto pts = merged_times({&tr.failure_survival, &bar.failure_survival});
    sup_h[s] = sup_relative(pts, [&](double u) { return bar.failure_survival(u); },
                            [&](double u) { return tr.failure_survival(u); });
  }
  const double tv_norm = weighted_l2(w, tv);
  const double r5 = weighted_l2(w, sup_h) * tv_norm;
  const double pi_norm = weighted_l2(w, dpi);

  std::vector<RemainderTerms> out;
  for (double t : grid.times()) {
    RemainderTerms r;
    r.t = t;
    r.r5 = r5;
    std::vector<double> df0(strata, 0.0);
    std::vector<double> dh(strata, 0.0);
    std::vector<double> sup_f(strata, 0.0);
    std::vector<double> sup_ht(strata, 0.0);
    CompensatedSum exact_mu;
    CompensatedSum exact_eta;
    for (std::size_t s : used) {
      const auto& bar = estimate.cell(arm, s);
      const auto& tr = truth.cell(arm, s);
      const auto& fbar = bar.outcome_profile(t);
      const auto& f0 = tr.outcome_profile(t);
      const auto& hbar = bar.failure_survival;
      const auto& h0 = tr.failure_survival;
      df0[s] = fbar(0.0) - f0(0.0);
      dh[s] = hbar(t) - h0(t);
      sup_f[s] = sup_relative(merged_times({&fbar, &f0}), fbar, f0);
      auto pts = merged_times({&hbar, &h0});
      pts.push_back(t);
      sup_ht[s] = sup_relative(pts, [&](double u) { return hbar(std::max(t, u)); },
                               [&](double u) { return h0(std::max(t, u)); });

      // E0[D(thetabar)] - psi0 by summation by parts on K0 / Kbar.
      const double pbar = bar.propensity;
      const double p0 = tr.propensity;
      const Rho rho{tr.censoring_survival, bar.censoring_survival, eps};
      double mu = df0[s] * (pbar - p0) / pbar;
      double eta = dh[s] * (pbar - p0) / pbar;
      CompensatedSum imu;
      CompensatedSum ieta;
      for (double u : rho_times[s]) {
        if (u <= 0.0) continue;
        const double drho = rho.at(u) - rho.before(u);
        if (drho == 0.0) continue;
        const double hu = h0(u);
        const double hbu = hbar(u);
        const double ratio_mu = hbu == 0.0 ? 0.0 : fbar(u) / hbu;
        const double ratio_eta = hbu == 0.0 ? 0.0 : hbar(std::max(t, u)) / hbu;
        imu.add((f0(u) - hu * ratio_mu) * drho);
        ieta.add((h0(std::max(t, u)) - hu * ratio_eta) * drho);
      }
      mu += p0 / pbar * imu.value();
      eta += p0 / pbar * ieta.value();
      exact_mu.add(w[s] * mu);
      exact_eta.add(w[s] * eta);
    }
    r.r1 = weighted_l2(w, df0) * pi_norm;
    r.r2 = weighted_l2(w, dh) * pi_norm;
    r.r3 = weighted_l2(w, sup_f) * tv_norm;
    r.r4 = weighted_l2(w, sup_ht) * tv_norm;
    r.exact_mu = exact_mu.value();
    r.exact_eta = exact_eta.value();
    out.push_back(r);
  }
  return out;
}

}  // namespace recur
