#include "recur/identities.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace recur {

namespace {

using extended = long double;

template <class G>
extended integrate_mc_ext(const CensoringContext& ctx, const G& g, const Interval& interval) {
  const double x = ctx.followup();
  const auto times = ctx.survival().jump_times();
  const auto inc = ctx.hazard_increments();
  extended total = 0.0L;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double u = times[k];
    if (!interval.contains(u) || !y_dagger(ctx, u) || inc[k] == 0.0L) continue;
    total -= g(u) * inc[k];
  }
  if (!ctx.failed() && interval.contains(x)) total += g(x);
  return total;
}

}  // namespace

CensoringContext::CensoringContext(double followup, bool failed,
                                   StepFunction censoring_survival)
    : x_(followup), failed_(failed), k_(std::move(censoring_survival)) {
  if (!(x_ > 0.0)) throw std::invalid_argument("CensoringContext: X must be positive");
  if (k_.initial_value() != 1.0) {
    throw std::invalid_argument("CensoringContext: K(0) must equal 1");
  }
  const auto times = k_.jump_times();
  const auto values = k_.jump_values();
  increments_.resize(times.size());
  extended before = 1.0L;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (values[i] == 0.0) throw std::invalid_argument("CensoringContext: K vanishes");
    increments_[i] = -(static_cast<extended>(values[i]) - before) / before;
    before = values[i];
  }
}

StepFunction CensoringContext::cumulative_hazard() const {
  std::vector<double> inc(increments_.begin(), increments_.end());
  const auto times = k_.jump_times();
  return StepFunction::from_increments(0.0, {times.begin(), times.end()}, inc);
}

StepFunction mc_process(const CensoringContext& ctx) {
  const double x = ctx.followup();
  const auto ktimes = ctx.survival().jump_times();
  const auto inc = ctx.hazard_increments();
  std::vector<double> times(ktimes.begin(), ktimes.end());
  std::vector<extended> hazard(inc.begin(), inc.end());
  if (!ctx.failed()) {
    const auto it = std::lower_bound(times.begin(), times.end(), x);
    if (it == times.end() || *it != x) {
      hazard.insert(hazard.begin() + (it - times.begin()), 0.0L);
      times.insert(it, x);
    }
  }
  std::vector<double> values(times.size());
  extended level = 0.0L;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double u = times[k];
    if (!ctx.failed() && u == x) level += 1.0L;
    if (y_dagger(ctx, u)) level -= hazard[k];
    values[k] = static_cast<double>(level);
  }
  return StepFunction(0.0, std::move(times), std::move(values));
}

double integrate_mc(const CensoringContext& ctx, const std::function<double(double)>& g,
                    const Interval& interval) {
  return static_cast<double>(
      integrate_mc_ext(ctx, [&g](double u) -> extended { return g(u); }, interval));
}

IdentityResiduals identity_residuals(const CensoringContext& ctx, double t,
                                     const StepFunction* recurrent) {
  const double x = ctx.followup();
  const auto& k = ctx.survival();
  const double inf = std::numeric_limits<double>::infinity();
  const auto over_k = [&k](double u) -> extended { return 1.0L / k(u); };
  const extended ipcw = ctx.failed() ? 1.0L / k.left_limit(x) : 0.0L;
  const extended alive = x > t ? 1.0L : 0.0L;

  IdentityResiduals out;
  {
    const extended lhs = alive / k(t);
    const extended rhs = ipcw * alive + integrate_mc_ext(ctx, over_k, {t, inf});
    out.r1 = static_cast<double>(lhs - rhs);
  }
  out.r2 = static_cast<double>(ipcw - (1.0L - integrate_mc_ext(ctx, over_k, {0.0, inf})));

  if (recurrent != nullptr) {
    const StepFunction& n = *recurrent;
    if (n.initial_value() != 0.0) {
      throw std::invalid_argument("identity_residuals: N(0) must be 0");
    }
    const auto times = n.jump_times();
    const auto inc = n.increments();
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (times[i] > x && inc[i] != 0.0) {
        throw std::invalid_argument("identity_residuals: N jumps after X");
      }
    }
    extended lhs = 0.0L;
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (times[i] > 0.0 && times[i] <= t) {
        lhs += static_cast<extended>(inc[i]) / k.left_limit(times[i]);
      }
    }
    const auto weight = [&](double u) -> extended {
      return static_cast<extended>(n(std::min(u, t))) / k(u);
    };
    const extended rhs = ipcw * n(t) + integrate_mc_ext(ctx, weight, {0.0, inf});
    out.r3 = static_cast<double>(lhs - rhs);
  }
  return out;
}

}  // namespace recur
