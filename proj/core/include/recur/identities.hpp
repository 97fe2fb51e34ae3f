#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "recur/stepfun.hpp"

namespace recur {

/// One subject's (X, delta) together with an arbitrary right-continuous K
/// and the hazard it induces, dLambda_C(u) = -dK(u) / K(u-).
///
/// K need not be a survival function of anything related to (X, delta);
/// the identities below are algebraic. Hazard increments are kept in
/// extended precision because residuals are compared against 1e-10 with K
/// as small as 1e-6.
class CensoringContext {
 public:
  /// Throws std::invalid_argument if K(0) != 1, X <= 0, or K vanishes at one
  /// of its jump times.
  CensoringContext(double followup, bool failed, StepFunction censoring_survival);

  double followup() const { return x_; }
  bool failed() const { return failed_; }
  const StepFunction& survival() const { return k_; }
  StepFunction cumulative_hazard() const;
  std::span<const long double> hazard_increments() const { return increments_; }

 private:
  double x_;
  bool failed_;
  StepFunction k_;
  std::vector<long double> increments_;
};

/// Modified at-risk indicator: failures leave the censoring risk set at X,
/// censorings remain in it.
inline bool y_dagger(double followup, bool failed, double u) {
  return failed ? followup > u : followup >= u;
}
inline bool y_dagger(const CensoringContext& ctx, double u) {
  return y_dagger(ctx.followup(), ctx.failed(), u);
}

/// M_C(t) = N_C(t) - int_(0,t] Ydagger dLambda_C.
StepFunction mc_process(const CensoringContext& ctx);

/// int_{interval} g(u) dM_C(u), evaluated literally from N_C and Lambda_C.
double integrate_mc(const CensoringContext& ctx,
                    const std::function<double(double)>& g,
                    const Interval& interval);

struct IdentityResiduals {
  double r1 = 0.0;
  double r2 = 0.0;
  std::optional<double> r3;
};

/// LHS - RHS of the three counting-process identities at time t. `recurrent`
/// is an optional counting path N with N(0) = 0 that must be frozen after X;
/// a path with a jump after X is rejected with std::invalid_argument.
IdentityResiduals identity_residuals(const CensoringContext& ctx, double t,
                                     const StepFunction* recurrent = nullptr);

}  // namespace recur
