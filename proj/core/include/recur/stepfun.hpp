#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace recur {

/// Right-continuous piecewise-constant function on [0, inf).
///
/// The function equals `initial_value()` on [0, t_1) and `values()[k]` on
/// [t_{k+1}, t_{k+2}). Jump times are matched by exact equality everywhere
/// in the library, so callers that build several step functions over the
/// same data should draw times from one shared set of doubles.
class StepFunction {
 public:
  StepFunction() = default;
  explicit StepFunction(double initial_value) : initial_(initial_value) {}

  /// Throws std::invalid_argument unless `jump_times` is strictly increasing,
  /// nonnegative and the same length as `jump_values`.
  StepFunction(double initial_value, std::vector<double> jump_times,
               std::vector<double> jump_values);

  /// Builds f with f(t) = initial + sum of increments at times <= t.
  /// Times must be strictly increasing.
  static StepFunction from_increments(double initial_value,
                                      std::vector<double> times,
                                      std::span<const double> increments);

  double operator()(double t) const { return eval(t); }
  double eval(double t) const;
  double left_limit(double t) const;
  /// f(t) - f(t-); zero away from jump times.
  double jump_at(double t) const;

  double initial_value() const { return initial_; }
  std::span<const double> jump_times() const { return times_; }
  std::span<const double> jump_values() const { return values_; }
  std::size_t size() const { return times_.size(); }
  bool constant() const { return times_.empty(); }
  double final_value() const { return values_.empty() ? initial_ : values_.back(); }

  /// Increments f(t_k) - f(t_k-) in jump-time order.
  std::vector<double> increments() const;

  /// Inserts a jump point that does not change the function (for tests and
  /// for aligning two functions on a common time set).
  StepFunction with_breakpoint(double t) const;

 private:
  double initial_ = 0.0;
  std::vector<double> times_;
  std::vector<double> values_;
};

/// Interval endpoint convention for Lebesgue-Stieltjes sums. The default is
/// the half-open (lower, upper] used throughout the estimators.
struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  bool lower_open = true;
  bool upper_closed = true;

  bool contains(double u) const {
    const bool above = lower_open ? u > lower : u >= lower;
    const bool below = upper_closed ? u <= upper : u < upper;
    return above && below;
  }
};

/// Sum over jump times u of dF inside the interval of g(u) * (F(u) - F(u-)).
double stieltjes_integral(const std::function<double(double)>& g,
                          const StepFunction& dF, const Interval& interval);

inline double stieltjes_integral(const std::function<double(double)>& g,
                                 const StepFunction& dF, double lower,
                                 double upper) {
  return stieltjes_integral(g, dF, Interval{lower, upper});
}

/// S(t) = prod_{u <= t} (1 - dLambda(u)) for a cumulative hazard with
/// Lambda(0) = 0. Computed as a direct product so that an increment of
/// exactly one gives S = 0 from that point on. Throws std::domain_error on a
/// negative increment or an increment above one.
StepFunction product_integral(const StepFunction& cumulative_hazard);

/// Same as above from raw (time, increment) pairs.
StepFunction product_integral(std::span<const double> times,
                              std::span<const double> increments);

}  // namespace recur
