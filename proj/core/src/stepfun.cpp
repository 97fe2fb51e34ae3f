#include "recur/stepfun.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace recur {

StepFunction::StepFunction(double initial_value, std::vector<double> jump_times,
                           std::vector<double> jump_values)
    : initial_(initial_value),
      times_(std::move(jump_times)),
      values_(std::move(jump_values)) {
  if (times_.size() != values_.size()) {
    throw std::invalid_argument("StepFunction: times and values differ in length");
  }
  for (std::size_t k = 0; k < times_.size(); ++k) {
    if (!(times_[k] >= 0.0)) {
      throw std::invalid_argument("StepFunction: negative jump time");
    }
    if (k > 0 && !(times_[k] > times_[k - 1])) {
      throw std::invalid_argument("StepFunction: jump times must be strictly increasing");
    }
  }
}

StepFunction StepFunction::from_increments(double initial_value,
                                           std::vector<double> times,
                                           std::span<const double> increments) {
  if (times.size() != increments.size()) {
    throw std::invalid_argument("from_increments: size mismatch");
  }
  std::vector<double> values(times.size());
  double level = initial_value;
  for (std::size_t k = 0; k < times.size(); ++k) {
    level += increments[k];
    values[k] = level;
  }
  return StepFunction(initial_value, std::move(times), std::move(values));
}

double StepFunction::eval(double t) const {
  // number of jumps at or before t
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return initial_;
  return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

double StepFunction::left_limit(double t) const {
  const auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return initial_;
  return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

double StepFunction::jump_at(double t) const {
  const auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it == times_.end() || *it != t) return 0.0;
  const auto k = static_cast<std::size_t>(it - times_.begin());
  const double before = k == 0 ? initial_ : values_[k - 1];
  return values_[k] - before;
}

std::vector<double> StepFunction::increments() const {
  std::vector<double> out(times_.size());
  double prev = initial_;
  for (std::size_t k = 0; k < times_.size(); ++k) {
    out[k] = values_[k] - prev;
    prev = values_[k];
  }
  return out;
}

StepFunction StepFunction::with_breakpoint(double t) const {
  const auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it != times_.end() && *it == t) return *this;
  const auto k = static_cast<std::size_t>(it - times_.begin());
  std::vector<double> times = times_;
  std::vector<double> values = values_;
  const double level = k == 0 ? initial_ : values_[k - 1];
  times.insert(times.begin() + static_cast<std::ptrdiff_t>(k), t);
  values.insert(values.begin() + static_cast<std::ptrdiff_t>(k), level);
  return StepFunction(initial_, std::move(times), std::move(values));
}

double stieltjes_integral(const std::function<double(double)>& g,
                          const StepFunction& dF, const Interval& interval) {
  if (interval.upper < interval.lower) return 0.0;
  const auto times = dF.jump_times();
  const auto values = dF.jump_values();
  double total = 0.0;
  double prev = dF.initial_value();
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double inc = values[k] - prev;
    prev = values[k];
    if (times[k] > interval.upper) break;
    if (inc == 0.0 || !interval.contains(times[k])) continue;
    total += g(times[k]) * inc;
  }
  return total;
}

StepFunction product_integral(std::span<const double> times,
                              std::span<const double> increments) {
  if (times.size() != increments.size()) {
    throw std::invalid_argument("product_integral: size mismatch");
  }
  std::vector<double> t(times.begin(), times.end());
  std::vector<double> s(times.size());
  double level = 1.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double d = increments[k];
    if (d < 0.0 || d > 1.0) {
      throw std::domain_error("product_integral: hazard increment " +
                              std::to_string(d) + " outside [0, 1]");
    }
    level *= 1.0 - d;
    s[k] = level;
  }
  return StepFunction(1.0, std::move(t), std::move(s));
}

StepFunction product_integral(const StepFunction& cumulative_hazard) {
  if (cumulative_hazard.initial_value() != 0.0) {
    throw std::domain_error("product_integral: cumulative hazard must start at 0");
  }
  const auto inc = cumulative_hazard.increments();
  return product_integral(cumulative_hazard.jump_times(), inc);
}

}  // namespace recur
