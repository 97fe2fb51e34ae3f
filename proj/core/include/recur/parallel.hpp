#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace recur {

/// Worker cap: RC_THREADS if set to a positive integer, otherwise the
/// hardware concurrency (at least 1). Read on every call.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Each index
/// runs exactly once; callers write results into per-index slots so output
/// does not depend on scheduling. If any body throws, the exception from the
/// smallest failing index is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

/// Neumaier compensated summation.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

double compensated_sum(std::span<const double> values);
double compensated_mean(std::span<const double> values);

}  // namespace recur
