#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "recur/data.hpp"
#include "recur/inference.hpp"

namespace recur {

inline constexpr int kReportSchemaVersion = 1;

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunProvenance {
  std::uint64_t seed = 0;
  std::size_t folds = 5;
  bool crossfit = true;
  double eps = 0.01;
  double cf_cap = 1000.0;
  double alpha = 0.05;
  std::string estimator = "onestep";
  std::string variance = "sandwich";
  std::size_t bootstrap_reps = 0;  // 0 unless variance is bootstrap
  bool bootstrap_refit = true;
  std::size_t n = 0;
  double tau = 0.0;
  std::vector<double> landmarks;
  std::vector<int> arms;
};

/// While-alive ratio per arm at the landmarks; empty where eta vanishes.
struct WhileAliveCurve {
  int arm = 0;
  std::vector<double> times;
  std::vector<std::optional<double>> ratio;
};

struct Report {
  RunProvenance provenance;
  InferenceReport inference;
  std::vector<WhileAliveCurve> while_alive;
  std::size_t truncations = 0;
  std::size_t dropped_weights = 0;
  ValidationReport validation;
};

std::string to_string(Severity s);

/// Pretty-printed JSON document (2-space indent, trailing newline).
std::string render_report(const Report& report);
/// {"schema_version", "error": {"kind", "message", "details", "validation"}}.
std::string render_error(const std::string& kind, const std::string& message,
                         const std::vector<std::string>& details = {},
                         const ValidationReport* validation = nullptr);
/// Parses a report and prints it again; throws ReportError on malformed
/// input or an unsupported schema version.
std::string canonical_report(const std::string& text);
/// Plain-text table of the components of a report document.
std::string report_table(const std::string& text);

}  // namespace recur
