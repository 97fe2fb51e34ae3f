#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "recur/stepfun.hpp"

namespace recur {

/// Malformed input (unreadable file, bad header, unparsable number,
/// unknown id). Distinct from assumption violations, which validate() reports.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SubjectRecord {
  std::string id;
  std::vector<std::string> covariates;  // categorical stratum codes
  int arm = 0;
  double followup = 0.0;
  bool failed = false;
  std::vector<double> event_times;  // nondecreasing, ties allowed

  std::size_t events_through(double t) const;
};

class LandmarkGrid {
 public:
  LandmarkGrid() = default;
  /// Throws std::invalid_argument unless times are positive, strictly
  /// increasing, nonempty and the last is <= tau.
  LandmarkGrid(std::vector<double> times, double tau);

  const std::vector<double>& times() const { return times_; }
  double tau() const { return tau_; }
  std::size_t size() const { return times_.size(); }

 private:
  std::vector<double> times_;
  double tau_ = 0.0;
};

/// Immutable collection of records plus a stratum index. Strata are the
/// distinct covariate patterns, numbered in lexicographic order of pattern.
class Dataset {
 public:
  Dataset() = default;
  /// Sorts each record's event times. Throws DataError on an arm outside
  /// {0,1}, a non-finite or nonpositive followup, or a covariate count that
  /// differs between records.
  explicit Dataset(std::vector<SubjectRecord> records);

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<SubjectRecord>& records() const { return records_; }
  const SubjectRecord& operator[](std::size_t i) const { return records_[i]; }

  std::size_t stratum_count() const { return patterns_.size(); }
  std::size_t stratum_of(std::size_t i) const { return stratum_[i]; }
  const std::vector<std::string>& stratum_pattern(std::size_t s) const { return patterns_[s]; }
  /// "L1=a,L2=b", or "(all)" when there are no covariates.
  std::string stratum_label(std::size_t s) const;
  const std::vector<std::size_t>& stratum_members(std::size_t s) const { return members_[s]; }
  /// Stratum index for a covariate pattern, or stratum_count() if absent.
  std::size_t find_stratum(const std::vector<std::string>& pattern) const;
  std::size_t covariate_count() const { return covariate_count_; }

  double max_followup() const;
  std::vector<std::size_t> all_rows() const;
  /// Proportion of records in each stratum.
  std::vector<double> stratum_weights() const;
  /// New dataset made of the given rows (repeats allowed) with strata
  /// re-derived from the selected records.
  Dataset select(const std::vector<std::size_t>& rows) const;

 private:
  std::vector<SubjectRecord> records_;
  std::vector<std::vector<std::string>> patterns_;
  std::vector<std::size_t> stratum_;
  std::vector<std::vector<std::size_t>> members_;
  std::size_t covariate_count_ = 0;
};

enum class Severity { note, error, positivity };

struct Violation {
  Severity severity = Severity::error;
  std::string code;
  std::string subject;  // id, or empty for dataset-level findings
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> items;

  bool has_errors() const;
  bool has_positivity() const;
  bool clean() const { return !has_errors() && !has_positivity(); }
};

struct ValidationLimits {
  std::size_t jump_cap = 1000;  // C_F
  std::vector<int> arms{0, 1};
};

/// Checks records against the grid and limits. Never mutates the data.
ValidationReport validate(const Dataset& ds, const LandmarkGrid& grid,
                          const ValidationLimits& limits);

struct CountingPaths {
  StepFunction recurrent;  // N
  StepFunction failure;    // N_T
  StepFunction censoring;  // N_C
};

CountingPaths counting_paths(const SubjectRecord& rec);

// --- CSV ---

/// subjects: header `id,A,X,delta,L1[,L2,...]`; events: header `id,time`.
/// Parsing is locale independent. An event whose id is not in subjects is
/// a DataError.
Dataset read_dataset(std::istream& subjects, std::istream* events);
Dataset read_dataset_files(const std::string& subjects_path, const std::string& events_path);

void write_subjects_csv(std::ostream& out, const Dataset& ds);
void write_events_csv(std::ostream& out, const Dataset& ds);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double x);
/// Strict decimal parse of a whole field; throws DataError with `what`.
double parse_double(const std::string& text, const std::string& what);

}  // namespace recur
