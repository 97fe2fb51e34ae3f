#include "recur/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>

namespace recur {

std::size_t SubjectRecord::events_through(double t) const {
  return static_cast<std::size_t>(
      std::upper_bound(event_times.begin(), event_times.end(), t) - event_times.begin());
}

LandmarkGrid::LandmarkGrid(std::vector<double> times, double tau)
    : times_(std::move(times)), tau_(tau) {
  if (times_.empty()) throw std::invalid_argument("landmark grid is empty");
  for (std::size_t j = 0; j < times_.size(); ++j) {
    if (!(times_[j] > 0.0) || !std::isfinite(times_[j])) {
      throw std::invalid_argument("landmark times must be positive and finite");
    }
    if (j > 0 && !(times_[j] > times_[j - 1])) {
      throw std::invalid_argument("landmark times must be strictly increasing");
    }
  }
  if (!(times_.back() <= tau_) || !std::isfinite(tau_)) {
    throw std::invalid_argument("last landmark exceeds tau");
  }
}

// --- Dataset ---

Dataset::Dataset(std::vector<SubjectRecord> records) : records_(std::move(records)) {
  std::map<std::vector<std::string>, std::size_t> index;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    auto& r = records_[i];
    if (r.arm != 0 && r.arm != 1) {
      throw DataError("subject " + r.id + ": arm must be 0 or 1");
    }
    if (!std::isfinite(r.followup) || !(r.followup > 0.0)) {
      throw DataError("subject " + r.id + ": followup must be positive");
    }
    if (i == 0) {
      covariate_count_ = r.covariates.size();
    } else if (r.covariates.size() != covariate_count_) {
      throw DataError("subject " + r.id + ": covariate count differs");
    }
    for (double e : r.event_times) {
      if (!std::isfinite(e)) throw DataError("subject " + r.id + ": non-finite event time");
    }
    std::sort(r.event_times.begin(), r.event_times.end());
    index.emplace(r.covariates, 0);
  }
  std::size_t next = 0;
  for (auto& [pattern, s] : index) {
    s = next++;
    patterns_.push_back(pattern);
  }
  members_.resize(patterns_.size());
  stratum_.resize(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const std::size_t s = index.at(records_[i].covariates);
    stratum_[i] = s;
    members_[s].push_back(i);
  }
}

std::string Dataset::stratum_label(std::size_t s) const {
  const auto& p = patterns_.at(s);
  if (p.empty()) return "(all)";
  std::string out;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (k > 0) out += ',';
    out += 'L' + std::to_string(k + 1) + '=' + p[k];
  }
  return out;
}

std::size_t Dataset::find_stratum(const std::vector<std::string>& pattern) const {
  const auto it = std::lower_bound(patterns_.begin(), patterns_.end(), pattern);
  if (it == patterns_.end() || *it != pattern) return patterns_.size();
  return static_cast<std::size_t>(it - patterns_.begin());
}

double Dataset::max_followup() const {
  double m = 0.0;
  for (const auto& r : records_) m = std::max(m, r.followup);
  return m;
}

std::vector<std::size_t> Dataset::all_rows() const {
  std::vector<std::size_t> rows(records_.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

std::vector<double> Dataset::stratum_weights() const {
  std::vector<double> w(patterns_.size(), 0.0);
  if (records_.empty()) return w;
  for (std::size_t s = 0; s < w.size(); ++s) {
    w[s] = static_cast<double>(members_[s].size()) / static_cast<double>(records_.size());
  }
  return w;
}

Dataset Dataset::select(const std::vector<std::size_t>& rows) const {
  std::vector<SubjectRecord> out;
  out.reserve(rows.size());
  for (std::size_t i : rows) out.push_back(records_.at(i));
  return Dataset(std::move(out));
}

// --- validation ---

bool ValidationReport::has_errors() const {
  return std::any_of(items.begin(), items.end(),
                     [](const Violation& v) { return v.severity == Severity::error; });
}

bool ValidationReport::has_positivity() const {
  return std::any_of(items.begin(), items.end(),
                     [](const Violation& v) { return v.severity == Severity::positivity; });
}

ValidationReport validate(const Dataset& ds, const LandmarkGrid& grid,
                          const ValidationLimits& limits) {
  ValidationReport report;
  const double tau = grid.tau();
  std::size_t events_at_censoring = 0;
  for (const auto& r : ds.records()) {
    if (r.followup > tau) {
      report.items.push_back({Severity::error, "followup_after_tau", r.id,
                              "followup " + format_double(r.followup) + " exceeds tau " +
                                  format_double(tau)});
    }
    for (double e : r.event_times) {
      if (!(e > 0.0)) {
        report.items.push_back({Severity::error, "event_not_positive", r.id,
                                "event time " + format_double(e) + " is not positive"});
        break;
      }
    }
    if (!r.event_times.empty() && r.event_times.back() > r.followup) {
      report.items.push_back({Severity::error, "event_after_followup", r.id,
                              "event after followup: " + format_double(r.event_times.back()) +
                                  " > " + format_double(r.followup)});
    }
    if (r.event_times.size() > limits.jump_cap) {
      report.items.push_back({Severity::error, "event_cap_exceeded", r.id,
                              std::to_string(r.event_times.size()) + " events exceed cap " +
                                  std::to_string(limits.jump_cap)});
    }
    if (!r.failed) {
      events_at_censoring += static_cast<std::size_t>(
          std::count(r.event_times.begin(), r.event_times.end(), r.followup));
    }
  }
  if (events_at_censoring > 0) {
    report.items.push_back({Severity::note, "events_at_censoring", "",
                            std::to_string(events_at_censoring) +
                                " recurrent events coincide with a censoring time"});
  }
  if (ds.empty()) {
    report.items.push_back({Severity::error, "empty_dataset", "", "dataset has no records"});
  }
  for (std::size_t s = 0; s < ds.stratum_count(); ++s) {
    for (int a : limits.arms) {
      const auto& m = ds.stratum_members(s);
      const bool any = std::any_of(m.begin(), m.end(), [&](std::size_t i) { return ds[i].arm == a; });
      if (!any) {
        report.items.push_back({Severity::positivity, "empty_cell", "",
                                "stratum " + ds.stratum_label(s) + " has no subjects in arm " +
                                    std::to_string(a)});
      }
    }
  }
  return report;
}

CountingPaths counting_paths(const SubjectRecord& rec) {
  std::vector<double> times;
  std::vector<double> values;
  double count = 0.0;
  for (double e : rec.event_times) {
    count += 1.0;
    if (!times.empty() && times.back() == e) {
      values.back() = count;
    } else {
      times.push_back(e);
      values.push_back(count);
    }
  }
  CountingPaths out{StepFunction(0.0, std::move(times), std::move(values)), StepFunction(0.0),
                    StepFunction(0.0)};
  StepFunction jump(0.0, {rec.followup}, {1.0});
  if (rec.failed) {
    out.failure = jump;
  } else {
    out.censoring = jump;
  }
  return out;
}

// --- CSV ---

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  std::string out = s.substr(b, e - b);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

int parse_flag(const std::string& text, const std::string& what) {
  if (text == "0") return 0;
  if (text == "1") return 1;
  throw DataError(what + ": expected 0 or 1, got '" + text + "'");
}

}  // namespace

double parse_double(const std::string& text, const std::string& what) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (begin != end && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (text.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw DataError(what + ": cannot parse number '" + text + "'");
  }
  return value;
}

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

Dataset read_dataset(std::istream& subjects, std::istream* events) {
  std::string line;
  if (!std::getline(subjects, line)) throw DataError("subjects.csv: missing header");
  const auto header = split_line(line);
  if (header.size() < 4 || header[0] != "id" || header[1] != "A" || header[2] != "X" ||
      header[3] != "delta") {
    throw DataError("subjects.csv: header must start with id,A,X,delta");
  }
  const std::size_t width = header.size();
  std::vector<SubjectRecord> records;
  std::unordered_map<std::string, std::size_t> by_id;
  std::size_t lineno = 1;
  while (std::getline(subjects, line)) {
    ++lineno;
    if (blank(line)) continue;
    const auto f = split_line(line);
    const std::string where = "subjects.csv line " + std::to_string(lineno);
    if (f.size() != width) throw DataError(where + ": expected " + std::to_string(width) + " fields");
    SubjectRecord r;
    r.id = f[0];
    if (r.id.empty()) throw DataError(where + ": empty id");
    r.arm = parse_flag(f[1], where + " A");
    r.followup = parse_double(f[2], where + " X");
    r.failed = parse_flag(f[3], where + " delta") == 1;
    r.covariates.assign(f.begin() + 4, f.end());
    if (!by_id.emplace(r.id, records.size()).second) {
      throw DataError(where + ": duplicate id " + r.id);
    }
    records.push_back(std::move(r));
  }
  if (events != nullptr) {
    if (!std::getline(*events, line)) throw DataError("events.csv: missing header");
    const auto eh = split_line(line);
    if (eh.size() != 2 || eh[0] != "id" || eh[1] != "time") {
      throw DataError("events.csv: header must be id,time");
    }
    lineno = 1;
    while (std::getline(*events, line)) {
      ++lineno;
      if (blank(line)) continue;
      const auto f = split_line(line);
      const std::string where = "events.csv line " + std::to_string(lineno);
      if (f.size() != 2) throw DataError(where + ": expected 2 fields");
      const auto it = by_id.find(f[0]);
      if (it == by_id.end()) throw DataError(where + ": unknown id " + f[0]);
      records[it->second].event_times.push_back(parse_double(f[1], where + " time"));
    }
  }
  return Dataset(std::move(records));
}

Dataset read_dataset_files(const std::string& subjects_path, const std::string& events_path) {
  std::ifstream subjects(subjects_path);
  if (!subjects) throw DataError("cannot open " + subjects_path);
  if (events_path.empty()) return read_dataset(subjects, nullptr);
  std::ifstream events(events_path);
  if (!events) throw DataError("cannot open " + events_path);
  return read_dataset(subjects, &events);
}

void write_subjects_csv(std::ostream& out, const Dataset& ds) {
  out << "id,A,X,delta";
  for (std::size_t k = 0; k < ds.covariate_count(); ++k) out << ",L" << k + 1;
  out << '\n';
  for (const auto& r : ds.records()) {
    out << r.id << ',' << r.arm << ',' << format_double(r.followup) << ',' << (r.failed ? 1 : 0);
    for (const auto& c : r.covariates) out << ',' << c;
    out << '\n';
  }
}

void write_events_csv(std::ostream& out, const Dataset& ds) {
  out << "id,time\n";
  for (const auto& r : ds.records()) {
    for (double e : r.event_times) out << r.id << ',' << format_double(e) << '\n';
  }
}

}  // namespace recur
