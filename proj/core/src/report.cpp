#include "recur/report.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

namespace recur {

namespace {

using nlohmann::ordered_json;

ordered_json number_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

ordered_json validation_json(const ValidationReport& v) {
  ordered_json items = ordered_json::array();
  for (const auto& it : v.items) {
    ordered_json j;
    j["severity"] = to_string(it.severity);
    j["code"] = it.code;
    j["subject"] = it.subject;
    j["message"] = it.message;
    items.push_back(std::move(j));
  }
  return items;
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

}  // namespace

std::string to_string(Severity s) {
  switch (s) {
    case Severity::note: return "note";
    case Severity::error: return "error";
    case Severity::positivity: return "positivity";
  }
  return "error";
}

std::string render_report(const Report& report) {
  const auto& p = report.provenance;
  const auto& inf = report.inference;
  ordered_json j;
  j["schema_version"] = kReportSchemaVersion;

  ordered_json prov;
  prov["seed"] = p.seed;
  prov["folds"] = p.folds;
  prov["crossfit"] = p.crossfit;
  prov["eps"] = p.eps;
  prov["cf_cap"] = p.cf_cap;
  prov["alpha"] = p.alpha;
  prov["estimator"] = p.estimator;
  prov["variance"] = p.variance;
  if (p.variance == "bootstrap") {
    prov["bootstrap_reps"] = p.bootstrap_reps;
    prov["bootstrap_refit"] = p.bootstrap_refit;
  }
  prov["n"] = p.n;
  prov["tau"] = p.tau;
  prov["landmarks"] = p.landmarks;
  prov["arms"] = p.arms;
  j["provenance"] = std::move(prov);

  ordered_json comps = ordered_json::array();
  for (std::size_t c = 0; c < inf.layout.size(); ++c) {
    const auto& comp = inf.layout[c];
    ordered_json e;
    e["name"] = component_name(comp);
    e["kind"] = comp.kind == Kind::mu ? "mu" : "eta";
    e["arm"] = comp.arm;
    e["landmark"] = p.landmarks.at(comp.landmark);
    e["initial"] = number_or_null(inf.initial[c]);
    e["estimate"] = number_or_null(inf.estimate[c]);
    e["se"] = number_or_null(inf.se[c]);
    e["ci"] = {number_or_null(inf.ci[c].lower), number_or_null(inf.ci[c].upper)};
    comps.push_back(std::move(e));
  }
  j["components"] = std::move(comps);

  ordered_json wa = ordered_json::array();
  for (const auto& curve : report.while_alive) {
    ordered_json e;
    e["arm"] = curve.arm;
    e["times"] = curve.times;
    ordered_json r = ordered_json::array();
    for (const auto& v : curve.ratio) r.push_back(v ? number_or_null(*v) : ordered_json(nullptr));
    e["ratio"] = std::move(r);
    wa.push_back(std::move(e));
  }
  j["while_alive"] = std::move(wa);

  ordered_json diag;
  diag["f_truncations"] = report.truncations;
  diag["dropped_weights"] = report.dropped_weights;
  j["diagnostics"] = std::move(diag);
  j["validation"] = validation_json(report.validation);
  return dump(j);
}

std::string render_error(const std::string& kind, const std::string& message,
                         const std::vector<std::string>& details,
                         const ValidationReport* validation) {
  ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  ordered_json e;
  e["kind"] = kind;
  e["message"] = message;
  e["details"] = details;
  e["validation"] = validation ? validation_json(*validation) : ordered_json::array();
  j["error"] = std::move(e);
  return dump(j);
}

namespace {

ordered_json parse_report(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    throw ReportError(std::string("malformed report: ") + e.what());
  }
  if (!j.is_object() || !j.contains("schema_version")) {
    throw ReportError("malformed report: no schema_version");
  }
  if (j["schema_version"] != kReportSchemaVersion) {
    throw ReportError("unsupported report schema version " + j["schema_version"].dump());
  }
  return j;
}

}  // namespace

std::string canonical_report(const std::string& text) { return dump(parse_report(text)); }

std::string report_table(const std::string& text) {
  const auto j = parse_report(text);
  std::ostringstream out;
  if (j.contains("error")) {
    out << "error (" << j["error"].value("kind", "") << "): " << j["error"].value("message", "")
        << '\n';
    return out.str();
  }
  const auto cell = [](const ordered_json& v) {
    return v.is_number() ? format_double(v.get<double>()) : std::string("NA");
  };
  out << "component\tlandmark\tinitial\testimate\tse\tlower\tupper\n";
  try {
    for (const auto& c : j.at("components")) {
      out << c.at("name").get<std::string>() << '\t' << cell(c.at("landmark")) << '\t'
          << cell(c.at("initial")) << '\t' << cell(c.at("estimate")) << '\t' << cell(c.at("se"))
          << '\t' << cell(c.at("ci")[0]) << '\t' << cell(c.at("ci")[1]) << '\n';
    }
  } catch (const ordered_json::exception& e) {
    throw ReportError(std::string("malformed report: ") + e.what());
  }
  return out.str();
}

}  // namespace recur
