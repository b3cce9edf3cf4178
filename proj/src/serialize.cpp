#include "ubsgd/serialize.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace ubsgd {

namespace {

// JSON has no NaN/inf; encode them as null.
Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json series(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Json to_json(const DissipativityCert& c) {
  return Json{{"theta1", num(c.theta1)}, {"theta2", num(c.theta2)},
              {"R", num(c.R)},           {"p", num(c.p)},
              {"center", to_string(c.center)}};
}

Json to_json(const GrowthCert& g) {
  return Json{{"theta3", num(g.theta3)}, {"tau", num(g.tau)}};
}

Json to_json(const NoiseCert& n) {
  return Json{{"rho", num(n.rho)}, {"sigma2", num(n.sigma2)}};
}

Json to_json(const CertReport& r) {
  Json point = Json::array();
  for (Eigen::Index i = 0; i < r.worst_point.size(); ++i) point.push_back(num(r.worst_point[i]));
  return Json{{"passed", r.passed},
              {"worst_violation", num(r.worst_violation)},
              {"worst_point", point},
              {"shells_checked", r.shells_checked},
              {"samples", r.samples},
              {"tol", r.tol}};
}

Json to_json(const BoundReport& r) {
  Json hyp = Json::array();
  for (const auto& h : r.hypotheses) hyp.push_back({{"name", h.name}, {"satisfied", h.satisfied}});
  Json j{{"formula", to_string(r.formula)},
         {"bound", num(r.bound)},
         {"conservative_bound", num(r.conservative_bound)},
         {"r2", num(r.r2)},
         {"r2_alt", num(r.r2_alt)},
         {"cap", num(r.cap)},
         {"transient", num(r.transient)},
         {"stationary", num(r.stationary)},
         {"stationary_unsimplified", num(r.stationary_unsimplified)},
         {"hypotheses_ok", r.hypotheses_ok()},
         {"hypotheses", hyp}};
  return j;
}

Json to_json(const ScheduleAudit& a) {
  Json conds = Json::array();
  for (const auto& c : a.theorem_conditions) {
    conds.push_back({{"name", c.name},
                     {"relation", c.relation},
                     {"required", num(c.required)},
                     {"actual", num(c.actual)},
                     {"pass", c.pass},
                     {"informational", c.informational}});
  }
  return Json{{"all_pass", a.all_pass()},
              {"cap_satisfied", a.cap_satisfied},
              {"cap_value", num(a.cap_value)},
              {"cap_onset", a.cap_onset},
              {"conditions", conds}};
}

Json to_json(const NoiseEstimate& e) {
  return Json{{"cert", to_json(e.cert)},
              {"fitted_rho", num(e.fitted_rho)},
              {"fitted_sigma2", num(e.fitted_sigma2)},
              {"inflation", num(e.inflation)},
              {"rho_clamped", e.rho_clamped},
              {"sigma2_clamped", e.sigma2_clamped},
              {"probe_grad_norm2", series(e.probe_grad_norm2)},
              {"probe_variance", series(e.probe_variance)}};
}

Json to_json(const LyapunovTest& t) {
  return Json{{"passed", t.passed},
              {"tested", t.tested},
              {"not_decreasing", t.not_decreasing},
              {"first_failure", t.first_failure},
              {"worst_upper", num(t.worst_upper)}};
}

Json to_json(const EnsembleSummary& e) {
  Json seeds = Json::array();
  Json diag = Json::array();
  for (const auto& r : e.runs) {
    seeds.push_back(r.seed);
    if (!r.diagnostic.empty()) diag.push_back({{"seed", r.seed}, {"message", r.diagnostic}});
  }
  const auto final_of = [](const SeriesStats& s) {
    return s.mean.empty() ? Json(nullptr) : num(s.mean.back());
  };
  const auto array_of = [](const std::vector<double>& v) {
    Json a = Json::array();
    for (double x : v) a.push_back(num(x));
    return a;
  };
  // Per-k arrays, index k-1.
  const auto series_of = [&](const SeriesStats& s) {
    return Json{{"mean", array_of(s.mean)},
                {"ci_low", array_of(s.ci_low)},
                {"ci_high", array_of(s.ci_high)}};
  };
  return Json{{"seeds", seeds},
              {"runs", e.runs.size()},
              {"lyapunov_form", e.runs.empty() ? "none" : to_string(e.runs.front().form)},
              {"diverged", e.diverged},
              {"cap_overridden", !e.runs.empty() && e.runs.front().cap_overridden},
              {"mean_sup_dist2", num(e.mean_sup_dist2)},
              {"max_sup_dist2", num(e.max_sup_dist2)},
              {"final_mean_dist2", final_of(e.dist2)},
              {"final_mean_fgap", final_of(e.fgap)},
              {"diagnostics", diag},
              {"series",
               {{"dist2", series_of(e.dist2)}, {"fgap", series_of(e.fgap)}, {"W", series_of(e.W)}}}};
}

namespace {
double get_num(const Json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) {
    throw std::invalid_argument(std::string("expected a number for '") + key + "'");
  }
  return j.at(key).get<double>();
}
}  // namespace

DissipativityCert cert_from_json(const Json& j) {
  DissipativityCert c;
  c.theta1 = get_num(j, "theta1", c.theta1);
  c.theta2 = get_num(j, "theta2", c.theta2);
  c.R = get_num(j, "R", c.R);
  c.p = get_num(j, "p", c.p);
  if (j.contains("center")) c.center = center_from_string(j.at("center").get<std::string>());
  validate(c);
  return c;
}

GrowthCert growth_from_json(const Json& j) {
  GrowthCert g;
  g.theta3 = get_num(j, "theta3", g.theta3);
  g.tau = get_num(j, "tau", g.tau);
  validate(g);
  return g;
}

NoiseCert noise_from_json(const Json& j) {
  NoiseCert n;
  n.rho = get_num(j, "rho", n.rho);
  n.sigma2 = get_num(j, "sigma2", n.sigma2);
  validate(n);
  return n;
}

std::string trajectory_csv(const Trajectory& t) {
  std::string out = "k,stepsize,dist2,fgap,W\n";
  for (size_t i = 0; i < t.dist2.size(); ++i) {
    out += std::to_string(i + 1);
    out += ',';
    if (i < t.stepsize.size()) out += format_double(t.stepsize[i]);
    out += ',';
    out += format_double(t.dist2[i]);
    out += ',';
    out += format_double(t.fgap[i]);
    out += ',';
    out += format_double(t.W[i]);
    out += '\n';
  }
  return out;
}

void write_file(const std::string& path, const std::string& contents) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << contents;
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace ubsgd
