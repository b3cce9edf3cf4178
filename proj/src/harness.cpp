#include "ubsgd/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "ubsgd/bounds.hpp"
#include "ubsgd/certify.hpp"
#include "ubsgd/rng.hpp"
#include "ubsgd/svg.hpp"

namespace ubsgd {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::set<std::string> kProblems{"least_squares",  "phase_retrieval",
                                      "heavy_tail_mle", "blake_zisserman",
                                      "logistic_l2",    "logistic_l1", "nn"};
const std::set<std::string> kChecks{"bound", "no_divergence",
                                    "boundedness_proxy", "lyapunov", "audit"};
const std::set<std::string> kBounds{"auto", "theorem1", "theorem5",
                                    "appendix_d", "momentum"};

// --- strict JSON reading ----------------------------------------------------

// Reads an object field by field and rejects keys nobody asked for.
class Obj {
 public:
  Obj(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& k) {
    seen_.insert(k);
    return j_.contains(k);
  }
  const Json& at(const std::string& k) {
    seen_.insert(k);
    if (!j_.contains(k)) throw ConfigError("missing key " + key(k));
    return j_.at(k);
  }
  double num(const std::string& k, double fallback) {
    if (!has(k)) return fallback;
    const Json& v = j_.at(k);
    if (!v.is_number()) throw ConfigError(key(k) + " must be a number");
    return v.get<double>();
  }
  long integer(const std::string& k, long fallback) {
    if (!has(k)) return fallback;
    const Json& v = j_.at(k);
    if (!v.is_number_integer()) throw ConfigError(key(k) + " must be an integer");
    return v.get<long>();
  }
  std::uint64_t u64(const std::string& k, std::uint64_t fallback) {
    if (!has(k)) return fallback;
    const Json& v = j_.at(k);
    if (!v.is_number_unsigned()) {
      throw ConfigError(key(k) + " must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }
  bool boolean(const std::string& k, bool fallback) {
    if (!has(k)) return fallback;
    const Json& v = j_.at(k);
    if (!v.is_boolean()) throw ConfigError(key(k) + " must be true or false");
    return v.get<bool>();
  }
  std::string str(const std::string& k, const std::string& fallback) {
    if (!has(k)) return fallback;
    const Json& v = j_.at(k);
    if (!v.is_string()) throw ConfigError(key(k) + " must be a string");
    return v.get<std::string>();
  }
  std::vector<double> nums(const std::string& k) {
    std::vector<double> out;
    if (!has(k)) return out;
    const Json& v = j_.at(k);
    if (!v.is_array()) throw ConfigError(key(k) + " must be an array");
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(key(k) + " must hold numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  std::vector<long> ints(const std::string& k) {
    std::vector<long> out;
    for (double v : nums(k)) {
      if (v != std::floor(v)) throw ConfigError(key(k) + " must hold integers");
      out.push_back(static_cast<long>(v));
    }
    return out;
  }
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + key(it.key()));
    }
  }
  std::string key(const std::string& k) const { return "'" + path_ + "." + k + "'"; }

 private:
  std::string where() const { return "'" + path_ + "'"; }
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string to_string(TargetKind t) {
  switch (t) {
    case TargetKind::Linear: return "linear";
    case TargetKind::Absolute: return "absolute";
    case TargetKind::Sign: return "sign";
  }
  return "linear";
}

TargetKind target_from_string(const std::string& s) {
  if (s == "linear") return TargetKind::Linear;
  if (s == "absolute") return TargetKind::Absolute;
  if (s == "sign") return TargetKind::Sign;
  throw ConfigError("unknown target kind: " + s);
}

bool classification(const std::string& name) {
  return name == "logistic_l2" || name == "logistic_l1" || name == "nn";
}

TargetKind default_target(const std::string& name) {
  if (name == "phase_retrieval") return TargetKind::Absolute;
  return classification(name) ? TargetKind::Sign : TargetKind::Linear;
}

std::string resolve_path(const std::string& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? p : (fs::path(base) / path).string();
}

template <class F>
auto rethrow_as_config(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(e.what());
  }
}

// --- problem construction -----------------------------------------------------

Dataset load_data(const ProblemConfig& p, const std::string& base) {
  const DataConfig& d = p.data;
  switch (d.kind) {
    case DataConfig::Kind::Synthetic: {
      SyntheticSpec s = d.synthetic;
      if (!d.target_given) s.target = default_target(p.name);
      return synthetic_dataset(s);
    }
    case DataConfig::Kind::Csv:
      return load_csv_dataset(resolve_path(base, d.csv_path), classification(p.name));
    case DataConfig::Kind::Inline: {
      const auto n = static_cast<Eigen::Index>(d.matrix.size());
      if (n == 0) throw ConfigError("inline data needs at least one row");
      const auto dim = static_cast<Eigen::Index>(d.matrix.front().size());
      if (static_cast<Eigen::Index>(d.targets.size()) != n) {
        throw ConfigError("inline data: one target per row required");
      }
      Dataset ds;
      ds.A.resize(n, dim);
      ds.b.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(d.matrix[i].size()) != dim) {
          throw ConfigError("inline data: ragged matrix");
        }
        for (Eigen::Index j = 0; j < dim; ++j) ds.A(i, j) = d.matrix[i][j];
        ds.b[i] = d.targets[i];
      }
      return ds;
    }
  }
  throw ConfigError("unknown data kind");
}

ProblemPtr build_problem(const ProblemConfig& p, const std::string& base) {
  const Dataset ds = load_data(p, base);
  const std::string& n = p.name;
  if (n == "least_squares") return least_squares(ds.A, ds.b);
  if (n == "phase_retrieval") return phase_retrieval(ds.A, ds.b, ds.planted);
  if (n == "heavy_tail_mle") return heavy_tail_mle(ds.A, ds.b, p.lambda);
  if (n == "blake_zisserman") return blake_zisserman(ds.A, ds.b, p.lambda, p.nu);
  if (n == "logistic_l2") return l2_regularized_bounded_grad(logistic_loss(ds.A, ds.b), p.lambda);
  if (n == "logistic_l1") return logistic_l1(ds.A, ds.b, p.lambda);
  if (n == "nn") return feedforward_nn(ds.A, ds.b, p.hidden, p.lambda, p.activation);
  throw ConfigError("unknown problem: " + n);
}

MomentumRegime regime_for(const ScheduleSpec& s, bool generalized) {
  if (!generalized) {
    return s.family == Family::Constant ? MomentumRegime::Constant
                                        : MomentumRegime::Decaying;
  }
  if (s.family == Family::Constant) return MomentumRegime::GeneralizedConst;
  if (s.family == Family::Exponential) return MomentumRegime::GeneralizedDecayingExp;
  return MomentumRegime::GeneralizedDecayingPoly;
}

// Peak step of the schedule set to `peak`, other levels scaled alongside.
void set_peak(ScheduleSpec& s, double peak) {
  switch (s.family) {
    case Family::Constant:
    case Family::Polynomial:
    case Family::Exponential:
    case Family::StepDecay:
      s.eta1 = peak;
      return;
    case Family::Linear:
    case Family::Cosine:
      s.eta_min = s.eta_max > 0.0 ? s.eta_min * peak / s.eta_max : 0.0;
      s.eta_max = peak;
      return;
    case Family::Bandwidth: {
      if (s.stage_eta_max.empty() || !(s.stage_eta_max.front() > 0.0)) {
        throw ConfigError("cap_fraction needs positive bandwidth envelopes");
      }
      const double f = peak / s.stage_eta_max.front();
      for (double& v : s.stage_eta_max) v *= f;
      for (double& v : s.stage_eta_min) v *= f;
      return;
    }
  }
}

BoundReport momentum_report(const DissipativityCert& cert, const NoiseCert& noise,
                            double L, double beta, const Schedule& sched,
                            bool generalized, const std::vector<double>& r2) {
  BoundReport rep;
  rep.formula = FormulaId::Momentum;
  rep.cap = momentum_caps(cert.theta1, noise.rho, L, beta,
                          regime_for(sched.spec(), generalized));
  rep.r2 = *std::max_element(r2.begin(), r2.end());
  rep.r2_alt = rep.r2;
  // Boundedness is qualitative here: no closed-form value.
  rep.bound = kNaN;
  rep.conservative_bound = kNaN;
  rep.hypotheses = {{"cert_centered_at_optimum", cert.center == CertCenter::Optimum},
                    {"within_step_cap", sched.max_step() <= rep.cap}};
  return rep;
}

std::vector<double> lyapunov_radii(const DissipativityCert& cert,
                                   const std::optional<GrowthCert>& growth,
                                   const NoiseCert& noise, double beta,
                                   const Schedule& sched) {
  const long T = sched.horizon();
  const bool generalized = cert.p < 2.0;
  if (generalized && !growth) throw ConfigError("p < 2 momentum run needs a growth cert");
  const Family fam = sched.spec().family;
  std::vector<double> r2(T + 1);
  for (long k = 1; k <= T + 1; ++k) {
    const double eta = sched.at(std::min(k, T));
    double v;
    if (!generalized) {
      v = fam == Family::Constant ? momentum_constant_r2(cert, noise, eta, beta)
                                  : momentum_decaying_r2(cert, noise, eta, beta);
    } else if (fam == Family::Constant) {
      v = momentum_generalized_const_r2(cert, *growth, noise, eta, beta);
    } else {
      v = momentum_generalized_poly_r2(cert, *growth, noise, sched.at(1), beta);
    }
    r2[k - 1] = v;
  }
  return r2;
}

std::string resolved_bound(const ExperimentConfig& c, const DissipativityCert& cert) {
  if (c.bound != "auto") return c.bound;
  if (c.method == Method::Momentum) return "momentum";
  return cert.p < 2.0 ? "theorem5" : "theorem1";
}

// The value mean sup dist2 (or final mean dist2 for appendix_d) is held to.
double compared_bound(const BoundReport& b) {
  return b.formula == FormulaId::Thm5 ? b.conservative_bound : b.bound;
}

bool cap_enforced(const BoundReport& b) {
  return b.formula == FormulaId::Thm1 || b.formula == FormulaId::Momentum ||
         b.formula == FormulaId::AppD_Const;
}

Json config_error(const std::string& msg) {
  return Json{{"status", "error"}, {"error", "config_error"}, {"message", msg}};
}

void clear_failure(const ExperimentConfig& c) {
  std::error_code ec;
  fs::remove(fs::path(c.output_dir) / "failure.json", ec);
}

void write_failure(const ExperimentConfig& c, const Json& j) {
  write_file((fs::path(c.output_dir) / "failure.json").string(), dump(j));
}

// Largest value over k <= window, then the first k > window exceeding
// factor times it (0 if none).
long first_excursion(const std::vector<double>& s, long window, double factor,
                     double& reference) {
  reference = 0.0;
  for (long k = 1; k <= std::min<long>(window, s.size()); ++k) {
    reference = std::max(reference, s[k - 1]);
  }
  for (long k = window + 1; k <= static_cast<long>(s.size()); ++k) {
    if (!(s[k - 1] <= factor * reference)) return k;
  }
  return 0;
}

}  // namespace

// --- config ------------------------------------------------------------------

ExperimentConfig parse_config(const Json& j, const std::string& base_dir) {
  return rethrow_as_config([&] {
    ExperimentConfig c;
    c.base_dir = base_dir;
    Obj root(j, "config");

    {
      Obj p(root.at("problem"), "problem");
      c.problem.name = p.str("name", c.problem.name);
      if (!kProblems.count(c.problem.name)) {
        throw ConfigError("unknown problem: " + c.problem.name);
      }
      c.problem.lambda = p.num("lambda", c.problem.lambda);
      c.problem.nu = p.num("nu", c.problem.nu);
      if (p.has("hidden")) {
        c.problem.hidden.clear();
        for (long h : p.ints("hidden")) c.problem.hidden.push_back(static_cast<int>(h));
      }
      c.problem.activation = activation_from_string(p.str("activation", to_string(c.problem.activation)));

      Obj d(p.at("data"), "problem.data");
      DataConfig& data = c.problem.data;
      int kinds = 0;
      if (d.has("synthetic")) {
        ++kinds;
        data.kind = DataConfig::Kind::Synthetic;
        Obj s(d.at("synthetic"), "problem.data.synthetic");
        SyntheticSpec& sp = data.synthetic;
        sp.n = static_cast<int>(s.integer("n", sp.n));
        sp.d = static_cast<int>(s.integer("d", sp.d));
        sp.seed = s.u64("seed", sp.seed);
        sp.feature_scale = s.num("feature_scale", sp.feature_scale);
        sp.signal_norm = s.num("signal_norm", sp.signal_norm);
        sp.noise = s.num("noise", sp.noise);
        if (s.has("target")) {
          data.target_given = true;
          sp.target = target_from_string(s.str("target", ""));
        }
        sp.unit_rows = s.boolean("unit_rows", sp.unit_rows);
        s.finish();
      }
      if (d.has("csv")) {
        ++kinds;
        data.kind = DataConfig::Kind::Csv;
        data.csv_path = d.str("csv", "");
        const std::string full = resolve_path(base_dir, data.csv_path);
        if (!fs::is_regular_file(full)) throw ConfigError("data file not found: " + full);
      }
      if (d.has("matrix") || d.has("targets")) {
        ++kinds;
        data.kind = DataConfig::Kind::Inline;
        const Json& m = d.at("matrix");
        if (!m.is_array()) throw ConfigError("'problem.data.matrix' must be an array of rows");
        for (const auto& row : m) {
          if (!row.is_array()) throw ConfigError("'problem.data.matrix' rows must be arrays");
          std::vector<double> r;
          for (const auto& v : row) {
            if (!v.is_number()) throw ConfigError("'problem.data.matrix' must hold numbers");
            r.push_back(v.get<double>());
          }
          data.matrix.push_back(std::move(r));
        }
        data.targets = d.nums("targets");
      }
      if (kinds != 1) {
        throw ConfigError("problem.data needs exactly one of synthetic, csv, matrix/targets");
      }
      d.finish();
      p.finish();
    }

    {
      Obj s(root.at("schedule"), "schedule");
      ScheduleSpec& sp = c.schedule;
      sp.family = family_from_string(s.str("family", to_string(sp.family)));
      sp.T = s.integer("T", sp.T);
      sp.eta1 = s.num("eta1", sp.eta1);
      sp.r_exponent = s.num("r", sp.r_exponent);
      sp.eta_max = s.num("eta_max", sp.eta_max);
      sp.eta_min = s.num("eta_min", sp.eta_min);
      sp.nu = s.num("nu", sp.nu);
      sp.alpha = s.num("alpha", sp.alpha);
      sp.stage_lengths = s.ints("stage_lengths");
      sp.inner_mode = family_from_string(s.str("inner_mode", to_string(sp.inner_mode)));
      sp.stage_eta_max = s.nums("stage_eta_max");
      sp.stage_eta_min = s.nums("stage_eta_min");
      sp.s_max = s.num("s_max", sp.s_max);
      if (s.has("cap_fraction")) {
        c.cap_fraction = s.num("cap_fraction", 1.0);
        if (!(*c.cap_fraction > 0.0)) throw ConfigError("cap_fraction must be positive");
      }
      s.finish();
    }

    if (root.has("optimizer")) {
      Obj o(root.at("optimizer"), "optimizer");
      c.method = method_from_string(o.str("method", to_string(c.method)));
      c.beta = o.num("beta", c.beta);
      c.oracle.batch_size = static_cast<int>(o.integer("batch_size", c.oracle.batch_size));
      c.oracle.additive_variance = o.num("additive_variance", c.oracle.additive_variance);
      o.finish();
      if (c.method == Method::Momentum && !(c.beta > 0.0 && c.beta < 1.0)) {
        throw ConfigError("optimizer.beta must lie in (0,1)");
      }
      if (c.oracle.batch_size < 0 || !(c.oracle.additive_variance >= 0.0)) {
        throw ConfigError("optimizer: batch_size and additive_variance must be >= 0");
      }
    }

    if (root.has("init")) {
      Obj i(root.at("init"), "init");
      if (i.has("x1")) {
        c.init.x1 = i.nums("x1");
      } else {
        c.init.radius = i.num("radius", c.init.radius);
        c.init.seed = i.u64("seed", c.init.seed);
        if (!(c.init.radius >= 0.0)) throw ConfigError("init.radius must be >= 0");
      }
      i.finish();
    }

    {
      const Json& s = root.at("seeds");
      if (s.is_array()) {
        for (const auto& v : s) {
          if (!v.is_number_unsigned()) throw ConfigError("seeds must be non-negative integers");
          c.seeds.list.push_back(v.get<std::uint64_t>());
        }
        std::set<std::uint64_t> uniq(c.seeds.list.begin(), c.seeds.list.end());
        if (uniq.size() != c.seeds.list.size()) throw ConfigError("seeds must be distinct");
      } else {
        Obj o(s, "seeds");
        c.seeds.master = o.u64("master", 0);
        c.seeds.count = static_cast<int>(o.integer("count", 0));
        o.finish();
      }
      if (resolve_seeds(c.seeds).size() < 2) throw ConfigError("at least 2 seeds are required");
    }

    c.output_dir = root.str("output_dir", c.output_dir);
    if (root.has("checks")) {
      c.checks.clear();
      const Json& ch = root.at("checks");
      if (!ch.is_array()) throw ConfigError("checks must be an array of names");
      for (const auto& v : ch) {
        const std::string name = v.get<std::string>();
        if (!kChecks.count(name)) throw ConfigError("unknown check: " + name);
        c.checks.push_back(name);
      }
    }
    if (root.has("cert")) c.cert = cert_from_json(root.at("cert"));
    if (root.has("growth")) c.growth = growth_from_json(root.at("growth"));
    if (root.has("noise")) {
      Obj n(root.at("noise"), "noise");
      if (n.has("fixed")) {
        c.noise.fixed = noise_from_json(n.at("fixed"));
      } else {
        c.noise.probes = static_cast<int>(n.integer("probes", c.noise.probes));
        c.noise.reps = static_cast<int>(n.integer("reps", c.noise.reps));
        c.noise.r_lo = n.num("r_lo", c.noise.r_lo);
        c.noise.r_hi = n.num("r_hi", c.noise.r_hi);
        c.noise.seed = n.u64("seed", c.noise.seed);
      }
      n.finish();
    }
    c.bound = root.str("bound", c.bound);
    if (!kBounds.count(c.bound)) throw ConfigError("unknown bound: " + c.bound);
    c.tolerance = root.num("tolerance", c.tolerance);
    c.override_cap = root.boolean("override_cap", c.override_cap);
    const long workers = root.integer("workers", 0);
    if (workers < 0) throw ConfigError("workers must be >= 0");
    c.workers = static_cast<unsigned>(workers);
    root.finish();
    return c;
  });
}

Json serialize_config(const ExperimentConfig& c) {
  Json data;
  const DataConfig& d = c.problem.data;
  switch (d.kind) {
    case DataConfig::Kind::Synthetic: {
      const SyntheticSpec& s = d.synthetic;
      Json syn{{"n", s.n},
               {"d", s.d},
               {"seed", s.seed},
               {"feature_scale", s.feature_scale},
               {"signal_norm", s.signal_norm},
               {"noise", s.noise}};
      if (d.target_given) syn["target"] = to_string(s.target);
      syn["unit_rows"] = s.unit_rows;
      data["synthetic"] = syn;
      break;
    }
    case DataConfig::Kind::Csv:
      data["csv"] = d.csv_path;
      break;
    case DataConfig::Kind::Inline:
      data["matrix"] = d.matrix;
      data["targets"] = d.targets;
      break;
  }
  Json problem{{"name", c.problem.name},
               {"lambda", c.problem.lambda},
               {"nu", c.problem.nu},
               {"hidden", c.problem.hidden},
               {"activation", to_string(c.problem.activation)},
               {"data", data}};

  const ScheduleSpec& s = c.schedule;
  Json schedule{{"family", to_string(s.family)},
                {"T", s.T},
                {"eta1", s.eta1},
                {"r", s.r_exponent},
                {"eta_max", s.eta_max},
                {"eta_min", s.eta_min},
                {"nu", s.nu},
                {"alpha", s.alpha},
                {"stage_lengths", s.stage_lengths},
                {"inner_mode", to_string(s.inner_mode)},
                {"stage_eta_max", s.stage_eta_max},
                {"stage_eta_min", s.stage_eta_min},
                {"s_max", s.s_max}};
  if (c.cap_fraction) schedule["cap_fraction"] = *c.cap_fraction;

  Json init;
  if (c.init.x1) {
    init["x1"] = *c.init.x1;
  } else {
    init["radius"] = c.init.radius;
    init["seed"] = c.init.seed;
  }

  Json seeds;
  if (!c.seeds.list.empty()) {
    seeds = c.seeds.list;
  } else {
    seeds = Json{{"master", c.seeds.master}, {"count", c.seeds.count}};
  }

  Json noise;
  if (c.noise.fixed) {
    noise["fixed"] = to_json(*c.noise.fixed);
  } else {
    noise = Json{{"probes", c.noise.probes},
                 {"reps", c.noise.reps},
                 {"r_lo", c.noise.r_lo},
                 {"r_hi", c.noise.r_hi},
                 {"seed", c.noise.seed}};
  }

  Json out{{"problem", problem},
           {"schedule", schedule},
           {"optimizer",
            {{"method", to_string(c.method)},
             {"beta", c.beta},
             {"batch_size", c.oracle.batch_size},
             {"additive_variance", c.oracle.additive_variance}}},
           {"init", init},
           {"seeds", seeds},
           {"output_dir", c.output_dir},
           {"checks", c.checks}};
  if (c.cert) out["cert"] = to_json(*c.cert);
  if (c.growth) out["growth"] = to_json(*c.growth);
  out["noise"] = noise;
  out["bound"] = c.bound;
  out["tolerance"] = c.tolerance;
  out["override_cap"] = c.override_cap;
  out["workers"] = c.workers;
  return out;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config: " + path);
  Json j;
  try {
    j = Json::parse(f, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  const fs::path parent = fs::path(path).parent_path();
  return parse_config(j, parent.empty() ? "." : parent.string());
}

std::vector<std::uint64_t> resolve_seeds(const SeedsConfig& s) {
  if (!s.list.empty()) return s.list;
  std::vector<std::uint64_t> out;
  for (int i = 0; i < s.count; ++i) out.push_back(derive_seed(s.master, static_cast<std::uint64_t>(i)));
  return out;
}

// --- preparation ----------------------------------------------------------------

Prepared prepare(const ExperimentConfig& cfg) {
  return rethrow_as_config([&] {
    Prepared p;
    p.problem = build_problem(cfg.problem, cfg.base_dir);
    const Problem& prob = *p.problem;
    p.L = prob.smoothness();
    p.cert = cfg.cert ? *cfg.cert : optimum_centered_cert(prob);
    p.growth = cfg.growth ? cfg.growth : prob.growth_cert();

    if (cfg.noise.fixed) {
      p.noise = *cfg.noise.fixed;
      p.noise_json = Json{{"source", "config"}, {"cert", to_json(p.noise)}};
    } else {
      const auto probes = noise_probes(prob, cfg.noise.probes, cfg.noise.r_lo,
                                       cfg.noise.r_hi, cfg.noise.seed);
      const NoiseEstimate est =
          estimate_noise(prob, cfg.oracle, probes, cfg.noise.reps, cfg.noise.seed);
      p.noise = est.cert;
      p.noise_json = to_json(est);
      p.noise_json["source"] = "estimated";
    }

    const Vec& xs = prob.optimum().x;
    if (cfg.init.x1) {
      if (static_cast<int>(cfg.init.x1->size()) != prob.dim()) {
        throw ConfigError("init.x1 has " + std::to_string(cfg.init.x1->size()) +
                          " entries, problem dimension is " + std::to_string(prob.dim()));
      }
      p.x1 = Eigen::Map<const Vec>(cfg.init.x1->data(), prob.dim());
    } else {
      Rng rng(cfg.init.seed);
      std::normal_distribution<double> g;
      Vec u(prob.dim());
      for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = g(rng);
      p.x1 = xs + cfg.init.radius * u / u.norm();
    }
    p.dist2_init = prob.dist2_to_optimum(p.x1);

    const bool momentum = cfg.method == Method::Momentum;
    const bool generalized = p.cert.p < 2.0;
    ScheduleSpec spec = cfg.schedule;
    if (cfg.cap_fraction) {
      const double cap =
          momentum ? momentum_caps(p.cert.theta1, p.noise.rho, p.L, cfg.beta,
                                   regime_for(spec, generalized))
                   : sgd_cap(p.cert.theta1, p.noise.rho, p.L);
      set_peak(spec, *cfg.cap_fraction * cap);
    }
    p.schedule = Schedule(spec);
    p.audit = audit_schedule(spec, p.cert.theta1, p.noise.rho, p.L,
                             momentum ? std::optional<double>(cfg.beta) : std::nullopt);

    const std::string which = resolved_bound(cfg, p.cert);
    if (momentum) p.lyapunov_r2 = lyapunov_radii(p.cert, p.growth, p.noise, cfg.beta, p.schedule);
    if (which == "theorem1") {
      p.bound = theorem1_bound(p.cert, p.noise, p.L, p.dist2_init);
    } else if (which == "theorem5") {
      if (!p.growth) throw ConfigError("theorem5 needs a growth cert");
      p.bound = theorem5_bound(p.cert, *p.growth, p.noise, p.schedule.max_step(), p.dist2_init);
    } else if (which == "appendix_d") {
      if (p.cert.p != 2.0 || p.cert.R != 0.0) {
        throw ConfigError("appendix_d needs a cert with p = 2 and R = 0");
      }
      if (spec.family == Family::Constant) {
        p.bound = appendixD_constant_bound(p.cert.theta1, p.cert.theta2, p.noise.sigma2,
                                           spec.eta1, spec.T, p.dist2_init, p.noise.rho, p.L);
      } else {
        p.bound = appendixD_decaying_bound(p.cert.theta1, p.cert.theta2, p.noise.sigma2,
                                           spec, p.dist2_init);
      }
    } else {
      if (!momentum) throw ConfigError("bound 'momentum' needs optimizer.method = momentum");
      p.bound = momentum_report(p.cert, p.noise, p.L, cfg.beta, p.schedule, generalized,
                                p.lyapunov_r2);
    }
    if (p.bound.formula == FormulaId::Momentum &&
        std::count(cfg.checks.begin(), cfg.checks.end(), "bound")) {
      throw ConfigError("check 'bound' has no closed-form value for momentum runs");
    }
    if (!momentum && std::count(cfg.checks.begin(), cfg.checks.end(), "lyapunov")) {
      throw ConfigError("check 'lyapunov' needs optimizer.method = momentum");
    }
    return p;
  });
}

// --- commands -----------------------------------------------------------------------

CommandResult cmd_run(const ExperimentConfig& cfg) {
  CommandResult res;
  clear_failure(cfg);
  Prepared p;
  try {
    p = prepare(cfg);
  } catch (const ConfigError& e) {
    res.exit_code = 2;
    res.report = config_error(e.what());
    write_failure(cfg, res.report);
    return res;
  }

  const bool cap_ok = p.audit.cap_satisfied;
  if (cap_enforced(p.bound) && !cap_ok && !cfg.override_cap) {
    res.exit_code = 2;
    res.report = Json{{"status", "error"},
                      {"error", "cap_violation"},
                      {"message", "max step " + format_double(p.schedule.max_step()) +
                                      " exceeds the step cap " + format_double(p.audit.cap_value) +
                                      "; pass --override-cap to run anyway"},
                      {"cap", p.audit.cap_value},
                      {"max_step", p.schedule.max_step()},
                      {"audit", to_json(p.audit)}};
    write_failure(cfg, res.report);
    return res;
  }

  OptimizerConfig oc;
  oc.method = cfg.method;
  oc.beta = cfg.beta;
  oc.oracle = cfg.oracle;
  oc.x1 = p.x1;
  oc.generalized = p.cert.p < 2.0;
  oc.cap_overridden = cap_enforced(p.bound) && !cap_ok;
  const EnsembleSummary ens =
      run_ensemble(*p.problem, p.schedule, oc, resolve_seeds(cfg.seeds), cfg.workers);

  Json checks = Json::object();
  bool all_pass = true;
  const double target = compared_bound(p.bound);
  for (const auto& name : cfg.checks) {
    Json r;
    bool pass = false;
    if (name == "bound") {
      if (p.bound.formula == FormulaId::AppD_Const || p.bound.formula == FormulaId::AppD_PolyLt1 ||
          p.bound.formula == FormulaId::AppD_PolyEq1 ||
          p.bound.formula == FormulaId::AppD_StepDecay) {
        const double fin = ens.dist2.mean.back();
        pass = !ens.diverged && fin <= target * (1.0 + cfg.tolerance);
        r = Json{{"statistic", "final_mean_dist2"}, {"value", fin}, {"bound", target},
                 {"tolerance", cfg.tolerance}};
      } else {
        pass = !ens.diverged && ens.mean_sup_dist2 <= target;
        r = Json{{"statistic", "mean_sup_dist2"}, {"value", ens.mean_sup_dist2},
                 {"bound", target}};
      }
    } else if (name == "no_divergence") {
      pass = !ens.diverged;
      r = Json::object();
    } else if (name == "boundedness_proxy") {
      double ref_d = 0.0, ref_f = 0.0;
      const long kd = first_excursion(ens.dist2.mean, 100, 10.0, ref_d);
      const long kf = first_excursion(ens.fgap.mean, 100, 10.0, ref_f);
      pass = !ens.diverged && kd == 0 && kf == 0;
      r = Json{{"window", 100}, {"factor", 10}, {"dist2_reference", ref_d},
               {"fgap_reference", ref_f}, {"dist2_first_excursion", kd},
               {"fgap_first_excursion", kf}};
    } else if (name == "lyapunov") {
      if (ens.diverged) {
        r = Json{{"message", "ensemble diverged"}};
      } else {
        const long k_min = std::max(2L, p.audit.cap_onset);
        const LyapunovTest t =
            lyapunov_decrease_test(ens, p.lyapunov_r2, k_min, p.schedule.horizon());
        pass = t.passed;
        r = to_json(t);
        r["k_min"] = k_min;
      }
    } else if (name == "audit") {
      pass = p.audit.all_pass();
      r = to_json(p.audit);
    }
    r["pass"] = pass;
    checks[name] = r;
    all_pass = all_pass && pass;
  }

  const fs::path out(cfg.output_dir);
  for (const auto& run : ens.runs) {
    write_file((out / ("traj_seed_" + std::to_string(run.seed) + ".csv")).string(),
               trajectory_csv(run));
  }
  Json ej = to_json(ens);
  ej["checks"] = checks;
  ej["passed"] = all_pass;
  write_file((out / "ensemble.json").string(), dump(ej));

  Json bj = to_json(p.bound);
  bj["cert"] = to_json(p.cert);
  if (p.growth) bj["growth"] = to_json(*p.growth);
  bj["noise"] = p.noise_json;
  bj["smoothness"] = p.L;
  bj["dist2_init"] = p.dist2_init;
  bj["audit"] = to_json(p.audit);
  write_file((out / "bound.json").string(), dump(bj));

  LineChart chart;
  chart.title = p.problem->name() + ", " + to_string(p.schedule.spec().family) + " schedule, " +
                to_string(cfg.method) + " (" + std::to_string(ens.runs.size()) + " seeds)";
  chart.y_label = "mean |x_k - x*|^2";
  chart.y = ens.dist2.mean;
  if (std::isfinite(target)) {
    chart.rule = target;
    chart.rule_label = to_string(p.bound.formula) + " bound";
  }
  write_file((out / "plot.svg").string(), render_svg(chart));

  res.exit_code = all_pass ? 0 : 1;
  res.report = Json{{"status", all_pass ? "pass" : "fail"},
                    {"mean_sup_dist2", ens.mean_sup_dist2},
                    {"bound", std::isfinite(target) ? Json(target) : Json(nullptr)},
                    {"cap_satisfied", cap_ok},
                    {"checks", checks}};
  if (!all_pass) {
    res.report["error"] = "check_failure";
    write_failure(cfg, res.report);
  }
  return res;
}

CommandResult cmd_certify(const ExperimentConfig& cfg) {
  CommandResult res;
  clear_failure(cfg);
  try {
    rethrow_as_config([&] {
      const ProblemPtr prob = build_problem(cfg.problem, cfg.base_dir);
      std::vector<std::pair<std::string, DissipativityCert>> certs;
      if (cfg.cert) {
        certs.emplace_back("configured", *cfg.cert);
      } else {
        certs.emplace_back("nominal", prob->nominal_cert());
        if (prob->nominal_cert().center != CertCenter::Optimum) {
          certs.emplace_back("optimum_centered", optimum_centered_cert(*prob));
        }
      }
      bool ok = true;
      Json list = Json::array();
      for (const auto& [label, cert] : certs) {
        const CertReport r = verify_dissipativity(*prob, cert, default_plan(cert.R));
        ok = ok && r.passed;
        list.push_back({{"label", label}, {"cert", to_json(cert)}, {"report", to_json(r)}});
      }
      Json out{{"problem", prob->name()}, {"dissipativity", list}};
      const auto growth = cfg.growth ? cfg.growth : prob->growth_cert();
      if (growth) {
        const CertReport r = verify_growth(*prob, *growth, default_plan(0.0));
        ok = ok && r.passed;
        out["growth"] = {{"cert", to_json(*growth)}, {"report", to_json(r)}};
      }
      const auto probes = noise_probes(*prob, cfg.noise.probes, cfg.noise.r_lo,
                                       cfg.noise.r_hi, cfg.noise.seed);
      out["noise"] = to_json(estimate_noise(*prob, cfg.oracle, probes, cfg.noise.reps,
                                            cfg.noise.seed));
      out["smoothness"] = prob->smoothness();
      out["passed"] = ok;
      write_file((fs::path(cfg.output_dir) / "certify.json").string(), dump(out));
      res.exit_code = ok ? 0 : 1;
      res.report = out;
      if (!ok) {
        res.report = Json{{"status", "fail"}, {"error", "cert_failure"}, {"details", out}};
        write_failure(cfg, res.report);
      }
      return 0;
    });
  } catch (const ConfigError& e) {
    res.exit_code = 2;
    res.report = config_error(e.what());
    write_failure(cfg, res.report);
  }
  return res;
}

CommandResult cmd_bound(const ExperimentConfig& cfg) {
  CommandResult res;
  clear_failure(cfg);
  try {
    const Prepared p = prepare(cfg);
    Json bj = to_json(p.bound);
    bj["cert"] = to_json(p.cert);
    if (p.growth) bj["growth"] = to_json(*p.growth);
    bj["noise"] = p.noise_json;
    bj["smoothness"] = p.L;
    bj["dist2_init"] = p.dist2_init;
    bj["audit"] = to_json(p.audit);
    write_file((fs::path(cfg.output_dir) / "bound.json").string(), dump(bj));
    res.report = bj;
  } catch (const ConfigError& e) {
    res.exit_code = 2;
    res.report = config_error(e.what());
    write_failure(cfg, res.report);
  }
  return res;
}

CommandResult cmd_sweep(const ExperimentConfig& cfg, const std::string& axis,
                        const std::vector<double>& values) {
  CommandResult res;
  clear_failure(cfg);
  const Json base = serialize_config(cfg);
  const auto fail = [&](const std::string& msg) {
    res.exit_code = 2;
    res.report = config_error(msg);
    write_failure(cfg, res.report);
    return res;
  };

  Json::json_pointer ptr;
  {
    std::string path = "/" + axis;
    std::replace(path.begin(), path.end(), '.', '/');
    try {
      ptr = Json::json_pointer(path);
    } catch (const nlohmann::json::exception&) {
      return fail("invalid sweep axis: " + axis);
    }
  }
  if (!base.contains(ptr) || !base.at(ptr).is_number()) {
    return fail("sweep axis '" + axis + "' is not a numeric config value");
  }
  if (values.empty()) return fail("sweep needs at least one value");

  std::string csv = "value,mean_sup_dist2,bound,cap_ok,pass\n";
  Json rows = Json::array();
  bool all = true;
  for (size_t i = 0; i < values.size(); ++i) {
    Json j = base;
    if (base.at(ptr).is_number_integer()) {
      if (values[i] != std::floor(values[i])) {
        return fail("sweep axis '" + axis + "' takes integer values");
      }
      j[ptr] = static_cast<long>(values[i]);
    } else {
      j[ptr] = values[i];
    }
    j["output_dir"] = (fs::path(cfg.output_dir) / ("sweep_" + std::to_string(i))).string();
    ExperimentConfig c;
    try {
      c = parse_config(j, cfg.base_dir);
    } catch (const ConfigError& e) {
      return fail(std::string("sweep value ") + format_double(values[i]) + ": " + e.what());
    }
    const CommandResult r = cmd_run(c);
    if (r.exit_code == 2 && r.report.value("error", "") != "cap_violation") {
      return fail(r.report.value("message", "config error"));
    }
    const bool pass = r.exit_code == 0;
    bool cap_ok = false;
    double sup = kNaN, bound = kNaN;
    if (r.report.contains("mean_sup_dist2")) {
      sup = r.report["mean_sup_dist2"].get<double>();
      cap_ok = r.report["cap_satisfied"].get<bool>();
      if (r.report["bound"].is_number()) bound = r.report["bound"].get<double>();
    }
    all = all && pass;
    csv += format_double(values[i]) + "," + format_double(sup) + "," + format_double(bound) +
           "," + (cap_ok ? "true" : "false") + "," + (pass ? "true" : "false") + "\n";
    rows.push_back({{"value", values[i]},
                    {"exit_code", r.exit_code},
                    {"mean_sup_dist2", std::isfinite(sup) ? Json(sup) : Json(nullptr)},
                    {"bound", std::isfinite(bound) ? Json(bound) : Json(nullptr)},
                    {"cap_ok", cap_ok},
                    {"pass", pass}});
  }
  write_file((fs::path(cfg.output_dir) / "sweep.csv").string(), csv);
  res.exit_code = all ? 0 : 1;
  res.report = Json{{"status", all ? "pass" : "fail"}, {"axis", axis}, {"rows", rows}};
  if (!all) {
    res.report["error"] = "check_failure";
    write_failure(cfg, res.report);
  }
  return res;
}

}  // namespace ubsgd
