#include "ubsgd/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "parallel.hpp"
#include "ubsgd/bounds.hpp"

namespace ubsgd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) throw std::domain_error(std::string("non-finite ") + what);
}

// Standard normal quantile by bisection on the CDF.
double normal_quantile(double p) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

SeriesStats reduce(const std::vector<Trajectory>& runs,
                   std::vector<double> Trajectory::*field) {
  const size_t n = runs.size();
  size_t len = 0;
  for (const auto& r : runs) len = std::max(len, (r.*field).size());
  SeriesStats s;
  s.mean.assign(len, 0.0);
  s.ci_low.assign(len, 0.0);
  s.ci_high.assign(len, 0.0);
  for (size_t k = 0; k < len; ++k) {
    double sum = 0.0;
    for (const auto& r : runs) sum += k < (r.*field).size() ? (r.*field)[k] : kNaN;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& r : runs) {
      const double v = k < (r.*field).size() ? (r.*field)[k] : kNaN;
      ss += (v - mean) * (v - mean);
    }
    const double half = n > 1 ? 1.959963984540054 *
                                    std::sqrt(ss / static_cast<double>(n - 1)) /
                                    std::sqrt(static_cast<double>(n))
                              : 0.0;
    s.mean[k] = mean;
    s.ci_low[k] = mean - half;
    s.ci_high[k] = mean + half;
  }
  return s;
}

}  // namespace

std::string to_string(Method m) { return m == Method::SGD ? "sgd" : "momentum"; }

Method method_from_string(const std::string& s) {
  if (s == "sgd") return Method::SGD;
  if (s == "momentum") return Method::Momentum;
  throw std::invalid_argument("unknown method: " + s);
}

std::string to_string(LyapunovForm f) {
  switch (f) {
    case LyapunovForm::None: return "none";
    case LyapunovForm::Constant: return "constant";
    case LyapunovForm::Decaying: return "decaying";
    case LyapunovForm::GeneralizedConstant: return "generalized_constant";
    case LyapunovForm::GeneralizedDecaying: return "generalized_decaying";
  }
  return "unknown";
}

LyapunovForm select_lyapunov_form(Method method, Family family,
                                  bool generalized) {
  if (method == Method::SGD) return LyapunovForm::None;
  const bool constant = family == Family::Constant;
  if (generalized) {
    return constant ? LyapunovForm::GeneralizedConstant
                    : LyapunovForm::GeneralizedDecaying;
  }
  return constant ? LyapunovForm::Constant : LyapunovForm::Decaying;
}

Vec sgd_step(const Vec& x, double eta, const Vec& g) {
  require_finite(g, "gradient");
  require_finite(x, "iterate");
  Vec out(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) out[j] = std::fma(-eta, g[j], x[j]);
  return out;
}

std::pair<Vec, Vec> momentum_step(const Vec& x, const Vec& v, double eta,
                                  double beta, const Vec& g) {
  if (!(beta > 0.0 && beta < 1.0)) {
    throw std::invalid_argument("momentum_step: beta must lie in (0,1)");
  }
  require_finite(g, "gradient");
  require_finite(x, "iterate");
  Vec v_next = beta * v + (1.0 - beta) * g;
  Vec x_next = sgd_step(x, eta, v_next);
  return {std::move(x_next), std::move(v_next)};
}

double lyapunov_W(LyapunovForm form, const Vec& x_next, const Vec& x,
                  const Vec& x_star, double fgap_k, double eta_k, double tau_k,
                  double beta) {
  if (form == LyapunovForm::None) {
    throw std::invalid_argument("lyapunov_W: not defined for SGD runs");
  }
  const double ob = 1.0 - beta;
  const Vec xt = (x_next - beta * x) / ob;
  const double gamma = momentum_gamma(beta);
  double c = 0.0;
  if (form == LyapunovForm::GeneralizedDecaying) c = (1.0 - tau_k) / (tau_k * ob);
  const double u = 2.0 * gamma * tau_k * eta_k + 2.0 * beta * ob * tau_k * eta_k * c;
  return (xt - x_star).squaredNorm() + c * (x_next - x_star).squaredNorm() +
         (x_next - x).squaredNorm() + u * fgap_k;
}

Trajectory run_trajectory(const Problem& problem, const Schedule& schedule,
                          const OptimizerConfig& cfg) {
  const long T = schedule.horizon();
  if (cfg.x1.size() != problem.dim()) {
    throw std::invalid_argument("run_trajectory: x1 has wrong dimension");
  }
  Trajectory tr;
  tr.seed = cfg.seed;
  tr.cap_overridden = cfg.cap_overridden;
  tr.form = select_lyapunov_form(cfg.method, schedule.spec().family, cfg.generalized);
  tr.stepsize.reserve(T);
  tr.dist2.reserve(T + 1);
  tr.fgap.reserve(T + 1);
  tr.W.reserve(T + 1);
  tr.sup_dist2.reserve(T + 1);

  Oracle oracle(problem, cfg.oracle);
  Rng rng(cfg.seed);
  Vec x = cfg.x1;
  Vec v = Vec::Zero(problem.dim());
  double sup = 0.0;

  auto record = [&](const Vec& xk, double w) {
    const double d2 = problem.dist2_to_optimum(xk);
    sup = std::max(sup, d2);
    tr.dist2.push_back(d2);
    tr.fgap.push_back(problem.gap(xk));
    tr.W.push_back(w);
    tr.sup_dist2.push_back(sup);
    return d2;
  };

  record(x, kNaN);
  for (long k = 1; k <= T; ++k) {
    const double eta = schedule.at(k);
    tr.stepsize.push_back(eta);
    Vec x_next;
    double w = kNaN;
    try {
      const Vec g = oracle.sample(x, rng);
      if (cfg.method == Method::SGD) {
        x_next = sgd_step(x, eta, g);
      } else {
        auto [xn, vn] = momentum_step(x, v, eta, cfg.beta, g);
        x_next = std::move(xn);
        v = std::move(vn);
        const double tau = k == 1 ? 1.0 : schedule.tau(k);
        w = lyapunov_W(tr.form, x_next, x, problem.nearest_optimum(x_next),
                       tr.fgap.back(), eta, tau, cfg.beta);
      }
      require_finite(x_next, "iterate");
    } catch (const std::domain_error& e) {
      tr.diverged = true;
      tr.diagnostic = "aborted at k=" + std::to_string(k) + ": " + e.what();
      break;
    }
    x = std::move(x_next);
    const double d2 = record(x, w);
    if (!(d2 <= kDivergenceThreshold)) {
      tr.diverged = true;
      tr.diagnostic = "divergence guard at k=" + std::to_string(k + 1) +
                      ": dist2 exceeded 1e12";
      break;
    }
  }
  return tr;
}

EnsembleSummary run_ensemble(const Problem& problem, const Schedule& schedule,
                             const OptimizerConfig& config,
                             std::vector<std::uint64_t> seeds,
                             unsigned workers) {
  if (seeds.size() < 2) throw std::invalid_argument("run_ensemble needs >= 2 seeds");
  std::sort(seeds.begin(), seeds.end());
  EnsembleSummary ens;
  ens.seeds = seeds;
  ens.runs.resize(seeds.size());
  detail::parallel_for(seeds.size(), workers ? workers : detail::default_workers(),
                       [&](size_t i) {
                         OptimizerConfig c = config;
                         c.seed = seeds[i];
                         ens.runs[i] = run_trajectory(problem, schedule, c);
                       });
  ens.dist2 = reduce(ens.runs, &Trajectory::dist2);
  ens.fgap = reduce(ens.runs, &Trajectory::fgap);
  ens.W = reduce(ens.runs, &Trajectory::W);
  double sum = 0.0;
  for (const auto& r : ens.runs) {
    sum += r.sup();
    ens.max_sup_dist2 = std::max(ens.max_sup_dist2, r.sup());
    ens.diverged = ens.diverged || r.diverged;
  }
  ens.mean_sup_dist2 = sum / static_cast<double>(ens.runs.size());
  return ens;
}

LyapunovTest lyapunov_decrease_test(const EnsembleSummary& ens,
                                    const std::vector<double>& r2, long k_min,
                                    long k_max, double confidence) {
  if (!(confidence > 0.5 && confidence < 1.0)) {
    throw std::invalid_argument("lyapunov test: confidence must lie in (0.5,1)");
  }
  if (ens.runs.size() < 2) throw std::invalid_argument("lyapunov test needs >= 2 runs");
  if (ens.diverged) throw std::invalid_argument("lyapunov test: ensemble diverged");
  const double z = normal_quantile(confidence);
  const double n = static_cast<double>(ens.runs.size());
  const long len = static_cast<long>(ens.dist2.mean.size());
  LyapunovTest out;
  out.worst_upper = -std::numeric_limits<double>::infinity();
  for (long k = std::max(k_min, 2L); k <= k_max && k + 1 <= len; ++k) {
    if (!(ens.dist2.mean[k - 1] >= r2.at(k - 1))) continue;
    double sum = 0.0;
    for (const auto& r : ens.runs) sum += r.W[k] - r.W[k - 1];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& r : ens.runs) {
      const double d = r.W[k] - r.W[k - 1] - mean;
      ss += d * d;
    }
    const double upper = mean + z * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    ++out.tested;
    out.worst_upper = std::max(out.worst_upper, upper);
    if (!(upper < 0.0)) {
      ++out.not_decreasing;
      if (out.first_failure < 0) out.first_failure = k;
    }
  }
  out.passed = out.not_decreasing == 0;
  return out;
}

}  // namespace ubsgd
