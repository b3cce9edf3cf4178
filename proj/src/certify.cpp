#include "ubsgd/certify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "parallel.hpp"

namespace ubsgd {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("certify: " + what);
}

Vec random_direction(int d, Rng& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  Vec u(d);
  do {
    for (int j = 0; j < d; ++j) u[j] = N(rng);
  } while (u.squaredNorm() == 0.0);
  return u.normalized();
}

struct ShellResult {
  double worst = std::numeric_limits<double>::infinity();
  Vec point;
  long samples = 0;
};

void validate_plan(const ShellSamplingPlan& plan, double R) {
  require(plan.shells >= 1 && plan.samples_per_shell >= 1,
          "plan needs at least one shell and sample");
  require(plan.r_lo >= std::max(R, 1e-3), "plan r_lo must be >= max(R, 1e-3)");
  require(plan.r_hi >= 10.0 * plan.r_lo, "plan needs r_hi / r_lo >= 10");
}

// Evaluates slack(x) over shells around `center` and reduces to the minimum.
template <class Slack>
CertReport sweep_shells(const Problem& problem, const Vec& center,
                        const ShellSamplingPlan& plan, Slack slack) {
  const int d = problem.dim();
  std::vector<Vec> probes;
  if (plan.use_probe_directions) {
    for (const Vec& v : problem.probe_directions()) {
      probes.push_back(v.normalized());
      probes.push_back(-v.normalized());
    }
  }
  const double log_lo = std::log(plan.r_lo), log_hi = std::log(plan.r_hi);
  const double step = (log_hi - log_lo) / plan.shells;

  std::vector<ShellResult> results(plan.shells);
  detail::parallel_for(plan.shells, detail::default_workers(), [&](size_t s) {
    Rng rng(derive_seed(plan.rng_seed, s));
    std::uniform_real_distribution<double> U(0.0, 1.0);
    ShellResult& res = results[s];
    auto visit = [&](const Vec& x) {
      const std::optional<double> v = slack(x);
      if (!v) return;
      ++res.samples;
      if (*v < res.worst) {
        res.worst = *v;
        res.point = x;
      }
    };
    const double a = log_lo + step * static_cast<double>(s);
    for (int k = 0; k < plan.samples_per_shell; ++k) {
      const Vec u = random_direction(d, rng);
      const double r = std::exp(a + step * U(rng));
      visit(center + r * u);
    }
    for (const Vec& u : probes) {
      visit(center + std::exp(a) * u);
      visit(center + std::exp(a + 0.5 * step) * u);
    }
  });

  CertReport rep;
  rep.worst_violation = std::numeric_limits<double>::infinity();
  for (const auto& r : results) {
    rep.samples += r.samples;
    if (r.samples > 0) ++rep.shells_checked;
    if (r.worst < rep.worst_violation) {
      rep.worst_violation = r.worst;
      rep.worst_point = r.point;
    }
  }
  if (rep.samples == 0) rep.worst_violation = 0.0;
  rep.passed = rep.worst_violation >= -rep.tol;
  return rep;
}

}  // namespace

DissipativityCert convert_origin_form(double theta1p, double theta2p, double L,
                                      double x_star_norm) {
  require(theta1p > 0.0 && L > 0.0, "theta1' and L must be positive");
  require(theta2p >= 0.0 && x_star_norm >= 0.0, "theta2' and |x*| must be >= 0");
  const double s2 = x_star_norm * x_star_norm;
  return {theta1p / 2.0,
          (theta1p + 2.0 * L + L * L / (2.0 * theta1p)) * s2 + theta2p, 0.0,
          2.0, CertCenter::Optimum};
}

GeneralizedConversion convert_generalized(double theta1p, double theta2p,
                                          double theta3, double tau, double p,
                                          double x_star_norm) {
  require(theta1p > 0.0 && theta3 > 0.0, "theta1' and theta3 must be positive");
  require(theta2p >= 0.0 && x_star_norm >= 0.0, "theta2' and |x*| must be >= 0");
  require(p > 0.0 && p < 2.0, "p must lie in (0,2)");
  require(tau >= 0.0 && tau < p, "needs 0 <= tau < p");

  GeneralizedConversion out;
  double correction = 0.0;
  if (tau == 0.0) {
    correction = std::sqrt(2.0 * theta3) * x_star_norm;
  } else if (x_star_norm > 0.0) {
    const double alpha2 = p / (p - tau);
    const double s = std::pow(theta1p * p / (tau * std::pow(2.0, p + 1.0)), tau / p) /
                     std::sqrt(2.0 * theta3);
    correction = std::pow(x_star_norm, alpha2) / (std::pow(s, alpha2) * alpha2);
  }
  out.cert = {theta1p / std::pow(2.0, p + 1.0), theta2p + correction,
              std::max(2.0 * x_star_norm, 1.0), p, CertCenter::Optimum};
  out.outside_theorem5 = tau > p / 2.0;
  return out;
}

DissipativityCert optimum_centered_cert(const Problem& problem) {
  const DissipativityCert nominal = problem.nominal_cert();
  if (nominal.center == CertCenter::Optimum) return nominal;
  const double xs = problem.optimum().x.norm();
  if (nominal.p == 2.0) {
    const double L = problem.smoothness();
    require(std::isfinite(L), problem.name() + " has no finite L for conversion");
    return convert_origin_form(nominal.theta1, nominal.theta2, L, xs);
  }
  const auto growth = problem.growth_cert();
  require(growth.has_value(), problem.name() + " needs a growth cert to convert");
  return convert_generalized(nominal.theta1, nominal.theta2, growth->theta3,
                             growth->tau, nominal.p, xs)
      .cert;
}

ShellSamplingPlan default_plan(double R) {
  ShellSamplingPlan plan;
  plan.r_lo = std::max(plan.r_lo, R);
  plan.r_hi = std::max(plan.r_hi, 10.0 * plan.r_lo);
  return plan;
}

CertReport verify_dissipativity(const Problem& problem,
                                const DissipativityCert& cert,
                                const ShellSamplingPlan& plan) {
  validate(cert);
  validate_plan(plan, cert.R);
  const bool origin = cert.center == CertCenter::Origin;
  const Vec center = origin ? Vec(Vec::Zero(problem.dim())) : problem.optimum().x;
  return sweep_shells(problem, center, plan, [&](const Vec& x) -> std::optional<double> {
    const Vec ref = origin ? Vec(Vec::Zero(x.size())) : problem.nearest_optimum(x);
    const Vec diff = x - ref;
    const double dn = diff.norm();
    if (dn < cert.R) return std::nullopt;
    const double growth = cert.p == 2.0 ? dn * dn : std::pow(dn, cert.p);
    return problem.gradient(x).dot(diff) - cert.theta1 * growth + cert.theta2;
  });
}

CertReport verify_growth(const Problem& problem, const GrowthCert& growth,
                         const ShellSamplingPlan& plan) {
  validate(growth);
  validate_plan(plan, 0.0);
  return sweep_shells(problem, problem.optimum().x, plan,
                      [&](const Vec& x) -> std::optional<double> {
                        const double dn = (x - problem.nearest_optimum(x)).norm();
                        return growth.theta3 * (1.0 + std::pow(dn, 2.0 * growth.tau)) -
                               problem.gradient(x).squaredNorm();
                      });
}

NoiseEstimate estimate_noise(const Problem& problem, const OracleSpec& oracle_spec,
                             const std::vector<Vec>& probes, int reps,
                             std::uint64_t seed) {
  require(reps >= 100, "estimate_noise needs reps >= 100");
  require(!probes.empty(), "estimate_noise needs probe points");
  const size_t m = probes.size();
  NoiseEstimate est;
  est.probe_grad_norm2.resize(m);
  est.probe_variance.resize(m);
  detail::parallel_for(m, detail::default_workers(), [&](size_t j) {
    Oracle oracle(problem, oracle_spec);
    Rng rng(derive_seed(seed, j));
    const Vec g = problem.gradient(probes[j]);
    double acc = 0.0;
    for (int r = 0; r < reps; ++r) acc += (oracle.sample(probes[j], rng) - g).squaredNorm();
    est.probe_grad_norm2[j] = g.squaredNorm();
    est.probe_variance[j] = acc / reps;
  });

  const Eigen::Map<const Vec> G(est.probe_grad_norm2.data(), m);
  const Eigen::Map<const Vec> V(est.probe_variance.data(), m);
  double rho = 0.0, sigma2 = V.mean();
  if (m >= 2 && (G.array() - G.mean()).square().sum() > 0.0) {
    Mat X(m, 2);
    X.col(0) = G;
    X.col(1).setOnes();
    const Vec coef = X.colPivHouseholderQr().solve(V);
    rho = coef[0];
    sigma2 = coef[1];
  }
  est.fitted_rho = rho;
  est.fitted_sigma2 = sigma2;
  if (rho < 0.0) {
    est.rho_clamped = true;
    rho = 0.0;
    sigma2 = V.mean();
  }
  if (sigma2 < 0.0) {
    est.sigma2_clamped = true;
    sigma2 = 0.0;
    const double gg = G.squaredNorm();
    rho = gg > 0.0 ? std::max(0.0, G.dot(V) / gg) : 0.0;
  }
  // A zero fit at a point with positive variance cannot be scaled up; lift
  // the intercept first.
  for (size_t j = 0; j < m; ++j) {
    if (V[j] > 0.0 && rho * G[j] + sigma2 == 0.0) sigma2 = std::max(sigma2, V[j]);
  }
  double inflation = 1.0;
  for (size_t j = 0; j < m; ++j) {
    const double fit = rho * G[j] + sigma2;
    if (fit > 0.0) inflation = std::max(inflation, V[j] / fit);
  }
  // Headroom so the scaled envelope is not undone by rounding.
  inflation *= 1.0 + 1e-12;
  est.inflation = inflation;
  est.cert = {rho * inflation, sigma2 * inflation};
  return est;
}

std::vector<Vec> noise_probes(const Problem& problem, int count, double r_lo,
                              double r_hi, std::uint64_t seed) {
  require(count >= 1 && r_lo > 0.0 && r_hi >= r_lo, "invalid probe request");
  Rng rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<Vec> out;
  const Vec& xs = problem.optimum().x;
  for (int i = 0; i < count; ++i) {
    const Vec u = random_direction(problem.dim(), rng);
    const double r = std::exp(std::log(r_lo) + U(rng) * (std::log(r_hi) - std::log(r_lo)));
    out.push_back(xs + r * u);
  }
  return out;
}

double estimate_linear_growth(const Problem& problem,
                              const ShellSamplingPlan& plan) {
  validate_plan(plan, 0.0);
  const CertReport rep = sweep_shells(
      problem, Vec::Zero(problem.dim()), plan, [&](const Vec& x) -> std::optional<double> {
        return -problem.gradient(x).norm() / (1.0 + x.norm());
      });
  return -rep.worst_violation;
}

}  // namespace ubsgd
