#include "ubsgd/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ubsgd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("bounds: " + what);
}

void require_beta(double beta) {
  require(beta > 0.0 && beta < 1.0, "beta must lie in (0,1)");
}

}  // namespace

std::string to_string(FormulaId f) {
  switch (f) {
    case FormulaId::Thm1: return "Thm1";
    case FormulaId::Thm5: return "Thm5";
    case FormulaId::AppD_Const: return "AppD_Const";
    case FormulaId::AppD_PolyLt1: return "AppD_PolyLt1";
    case FormulaId::AppD_PolyEq1: return "AppD_PolyEq1";
    case FormulaId::AppD_StepDecay: return "AppD_StepDecay";
    case FormulaId::Momentum: return "Momentum";
  }
  return "unknown";
}

bool BoundReport::hypotheses_ok() const {
  return std::all_of(hypotheses.begin(), hypotheses.end(),
                     [](const Hypothesis& h) { return h.satisfied; });
}

double sgd_cap(double theta1, double rho, double L) {
  require(theta1 > 0.0 && L > 0.0 && rho >= 0.0, "invalid cap constants");
  return theta1 / ((rho + 1.0) * L * L);
}

std::string to_string(MomentumRegime r) {
  switch (r) {
    case MomentumRegime::Constant: return "constant";
    case MomentumRegime::Decaying: return "decaying";
    case MomentumRegime::GeneralizedConst: return "generalized_const";
    case MomentumRegime::GeneralizedDecayingPoly:
      return "generalized_decaying_poly";
    case MomentumRegime::GeneralizedDecayingExp:
      return "generalized_decaying_exp";
  }
  return "unknown";
}

MomentumRegime momentum_regime_from_string(const std::string& s) {
  for (auto r : {MomentumRegime::Constant, MomentumRegime::Decaying,
                 MomentumRegime::GeneralizedConst,
                 MomentumRegime::GeneralizedDecayingPoly,
                 MomentumRegime::GeneralizedDecayingExp}) {
    if (to_string(r) == s) return r;
  }
  throw std::invalid_argument("unknown momentum regime: " + s);
}

double momentum_gamma(double beta) {
  require_beta(beta);
  return beta * (1.0 - beta + 1.0 / (1.0 - beta));
}

double momentum_caps(double theta1, double rho, double L, double beta,
                     MomentumRegime regime) {
  require_beta(beta);
  require(theta1 > 0.0 && L > 0.0 && rho >= 0.0, "invalid cap constants");
  const double ob = 1.0 - beta;
  const double heavy_ball = (1.0 - beta * beta) / (beta * L * (ob + 1.0 / ob));
  switch (regime) {
    case MomentumRegime::Constant:
    case MomentumRegime::Decaying:
      return std::min(heavy_ball,
                      theta1 / (2.0 * (ob * ob + 1.0) * (rho + 1.0) * L * L));
    case MomentumRegime::GeneralizedConst:
      return heavy_ball;
    case MomentumRegime::GeneralizedDecayingPoly:
      return (1.0 - beta * beta) / (2.0 * beta * L * (ob + 1.0 / ob));
    case MomentumRegime::GeneralizedDecayingExp:
      return (1.0 - beta * beta) / (beta * L * (ob + 2.0 / ob));
  }
  throw std::invalid_argument("bounds: unknown momentum regime");
}

double momentum_cap_proof_variant(double theta1, double rho, double L,
                                  double beta) {
  require_beta(beta);
  const double ob = 1.0 - beta;
  const double heavy_ball = (1.0 - beta * beta) / (beta * L * (ob + 1.0 / ob));
  return std::min(heavy_ball, theta1 / ((ob * ob + 1.0) * (rho + 1.0) * L * L));
}

BoundReport theorem1_bound(const DissipativityCert& cert,
                           const NoiseCert& noise, double L,
                           double dist2_init) {
  validate(cert);
  validate(noise);
  require(cert.p == 2.0, "theorem1_bound needs p = 2");
  require(L > 0.0, "L must be positive");
  require(dist2_init >= 0.0, "dist2_init must be non-negative");
  const double t1 = cert.theta1, rho = noise.rho, s2 = noise.sigma2;

  BoundReport rep;
  rep.formula = FormulaId::Thm1;
  rep.r2 = std::max(cert.R * cert.R,
                    2.0 * cert.theta2 / t1 + s2 / ((1.0 + rho) * L * L));
  rep.r2_alt = rep.r2;
  const double ball = 2.0 * (s2 + L * L * rep.r2) * t1 * t1 /
                          ((1.0 + rho) * (1.0 + rho) * L * L * L * L) +
                      2.0 * rep.r2;
  rep.bound = std::max(dist2_init, ball);
  rep.conservative_bound = rep.bound;
  rep.cap = sgd_cap(t1, rho, L);
  rep.hypotheses = {{"p_equals_2", true},
                    {"cert_centered_at_optimum",
                     cert.center == CertCenter::Optimum}};
  return rep;
}

BoundReport theorem5_bound(const DissipativityCert& cert,
                           const GrowthCert& growth, const NoiseCert& noise,
                           double eta_max, double dist2_init) {
  validate(cert);
  validate(growth);
  validate(noise);
  require(cert.p < 2.0, "theorem5_bound needs p < 2");
  require(growth.tau <= cert.p / 2.0, "theorem5_bound needs tau <= p/2");
  require(eta_max >= 0.0, "eta_max must be non-negative");
  require(dist2_init >= 0.0, "dist2_init must be non-negative");
  const double t1 = cert.theta1, t3 = growth.theta3, rho = noise.rho;
  const double gap = cert.p - 2.0 * growth.tau;

  BoundReport rep;
  rep.formula = FormulaId::Thm5;
  const double outer = std::pow(
      2.0 * cert.theta2 / t1 + (noise.sigma2 + (rho + 1.0) * t3) * eta_max / t1,
      2.0 / cert.p);
  double middle = kInf, middle_proof = kInf;
  if (gap > 0.0) {
    middle = std::pow(8.0 * eta_max * (rho + 1.0) * t3 / t1, 1.0 / gap);
    middle_proof = std::pow(eta_max * (rho + 1.0) * t3 / t1, 1.0 / gap);
  }
  const double R2 = cert.R * cert.R;
  rep.r2 = std::max({R2, middle, outer});
  rep.r2_alt = std::max({R2, middle_proof, outer});
  const double r2 = std::max(rep.r2, rep.r2_alt);
  const double ball =
      2.0 * (1.0 + eta_max * eta_max * (rho + 1.0) * t3) * r2 +
      2.0 * eta_max * eta_max * (noise.sigma2 + (rho + 1.0) * t3);
  rep.bound = std::min(dist2_init, ball);
  rep.conservative_bound = std::max(dist2_init, ball);
  rep.cap = eta_max;
  rep.hypotheses = {{"p_less_than_2", true},
                    {"p_greater_than_2tau", gap > 0.0},
                    {"cert_centered_at_optimum",
                     cert.center == CertCenter::Optimum}};
  return rep;
}

double momentum_constant_r2(const DissipativityCert& cert,
                            const NoiseCert& noise, double eta, double beta) {
  require_beta(beta);
  const double ob = 1.0 - beta;
  return std::max(cert.R * cert.R,
                  2.0 * cert.theta2 / cert.theta1 +
                      2.0 * eta * (ob * ob + 1.0) * noise.sigma2 / cert.theta1);
}

double momentum_decaying_r2(const DissipativityCert& cert,
                            const NoiseCert& noise, double eta_k,
                            double beta) {
  require_beta(beta);
  const double ob = 1.0 - beta;
  return std::max(cert.R * cert.R,
                  2.0 * cert.theta2 / cert.theta1 +
                      (ob * ob + 1.0) * noise.sigma2 * eta_k / cert.theta1);
}

double momentum_generalized_const_r2(const DissipativityCert& cert,
                                     const GrowthCert& growth,
                                     const NoiseCert& noise, double eta,
                                     double beta) {
  require_beta(beta);
  const double gap = cert.p - 2.0 * growth.tau;
  require(gap > 0.0, "needs p > 2 tau");
  const double ob2 = (1.0 - beta) * (1.0 - beta) + 1.0;
  const double a = std::pow(
      eta * ob2 * (noise.rho + 1.0) * growth.theta3 / cert.theta1, 1.0 / gap);
  const double b = std::pow(
      2.0 * cert.theta2 / cert.theta1 +
          ob2 * (noise.sigma2 + eta * (noise.rho + 1.0) * growth.theta3),
      2.0 / cert.p);
  return std::max({cert.R * cert.R, a, b});
}

double momentum_generalized_poly_r2(const DissipativityCert& cert,
                                    const GrowthCert& growth,
                                    const NoiseCert& noise, double eta1,
                                    double beta) {
  require_beta(beta);
  const double gap = cert.p - 2.0 * growth.tau;
  require(gap > 0.0, "needs p > 2 tau");
  const double ob2 = (1.0 - beta) * (1.0 - beta) + 1.0;
  const double a = std::pow(
      4.0 * cert.theta2 / cert.theta1 +
          eta1 * (2.0 - beta) * (2.0 - beta) *
              ((noise.rho + 1.0) * growth.theta3 + noise.sigma2) / cert.theta1,
      2.0 / cert.p);
  const double b = std::pow(
      eta1 * ob2 * (noise.rho + 1.0) * growth.theta3 / cert.theta1, 2.0 / gap);
  return std::max({cert.R * cert.R, a, b});
}

BoundReport appendixD_constant_bound(double theta1, double theta2,
                                     double sigma2, double eta, long T,
                                     double dist2_init, double rho, double L) {
  require(theta1 > 0.0 && theta2 >= 0.0 && sigma2 >= 0.0, "invalid constants");
  require(eta > 0.0 && T >= 0 && dist2_init >= 0.0, "invalid inputs");
  require(eta * theta1 < 1.0, "needs eta * theta1 < 1");
  BoundReport rep;
  rep.formula = FormulaId::AppD_Const;
  rep.transient =
      std::pow(1.0 - eta * theta1, static_cast<double>(T)) * dist2_init;
  rep.stationary = (theta2 + eta * sigma2) / theta1;
  rep.stationary_unsimplified = rep.stationary;
  rep.bound = rep.transient + rep.stationary;
  rep.conservative_bound = rep.bound;
  if (L > 0.0) {
    rep.cap = sgd_cap(theta1, rho, L);
    rep.hypotheses.push_back({"step_within_cap", eta <= rep.cap});
  }
  return rep;
}

BoundReport appendixD_decaying_bound(double theta1, double theta2,
                                     double sigma2, const ScheduleSpec& spec,
                                     double dist2_init) {
  require(theta1 > 0.0 && theta2 >= 0.0 && sigma2 >= 0.0, "invalid constants");
  require(dist2_init >= 0.0, "dist2_init must be non-negative");
  const Schedule sched(spec);
  const double T = static_cast<double>(spec.T);
  BoundReport rep;

  if (spec.family == Family::Polynomial) {
    const double r = spec.r_exponent, e1 = spec.eta1;
    if (r < 1.0) {
      rep.formula = FormulaId::AppD_PolyLt1;
      rep.transient =
          std::exp(-theta1 * e1 * (std::pow(T + 1.0, 1.0 - r) - 1.0) /
                   (1.0 - r)) *
          dist2_init;
      rep.stationary = (theta2 + e1 * sigma2) * std::pow(2.0, r) / theta1;
    } else {
      rep.formula = FormulaId::AppD_PolyEq1;
      rep.transient = dist2_init / std::pow(T + 1.0, theta1 * e1);
      rep.stationary = 2.0 * (theta2 + e1 * sigma2) / theta1;
    }
    rep.stationary_unsimplified = rep.stationary;
    rep.hypotheses.push_back({"eta1_theta1_at_most_1", e1 * theta1 <= 1.0});
  } else if (spec.family == Family::StepDecay ||
             spec.family == Family::Bandwidth) {
    const auto& stages = sched.stage_lengths();
    const double S = static_cast<double>(
        *std::min_element(stages.begin(), stages.end()));
    const double N = static_cast<double>(stages.size());
    double m = 0.0, M = 0.0, alpha = 2.0;
    if (spec.family == Family::StepDecay) {
      m = M = spec.eta1;
      alpha = spec.alpha;
    } else {
      m = spec.stage_eta_min.front();
      M = spec.stage_eta_max.front();
      if (stages.size() > 1) {
        alpha = spec.stage_eta_max[0] / spec.stage_eta_max[1];
        for (size_t t = 1; t < stages.size(); ++t) {
          const double a_hi = spec.stage_eta_max[t - 1] / spec.stage_eta_max[t];
          const double a_lo = spec.stage_eta_min[t - 1] / spec.stage_eta_min[t];
          require(std::abs(a_hi - alpha) <= 1e-12 * alpha &&
                      std::abs(a_lo - alpha) <= 1e-12 * alpha,
                  "bandwidth envelopes must decay geometrically");
        }
        require(alpha > 1.0, "bandwidth envelopes must strictly decay");
      }
    }
    rep.formula = FormulaId::AppD_StepDecay;
    rep.transient = std::exp(-theta1 * m * S) * dist2_init;
    rep.stationary = (theta2 + M * sigma2) * M / (1.0 - std::exp(-m * theta1));
    rep.stationary_unsimplified =
        rep.stationary /
        (1.0 - std::exp(-m * theta1 * S * std::pow(alpha, -N + 1.0)));
    rep.hypotheses.push_back({"max_step_theta1_below_1",
                              sched.max_step() * theta1 < 1.0});
  } else {
    throw std::invalid_argument(
        "bounds: decaying bound needs a polynomial, step-decay or geometric "
        "bandwidth schedule");
  }
  rep.bound = rep.transient + rep.stationary;
  rep.conservative_bound = rep.transient + rep.stationary_unsimplified;
  rep.cap = sched.max_step();
  return rep;
}

}  // namespace ubsgd
