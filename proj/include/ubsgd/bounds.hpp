#pragma once

#include <string>
#include <vector>

#include "ubsgd/certs.hpp"
#include "ubsgd/schedules.hpp"

namespace ubsgd {

enum class FormulaId {
  Thm1,
  Thm5,
  AppD_Const,
  AppD_PolyLt1,
  AppD_PolyEq1,
  AppD_StepDecay,
  Momentum
};

std::string to_string(FormulaId f);

struct Hypothesis {
  std::string name;
  bool satisfied = false;
};

struct BoundReport {
  FormulaId formula = FormulaId::Thm1;
  double r2 = 0.0;
  // Thm5: r2 with the middle branch taken without the factor 8.
  double r2_alt = 0.0;
  double bound = 0.0;
  // Thm5: max{dist2_init, noise ball}, reported next to the printed min.
  double conservative_bound = 0.0;
  double cap = 0.0;
  // appendix_d bounds split as transient + stationary.
  double transient = 0.0;
  double stationary = 0.0;
  // AppD_StepDecay: stationary term without the small-exponential drop.
  double stationary_unsimplified = 0.0;
  std::vector<Hypothesis> hypotheses;

  bool hypotheses_ok() const;
};

// Plain SGD step cap theta1 / ((rho+1) L^2).
double sgd_cap(double theta1, double rho, double L);

enum class MomentumRegime {
  Constant,
  Decaying,
  GeneralizedConst,
  GeneralizedDecayingPoly,
  GeneralizedDecayingExp
};

std::string to_string(MomentumRegime r);
MomentumRegime momentum_regime_from_string(const std::string& s);

double momentum_caps(double theta1, double rho, double L, double beta,
                     MomentumRegime regime);

// Alternative cap for the constant/decaying analyses (no factor 2 in the
// second branch). Looser than momentum_caps; reported for reference only.
double momentum_cap_proof_variant(double theta1, double rho, double L,
                                  double beta);

// gamma_beta = beta (1 - beta + 1/(1-beta)).
double momentum_gamma(double beta);

BoundReport theorem1_bound(const DissipativityCert& cert,
                           const NoiseCert& noise, double L,
                           double dist2_init);

BoundReport theorem5_bound(const DissipativityCert& cert,
                           const GrowthCert& growth, const NoiseCert& noise,
                           double eta_max, double dist2_init);

// Radii outside which the momentum Lyapunov functions decrease in
// expectation, per regime.
double momentum_constant_r2(const DissipativityCert& cert,
                            const NoiseCert& noise, double eta, double beta);
double momentum_decaying_r2(const DissipativityCert& cert,
                            const NoiseCert& noise, double eta_k, double beta);
double momentum_generalized_const_r2(const DissipativityCert& cert,
                                     const GrowthCert& growth,
                                     const NoiseCert& noise, double eta,
                                     double beta);
double momentum_generalized_poly_r2(const DissipativityCert& cert,
                                    const GrowthCert& growth,
                                    const NoiseCert& noise, double eta1,
                                    double beta);

// (1 - eta theta1)^T d0 + (theta2 + eta sigma2)/theta1. rho and L feed the
// cap hypothesis only.
BoundReport appendixD_constant_bound(double theta1, double theta2,
                                     double sigma2, double eta, long T,
                                     double dist2_init, double rho = 0.0,
                                     double L = 0.0);

// Polynomial (r in (0,1]) or step-decay/geometric-bandwidth schedules.
BoundReport appendixD_decaying_bound(double theta1, double theta2,
                                     double sigma2, const ScheduleSpec& spec,
                                     double dist2_init);

}  // namespace ubsgd
