#pragma once

#include <cstdint>
#include <vector>

#include "ubsgd/certs.hpp"
#include "ubsgd/oracle.hpp"
#include "ubsgd/problems.hpp"

namespace ubsgd {

// Optimum-centred cert from <grad f(x), x> >= theta1' |x|^2 - theta2'.
DissipativityCert convert_origin_form(double theta1p, double theta2p, double L,
                                      double x_star_norm);

struct GeneralizedConversion {
  DissipativityCert cert;
  // tau in (p/2, p): valid conversion, but outside theorem5_bound's hypotheses.
  bool outside_theorem5 = false;
};

// Optimum-centred generalized cert from <grad f(x), x> >= theta1' |x|^p -
// theta2' and tau-growth with theta3. cert.R is the smallest admissible R.
GeneralizedConversion convert_generalized(double theta1p, double theta2p,
                                          double theta3, double tau, double p,
                                          double x_star_norm);

// The problem's nominal cert re-expressed about x*, converting origin-form
// certs with convert_origin_form (p = 2) or convert_generalized (p < 2).
DissipativityCert optimum_centered_cert(const Problem& problem);

struct ShellSamplingPlan {
  double r_lo = 0.01;
  double r_hi = 100.0;
  int shells = 40;
  int samples_per_shell = 256;
  std::uint64_t rng_seed = 0x9d2c5680ULL;
  // Also probe the problem's probe_directions (both signs) on every shell.
  bool use_probe_directions = true;
};

// Plan with the defaults, r_lo raised to max(R, r_lo).
ShellSamplingPlan default_plan(double R);

struct CertReport {
  double worst_violation = 0.0;
  Vec worst_point;
  int shells_checked = 0;
  long samples = 0;
  bool passed = false;
  double tol = 1e-9;
};

// Samples x = c + r u around the cert centre (origin or x*); slack is
// <grad f(x), x - c> - theta1 |x - c|^p + theta2 with c the nearest optimum
// for optimum-centred certs. Points with |x - c| < R are skipped.
CertReport verify_dissipativity(const Problem& problem,
                                const DissipativityCert& cert,
                                const ShellSamplingPlan& plan);

// Slack theta3 (1 + |x - x*|^(2 tau)) - |grad f(x)|^2 around x*.
CertReport verify_growth(const Problem& problem, const GrowthCert& growth,
                         const ShellSamplingPlan& plan);

struct NoiseEstimate {
  NoiseCert cert;
  double fitted_rho = 0.0;
  double fitted_sigma2 = 0.0;
  double inflation = 1.0;
  bool rho_clamped = false;
  bool sigma2_clamped = false;
  std::vector<double> probe_grad_norm2;
  std::vector<double> probe_variance;
};

// Fits sampled E|g - grad f|^2 against |grad f|^2 over the probes, then
// scales both coefficients by the largest variance-to-fit ratio so the
// envelope covers every probe.
NoiseEstimate estimate_noise(const Problem& problem, const OracleSpec& oracle,
                             const std::vector<Vec>& probe_points, int reps,
                             std::uint64_t seed);

// Probes x* + r u, r log-uniform in [r_lo, r_hi].
std::vector<Vec> noise_probes(const Problem& problem, int count, double r_lo,
                              double r_hi, std::uint64_t seed);

// max |g(x)| / (1 + |x|) over the plan's samples around the origin.
double estimate_linear_growth(const Problem& problem,
                              const ShellSamplingPlan& plan);

}  // namespace ubsgd
