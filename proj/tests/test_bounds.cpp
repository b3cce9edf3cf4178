#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "ubsgd/bounds.hpp"

using namespace ubsgd;

namespace {

DissipativityCert cert2(double t1, double t2, double R) { return {t1, t2, R, 2.0, CertCenter::Optimum}; }

// Worst case of the one-step contraction e' = (1 - eta theta1) e + (theta2 +
// eta sigma2) eta, iterated over the schedule.
double recursion(const ScheduleSpec& spec, double t1, double t2, double s2, double d0) {
  const Schedule s(spec);
  double e = d0;
  for (long k = 1; k <= spec.T; ++k) {
    const double eta = s.at(k);
    e = (1.0 - eta * t1) * e + (t2 + eta * s2) * eta;
  }
  return e;
}

}  // namespace

TEST_CASE("p = 2 bound") {
  const auto quiet = theorem1_bound(cert2(1.0, 0.0, 0.0), {0.0, 0.0}, 1.0, 3.5);
  CHECK(quiet.r2 == 0.0);
  CHECK(quiet.bound == 3.5);
  CHECK(quiet.formula == FormulaId::Thm1);

  // r2 = 0.01; second branch 2(0.01 + 0.01) + 0.02 = 0.06; max with 2.
  const auto b = theorem1_bound(cert2(1.0, 0.0, 0.0), {0.0, 0.01}, 1.0, 2.0);
  CHECK(b.r2 == doctest::Approx(0.01));
  CHECK(b.bound == 2.0);
  CHECK(theorem1_bound(cert2(1.0, 0.0, 0.0), {0.0, 0.01}, 1.0, 0.0).bound == doctest::Approx(0.06));
  CHECK(b.cap == 1.0);
  CHECK(theorem1_bound(cert2(0.5, 0.0, 0.0), {1.0, 0.0}, 2.0, 0.0).cap == doctest::Approx(0.5 / 8.0));
  CHECK(b.hypotheses_ok());

  CHECK_THROWS_AS(theorem1_bound({1.0, 0.0, 0.0, 1.0, CertCenter::Optimum}, {0.0, 0.0}, 1.0, 1.0),
                  std::invalid_argument);
  auto origin = cert2(1.0, 0.0, 0.0);
  origin.center = CertCenter::Origin;
  CHECK_FALSE(theorem1_bound(origin, {0.0, 0.0}, 1.0, 1.0).hypotheses_ok());
}

TEST_CASE("p = 2 bound is monotone") {
  const auto f = [](double s2, double t2, double R, double d0) {
    return theorem1_bound(cert2(0.8, t2, R), {0.3, s2}, 1.7, d0).bound;
  };
  double prev[4] = {0, 0, 0, 0};
  for (int i = 0; i <= 50; ++i) {
    const double v = 0.1 * i;
    const double cur[4] = {f(v, 0.2, 0.5, 1.0), f(0.1, v, 0.5, 1.0), f(0.1, 0.2, v, 1.0),
                           f(0.1, 0.2, 0.5, v)};
    for (int j = 0; j < 4; ++j) {
      if (i > 0) CHECK(cur[j] >= prev[j]);
      CHECK(std::isfinite(cur[j]));
      prev[j] = cur[j];
    }
  }
}

TEST_CASE("generalized bound") {
  const DissipativityCert c{1.0, 0.5, 0.0, 1.0, CertCenter::Optimum};
  // eta_max = 0: only (2 theta2/theta1)^(2/p) = 1 survives.
  const auto z = theorem5_bound(c, {10.0, 0.0}, {0.0, 0.05}, 0.0, 5.0);
  CHECK(z.r2 == 1.0);
  CHECK(z.bound == 2.0);

  // theta3 = 10, eta_max = 0.1, sigma2 = 0.05. Branches evaluated by hand:
  //   outer  = (1 + 10.05 * 0.1)^2 = 4.020025
  //   middle = 8 * 0.1 * 10 = 8, proof variant 0.1 * 10 = 1
  //   ball   = 2 (1 + 0.01 * 10) 8 + 2 * 0.01 * 10.05 = 17.801
  const auto b = theorem5_bound(c, {10.0, 0.0}, {0.0, 0.05}, 0.1, 5.0);
  CHECK(b.r2 == doctest::Approx(8.0).epsilon(1e-14));
  CHECK(b.r2_alt == doctest::Approx(4.020025).epsilon(1e-14));
  CHECK(b.bound == 5.0);
  CHECK(b.conservative_bound == doctest::Approx(17.801).epsilon(1e-14));
  CHECK(theorem5_bound(c, {10.0, 0.0}, {0.0, 0.05}, 0.1, 100.0).bound ==
        doctest::Approx(17.801).epsilon(1e-14));
  CHECK(b.hypotheses_ok());

  // With R^2 above every other branch.
  const DissipativityCert wide{1.0, 0.5, 3.0, 1.0, CertCenter::Optimum};
  CHECK(theorem5_bound(wide, {10.0, 0.0}, {0.0, 0.05}, 0.1, 5.0).r2 == 9.0);

  double prev = 0.0;
  for (int i = 0; i <= 40; ++i) {
    const double v = theorem5_bound(c, {10.0, 0.0}, {0.2, 0.25 * i}, 0.1, 1e6).bound;
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("generalized bound hypotheses") {
  const DissipativityCert two{1.0, 0.5, 0.0, 2.0, CertCenter::Optimum};
  CHECK_THROWS_AS(theorem5_bound(two, {1.0, 0.0}, {0.0, 0.0}, 0.1, 1.0), std::invalid_argument);
  DissipativityCert near = two;
  near.p = 2.0 - 1e-9;
  const auto n = theorem5_bound(near, {1.0, 0.5}, {0.0, 0.1}, 0.1, 1.0);
  CHECK(std::isfinite(n.r2));
  CHECK(std::isfinite(n.conservative_bound));

  const DissipativityCert one{1.0, 0.5, 0.0, 1.0, CertCenter::Optimum};
  CHECK_THROWS_AS(theorem5_bound(one, {1.0, 0.75}, {0.0, 0.0}, 0.1, 1.0), std::invalid_argument);
  const auto edge = theorem5_bound(one, {1.0, 0.5}, {0.0, 0.0}, 0.1, 1.0);
  CHECK_FALSE(edge.hypotheses_ok());
  CHECK(std::isinf(edge.r2));
}

TEST_CASE("momentum caps") {
  CHECK(momentum_caps(1.0, 0.0, 1.0, 0.9, MomentumRegime::GeneralizedConst) ==
        doctest::Approx(0.19 / (0.9 * 10.1)));
  CHECK(momentum_caps(1.0, 0.0, 1.0, 0.9, MomentumRegime::GeneralizedConst) ==
        doctest::Approx(0.02090).epsilon(1e-3));
  for (double beta : {0.1, 0.5, 0.9, 0.99}) {
    CHECK(momentum_caps(0.7, 0.4, 2.0, beta, MomentumRegime::GeneralizedDecayingPoly) ==
          doctest::Approx(0.5 * momentum_caps(0.7, 0.4, 2.0, beta, MomentumRegime::GeneralizedConst)));
    // Exponential: (1 - beta^2) / (beta L (1 - beta + 2/(1 - beta))).
    const double ob = 1.0 - beta;
    CHECK(momentum_caps(0.7, 0.4, 2.0, beta, MomentumRegime::GeneralizedDecayingExp) ==
          doctest::Approx((1 - beta * beta) / (beta * 2.0 * (ob + 2.0 / ob))));
    CHECK(momentum_cap_proof_variant(0.7, 0.4, 2.0, beta) >=
          momentum_caps(0.7, 0.4, 2.0, beta, MomentumRegime::Constant));
  }
  // beta -> 0: the heavy-ball branch blows up; theta1/(4 (rho+1) L^2) remains.
  const double small = momentum_caps(0.6, 0.5, 2.0, 1e-6, MomentumRegime::Decaying);
  CHECK(small == doctest::Approx(0.6 / (4.0 * 1.5 * 4.0)).epsilon(1e-5));
  CHECK(momentum_caps(0.6, 0.5, 2.0, 0.5, MomentumRegime::Decaying) ==
        momentum_caps(0.6, 0.5, 2.0, 0.5, MomentumRegime::Constant));
  CHECK_THROWS_AS(momentum_caps(1.0, 0.0, 1.0, 1.0, MomentumRegime::Constant), std::invalid_argument);
  CHECK_THROWS_AS(momentum_regime_from_string("nesterov"), std::invalid_argument);
  CHECK(momentum_regime_from_string("generalized_decaying_exp") == MomentumRegime::GeneralizedDecayingExp);
  CHECK(momentum_gamma(0.5) == doctest::Approx(0.5 * (0.5 + 2.0)));
}

TEST_CASE("constant-step decay bound") {
  const auto a = appendixD_constant_bound(1.0, 0.0, 0.0, 0.5, 10, 1.0);
  CHECK(a.bound == doctest::Approx(std::pow(0.5, 10)).epsilon(1e-14));
  CHECK(a.bound == doctest::Approx(9.77e-4).epsilon(1e-3));
  const auto t0 = appendixD_constant_bound(0.8, 0.3, 0.2, 0.1, 0, 4.0);
  CHECK(t0.bound == doctest::Approx(4.0 + (0.3 + 0.02) / 0.8));
  CHECK(t0.bound >= 4.0);
  const auto big = appendixD_constant_bound(1.0, 0.0, 0.01, 0.1, 100000, 50.0);
  CHECK(big.bound == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(appendixD_constant_bound(1.0, 0.0, 0.01, 0.1, 10, 1.0, 0.0, 1.0).hypotheses_ok());
  CHECK_FALSE(appendixD_constant_bound(1.0, 0.0, 0.01, 0.5, 10, 1.0, 0.0, 2.0).hypotheses_ok());
  CHECK_THROWS_AS(appendixD_constant_bound(1.0, 0.0, 0.0, 1.0, 10, 1.0), std::invalid_argument);

  ScheduleSpec s;
  s.family = Family::Constant;
  s.T = 300;
  s.eta1 = 0.05;
  CHECK(recursion(s, 1.3, 0.2, 0.7, 9.0) <= appendixD_constant_bound(1.3, 0.2, 0.7, 0.05, 300, 9.0).bound);
}

TEST_CASE("decaying-step bounds") {
  ScheduleSpec p1;
  p1.family = Family::Polynomial;
  p1.r_exponent = 1.0;
  p1.eta1 = 1.0;
  p1.T = 99;
  const auto b1 = appendixD_decaying_bound(1.0, 0.0, 0.0, p1, 1.0);
  CHECK(b1.formula == FormulaId::AppD_PolyEq1);
  CHECK(b1.transient == doctest::Approx(0.01).epsilon(1e-14));

  ScheduleSpec half = p1;
  half.r_exponent = 0.5;
  half.T = 3;
  const auto bh = appendixD_decaying_bound(1.0, 0.0, 0.0, half, 1.0);
  CHECK(bh.formula == FormulaId::AppD_PolyLt1);
  CHECK(bh.bound == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));

  // The bounds dominate the one-step recursion they are derived from.
  for (double r : {0.3, 0.5, 0.8, 1.0}) {
    ScheduleSpec s = p1;
    s.r_exponent = r;
    s.eta1 = 0.5;
    s.T = 2000;
    CHECK(recursion(s, 1.0, 0.1, 0.4, 20.0) <= appendixD_decaying_bound(1.0, 0.1, 0.4, s, 20.0).bound);
  }

  ScheduleSpec sd;
  sd.family = Family::StepDecay;
  sd.T = 4000;
  sd.eta1 = 0.2;
  sd.alpha = 2.0;
  const auto bs = appendixD_decaying_bound(1.0, 0.1, 0.5, sd, 10.0);
  CHECK(bs.formula == FormulaId::AppD_StepDecay);
  CHECK(bs.transient == doctest::Approx(std::exp(-0.2 * 1000.0) * 10.0));
  CHECK(bs.stationary == doctest::Approx((0.1 + 0.2 * 0.5) * 0.2 / (1.0 - std::exp(-0.2))));
  CHECK(bs.conservative_bound >= bs.bound);
  CHECK(recursion(sd, 1.0, 0.1, 0.5, 10.0) <= bs.bound);
  CHECK(bs.hypotheses_ok());

  const auto band = geometric_bandwidth(4000, {1000, 1000, 1000, 1000}, 0.2, 0.05, 2.0, Family::Cosine);
  const auto bb = appendixD_decaying_bound(1.0, 0.1, 0.5, band, 10.0);
  CHECK(bb.transient == doctest::Approx(std::exp(-0.05 * 1000.0) * 10.0));
  CHECK(recursion(band, 1.0, 0.1, 0.5, 10.0) <= bb.bound);

  ScheduleSpec cosine;
  cosine.family = Family::Cosine;
  cosine.T = 100;
  cosine.eta_max = 0.1;
  cosine.eta_min = 0.01;
  CHECK_THROWS_AS(appendixD_decaying_bound(1.0, 0.0, 0.0, cosine, 1.0), std::invalid_argument);
}
