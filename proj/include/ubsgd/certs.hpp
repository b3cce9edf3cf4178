#pragma once

#include <string>

namespace ubsgd {

// Point the dissipativity inequality is measured from. Most derivations for
// regularized models bound <grad f(x), x> (origin form); the bounds need
// the optimum-centred form, obtained by conversion in certify.hpp.
enum class CertCenter { Optimum, Origin };

// <grad f(x), x - c> >= theta1 * |x - c|^p - theta2 for |x - c| >= R.
struct DissipativityCert {
  double theta1 = 0.0;
  double theta2 = 0.0;
  double R = 0.0;
  double p = 2.0;
  CertCenter center = CertCenter::Optimum;
};

// |grad f(x)|^2 <= theta3 * (1 + |x - x*|^(2 tau)).
struct GrowthCert {
  double theta3 = 0.0;
  double tau = 0.0;
};

// E|g - grad f|^2 <= rho |grad f|^2 + sigma2.
struct NoiseCert {
  double rho = 0.0;
  double sigma2 = 0.0;
};

void validate(const DissipativityCert& c);
void validate(const GrowthCert& g);
void validate(const NoiseCert& n);

std::string to_string(CertCenter c);
CertCenter center_from_string(const std::string& s);

}  // namespace ubsgd
