#include "ubsgd/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "ubsgd/bounds.hpp"

namespace ubsgd {

namespace {

constexpr double kPi = std::numbers::pi;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("schedule: " + what);
}

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

bool is_inner_mode(Family f) {
  return f == Family::Constant || f == Family::Polynomial ||
         f == Family::Linear || f == Family::Cosine ||
         f == Family::Exponential;
}

// Affine interpolation written so both endpoints are reproduced to rounding.
double linear_between(double hi, double lo, long j, long len) {
  if (len == 1) return hi;
  return (static_cast<double>(len - j) * hi + static_cast<double>(j - 1) * lo) /
         static_cast<double>(len - 1);
}

double cosine_between(double hi, double lo, long j, long len) {
  if (len == 1) return hi;
  const double phase =
      kPi * static_cast<double>(j - 1) / static_cast<double>(len - 1);
  return lo + (hi - lo) * (1.0 + std::cos(phase)) / 2.0;
}

}  // namespace

std::string to_string(Family f) {
  switch (f) {
    case Family::Constant: return "constant";
    case Family::Polynomial: return "polynomial";
    case Family::Linear: return "linear";
    case Family::Cosine: return "cosine";
    case Family::Exponential: return "exponential";
    case Family::StepDecay: return "step_decay";
    case Family::Bandwidth: return "bandwidth";
  }
  return "unknown";
}

Family family_from_string(const std::string& s) {
  for (Family f : {Family::Constant, Family::Polynomial, Family::Linear,
                   Family::Cosine, Family::Exponential, Family::StepDecay,
                   Family::Bandwidth}) {
    if (to_string(f) == s) return f;
  }
  throw std::invalid_argument("unknown schedule family: " + s);
}

std::vector<long> default_step_decay_stages(long T) {
  require(T >= 1, "T must be positive");
  const long n_stages = std::max<long>(
      1, static_cast<long>(std::ceil(std::log2(static_cast<double>(T)) / 2.0)));
  const long n = std::min(n_stages, T);
  std::vector<long> lengths(n, T / n);
  lengths.back() += T % n;
  return lengths;
}

Schedule::Schedule(ScheduleSpec spec) : spec_(std::move(spec)) {
  const auto& s = spec_;
  require(s.T >= 1, "T must be positive");
  switch (s.family) {
    case Family::Constant:
      require(positive_finite(s.eta1), "eta1 must be positive");
      break;
    case Family::Polynomial:
      require(positive_finite(s.eta1), "eta1 must be positive");
      require(s.r_exponent > 0.0 && s.r_exponent <= 1.0,
              "r_exponent must lie in (0,1]");
      break;
    case Family::Linear:
    case Family::Cosine:
      require(positive_finite(s.eta_min), "eta_min must be positive");
      require(positive_finite(s.eta_max), "eta_max must be positive");
      require(s.eta_min <= s.eta_max, "eta_min must not exceed eta_max");
      break;
    case Family::Exponential:
      require(positive_finite(s.eta1), "eta1 must be positive");
      require(s.nu >= 1.0, "nu must be >= 1");
      require(s.nu < static_cast<double>(s.T), "nu must be < T so alpha > 1");
      exp_alpha_ = std::pow(static_cast<double>(s.T) / s.nu,
                            1.0 / static_cast<double>(s.T));
      break;
    case Family::StepDecay:
      require(positive_finite(s.eta1), "eta1 must be positive");
      require(s.alpha > 1.0 && std::isfinite(s.alpha), "alpha must be > 1");
      stages_ = s.stage_lengths.empty() ? default_step_decay_stages(s.T)
                                        : s.stage_lengths;
      break;
    case Family::Bandwidth: {
      require(is_inner_mode(s.inner_mode),
              "bandwidth inner mode must be a base family");
      require(!s.stage_lengths.empty(), "bandwidth needs stage lengths");
      const size_t n = s.stage_lengths.size();
      require(s.stage_eta_max.size() == n && s.stage_eta_min.size() == n,
              "one envelope pair per stage");
      require(s.s_max >= 1.0, "s_max must be >= 1");
      if (s.inner_mode == Family::Polynomial)
        require(s.r_exponent > 0.0 && s.r_exponent <= 1.0,
                "r_exponent must lie in (0,1]");
      for (size_t t = 0; t < n; ++t) {
        const double hi = s.stage_eta_max[t], lo = s.stage_eta_min[t];
        require(positive_finite(hi) && positive_finite(lo),
                "envelopes must be positive");
        require(lo <= hi, "stage eta_min must not exceed eta_max");
        require(hi <= s.s_max * lo, "stage bandwidth exceeds s_max");
        if (t > 0) {
          require(hi <= s.stage_eta_max[t - 1] && lo <= s.stage_eta_min[t - 1],
                  "envelopes must be non-increasing across stages");
        }
      }
      stages_ = s.stage_lengths;
      break;
    }
  }
  if (!stages_.empty()) {
    long start = 1;
    for (long len : stages_) {
      require(len >= 1, "stage lengths must be positive");
      stage_start_.push_back(start);
      start += len;
    }
    require(start - 1 == s.T, "stage lengths must sum to T");
  }

  if (s.family == Family::StepDecay || s.family == Family::Bandwidth) {
    for (long k = 1; k <= s.T; ++k) max_step_ = std::max(max_step_, at(k));
  } else {
    max_step_ = at(1);
  }
}

int Schedule::stage_of(long k) const {
  if (stage_start_.empty()) return 1;
  auto it = std::upper_bound(stage_start_.begin(), stage_start_.end(), k);
  return static_cast<int>(it - stage_start_.begin());
}

double Schedule::inner_at(Family mode, double hi, double lo, long j,
                          long len) const {
  switch (mode) {
    case Family::Constant:
      return hi;
    case Family::Polynomial:
      return lo + (hi - lo) / std::pow(static_cast<double>(j), spec_.r_exponent);
    case Family::Linear:
      return linear_between(hi, lo, j, len);
    case Family::Cosine:
      return cosine_between(hi, lo, j, len);
    case Family::Exponential:
      if (len == 1) return hi;
      return hi * std::pow(lo / hi, static_cast<double>(j - 1) /
                                        static_cast<double>(len - 1));
    default:
      break;
  }
  throw std::logic_error("schedule: invalid inner mode");
}

double Schedule::at(long k) const {
  if (k < 1 || k > spec_.T) {
    throw std::out_of_range("schedule: k out of range [1, T]");
  }
  const auto& s = spec_;
  switch (s.family) {
    case Family::Constant:
      return s.eta1;
    case Family::Polynomial:
      return s.eta1 / std::pow(static_cast<double>(k), s.r_exponent);
    case Family::Linear:
      return linear_between(s.eta_max, s.eta_min, k, s.T);
    case Family::Cosine:
      return cosine_between(s.eta_max, s.eta_min, k, s.T);
    case Family::Exponential:
      return s.eta1 / std::pow(exp_alpha_, static_cast<double>(k - 1));
    case Family::StepDecay: {
      const int t = stage_of(k);
      return s.eta1 / std::pow(s.alpha, static_cast<double>(t - 1));
    }
    case Family::Bandwidth: {
      const int t = stage_of(k);
      const long j = k - stage_start_[t - 1] + 1;
      return inner_at(s.inner_mode, s.stage_eta_max[t - 1],
                      s.stage_eta_min[t - 1], j, stages_[t - 1]);
    }
  }
  throw std::logic_error("schedule: unknown family");
}

double Schedule::tau(long k) const {
  if (k < 2) throw std::out_of_range("schedule: tau needs k >= 2");
  return at(k) / at(k - 1);
}

ScheduleSpec geometric_bandwidth(long T, std::vector<long> stage_lengths,
                                 double hi, double lo, double decay,
                                 Family inner_mode, double s_max) {
  require(decay >= 1.0, "envelope decay must be >= 1");
  ScheduleSpec spec;
  spec.family = Family::Bandwidth;
  spec.T = T;
  spec.inner_mode = inner_mode;
  spec.s_max = s_max;
  for (size_t t = 0; t < stage_lengths.size(); ++t) {
    const double scale = std::pow(decay, static_cast<double>(t));
    spec.stage_eta_max.push_back(hi / scale);
    spec.stage_eta_min.push_back(lo / scale);
  }
  spec.stage_lengths = std::move(stage_lengths);
  return spec;
}

double step_at(const ScheduleSpec& spec, long k) { return Schedule(spec).at(k); }

double tau_ratio(const ScheduleSpec& spec, long k) {
  return Schedule(spec).tau(k);
}

bool ScheduleAudit::all_pass() const {
  if (!cap_satisfied) return false;
  return std::all_of(theorem_conditions.begin(), theorem_conditions.end(),
                     [](const AuditCondition& c) {
                       return c.informational || c.pass;
                     });
}

ScheduleAudit audit_schedule(const ScheduleSpec& spec, double theta1,
                             double rho, double L, std::optional<double> beta) {
  if (!(theta1 > 0.0) || !(rho >= 0.0) || !(L > 0.0)) {
    throw std::invalid_argument("audit: theta1, L must be positive, rho >= 0");
  }
  if (beta && !(*beta > 0.0 && *beta < 1.0)) {
    throw std::invalid_argument("audit: beta must lie in (0,1)");
  }
  const Schedule sched(spec);
  const long T = spec.T;

  ScheduleAudit audit;
  audit.cap_value = beta ? momentum_caps(theta1, rho, L, *beta,
                                         MomentumRegime::Decaying)
                         : sgd_cap(theta1, rho, L);
  audit.cap_satisfied = sched.max_step() <= audit.cap_value;
  audit.theorem_conditions.push_back({"step_cap", "<=", audit.cap_value,
                                      sched.max_step(), audit.cap_satisfied,
                                      false});
  if (beta) {
    const double loose = momentum_cap_proof_variant(theta1, rho, L, *beta);
    audit.theorem_conditions.push_back({"step_cap_proof_variant", "<=", loose,
                                        sched.max_step(),
                                        sched.max_step() <= loose, true});
  }
  long onset = T + 1;
  while (onset > 1 && sched.at(onset - 1) <= audit.cap_value) --onset;
  audit.cap_onset = onset;

  auto at_least = [&](std::string name, double required, double actual) {
    audit.theorem_conditions.push_back(
        {std::move(name), ">=", required, actual, actual >= required, false});
  };
  const double sqrtT = std::sqrt(static_cast<double>(T));
  switch (spec.family) {
    case Family::Polynomial:
      at_least("polynomial_eta1_lower", 2.0 / theta1, spec.eta1);
      break;
    case Family::Linear:
      at_least("linear_c_lower",
               std::sqrt(2.0 * spec.eta_max * spec.eta_max / theta1),
               spec.eta_min * sqrtT);
      break;
    case Family::Cosine:
      at_least("cosine_c_lower",
               std::sqrt(spec.eta_max * spec.eta_max * kPi * kPi /
                         (2.0 * theta1)),
               spec.eta_min * sqrtT);
      at_least("cosine_c_lower_final",
               spec.eta_max * kPi * kPi /
                   (4.0 * std::pow(static_cast<double>(T), 1.5)),
               spec.eta_min * sqrtT);
      break;
    case Family::Exponential:
      at_least("exponential_eta1_lower",
               2.0 * std::log(static_cast<double>(T) / spec.nu) /
                   (theta1 * spec.nu),
               spec.eta1);
      break;
    default:
      break;
  }
  return audit;
}

std::vector<std::pair<long, double>> product_monotonicity(
    const ScheduleSpec& spec) {
  const Schedule sched(spec);
  const long T = spec.T;
  long last = 0;
  switch (spec.family) {
    case Family::Polynomial:
    case Family::Cosine:
      last = T - 1;
      break;
    case Family::Linear:
    case Family::Exponential:
      last = T;
      break;
    default:
      return {};
  }
  std::vector<std::pair<long, double>> out;
  if (last < 3) return out;
  out.reserve(static_cast<size_t>(last - 2));
  long double e2 = sched.at(1), e1 = sched.at(2);
  for (long k = 3; k <= last; ++k) {
    const long double e0 = sched.at(k);
    const long double diff = e0 * e0 / e1 - e1 * e1 / e2;
    out.emplace_back(k, static_cast<double>(diff));
    e2 = e1;
    e1 = e0;
  }
  return out;
}

double cosine_min_from_condition(double eta_max, double theta1, long T) {
  if (!(eta_max > 0.0) || !(theta1 > 0.0) || T < 1) {
    throw std::invalid_argument("cosine condition: invalid inputs");
  }
  const double Td = static_cast<double>(T);
  const double c = std::max(
      std::sqrt(eta_max * eta_max * kPi * kPi / (2.0 * theta1)),
      eta_max * kPi * kPi / (4.0 * std::pow(Td, 1.5)));
  // Nudge up so c/sqrt(T)*sqrt(T) does not round below c.
  return c / std::sqrt(Td) * (1.0 + 8.0 * std::numeric_limits<double>::epsilon());
}

}  // namespace ubsgd
