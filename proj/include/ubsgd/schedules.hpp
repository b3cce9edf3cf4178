#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ubsgd {

enum class Family {
  Constant,
  Polynomial,   // eta1 / k^r
  Linear,       // eta_max -> eta_min, affine in k
  Cosine,       // eta_max -> eta_min, half cosine
  Exponential,  // eta1 / alpha^(k-1), alpha = (T/nu)^(1/T)
  StepDecay,    // eta1 / alpha^(t-1) on stage t
  Bandwidth     // per-stage envelope [eta_min^t, eta_max^t] with an inner mode
};

std::string to_string(Family f);
Family family_from_string(const std::string& s);

// Declarative schedule. Only the fields used by `family` are read. Iteration
// indices are 1-based throughout.
struct ScheduleSpec {
  Family family = Family::Constant;
  long T = 1;
  double eta1 = 0.0;
  double r_exponent = 1.0;
  double eta_max = 0.0;
  double eta_min = 0.0;
  double nu = 1.0;
  double alpha = 2.0;
  // StepDecay and Bandwidth. Empty for StepDecay means the default split.
  std::vector<long> stage_lengths;
  // Bandwidth only.
  Family inner_mode = Family::Constant;
  std::vector<double> stage_eta_max;
  std::vector<double> stage_eta_min;
  double s_max = 10.0;
};

// Validated, immutable schedule. Cheap to copy; safe to share across threads.
class Schedule {
 public:
  explicit Schedule(ScheduleSpec spec);

  const ScheduleSpec& spec() const { return spec_; }
  long horizon() const { return spec_.T; }

  // eta_k for 1 <= k <= T.
  double at(long k) const;
  // eta_k / eta_{k-1} for 2 <= k <= T.
  double tau(long k) const;
  // max_k eta_k.
  double max_step() const { return max_step_; }
  // 1-based stage index of iteration k (StepDecay/Bandwidth; 1 otherwise).
  int stage_of(long k) const;
  const std::vector<long>& stage_lengths() const { return stages_; }

 private:
  double inner_at(Family mode, double hi, double lo, long j, long len) const;

  ScheduleSpec spec_;
  std::vector<long> stages_;
  std::vector<long> stage_start_;  // first k of each stage
  double exp_alpha_ = 1.0;
  double max_step_ = 0.0;
};

// Default StepDecay split: N = max(1, ceil(log2(T)/2)) stages of T/N
// iterations, remainder on the last stage.
std::vector<long> default_step_decay_stages(long T);

// Bandwidth spec whose envelopes decay geometrically:
//   eta_max^t = hi / decay^(t-1), eta_min^t = lo / decay^(t-1).
ScheduleSpec geometric_bandwidth(long T, std::vector<long> stage_lengths,
                                 double hi, double lo, double decay,
                                 Family inner_mode, double s_max = 10.0);

double step_at(const ScheduleSpec& spec, long k);
double tau_ratio(const ScheduleSpec& spec, long k);

struct AuditCondition {
  std::string name;
  std::string relation;  // "<=" or ">="
  double required = 0.0;
  double actual = 0.0;
  bool pass = false;
  bool informational = false;  // reported, not part of the verdict
};

struct ScheduleAudit {
  bool cap_satisfied = false;
  double cap_value = 0.0;
  // Smallest k such that eta_j <= cap for every j >= k (T+1 if none).
  long cap_onset = 1;
  std::vector<AuditCondition> theorem_conditions;

  // Cap plus every non-informational family condition.
  bool all_pass() const;
};

ScheduleAudit audit_schedule(const ScheduleSpec& spec, double theta1,
                             double rho, double L,
                             std::optional<double> beta = std::nullopt);

// (k, eta_k tau_k - eta_{k-1} tau_{k-1}) over the range where the schedule
// family is claimed to make it negative:
//   Polynomial, Cosine: k in [3, T-1]; Linear, Exponential: k in [3, T].
// Empty for families without such a claim.
std::vector<std::pair<long, double>> product_monotonicity(
    const ScheduleSpec& spec);

// Smallest eta_min satisfying both cosine lower bounds on c = eta_min*sqrt(T).
double cosine_min_from_condition(double eta_max, double theta1, long T);

}  // namespace ubsgd
