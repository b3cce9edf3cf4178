#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ubsgd/linalg.hpp"
#include "ubsgd/oracle.hpp"
#include "ubsgd/problems.hpp"
#include "ubsgd/schedules.hpp"

namespace ubsgd {

enum class Method { SGD, Momentum };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

// Which Lyapunov function a momentum run records.
enum class LyapunovForm {
  None,                 // SGD
  Constant,             // constant step
  Decaying,             // decaying or bandwidth step
  GeneralizedConstant,  // constant step, generalized dissipativity
  GeneralizedDecaying   // adds c_{k+1} |x_{k+1} - x*|^2
};

std::string to_string(LyapunovForm f);
LyapunovForm select_lyapunov_form(Method method, Family family,
                                  bool generalized);

struct OptimizerConfig {
  Method method = Method::SGD;
  double beta = 0.9;
  OracleSpec oracle;
  std::uint64_t seed = 0;
  Vec x1;
  // Generalized-dissipativity run (cert with p < 2); selects the W form.
  bool generalized = false;
  // Set when the caller runs past a failed step-cap audit.
  bool cap_overridden = false;
};

inline constexpr double kDivergenceThreshold = 1e12;

// Arrays are indexed by k - 1: dist2/fgap/W/sup_dist2 cover k in [1, T+1],
// stepsize covers k in [1, T]. W is NaN where undefined (k = 1, SGD).
struct Trajectory {
  std::uint64_t seed = 0;
  LyapunovForm form = LyapunovForm::None;
  std::vector<double> stepsize;
  std::vector<double> dist2;
  std::vector<double> fgap;
  std::vector<double> W;
  std::vector<double> sup_dist2;
  bool diverged = false;
  bool cap_overridden = false;
  std::string diagnostic;

  double sup() const { return sup_dist2.empty() ? 0.0 : sup_dist2.back(); }
};

// x - eta g. Throws std::domain_error on non-finite input.
Vec sgd_step(const Vec& x, double eta, const Vec& g);

// v' = beta v + (1 - beta) g; x' = x - eta v'.
std::pair<Vec, Vec> momentum_step(const Vec& x, const Vec& v, double eta,
                                  double beta, const Vec& g);

// W_{k+1} from the iterates x_{k+1}, x_k, the gap f(x_k) - f*, and the step
// data eta_k, tau_k:
//   |xt - x*|^2 + c |x_{k+1} - x*|^2 + |x_{k+1} - x_k|^2 + u (f(x_k) - f*)
// with xt = (x_{k+1} - beta x_k)/(1 - beta), u = 2 gamma_beta tau_k eta_k
// (+ 2 beta (1-beta) tau_k eta_k c), and c = (1 - tau_k)/(tau_k (1 - beta))
// for GeneralizedDecaying, 0 otherwise.
double lyapunov_W(LyapunovForm form, const Vec& x_next, const Vec& x,
                  const Vec& x_star, double fgap_k, double eta_k,
                  double tau_k, double beta);

Trajectory run_trajectory(const Problem& problem, const Schedule& schedule,
                          const OptimizerConfig& config);

struct SeriesStats {
  std::vector<double> mean;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
};

struct EnsembleSummary {
  std::vector<std::uint64_t> seeds;  // ascending
  std::vector<Trajectory> runs;      // same order as seeds
  SeriesStats dist2, fgap, W;
  double mean_sup_dist2 = 0.0;
  double max_sup_dist2 = 0.0;
  bool diverged = false;
};

// Runs one trajectory per seed (config.seed is replaced) and reduces them in
// ascending seed order. workers = 0 uses the hardware concurrency.
EnsembleSummary run_ensemble(const Problem& problem, const Schedule& schedule,
                             const OptimizerConfig& config,
                             std::vector<std::uint64_t> seeds,
                             unsigned workers = 0);

struct LyapunovTest {
  long tested = 0;             // number of k in the conditioning set
  long not_decreasing = 0;     // k whose upper confidence bound is >= 0
  long first_failure = -1;     // smallest such k
  double worst_upper = 0.0;    // largest upper confidence bound seen
  bool passed = true;
};

// One-sided test of E[W_{k+1} - W_k] < 0 for each k in [k_min, k_max] with
// mean dist2[k] >= r2[k-1]: the upper confidence bound
// mean + z sd / sqrt(n) must be negative.
LyapunovTest lyapunov_decrease_test(const EnsembleSummary& ens,
                                    const std::vector<double>& r2,
                                    long k_min, long k_max,
                                    double confidence = 0.95);

}  // namespace ubsgd
