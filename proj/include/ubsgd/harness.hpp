#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ubsgd/certs.hpp"
#include "ubsgd/optimize.hpp"
#include "ubsgd/problems.hpp"
#include "ubsgd/schedules.hpp"
#include "ubsgd/serialize.hpp"

namespace ubsgd {

// Raised for anything wrong with a config; commands map it to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  enum class Kind { Synthetic, Csv, Inline } kind = Kind::Synthetic;
  SyntheticSpec synthetic;
  bool target_given = false;  // synthetic.target set explicitly
  std::string csv_path;       // as written in the config
  std::vector<std::vector<double>> matrix;
  std::vector<double> targets;
};

struct ProblemConfig {
  // least_squares, phase_retrieval, heavy_tail_mle, blake_zisserman,
  // logistic_l2, logistic_l1, nn
  std::string name = "least_squares";
  double lambda = 1.0;
  double nu = 1.0;
  std::vector<int> hidden{8};
  Activation activation = Activation::Relu;
  DataConfig data;
};

struct InitConfig {
  std::optional<std::vector<double>> x1;
  // Otherwise x1 = x* + radius u with u uniform on the sphere.
  double radius = 1.0;
  std::uint64_t seed = 1;
};

struct SeedsConfig {
  std::vector<std::uint64_t> list;
  std::uint64_t master = 0;
  int count = 0;  // used when list is empty: seed_i = derive_seed(master, i)
};

struct NoiseConfig {
  std::optional<NoiseCert> fixed;
  int probes = 64;
  int reps = 200;
  double r_lo = 0.1;
  double r_hi = 10.0;
  std::uint64_t seed = 2;
};

struct ExperimentConfig {
  ProblemConfig problem;
  ScheduleSpec schedule;
  // Replace the schedule's peak step by this fraction of the step cap.
  std::optional<double> cap_fraction;
  Method method = Method::SGD;
  double beta = 0.9;
  OracleSpec oracle;
  InitConfig init;
  SeedsConfig seeds;
  std::string output_dir = "out";
  // bound, no_divergence, boundedness_proxy, lyapunov, audit
  std::vector<std::string> checks{"bound", "no_divergence"};
  std::optional<DissipativityCert> cert;
  std::optional<GrowthCert> growth;
  NoiseConfig noise;
  // auto, theorem1, theorem5, appendix_d, momentum
  std::string bound = "auto";
  // Relative slack for the appendix_d comparison of final mean dist2.
  double tolerance = 0.2;
  bool override_cap = false;
  unsigned workers = 0;
  // Directory relative paths are resolved against; not serialized.
  std::string base_dir = ".";
};

ExperimentConfig parse_config(const Json& j, const std::string& base_dir = ".");
Json serialize_config(const ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path);

std::vector<std::uint64_t> resolve_seeds(const SeedsConfig& s);

// Everything derived from a config before simulation.
struct Prepared {
  ProblemPtr problem;
  Schedule schedule{[] {
    ScheduleSpec s;
    s.eta1 = 1.0;
    return s;
  }()};
  DissipativityCert cert;  // optimum-centred
  std::optional<GrowthCert> growth;
  NoiseCert noise;
  Json noise_json;         // estimate details or the fixed cert
  double L = 0.0;
  Vec x1;
  double dist2_init = 0.0;
  ScheduleAudit audit;
  BoundReport bound;
  std::vector<double> lyapunov_r2;  // per k in [1, T+1]; empty for SGD
};

Prepared prepare(const ExperimentConfig& cfg);

struct CommandResult {
  int exit_code = 0;
  Json report;  // written as summary/failure JSON and echoed on stdout
};

CommandResult cmd_run(const ExperimentConfig& cfg);
CommandResult cmd_certify(const ExperimentConfig& cfg);
CommandResult cmd_bound(const ExperimentConfig& cfg);
CommandResult cmd_sweep(const ExperimentConfig& cfg, const std::string& axis,
                        const std::vector<double>& values);

}  // namespace ubsgd
