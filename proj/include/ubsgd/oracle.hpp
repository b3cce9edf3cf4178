#pragma once

#include <vector>

#include "ubsgd/linalg.hpp"
#include "ubsgd/problems.hpp"
#include "ubsgd/rng.hpp"

namespace ubsgd {

// Stochastic gradient oracle: a mini-batch drawn uniformly with replacement
// (batch_size >= n, or 0, means the full gradient) plus optional isotropic
// Gaussian noise with E|xi|^2 = additive_variance.
struct OracleSpec {
  int batch_size = 1;
  double additive_variance = 0.0;
};

class Oracle {
 public:
  Oracle(const Problem& problem, OracleSpec spec);

  Vec sample(const Vec& x, Rng& rng);
  bool deterministic() const { return full_batch_ && spec_.additive_variance == 0.0; }
  const OracleSpec& spec() const { return spec_; }

 private:
  const Problem& problem_;
  OracleSpec spec_;
  bool full_batch_;
  std::vector<int> indices_;
};

}  // namespace ubsgd
