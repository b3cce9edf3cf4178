#include "ubsgd/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace ubsgd {

Oracle::Oracle(const Problem& problem, OracleSpec spec)
    : problem_(problem), spec_(spec) {
  if (spec_.batch_size < 0) throw std::invalid_argument("oracle: negative batch size");
  if (!(spec_.additive_variance >= 0.0))
    throw std::invalid_argument("oracle: additive variance must be >= 0");
  full_batch_ = spec_.batch_size == 0 || spec_.batch_size >= problem_.num_samples();
  if (!full_batch_) indices_.resize(spec_.batch_size);
}

Vec Oracle::sample(const Vec& x, Rng& rng) {
  Vec g;
  if (full_batch_) {
    g = problem_.gradient(x);
  } else {
    std::uniform_int_distribution<int> pick(0, problem_.num_samples() - 1);
    for (int& i : indices_) i = pick(rng);
    g = problem_.minibatch_gradient(x, indices_);
  }
  if (spec_.additive_variance > 0.0) {
    std::normal_distribution<double> N(
        0.0, std::sqrt(spec_.additive_variance / static_cast<double>(g.size())));
    for (Eigen::Index j = 0; j < g.size(); ++j) g[j] += N(rng);
  }
  return g;
}

}  // namespace ubsgd
