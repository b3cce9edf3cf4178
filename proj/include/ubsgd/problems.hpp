#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ubsgd/certs.hpp"
#include "ubsgd/linalg.hpp"
#include "ubsgd/rng.hpp"

namespace ubsgd {

struct OptimumInfo {
  Vec x;
  double f = 0.0;
  double grad_norm = 0.0;  // achieved (sub)gradient norm
  bool closed_form = false;
  long iterations = 0;
};

// Finite-sum objective f = (1/n) sum_i f_i. Immutable once built by one of
// the factories below; shared between threads through shared_ptr<const>.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual int num_samples() const = 0;

  virtual double value(const Vec& x) const = 0;
  // acc += grad f_i(x), with the fixed subgradient choice at kinks.
  virtual void add_sample_gradient(const Vec& x, int i, Vec& acc) const = 0;
  virtual Vec gradient(const Vec& x) const;
  // Mean of the per-sample gradients over `indices` (repeats allowed).
  Vec minibatch_gradient(const Vec& x, std::span<const int> indices) const;

  // Discrete state of every nonsmooth piece at x (signs of the arguments of
  // |.|, ReLU, l1). Empty for smooth problems.
  virtual std::vector<signed char> kink_signature(const Vec& x) const;
  // True if some coordinate step of size h changes the kink signature.
  bool near_kink(const Vec& x, double h) const;
  virtual bool smooth() const { return true; }

  // Constant L with |grad f(x)| <= L |x - x*| (Lipschitz gradient for the
  // smooth problems; a linear-growth constant otherwise).
  virtual double smoothness() const = 0;
  virtual DissipativityCert nominal_cert() const = 0;
  virtual std::optional<GrowthCert> growth_cert() const { return std::nullopt; }
  // Bound G on every per-sample gradient norm, when one exists.
  virtual std::optional<double> gradient_bound() const { return std::nullopt; }
  // Directions along which certificates are tightest; verification probes
  // them at every shell radius in addition to random directions.
  virtual std::vector<Vec> probe_directions() const { return {}; }

  // Weight of an additive lambda*|x|_1 term (proximal resolution).
  virtual double l1_weight() const { return 0.0; }
  // Gradient without the l1 term.
  virtual Vec smooth_part_gradient(const Vec& x) const { return gradient(x); }

  bool has_optimum() const { return optimum_.has_value(); }
  const OptimumInfo& optimum() const;
  // Minimizer closest to x (differs from optimum().x for sign-symmetric
  // objectives).
  virtual Vec nearest_optimum(const Vec& x) const;
  double dist2_to_optimum(const Vec& x) const;
  double gap(const Vec& x) const { return value(x) - optimum().f; }

  void set_optimum(OptimumInfo info) { optimum_ = std::move(info); }

 private:
  std::optional<OptimumInfo> optimum_;
};

using ProblemPtr = std::shared_ptr<const Problem>;

struct ResolveOptions {
  double tol = 1e-8;
  long max_iters = 1000000;
  std::optional<Vec> start;
};

struct ResolveResult {
  Vec x;
  double f = 0.0;
  double grad_norm = 0.0;
  long iterations = 0;
  bool stagnated = false;
};

// Full-batch descent with backtracking: proximal steps when the problem has
// an l1 term, plain (sub)gradient steps otherwise. Stops at |grad| <= tol,
// or for nonsmooth problems when backtracking can no longer make progress.
// Throws std::runtime_error when neither happens within max_iters.
ResolveResult resolve_optimum(const Problem& problem,
                              const ResolveOptions& opts = {});

// Central differences; nullopt when x is within h of a kink.
std::optional<Vec> finite_diff_gradient(const Problem& problem, const Vec& x,
                                        double h);

// --- factories ------------------------------------------------------------

// f(x) = 1/2 |P x - b|^2.
ProblemPtr least_squares(const Mat& P, const Vec& b);

// f(x) = 1/(2n) sum (|<a_i,x>| - b_i)^2. x* is resolved from `planted`
// (or a spectral initializer) and both signs count as minimizers.
ProblemPtr phase_retrieval(const Mat& A, const Vec& b,
                           std::optional<Vec> planted = std::nullopt,
                           ResolveOptions opts = {});

// f(x) = 1/(2n) sum log(1 + (b_i - <a_i,x>)^2) + lambda/2 |x|^2.
ProblemPtr heavy_tail_mle(const Mat& A, const Vec& b, double lambda,
                          ResolveOptions opts = {});

// f(x) = -1/(2n) sum log(nu + exp(-(b_i - <a_i,x>)^2)) + lambda/2 |x|^2.
ProblemPtr blake_zisserman(const Mat& A, const Vec& b, double lambda,
                           double nu, ResolveOptions opts = {});

// Unregularized logistic loss, labels in {-1,+1}. Has no optimum of its own;
// used as the base of l2_regularized_bounded_grad.
ProblemPtr logistic_loss(const Mat& A, const Vec& labels);

// f(x) = f0(x) + lambda |x|^2 for a base with bounded gradients.
ProblemPtr l2_regularized_bounded_grad(ProblemPtr base, double lambda,
                                       ResolveOptions opts = {});

// f(x) = 1/n sum log(1 + exp(-b_i <a_i,x>)) + lambda |x|_1.
ProblemPtr logistic_l1(const Mat& A, const Vec& labels, double lambda,
                       ResolveOptions opts = {});

enum class Activation { Relu, Sigmoid };
std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// Bias-free feed-forward classifier on bias-augmented inputs [a_j; 1]:
//   F(X) = 1/n sum log(1 + exp(-b_j N_X(a_j))) + lambda/2 |X|^2.
// `hidden` lists the hidden widths; one hidden layer is the two-layer net.
// Parameters are the row-major weight matrices, layer by layer.
ProblemPtr feedforward_nn(const Mat& A, const Vec& labels,
                          std::vector<int> hidden, double lambda,
                          Activation act, ResolveOptions opts = {});

ProblemPtr two_layer_nn(const Mat& A, const Vec& labels, int m, double lambda,
                        Activation act, ResolveOptions opts = {});

// --- data -------------------------------------------------------------------

struct Dataset {
  Mat A;  // one sample per row
  Vec b;
  std::optional<Vec> planted;
};

enum class TargetKind { Linear, Absolute, Sign };

struct SyntheticSpec {
  int n = 50;
  int d = 10;
  std::uint64_t seed = 1;
  double feature_scale = 1.0;  // entry standard deviation
  double signal_norm = 1.0;    // |x_natural|
  double noise = 0.0;          // additive target noise standard deviation
  TargetKind target = TargetKind::Linear;
  bool unit_rows = false;      // rescale each row to unit norm
};

Dataset synthetic_dataset(const SyntheticSpec& spec);

// Dense CSV, one sample per line, last column is the target. With
// `binary_labels`, targets must be in {0,1} or {-1,+1}; 0 maps to -1.
Dataset load_csv_dataset(const std::string& path, bool binary_labels);

}  // namespace ubsgd
