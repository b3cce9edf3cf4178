#include "ubsgd/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ubsgd {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

signed char sign_char(double v) {
  return static_cast<signed char>(v > 0.0 ? 1 : (v < 0.0 ? -1 : 0));
}

// log(1 + exp(z)) without overflow.
double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct Spectrum {
  double min = 0.0;
  double max = 0.0;
  std::vector<Vec> eigenvectors;
};

Spectrum gram_spectrum(const Mat& P) {
  Eigen::SelfAdjointEigenSolver<Mat> es(P.transpose() * P);
  Spectrum s;
  s.min = es.eigenvalues().minCoeff();
  s.max = es.eigenvalues().maxCoeff();
  for (int j = 0; j < P.cols(); ++j) s.eigenvectors.push_back(es.eigenvectors().col(j));
  return s;
}

void require_full_column_rank(const Mat& P, const Spectrum& s,
                              const std::string& who) {
  require(P.rows() >= P.cols() && P.cols() >= 1 && s.min > 1e-12 * s.max &&
              s.min > 0.0,
          who + ": matrix must have full column rank");
}

void require_binary(const Vec& labels, const std::string& who) {
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    require(labels[i] == 1.0 || labels[i] == -1.0,
            who + ": labels must be -1 or +1");
  }
}

double mean_row_norm2(const Mat& A) {
  return A.rowwise().squaredNorm().sum() / static_cast<double>(A.rows());
}

void attach_resolved(Problem& p, const ResolveOptions& opts) {
  const ResolveResult r = resolve_optimum(p, opts);
  p.set_optimum({r.x, r.f, r.grad_norm, false, r.iterations});
}

// --- least squares ----------------------------------------------------------

class LeastSquares final : public Problem {
 public:
  LeastSquares(Mat P, Vec b) : P_(std::move(P)), b_(std::move(b)) {
    require(P_.rows() == b_.size(), "least_squares: P and b sizes differ");
    spec_ = gram_spectrum(P_);
    require_full_column_rank(P_, spec_, "least_squares");
  }
  std::string name() const override { return "least_squares"; }
  int dim() const override { return static_cast<int>(P_.cols()); }
  int num_samples() const override { return static_cast<int>(P_.rows()); }
  double value(const Vec& x) const override {
    return 0.5 * (P_ * x - b_).squaredNorm();
  }
  Vec gradient(const Vec& x) const override {
    return P_.transpose() * (P_ * x - b_);
  }
  // f = (1/n) sum f_i with f_i = n/2 (<p_i,x> - b_i)^2.
  void add_sample_gradient(const Vec& x, int i, Vec& acc) const override {
    const double r = P_.row(i).dot(x) - b_[i];
    acc.noalias() += (static_cast<double>(P_.rows()) * r) * P_.row(i).transpose();
  }
  double smoothness() const override { return spec_.max; }
  DissipativityCert nominal_cert() const override {
    return {spec_.min, 0.0, 0.0, 2.0, CertCenter::Optimum};
  }
  std::vector<Vec> probe_directions() const override {
    return spec_.eigenvectors;
  }
  Vec normal_equation_solution() const {
    return (P_.transpose() * P_).ldlt().solve(P_.transpose() * b_);
  }

 private:
  Mat P_;
  Vec b_;
  Spectrum spec_;
};

// --- phase retrieval --------------------------------------------------------

class PhaseRetrieval final : public Problem {
 public:
  PhaseRetrieval(Mat A, Vec b) : A_(std::move(A)), b_(std::move(b)) {
    require(A_.rows() == b_.size(), "phase_retrieval: A and b sizes differ");
    spec_ = gram_spectrum(A_);
    require_full_column_rank(A_, spec_, "phase_retrieval");
  }
  std::string name() const override { return "phase_retrieval"; }
  int dim() const override { return static_cast<int>(A_.cols()); }
  int num_samples() const override { return static_cast<int>(A_.rows()); }
  double n() const { return static_cast<double>(A_.rows()); }
  double value(const Vec& x) const override {
    return ((A_ * x).cwiseAbs() - b_).squaredNorm() / (2.0 * n());
  }
  Vec gradient(const Vec& x) const override {
    const Vec u = A_ * x;
    Vec w(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i)
      w[i] = (std::abs(u[i]) - b_[i]) * sgn(u[i]);
    return A_.transpose() * w / n();
  }
  void add_sample_gradient(const Vec& x, int i, Vec& acc) const override {
    const double u = A_.row(i).dot(x);
    acc.noalias() += ((std::abs(u) - b_[i]) * sgn(u)) * A_.row(i).transpose();
  }
  std::vector<signed char> kink_signature(const Vec& x) const override {
    const Vec u = A_ * x;
    std::vector<signed char> s(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) s[i] = sign_char(u[i]);
    return s;
  }
  bool smooth() const override { return false; }
  // ||Ax| - b| <= |A(x - x*)| for the nearer sign when b = |Ax*|, so
  // |grad f(x)| <= lambda_max(A^T A)/n |x - x*|.
  double smoothness() const override { return spec_.max / n(); }
  DissipativityCert nominal_cert() const override {
    return {spec_.min / (2.0 * n()), b_.squaredNorm() / (2.0 * n()), 0.0, 2.0,
            CertCenter::Optimum};
  }
  std::vector<Vec> probe_directions() const override {
    return spec_.eigenvectors;
  }
  Vec nearest_optimum(const Vec& x) const override {
    const Vec& s = optimum().x;
    return (x - s).squaredNorm() <= (x + s).squaredNorm() ? s : Vec(-s);
  }
  Vec spectral_start() const {
    Mat Y = Mat::Zero(A_.cols(), A_.cols());
    for (Eigen::Index i = 0; i < A_.rows(); ++i)
      Y.noalias() += b_[i] * b_[i] * A_.row(i).transpose() * A_.row(i);
    Eigen::SelfAdjointEigenSolver<Mat> es(Y / n());
    const Vec v = es.eigenvectors().col(A_.cols() - 1);
    return v * std::sqrt(b_.squaredNorm() / n());
  }

 private:
  Mat A_;
  Vec b_;
  Spectrum spec_;
};

// --- regularized robust regressions ------------------------------------------

class HeavyTailMle final : public Problem {
 public:
  HeavyTailMle(Mat A, Vec b, double lambda)
      : A_(std::move(A)), b_(std::move(b)), lambda_(lambda) {
    require(A_.rows() == b_.size() && A_.rows() >= 1,
            "heavy_tail_mle: A and b sizes differ");
    require(lambda_ > 0.0, "heavy_tail_mle: lambda must be positive");
  }
  std::string name() const override { return "heavy_tail_mle"; }
  int dim() const override { return static_cast<int>(A_.cols()); }
  int num_samples() const override { return static_cast<int>(A_.rows()); }
  double n() const { return static_cast<double>(A_.rows()); }
  double value(const Vec& x) const override {
    const Vec r = b_ - A_ * x;
    double s = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) s += std::log1p(r[i] * r[i]);
    return s / (2.0 * n()) + 0.5 * lambda_ * x.squaredNorm();
  }
  Vec gradient(const Vec& x) const override {
    const Vec r = b_ - A_ * x;
    const Vec w = r.array() / (1.0 + r.array().square());
    return lambda_ * x - A_.transpose() * w / n();
  }
  void add_sample_gradient(const Vec& x, int i, Vec& acc) const override {
    const double r = b_[i] - A_.row(i).dot(x);
    acc.noalias() += lambda_ * x - (r / (1.0 + r * r)) * A_.row(i).transpose();
  }
  // The log term has second derivative (1 - r^2)/(1 + r^2)^2 in [-1/8, 1].
  double smoothness() const override { return lambda_ + mean_row_norm2(A_); }
  DissipativityCert nominal_cert() const override {
    return {lambda_, b_.cwiseAbs().sum() / n(), 0.0, 2.0, CertCenter::Origin};
  }

 private:
  Mat A_;
  Vec b_;
  double lambda_;
};

class BlakeZisserman final : public Problem {
 public:
  BlakeZisserman(Mat A, Vec b, double lambda, double nu)
      : A_(std::move(A)), b_(std::move(b)), lambda_(lambda), nu_(nu) {
    require(A_.rows() == b_.size() && A_.rows() >= 1,
            "blake_zisserman: A and b sizes differ");
    require(lambda_ > 0.0, "blake_zisserman: lambda must be positive");
    require(nu_ > 0.0, "blake_zisserman: nu must be positive");
    // Lipschitz constant of phi(r) = r / (nu e^{r^2} + 1), by a dense scan
    // of |phi'| (phi' vanishes in the tails).
    const double r_end = 6.0 + std::sqrt(std::max(0.0, -std::log(nu_)));
    double worst = 0.0;
    for (double r = 0.0; r <= r_end; r += 1e-4) worst = std::max(worst, std::abs(dphi(r)));
    phi_lipschitz_ = 1.01 * worst;
  }
  std::string name() const override { return "blake_zisserman"; }
  int dim() const override { return static_cast<int>(A_.cols()); }
  int num_samples() const override { return static_cast<int>(A_.rows()); }
  double n() const { return static_cast<double>(A_.rows()); }
  double phi(double r) const { return r / (nu_ * std::exp(r * r) + 1.0); }
  double dphi(double r) const {
    const double e = nu_ * std::exp(r * r);
    return (e + 1.0 - 2.0 * r * r * e) / ((e + 1.0) * (e + 1.0));
  }
  double value(const Vec& x) const override {
    const Vec r = b_ - A_ * x;
    double s = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      // log(nu + exp(-r^2)) = -r^2 + log1p(nu exp(r^2)), stable for large r.
      const double r2 = r[i] * r[i];
      s += r2 < 1.0 ? std::log(nu_ + std::exp(-r2))
                    : -r2 + std::log1p(nu_ * std::exp(r2));
    }
    return -s / (2.0 * n()) + 0.5 * lambda_ * x.squaredNorm();
  }
  Vec gradient(const Vec& x) const override {
    const Vec r = b_ - A_ * x;
    Vec w(r.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) w[i] = phi(r[i]);
    return lambda_ * x - A_.transpose() * w / n();
  }
  void add_sample_gradient(const Vec& x, int i, Vec& acc) const override {
    const double r = b_[i] - A_.row(i).dot(x);
    acc.noalias() += lambda_ * x - phi(r) * A_.row(i).transpose();
  }
  double smoothness() const override {
    return lambda_ + phi_lipschitz_ * mean_row_norm2(A_);
  }
  DissipativityCert nominal_cert() const override {
    return {lambda_,
            b_.cwiseAbs().sum() / (2.0 * n() * std::sqrt(nu_ * (nu_ + 1.0))),
            0.0, 2.0, CertCenter::Origin};
  }

 private:
  Mat A_;
  Vec b_;
  double lambda_, nu_;
  double phi_lipschitz_ = 1.0;
};

// --- logistic models ----------------------------------------------------------

class LogisticLoss final : public Problem {
 public:
  LogisticLoss(Mat A, Vec y) : A_(std::move(A)), y_(std::move(y)) {
    require(A_.rows() == y_.size() && A_.rows() >= 1,
            "logistic: A and labels sizes differ");
    require_binary(y_, "logistic");
  }
  std::string name() const override { return "logistic"; }
  int dim() const override { return static_cast<int>(A_.cols()); }
  int num_samples() const override { return static_cast<int>(A_.rows()); }
  double n() const { return static_cast<double>(A_.rows()); }
  double value(const Vec& x) const override {
    const Vec u = A_ * x;
    double s = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) s += softplus(-y_[i] * u[i]);
    return s / n();
  }
  Vec gradient(const Vec& x) const override {
    const Vec u = A_ * x;
    Vec w(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i)
      w[i] = -y_[i] * sigmoid(-y_[i] * u[i]);
    return A_.transpose() * w / n();
  }
  void add_sample_gradient(const Vec& x, int i, Vec& acc) const override {
    const double u = A_.row(i).dot(x);
    acc.noalias() += (-y_[i] * sigmoid(-y_[i] * u)) * A_.row(i).transpose();
  }
  double smoothness() const override {
    return gram_spectrum(A_).max / (4.0 * n());
  }
  DissipativityCert nominal_cert() const override {
    throw std::logic_error("logistic: the unregularized loss has no certificate");
  }
  std::optional<double> gradient_bound() const override {
    return A_.rowwise().norm().maxCoeff();
  }
  const Mat& features() const { return A_; }

 private:
  Mat A_;
  Vec y_;
};

class L2Regularized final : public Problem {
 public:
  L2Regularized(ProblemPtr base, double lambda)
      : base_(std::move(base)), lambda_(lambda) {
    require(base_ != nullptr, "l2_regularized: missing base");
    require(lambda_ > 0.0, "l2_regularized: lambda must be positive");
    require(base_->gradient_bound().has_value(),
            "l2_regularized: base must supply a gradient bound G");
    G_ = *base_->gradient_bound();
  }
  std::string name() const override { return "l2_" + base_->name(); }
  int dim() const override { return base_->dim(); }
  int num_samples() const override { return base_->num_samples(); }
  double value(const Vec& x) const override {
    return base_->value(x) + lambda_ * x.squaredNorm();
  }
  Vec gradient(const Vec& x) const override {
    return base_->gradient(x) + 2.0 * lambda_ * x;
  }
  void add_sample_gradient(const Vec& x, int i, Vec& acc) const override {
    base_->add_sample_gradient(x, i, acc);
    acc.noalias() += 2.0 * lambda_ * x;
  }
  std::vector<signed char> kink_signature(const Vec& x) const override {
    return base_->kink_signature(x);
  }
  bool smooth() const override { return base_->smooth(); }
  double smoothness() const override {
    return base_->smoothness() + 2.0 * lambda_;
  }
  DissipativityCert nominal_cert() const override {
    return {lambda_ / 2.0, G_ / (2.0 * lambda_), 0.0, 2.0, CertCenter::Origin};
  }

 private:
  ProblemPtr base_;
  double lambda_;
  double G_ = 0.0;
};

class LogisticL1 final : public Problem {
 public:
  LogisticL1(Mat A, Vec y, double lambda)
      : loss_(std::move(A), std::move(y)), lambda_(lambda) {
    require(lambda_ > 0.0, "logistic_l1: lambda must be positive");
  }
  std::string name() const override { return "logistic_l1"; }
  int dim() const override { return loss_.dim(); }
  int num_samples() const override { return loss_.num_samples(); }
  double value(const Vec& x) const override {
    return loss_.value(x) + lambda_ * x.lpNorm<1>();
  }
  Vec gradient(const Vec& x) const override {
    return loss_.gradient(x) + lambda_ * x.unaryExpr(&sgn);
  }
  void add_sample_gradient(const Vec& x, int i, Vec& acc) const override {
    loss_.add_sample_gradient(x, i, acc);
    acc.noalias() += lambda_ * x.unaryExpr(&sgn);
  }
  std::vector<signed char> kink_signature(const Vec& x) const override {
    std::vector<signed char> s(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) s[j] = sign_char(x[j]);
    return s;
  }
  bool smooth() const override { return false; }
  // |g| <= sqrt(mean |a_i|^2) + lambda sqrt(d) everywhere: a linear-growth
  // constant with zero slope.
  double smoothness() const override {
    return std::sqrt(mean_row_norm2(loss_.features())) +
           lambda_ * std::sqrt(static_cast<double>(dim()));
  }
  DissipativityCert nominal_cert() const override {
    return {lambda_, 0.5, 0.0, 1.0, CertCenter::Origin};
  }
  std::optional<GrowthCert> growth_cert() const override {
    const double n = static_cast<double>(num_samples());
    const double sum_a2 = loss_.features().rowwise().squaredNorm().sum();
    return GrowthCert{2.0 / n * (sum_a2 + lambda_ * lambda_ * dim()), 0.0};
  }
  std::vector<Vec> probe_directions() const override {
    std::vector<Vec> dirs;
    for (int j = 0; j < dim(); ++j) dirs.push_back(Vec::Unit(dim(), j));
    return dirs;
  }
  double l1_weight() const override { return lambda_; }
  Vec smooth_part_gradient(const Vec& x) const override {
    return loss_.gradient(x);
  }

 private:
  LogisticLoss loss_;
  double lambda_;
};

// --- feed-forward networks ------------------------------------------------------

class FeedForwardNet final : public Problem {
 public:
  FeedForwardNet(const Mat& A, Vec y, std::vector<int> hidden, double lambda,
                 Activation act)
      : y_(std::move(y)), hidden_(std::move(hidden)), lambda_(lambda), act_(act) {
    require(A.rows() == y_.size() && A.rows() >= 1,
            "nn: data and labels sizes differ");
    require_binary(y_, "nn");
    require(!hidden_.empty(), "nn: needs at least one hidden layer");
    for (int m : hidden_) require(m >= 1, "nn: hidden width must be >= 1");
    require(lambda_ > 0.0, "nn: lambda must be positive");
    require(act_ == Activation::Relu || hidden_.size() == 1,
            "nn: sigmoid activation supports one hidden layer");
    Ab_.resize(A.rows(), A.cols() + 1);
    Ab_ << A, Vec::Ones(A.rows());
    int in = static_cast<int>(Ab_.cols());
    for (int m : hidden_) {
      shapes_.push_back({m, in});
      in = m;
    }
    shapes_.push_back({1, in});
    int off = 0;
    for (auto& s : shapes_) {
      offsets_.push_back(off);
      off += s.rows * s.cols;
    }
    dim_ = off;
  }

  std::string name() const override {
    return hidden_.size() == 1 ? "two_layer_nn" : "feedforward_nn";
  }
  int dim() const override { return dim_; }
  int num_samples() const override { return static_cast<int>(Ab_.rows()); }
  int layers() const { return static_cast<int>(shapes_.size()); }

  double value(const Vec& x) const override {
    double s = 0.0;
    std::vector<Vec> z, h;
    for (int i = 0; i < num_samples(); ++i) {
      s += softplus(-y_[i] * forward(x, i, z, h));
    }
    return s / num_samples() + 0.5 * lambda_ * x.squaredNorm();
  }

  void add_sample_gradient(const Vec& x, int i, Vec& acc) const override {
    std::vector<Vec> z, h;
    const double out = forward(x, i, z, h);
    const double dout = -y_[i] * sigmoid(-y_[i] * out);
    // Output layer.
    const int S = layers();
    Vec delta = Vec::Constant(1, dout);
    for (int l = S - 1; l >= 0; --l) {
      const auto& sh = shapes_[l];
      const Vec& input = l == 0 ? Vec(Ab_.row(i).transpose()) : h[l - 1];
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                               Eigen::RowMajor>>
          G(acc.data() + offsets_[l], sh.rows, sh.cols);
      G.noalias() += delta * input.transpose();
      if (l == 0) break;
      Vec back = weights(x, l).transpose() * delta;
      for (Eigen::Index j = 0; j < back.size(); ++j)
        back[j] *= dact(z[l - 1][j], h[l - 1][j]);
      delta = std::move(back);
    }
    acc.noalias() += lambda_ * x;
  }

  std::vector<signed char> kink_signature(const Vec& x) const override {
    if (act_ != Activation::Relu) return {};
    std::vector<signed char> s;
    std::vector<Vec> z, h;
    for (int i = 0; i < num_samples(); ++i) {
      forward(x, i, z, h);
      for (const Vec& zl : z)
        for (Eigen::Index j = 0; j < zl.size(); ++j) s.push_back(sign_char(zl[j]));
    }
    return s;
  }
  bool smooth() const override { return act_ != Activation::Relu; }

  // Linear-growth constants: for one ReLU hidden layer the data term of the
  // gradient is at most max|a_j| |X|; for sigmoid it is at most
  // sqrt(m) + max|a_j| |X| / 4. Deeper ReLU nets grow polynomially.
  double smoothness() const override {
    const double amax = Ab_.rowwise().norm().maxCoeff();
    if (hidden_.size() > 1) return std::numeric_limits<double>::infinity();
    if (act_ == Activation::Relu) return lambda_ + amax;
    return std::max(lambda_ + amax / 4.0,
                    std::sqrt(static_cast<double>(hidden_[0])));
  }
  DissipativityCert nominal_cert() const override {
    if (act_ == Activation::Relu) {
      return {lambda_, static_cast<double>(layers()), 0.0, 2.0,
              CertCenter::Origin};
    }
    const double m = hidden_[0];
    return {lambda_ / 2.0, 1.0 + m / (2.0 * lambda_), 0.0, 2.0,
            CertCenter::Origin};
  }

 private:
  struct Shape {
    int rows, cols;
  };
  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Eigen::Map<const RowMajor> weights(const Vec& x, int l) const {
    return {x.data() + offsets_[l], shapes_[l].rows, shapes_[l].cols};
  }
  double act(double v) const {
    return act_ == Activation::Relu ? (v > 0.0 ? v : 0.0) : sigmoid(v);
  }
  double dact(double z, double h) const {
    return act_ == Activation::Relu ? (z > 0.0 ? 1.0 : 0.0) : h * (1.0 - h);
  }
  double forward(const Vec& x, int i, std::vector<Vec>& z,
                 std::vector<Vec>& h) const {
    const int S = layers();
    z.resize(S - 1);
    h.resize(S - 1);
    Vec cur = Ab_.row(i).transpose();
    for (int l = 0; l < S - 1; ++l) {
      z[l] = weights(x, l) * cur;
      h[l] = z[l].unaryExpr([this](double v) { return act(v); });
      cur = h[l];
    }
    return (weights(x, S - 1) * cur)(0);
  }

  Mat Ab_;
  Vec y_;
  std::vector<int> hidden_;
  double lambda_;
  Activation act_;
  std::vector<Shape> shapes_;
  std::vector<int> offsets_;
  int dim_ = 0;
};

}  // namespace

// --- certificate helpers ------------------------------------------------------

void validate(const DissipativityCert& c) {
  require(std::isfinite(c.theta1) && c.theta1 > 0.0, "cert: theta1 must be > 0");
  require(std::isfinite(c.theta2) && c.theta2 >= 0.0, "cert: theta2 must be >= 0");
  require(std::isfinite(c.R) && c.R >= 0.0, "cert: R must be >= 0");
  require(c.p >= 0.0 && c.p <= 2.0, "cert: p must lie in [0,2]");
}

void validate(const GrowthCert& g) {
  require(std::isfinite(g.theta3) && g.theta3 > 0.0, "growth: theta3 must be > 0");
  require(std::isfinite(g.tau) && g.tau >= 0.0, "growth: tau must be >= 0");
}

void validate(const NoiseCert& n) {
  require(std::isfinite(n.rho) && n.rho >= 0.0, "noise: rho must be >= 0");
  require(std::isfinite(n.sigma2) && n.sigma2 >= 0.0, "noise: sigma2 must be >= 0");
}

std::string to_string(CertCenter c) {
  return c == CertCenter::Origin ? "origin" : "optimum";
}

CertCenter center_from_string(const std::string& s) {
  if (s == "origin") return CertCenter::Origin;
  if (s == "optimum") return CertCenter::Optimum;
  throw std::invalid_argument("unknown cert center: " + s);
}

std::string to_string(Activation a) {
  return a == Activation::Relu ? "relu" : "sigmoid";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw std::invalid_argument("unknown activation: " + s);
}

// --- Problem ------------------------------------------------------------------

Vec Problem::gradient(const Vec& x) const {
  Vec acc = Vec::Zero(dim());
  for (int i = 0; i < num_samples(); ++i) add_sample_gradient(x, i, acc);
  return acc / static_cast<double>(num_samples());
}

Vec Problem::minibatch_gradient(const Vec& x,
                                std::span<const int> indices) const {
  require(!indices.empty(), "minibatch: empty batch");
  Vec acc = Vec::Zero(dim());
  for (int i : indices) add_sample_gradient(x, i, acc);
  return acc / static_cast<double>(indices.size());
}

std::vector<signed char> Problem::kink_signature(const Vec&) const { return {}; }

bool Problem::near_kink(const Vec& x, double h) const {
  const auto base = kink_signature(x);
  if (base.empty()) return false;
  Vec y = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    for (double s : {h, -h}) {
      y[j] = x[j] + s;
      if (kink_signature(y) != base) return true;
    }
    y[j] = x[j];
  }
  // A signature entry of exactly 0 means x sits on a kink.
  return std::find(base.begin(), base.end(), 0) != base.end();
}

const OptimumInfo& Problem::optimum() const {
  if (!optimum_) throw std::logic_error(name() + ": optimum not resolved");
  return *optimum_;
}

Vec Problem::nearest_optimum(const Vec&) const { return optimum().x; }

double Problem::dist2_to_optimum(const Vec& x) const {
  return (x - nearest_optimum(x)).squaredNorm();
}

// --- resolution -----------------------------------------------------------------

namespace {

Vec soft_threshold(const Vec& v, double t) {
  return v.unaryExpr([t](double a) {
    return a > t ? a - t : (a < -t ? a + t : 0.0);
  });
}

// Norm of the minimum-norm element of grad g(x) + lambda d|x|_1.
double l1_stationarity(const Vec& x, const Vec& g, double lambda) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    double c = x[j] != 0.0 ? g[j] + lambda * sgn(x[j])
                           : std::max(std::abs(g[j]) - lambda, 0.0);
    s += c * c;
  }
  return std::sqrt(s);
}

ResolveResult resolve_proximal(const Problem& p, const ResolveOptions& o,
                               Vec x) {
  const double lam = p.l1_weight();
  auto smooth_value = [&](const Vec& v) { return p.value(v) - lam * v.lpNorm<1>(); };
  double t = 1.0;
  for (long it = 0; it < o.max_iters; ++it) {
    const Vec g = p.smooth_part_gradient(x);
    const double stat = l1_stationarity(x, g, lam);
    if (stat <= o.tol) return {x, p.value(x), stat, it, false};
    const double fx = smooth_value(x);
    Vec xn;
    while (true) {
      xn = soft_threshold(x - t * g, t * lam);
      const Vec d = xn - x;
      if (smooth_value(xn) <= fx + g.dot(d) + d.squaredNorm() / (2.0 * t)) break;
      t *= 0.5;
      if (t < 1e-30) {
        return {x, p.value(x), stat, it, true};
      }
    }
    if ((xn - x).squaredNorm() == 0.0) return {x, p.value(x), stat, it, true};
    x = std::move(xn);
    t = std::min(2.0 * t, 1e6);
  }
  throw std::runtime_error(p.name() + ": optimum resolution did not converge");
}

}  // namespace

ResolveResult resolve_optimum(const Problem& p, const ResolveOptions& o) {
  require(o.tol > 0.0 && o.max_iters > 0, "resolve_optimum: invalid options");
  Vec x = o.start ? *o.start : Vec::Zero(p.dim());
  require(x.size() == p.dim(), "resolve_optimum: start has wrong dimension");
  if (p.l1_weight() > 0.0) return resolve_proximal(p, o, std::move(x));

  double t = 1.0;
  for (long it = 0; it < o.max_iters; ++it) {
    const Vec g = p.gradient(x);
    const double gn2 = g.squaredNorm();
    const double gn = std::sqrt(gn2);
    if (gn <= o.tol) return {x, p.value(x), gn, it, false};
    const double fx = p.value(x);
    Vec xn;
    bool progressed = true;
    // Near the optimum f stops resolving the Armijo decrease; a step that
    // keeps f within rounding and shrinks |grad| is accepted instead.
    const double f_noise = 16.0 * std::numeric_limits<double>::epsilon() * std::abs(fx);
    while (true) {
      xn = x - t * g;
      const double fn = p.value(xn);
      if (fn <= fx - 0.5 * t * gn2) break;
      if (fn <= fx + f_noise && p.gradient(xn).norm() < gn) break;
      t *= 0.5;
      if (t < 1e-30) {
        progressed = false;
        break;
      }
    }
    if (!progressed || xn == x) {
      if (!p.smooth()) return {x, fx, gn, it, true};
      throw std::runtime_error(p.name() +
                               ": line search stalled before |grad| <= tol (|grad| = " +
                               std::to_string(gn) + ")");
    }
    x = std::move(xn);
    t = std::min(2.0 * t, 1e6);
  }
  throw std::runtime_error(p.name() + ": optimum resolution did not converge in " +
                           std::to_string(o.max_iters) + " iterations");
}

std::optional<Vec> finite_diff_gradient(const Problem& p, const Vec& x,
                                        double h) {
  require(h > 0.0, "finite_diff_gradient: h must be positive");
  if (p.near_kink(x, h)) return std::nullopt;
  Vec g(x.size());
  Vec y = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    y[j] = x[j] + h;
    const double fp = p.value(y);
    y[j] = x[j] - h;
    const double fm = p.value(y);
    y[j] = x[j];
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// --- factories ------------------------------------------------------------------

ProblemPtr least_squares(const Mat& P, const Vec& b) {
  auto p = std::make_shared<LeastSquares>(P, b);
  const Vec x = p->normal_equation_solution();
  p->set_optimum({x, p->value(x), p->gradient(x).norm(), true, 0});
  return p;
}

ProblemPtr phase_retrieval(const Mat& A, const Vec& b, std::optional<Vec> planted,
                           ResolveOptions opts) {
  auto p = std::make_shared<PhaseRetrieval>(A, b);
  if (planted) {
    require(planted->size() == A.cols(), "phase_retrieval: planted size differs");
    if (p->value(*planted) == 0.0) {
      p->set_optimum({*planted, 0.0, p->gradient(*planted).norm(), true, 0});
      return p;
    }
  }
  if (!opts.start) opts.start = planted ? *planted : p->spectral_start();
  attach_resolved(*p, opts);
  return p;
}

ProblemPtr heavy_tail_mle(const Mat& A, const Vec& b, double lambda,
                          ResolveOptions opts) {
  auto p = std::make_shared<HeavyTailMle>(A, b, lambda);
  attach_resolved(*p, opts);
  return p;
}

ProblemPtr blake_zisserman(const Mat& A, const Vec& b, double lambda, double nu,
                           ResolveOptions opts) {
  auto p = std::make_shared<BlakeZisserman>(A, b, lambda, nu);
  attach_resolved(*p, opts);
  return p;
}

ProblemPtr logistic_loss(const Mat& A, const Vec& labels) {
  return std::make_shared<LogisticLoss>(A, labels);
}

ProblemPtr l2_regularized_bounded_grad(ProblemPtr base, double lambda,
                                       ResolveOptions opts) {
  auto p = std::make_shared<L2Regularized>(std::move(base), lambda);
  attach_resolved(*p, opts);
  return p;
}

ProblemPtr logistic_l1(const Mat& A, const Vec& labels, double lambda,
                       ResolveOptions opts) {
  auto p = std::make_shared<LogisticL1>(A, labels, lambda);
  attach_resolved(*p, opts);
  return p;
}

ProblemPtr feedforward_nn(const Mat& A, const Vec& labels, std::vector<int> hidden,
                          double lambda, Activation act, ResolveOptions opts) {
  auto p = std::make_shared<FeedForwardNet>(A, labels, std::move(hidden), lambda, act);
  if (!opts.start) {
    Rng rng(0x5eedULL);
    std::normal_distribution<double> N(0.0, 0.1);
    Vec s(p->dim());
    for (Eigen::Index j = 0; j < s.size(); ++j) s[j] = N(rng);
    opts.start = s;
  }
  attach_resolved(*p, opts);
  return p;
}

ProblemPtr two_layer_nn(const Mat& A, const Vec& labels, int m, double lambda,
                        Activation act, ResolveOptions opts) {
  require(m >= 1, "two_layer_nn: m must be >= 1");
  return feedforward_nn(A, labels, {m}, lambda, act, std::move(opts));
}

}  // namespace ubsgd
