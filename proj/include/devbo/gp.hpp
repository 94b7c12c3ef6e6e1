#pragma once

#include "devbo/cmaes.hpp"
#include "devbo/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace devbo {

struct KernelParams {
  double signal_variance = 1.0;  // sigma^2
  Eigen::VectorXd length_scales;  // one per input dimension
  double nugget = 0.0;            // tau^2, observation noise variance

  void check() const {
    if (!(signal_variance > 0.0)) throw std::invalid_argument("kernel: signal variance must be > 0");
    if (length_scales.size() == 0) throw std::invalid_argument("kernel: no length scales");
    if (!(length_scales.array() > 0.0).all())
      throw std::invalid_argument("kernel: length scales must be > 0");
    if (!(nugget >= 0.0)) throw std::invalid_argument("kernel: nugget must be >= 0");
  }
};

inline constexpr double kSqrt3 = 1.7320508075688772;

inline double matern32_scaled(double d, double signal_variance) {
  const double a = kSqrt3 * d;
  return signal_variance * (1.0 + a) * std::exp(-a);
}

// Anisotropic Matern 3/2 covariance.
inline double matern32(const Eigen::Ref<const Eigen::VectorXd>& x,
                       const Eigen::Ref<const Eigen::VectorXd>& y, const KernelParams& k) {
  if (!(k.signal_variance > 0.0) || !(k.length_scales.array() > 0.0).all())
    throw std::invalid_argument("matern32: non-positive kernel parameter");
  if (x.size() != y.size() || x.size() != k.length_scales.size())
    throw std::invalid_argument("matern32: dimension mismatch");
  const double d = (x - y).cwiseQuotient(k.length_scales).norm();
  return matern32_scaled(d, k.signal_variance);
}

class GpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GpPrediction {
  double mean;
  double sd;
};

// Hyperparameter search box, relative to the sample variance v of the targets.
struct GpFitOptions {
  double length_scale_min = 1e-2;
  double length_scale_max = 10.0;
  double signal_factor_min = 1e-4;
  double signal_factor_max = 1e4;
  double nugget_factor_min = 1e-8;  // also the conditioning floor
  double nugget_factor_max = 1.0;
  std::size_t restarts = 3;
  std::size_t evals_per_param = 200;
  std::uint64_t seed = 0;
};

// Ordinary kriging model: constant mean estimated by generalized least squares,
// Matern 3/2 ARD kernel, homoscedastic nugget. Immutable once built.
class GpModel {
 public:
  // Conditions on data with fixed kernel parameters.
  static GpModel condition(Eigen::MatrixXd inputs, Eigen::VectorXd targets, KernelParams kernel) {
    validate_data(inputs, targets);
    kernel.check();
    if (kernel.length_scales.size() != inputs.cols())
      throw std::invalid_argument("gp: length scale count does not match input dimension");
    GpModel m;
    m.inputs_ = std::move(inputs);
    m.targets_ = std::move(targets);
    m.kernel_ = std::move(kernel);
    m.factorize();
    return m;
  }

  // Maximum-likelihood fit over a log-parameterized box by restarted CMA-ES.
  static GpModel fit(Eigen::MatrixXd inputs, Eigen::VectorXd targets,
                     const GpFitOptions& opt = {});

  GpPrediction predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != inputs_.cols()) throw std::invalid_argument("gp predict: dimension mismatch");
    const Eigen::Index n = inputs_.rows();
    Eigen::VectorXd kx(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = (inputs_.row(i).transpose() - x).cwiseQuotient(kernel_.length_scales).norm();
      kx[i] = matern32_scaled(d, kernel_.signal_variance);
    }
    const double mean = mean_ + kx.dot(alpha_);
    const Eigen::VectorXd v = chol_.matrixL().solve(kx);
    const double var = kernel_.signal_variance - v.squaredNorm();
    return {mean, std::sqrt(std::max(var, 0.0))};
  }

  double log_marginal_likelihood() const { return lml_; }

  const Eigen::MatrixXd& inputs() const { return inputs_; }
  const Eigen::VectorXd& targets() const { return targets_; }
  const KernelParams& kernel() const { return kernel_; }
  double mean() const { return mean_; }
  const Eigen::VectorXd& alpha() const { return alpha_; }
  Eigen::MatrixXd cholesky_factor() const { return chol_.matrixL(); }
  std::size_t size() const { return static_cast<std::size_t>(inputs_.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(inputs_.cols()); }

  // K + tau^2 I for the training inputs.
  Eigen::MatrixXd covariance_matrix() const {
    return build_covariance(inputs_, kernel_);
  }

  static Eigen::MatrixXd build_covariance(const Eigen::MatrixXd& X, const KernelParams& k) {
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      K(i, i) = k.signal_variance + k.nugget;
      for (Eigen::Index j = 0; j < i; ++j) {
        const double d = (X.row(i) - X.row(j)).transpose().cwiseQuotient(k.length_scales).norm();
        K(i, j) = K(j, i) = matern32_scaled(d, k.signal_variance);
      }
    }
    return K;
  }

 private:
  static void validate_data(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.rows() < 2) throw std::invalid_argument("gp: need at least 2 training points");
    if (X.rows() != y.size()) throw std::invalid_argument("gp: input/target count mismatch");
    if (!y.allFinite()) throw std::invalid_argument("gp: non-finite target");
    if (!X.allFinite()) throw std::invalid_argument("gp: non-finite input");
  }

  static std::string duplicate_report(const Eigen::MatrixXd& X) {
    std::string out;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      for (Eigen::Index j = i + 1; j < X.rows(); ++j)
        if (X.row(i) == X.row(j)) out += " (" + std::to_string(i) + "," + std::to_string(j) + ")";
    return out.empty() ? " none" : out;
  }

  void factorize() {
    chol_.compute(build_covariance(inputs_, kernel_));
    if (chol_.info() != Eigen::Success)
      throw GpError("gp: covariance not positive definite (nugget " +
                    std::to_string(kernel_.nugget) + "); duplicate inputs:" +
                    duplicate_report(inputs_));
    const Eigen::Index n = inputs_.rows();
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const Eigen::VectorXd kinv_ones = chol_.solve(ones);
    const Eigen::VectorXd kinv_y = chol_.solve(targets_);
    mean_ = ones.dot(kinv_y) / ones.dot(kinv_ones);
    alpha_ = kinv_y - mean_ * kinv_ones;
    const Eigen::VectorXd resid = targets_.array() - mean_;
    const double log_det = 2.0 * chol_.matrixLLT().diagonal().array().log().sum();
    lml_ = -0.5 * resid.dot(alpha_) - 0.5 * log_det -
           0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  }

  Eigen::MatrixXd inputs_;
  Eigen::VectorXd targets_;
  KernelParams kernel_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  double mean_ = 0.0;
  Eigen::VectorXd alpha_;
  double lml_ = 0.0;
};

namespace detail {

// Profile log likelihood for repeated evaluation during fitting; the scaled
// squared distances per dimension are cached once per dataset.
class LikelihoodSurface {
 public:
  LikelihoodSurface(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) : y_(y) {
    n_ = X.rows();
    const Eigen::Index pairs = n_ * (n_ - 1) / 2;
    sq_diff_.resize(pairs, X.cols());
    Eigen::Index p = 0;
    for (Eigen::Index i = 0; i < n_; ++i)
      for (Eigen::Index j = 0; j < i; ++j) sq_diff_.row(p++) = (X.row(i) - X.row(j)).array().square();
  }

  double operator()(double signal_variance, const Eigen::VectorXd& length_scales,
                    double nugget) const {
    const Eigen::VectorXd inv_l2 = length_scales.array().square().inverse();
    const Eigen::VectorXd d = (sq_diff_ * inv_l2).cwiseSqrt();
    Eigen::MatrixXd K(n_, n_);
    Eigen::Index p = 0;
    for (Eigen::Index i = 0; i < n_; ++i) {
      K(i, i) = signal_variance + nugget;
      for (Eigen::Index j = 0; j < i; ++j) K(i, j) = matern32_scaled(d[p++], signal_variance);
    }
    Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>, Eigen::Lower> llt(K);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n_);
    const Eigen::VectorXd kinv_ones = llt.solve(ones);
    const Eigen::VectorXd kinv_y = llt.solve(y_);
    const double mu = ones.dot(kinv_y) / ones.dot(kinv_ones);
    const Eigen::VectorXd alpha = kinv_y - mu * kinv_ones;
    const double quad = (y_.array() - mu).matrix().dot(alpha);
    const double log_det = 2.0 * K.diagonal().array().log().sum();
    const double v = -0.5 * quad - 0.5 * log_det -
                     0.5 * static_cast<double>(n_) * std::log(2.0 * std::numbers::pi);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  }

 private:
  Eigen::VectorXd y_;
  Eigen::Index n_;
  Eigen::MatrixXd sq_diff_;
};

}  // namespace detail

inline GpModel GpModel::fit(Eigen::MatrixXd inputs, Eigen::VectorXd targets,
                            const GpFitOptions& opt) {
  validate_data(inputs, targets);
  const Eigen::Index dim = inputs.cols();
  const Eigen::Index n = targets.size();
  const double raw_var = (targets.array() - targets.mean()).square().sum() / static_cast<double>(n);
  const double v = raw_var > 0.0 ? raw_var : 1.0;

  // Search coordinates u in [0,1]^(dim+2) map linearly onto log parameters:
  // [log sigma^2, log l_1..l_dim, log tau^2].
  const Eigen::Index np = dim + 2;
  Eigen::VectorXd lo(np), hi(np);
  lo[0] = std::log(opt.signal_factor_min * v);
  hi[0] = std::log(opt.signal_factor_max * v);
  for (Eigen::Index j = 0; j < dim; ++j) {
    lo[1 + j] = std::log(opt.length_scale_min);
    hi[1 + j] = std::log(opt.length_scale_max);
  }
  lo[np - 1] = std::log(opt.nugget_factor_min * v);
  hi[np - 1] = std::log(opt.nugget_factor_max * v);

  auto unpack = [&](const Eigen::VectorXd& u) {
    const Eigen::VectorXd logp = lo + u.cwiseProduct(hi - lo);
    KernelParams k;
    k.signal_variance = std::exp(logp[0]);
    k.length_scales = logp.segment(1, dim).array().exp();
    k.nugget = std::exp(logp[np - 1]);
    return k;
  };

  const detail::LikelihoodSurface surface(inputs, targets);
  auto objective = [&](const Eigen::VectorXd& u) {
    const KernelParams k = unpack(u);
    const double lml = surface(k.signal_variance, k.length_scales, k.nugget);
    return std::isfinite(lml) ? -lml : 1e300;
  };

  CounterRng starts(opt.seed, 0x6f17);
  CmaConfig cfg;
  cfg.sigma0 = 0.25;
  cfg.lower = Eigen::VectorXd::Zero(np);
  cfg.upper = Eigen::VectorXd::Ones(np);
  cfg.max_evals = opt.evals_per_param * static_cast<std::size_t>(np);

  Eigen::VectorXd best_u;
  double best_f = std::numeric_limits<double>::infinity();
  const std::size_t restarts = std::max<std::size_t>(1, opt.restarts);
  for (std::size_t r = 0; r < restarts; ++r) {
    Eigen::VectorXd u0(np);
    if (r == 0) {
      u0.setConstant(0.5);
    } else {
      for (Eigen::Index j = 0; j < np; ++j) u0[j] = starts.uniform();
    }
    cfg.seed = opt.seed * 7919 + r;
    const CmaResult res = cma_minimize(objective, u0, cfg);
    if (res.f_best < best_f) {
      best_f = res.f_best;
      best_u = res.x_best;
    }
  }
  if (!std::isfinite(best_f) || best_f >= 1e300)
    throw GpError("gp fit: likelihood undefined over the whole search box; duplicate inputs:" +
                  duplicate_report(inputs));
  KernelParams k = unpack(best_u);
  k.nugget = std::max(k.nugget, opt.nugget_factor_min * v);
  return condition(std::move(inputs), std::move(targets), std::move(k));
}

}  // namespace devbo
