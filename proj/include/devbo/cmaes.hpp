#pragma once

#include "devbo/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace devbo {

struct CmaConfig {
  std::size_t population = 0;  // lambda; 0 selects 4 + floor(3 ln n)
  std::size_t parents = 0;     // mu; 0 selects floor(lambda / 2)
  double sigma0 = 0.3;
  std::size_t max_evals = 1000;
  std::uint64_t seed = 0;
  // Empty vectors mean unbounded.
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double tol_f = 1e-12;
  std::size_t stall_generations = 20;
};

struct CmaResult {
  Eigen::VectorXd x_best;
  double f_best = std::numeric_limits<double>::infinity();
  std::size_t evals = 0;
  std::size_t generations = 0;
};

inline constexpr double kBoxPenalty = 1e6;
inline constexpr double kMaxConditionNumber = 1e14;

// (mu/mu_w, lambda)-CMA-ES with rank-one and rank-mu covariance updates and
// cumulative step-size adaptation. Out-of-box samples are evaluated at their
// projection onto the box plus a quadratic penalty on the projection distance.
class CmaEs {
 public:
  CmaEs(const Eigen::VectorXd& x0, const CmaConfig& cfg)
      : cfg_(cfg), n_(static_cast<std::size_t>(x0.size())), rng_(cfg.seed, 0xc3a) {
    if (n_ == 0) throw std::invalid_argument("cmaes: empty start point");
    if (!(cfg.sigma0 > 0.0)) throw std::invalid_argument("cmaes: sigma0 must be positive");
    bounded_ = cfg.lower.size() > 0;
    if (bounded_) {
      if (static_cast<std::size_t>(cfg.lower.size()) != n_ ||
          static_cast<std::size_t>(cfg.upper.size()) != n_)
        throw std::invalid_argument("cmaes: bound dimension mismatch");
      if (((cfg.upper - cfg.lower).array() <= 0.0).any())
        throw std::invalid_argument("cmaes: empty box");
    }
    const double nd = static_cast<double>(n_);
    lambda_ = cfg.population ? cfg.population
                             : 4 + static_cast<std::size_t>(std::floor(3.0 * std::log(nd)));
    if (lambda_ < 4) throw std::invalid_argument("cmaes: population must be >= 4");
    mu_ = cfg.parents ? cfg.parents : lambda_ / 2;
    if (mu_ < 1 || mu_ > lambda_) throw std::invalid_argument("cmaes: invalid parent count");

    weights_.resize(static_cast<Eigen::Index>(mu_));
    for (std::size_t i = 0; i < mu_; ++i)
      weights_[static_cast<Eigen::Index>(i)] =
          std::log(static_cast<double>(mu_) + 0.5) - std::log(static_cast<double>(i + 1));
    weights_ /= weights_.sum();
    mu_eff_ = 1.0 / weights_.squaredNorm();

    c_sigma_ = (mu_eff_ + 2.0) / (nd + mu_eff_ + 5.0);
    d_sigma_ = 1.0 + 2.0 * std::max(0.0, std::sqrt((mu_eff_ - 1.0) / (nd + 1.0)) - 1.0) + c_sigma_;
    c_c_ = (4.0 + mu_eff_ / nd) / (nd + 4.0 + 2.0 * mu_eff_ / nd);
    c_1_ = 2.0 / ((nd + 1.3) * (nd + 1.3) + mu_eff_);
    c_mu_ = std::min(1.0 - c_1_,
                     2.0 * (mu_eff_ - 2.0 + 1.0 / mu_eff_) / ((nd + 2.0) * (nd + 2.0) + mu_eff_));
    chi_n_ = std::sqrt(nd) * (1.0 - 1.0 / (4.0 * nd) + 1.0 / (21.0 * nd * nd));

    mean_ = bounded_ ? project(x0) : x0;
    sigma_ = cfg.sigma0;
    cov_ = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    basis_ = cov_;
    scales_ = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n_));
    p_sigma_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
    p_c_ = p_sigma_;
  }

  // Draws lambda candidates (raw, possibly outside the box).
  const std::vector<Eigen::VectorXd>& sample() {
    raw_.clear();
    steps_.clear();
    for (std::size_t k = 0; k < lambda_; ++k) {
      Eigen::VectorXd z(static_cast<Eigen::Index>(n_));
      for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng_.normal();
      Eigen::VectorXd y = basis_ * scales_.cwiseProduct(z);
      steps_.push_back(y);
      raw_.push_back(mean_ + sigma_ * y);
    }
    return raw_;
  }

  // Points at which the objective is evaluated for the current sample.
  std::vector<Eigen::VectorXd> feasible_population() const {
    std::vector<Eigen::VectorXd> out;
    out.reserve(raw_.size());
    for (const auto& x : raw_) out.push_back(bounded_ ? project(x) : x);
    return out;
  }

  // Consumes penalized fitness values for the last sample.
  void update(const std::vector<double>& fitness) {
    if (fitness.size() != raw_.size()) throw std::invalid_argument("cmaes: fitness count mismatch");
    std::vector<std::size_t> order(fitness.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fitness[a] < fitness[b]; });

    Eigen::VectorXd y_w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < mu_; ++i)
      y_w += weights_[static_cast<Eigen::Index>(i)] * steps_[order[i]];
    mean_ += sigma_ * y_w;

    // C^{-1/2} y_w = B D^{-1} B^T y_w
    const Eigen::VectorXd inv_sqrt_yw = basis_ * (basis_.transpose() * y_w).cwiseQuotient(scales_);
    p_sigma_ = (1.0 - c_sigma_) * p_sigma_ +
               std::sqrt(c_sigma_ * (2.0 - c_sigma_) * mu_eff_) * inv_sqrt_yw;
    ++generation_;
    const double ps_norm = p_sigma_.norm();
    const double decay = 1.0 - std::pow(1.0 - c_sigma_, 2.0 * static_cast<double>(generation_));
    const bool h_sigma =
        ps_norm / std::sqrt(decay) < (1.4 + 2.0 / (static_cast<double>(n_) + 1.0)) * chi_n_;
    p_c_ = (1.0 - c_c_) * p_c_ +
           (h_sigma ? std::sqrt(c_c_ * (2.0 - c_c_) * mu_eff_) : 0.0) * y_w;

    Eigen::MatrixXd rank_mu =
        Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < mu_; ++i) {
      const auto& y = steps_[order[i]];
      rank_mu += weights_[static_cast<Eigen::Index>(i)] * y * y.transpose();
    }
    const double hs_corr = h_sigma ? 0.0 : c_c_ * (2.0 - c_c_);
    cov_ = (1.0 - c_1_ - c_mu_) * cov_ + c_1_ * (p_c_ * p_c_.transpose() + hs_corr * cov_) +
           c_mu_ * rank_mu;
    cov_ = 0.5 * (cov_ + cov_.transpose());

    sigma_ *= std::exp((c_sigma_ / d_sigma_) * (ps_norm / chi_n_ - 1.0));
    if (bounded_) {
      // Steps far beyond the box only produce penalized projections.
      const double span = (cfg_.upper - cfg_.lower).maxCoeff();
      sigma_ = std::min(sigma_, 10.0 * span);
    }
    decompose();
  }

  // One generation against objective f.
  template <typename F>
  void step(F&& f) {
    sample();
    const auto pts = feasible_population();
    std::vector<double> fit(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) fit[k] = f(pts[k]) + penalty(k);
    update(fit);
  }

  double penalty(std::size_t k) const {
    if (!bounded_) return 0.0;
    return kBoxPenalty * (raw_[k] - project(raw_[k])).squaredNorm();
  }

  Eigen::VectorXd project(const Eigen::VectorXd& x) const {
    return x.cwiseMax(cfg_.lower).cwiseMin(cfg_.upper);
  }

  std::size_t dims() const { return n_; }
  std::size_t lambda() const { return lambda_; }
  std::size_t mu() const { return mu_; }
  std::size_t generation() const { return generation_; }
  double sigma() const { return sigma_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  const Eigen::VectorXd& path_sigma() const { return p_sigma_; }
  const Eigen::VectorXd& path_c() const { return p_c_; }
  bool bounded() const { return bounded_; }

 private:
  void decompose() {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov_);
    Eigen::VectorXd ev = es.eigenvalues();
    const double max_ev = ev.maxCoeff();
    const double min_ev = ev.minCoeff();
    if (!(min_ev > 0.0) || max_ev / min_ev > kMaxConditionNumber) {
      const double shift = max_ev / kMaxConditionNumber - std::min(min_ev, 0.0);
      cov_ += shift * Eigen::MatrixXd::Identity(cov_.rows(), cov_.cols());
      es.compute(cov_);
      ev = es.eigenvalues();
    }
    basis_ = es.eigenvectors();
    scales_ = ev.cwiseMax(0.0).cwiseSqrt();
  }

  CmaConfig cfg_;
  std::size_t n_;
  CounterRng rng_;
  bool bounded_ = false;
  std::size_t lambda_ = 0;
  std::size_t mu_ = 0;
  Eigen::VectorXd weights_;
  double mu_eff_ = 0.0;
  double c_sigma_ = 0.0, d_sigma_ = 0.0, c_c_ = 0.0, c_1_ = 0.0, c_mu_ = 0.0, chi_n_ = 0.0;

  Eigen::VectorXd mean_;
  double sigma_ = 0.0;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd basis_;
  Eigen::VectorXd scales_;
  Eigen::VectorXd p_sigma_;
  Eigen::VectorXd p_c_;
  std::size_t generation_ = 0;

  std::vector<Eigen::VectorXd> raw_;
  std::vector<Eigen::VectorXd> steps_;
};

// Minimizes f over the configured box starting at x0. Returns the best point
// ever evaluated (x0 included) and the unpenalized objective there.
template <typename F>
CmaResult cma_minimize(F&& f, const Eigen::VectorXd& x0, const CmaConfig& cfg) {
  CmaEs es(x0, cfg);
  CmaResult res;
  res.x_best = es.bounded() ? es.project(x0) : x0;
  res.f_best = f(res.x_best);
  res.evals = 1;
  if (cfg.max_evals == 0) return res;

  std::deque<double> recent;
  while (res.evals + es.lambda() <= cfg.max_evals) {
    es.sample();
    const auto pts = es.feasible_population();
    std::vector<double> fit(pts.size());
    double gen_best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const double v = f(pts[k]);
      ++res.evals;
      if (v < res.f_best) {
        res.f_best = v;
        res.x_best = pts[k];
      }
      gen_best = std::min(gen_best, v);
      fit[k] = v + es.penalty(k);
    }
    es.update(fit);
    ++res.generations;

    recent.push_back(gen_best);
    if (recent.size() > cfg.stall_generations) recent.pop_front();
    if (recent.size() == cfg.stall_generations) {
      const auto [lo, hi] = std::minmax_element(recent.begin(), recent.end());
      if (*hi - *lo < cfg.tol_f) break;
    }
    if (!(es.sigma() > 1e-300) || !std::isfinite(es.sigma())) break;
  }
  return res;
}

}  // namespace devbo
