#pragma once

#include "devbo/gp.hpp"
#include "devbo/normal.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

// Expected Quantile Improvement, in the minimization orientation used by the
// surrogate (targets are negated scores).
namespace devbo {

struct EqiConfig {
  double beta = 0.7;
  double future_noise = 0.0;  // tau_new^2

  void check() const {
    if (!(beta > 0.5 && beta < 1.0)) throw std::invalid_argument("eqi: beta must lie in (0.5, 1)");
    if (!(future_noise >= 0.0)) throw std::invalid_argument("eqi: future noise must be >= 0");
  }
};

inline double quantile_value(const GpPrediction& p, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("quantile: beta outside (0,1)");
  return p.mean + normal::inverse_cdf(beta) * p.sd;
}

inline double quantile_surface(const GpModel& m, const Eigen::Ref<const Eigen::VectorXd>& x,
                               double beta) {
  return quantile_value(m.predict(x), beta);
}

// Lowest beta-quantile over the evaluated designs (rows of `evaluated`).
inline double incumbent_qmin(const GpModel& m, const Eigen::MatrixXd& evaluated, double beta) {
  if (evaluated.rows() == 0) throw std::invalid_argument("incumbent_qmin: no evaluated points");
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < evaluated.rows(); ++i)
    best = std::min(best, quantile_surface(m, evaluated.row(i).transpose(), beta));
  return best;
}

// Mean and sd of the quantile after one more observation at x with noise
// variance tau_new^2.
struct QuantileForecast {
  double mean;
  double sd;
};

inline QuantileForecast quantile_forecast(const GpPrediction& p, const EqiConfig& cfg) {
  const double s2 = p.sd * p.sd;
  const double t2 = cfg.future_noise;
  if (!(s2 > 0.0)) return {p.mean, 0.0};
  const double post_var = (t2 > 0.0) ? t2 * s2 / (t2 + s2) : 0.0;
  return {p.mean + normal::inverse_cdf(cfg.beta) * std::sqrt(post_var), s2 / std::sqrt(s2 + t2)};
}

inline double eqi_from_forecast(const QuantileForecast& f, double q_min) {
  const double gap = q_min - f.mean;
  if (!(f.sd > 0.0)) return std::max(0.0, gap);
  const double z = gap / f.sd;
  const double v = gap * normal::cdf(z) + f.sd * normal::pdf(z);
  return std::max(0.0, v);
}

inline double eqi(const GpPrediction& p, double q_min, const EqiConfig& cfg) {
  return eqi_from_forecast(quantile_forecast(p, cfg), q_min);
}

inline double eqi(const GpModel& m, const Eigen::Ref<const Eigen::VectorXd>& x, double q_min,
                  const EqiConfig& cfg) {
  return eqi(m.predict(x), q_min, cfg);
}

}  // namespace devbo
