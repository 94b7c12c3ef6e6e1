#include "devbo/gp.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace devbo;

namespace {

struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  KernelParams k;
};

Dataset random_dataset(std::uint64_t seed) {
  CounterRng rng(seed, 3);
  const auto n = static_cast<Eigen::Index>(2 + rng.below(19));
  const auto d = static_cast<Eigen::Index>(1 + rng.below(9));
  Dataset ds;
  ds.X.resize(n, d);
  ds.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) ds.X(i, j) = rng.uniform();
    ds.y[i] = rng.uniform(-100.0, 0.0);
  }
  ds.k.signal_variance = rng.uniform(10.0, 1000.0);
  ds.k.length_scales.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) ds.k.length_scales[j] = rng.uniform(0.1, 2.0);
  ds.k.nugget = rng.uniform(1e-3, 10.0);
  return ds;
}

oracle::Matrix rows(const Eigen::MatrixXd& X) {
  oracle::Matrix out;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    out.emplace_back();
    for (Eigen::Index j = 0; j < X.cols(); ++j) out.back().push_back(X(i, j));
  }
  return out;
}

std::vector<double> vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST(Matern32, DistanceZeroAndOne) {
  KernelParams k{1.0, Eigen::VectorXd::Ones(1), 0.0};
  Eigen::VectorXd a(1), b(1);
  a << 0.0;
  b << 1.0;
  EXPECT_DOUBLE_EQ(matern32(a, a, k), 1.0);
  EXPECT_NEAR(matern32(a, b, k), (1.0 + std::sqrt(3.0)) * std::exp(-std::sqrt(3.0)), 1e-15);
  EXPECT_NEAR(matern32(a, b, k), 0.4833577245965077, 1e-15);
}

TEST(Matern32, SymmetricAndBounded) {
  CounterRng rng(5);
  KernelParams k{7.0, Eigen::VectorXd::Constant(4, 0.3), 0.0};
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd a(4), b(4);
    for (int j = 0; j < 4; ++j) a[j] = rng.uniform(), b[j] = rng.uniform();
    EXPECT_EQ(matern32(a, b, k), matern32(b, a, k));
    EXPECT_LE(matern32(a, b, k), 7.0);
    EXPECT_GT(matern32(a, b, k), 0.0);
  }
  k.length_scales[0] = -1.0;
  EXPECT_THROW(matern32(Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4), k), std::invalid_argument);
}

TEST(GpModel, MatchesDenseOracle) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Dataset ds = random_dataset(seed);
    const GpModel m = GpModel::condition(ds.X, ds.y, ds.k);
    const oracle::DenseGp ref(rows(ds.X), vec(ds.y), ds.k.signal_variance, vec(ds.k.length_scales), ds.k.nugget);
    const double scale = std::max(1.0, std::abs(ref.log_likelihood()));
    EXPECT_NEAR(m.log_marginal_likelihood(), ref.log_likelihood(), 1e-8 * scale) << "seed " << seed;
    EXPECT_NEAR(m.mean(), ref.mu, 1e-8 * std::max(1.0, std::abs(ref.mu)));
    CounterRng rng(seed, 9);
    for (int q = 0; q < 5; ++q) {
      Eigen::VectorXd x(ds.X.cols());
      for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = rng.uniform();
      const GpPrediction p = m.predict(x);
      const auto [mean, sd] = ref.predict(vec(x));
      EXPECT_NEAR(p.mean, mean, 1e-8 * std::max(1.0, std::abs(mean))) << "seed " << seed;
      EXPECT_NEAR(p.sd, sd, 1e-8 * std::max(1.0, sd)) << "seed " << seed;
    }
  }
}

TEST(GpModel, SmallNuggetInterpolates) {
  Eigen::MatrixXd X(2, 1);
  X << 0.0, 1.0;
  Eigen::VectorXd y(2);
  y << 0.0, 1.0;
  const GpModel m = GpModel::condition(X, y, {1.0, Eigen::VectorXd::Constant(1, 0.5), 1e-10});
  EXPECT_NEAR(m.predict(Eigen::VectorXd::Constant(1, 0.0)).mean, 0.0, 1e-6);
  EXPECT_NEAR(m.predict(Eigen::VectorXd::Constant(1, 1.0)).mean, 1.0, 1e-6);
  EXPECT_LT(m.predict(Eigen::VectorXd::Constant(1, 1.0)).sd, 1e-4);
}

TEST(GpModel, RevertsToPriorFarAway) {
  const Dataset ds = random_dataset(11);
  KernelParams k = ds.k;
  k.length_scales.setConstant(0.01);
  const GpModel m = GpModel::condition(ds.X, ds.y, k);
  const GpPrediction p = m.predict(Eigen::VectorXd::Constant(ds.X.cols(), 5.0));
  EXPECT_NEAR(p.mean, m.mean(), 1e-3);
  EXPECT_NEAR(p.sd, std::sqrt(k.signal_variance), 1e-3);
}

TEST(GpModel, CholeskyReconstructsCovariance) {
  const Dataset ds = random_dataset(21);
  const GpModel m = GpModel::condition(ds.X, ds.y, ds.k);
  const Eigen::MatrixXd L = m.cholesky_factor();
  EXPECT_LT((L * L.transpose() - m.covariance_matrix()).norm(), 1e-9 * m.covariance_matrix().norm());
}

TEST(GpModel, SingularCovarianceListsDuplicates) {
  Eigen::MatrixXd X(3, 2);
  X << 0.1, 0.2, 0.5, 0.5, 0.1, 0.2;
  Eigen::VectorXd y(3);
  y << 1.0, 2.0, 3.0;
  try {
    GpModel::condition(X, y, {1.0, Eigen::VectorXd::Constant(2, 0.5), 0.0});
    FAIL() << "expected GpError";
  } catch (const GpError& e) {
    EXPECT_NE(std::string(e.what()).find("(0,2)"), std::string::npos) << e.what();
  }
}

TEST(GpModel, FitWithDuplicatesUsesNuggetFloor) {
  Eigen::MatrixXd X(4, 2);
  X << 0.1, 0.2, 0.1, 0.2, 0.7, 0.3, 0.4, 0.9;
  Eigen::VectorXd y(4);
  y << -10.0, -30.0, -50.0, -20.0;
  GpFitOptions opt;
  opt.evals_per_param = 50;
  const GpModel m = GpModel::fit(X, y, opt);
  double var = (y.array() - y.mean()).square().sum() / 3.0;
  EXPECT_GE(m.kernel().nugget, 1e-8 * var);
}

TEST(GpModel, FitStaysInBoxAndBeatsDefaults) {
  const Dataset ds = random_dataset(3);
  const GpModel m = GpModel::fit(ds.X, ds.y);
  const auto& k = m.kernel();
  EXPECT_TRUE((k.length_scales.array() >= 1e-2 * (1 - 1e-12)).all());
  EXPECT_TRUE((k.length_scales.array() <= 10.0 * (1 + 1e-12)).all());
  KernelParams plain{(ds.y.array() - ds.y.mean()).square().mean(), Eigen::VectorXd::Constant(ds.X.cols(), 0.5), 1.0};
  EXPECT_GE(m.log_marginal_likelihood(), GpModel::condition(ds.X, ds.y, plain).log_marginal_likelihood());
  // the refit is a pure function of its seed
  EXPECT_EQ(GpModel::fit(ds.X, ds.y).log_marginal_likelihood(), m.log_marginal_likelihood());
}

TEST(GpModel, ConstantTargetsFit) {
  Eigen::MatrixXd X(3, 1);
  X << 0.1, 0.5, 0.9;
  const GpModel m = GpModel::fit(X, Eigen::VectorXd::Constant(3, -40.0));
  EXPECT_NEAR(m.predict(Eigen::VectorXd::Constant(1, 0.3)).mean, -40.0, 1e-6);
}

TEST(GpModel, RejectsBadData) {
  EXPECT_THROW(GpModel::fit(Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Zero(1)), std::invalid_argument);
  EXPECT_THROW(GpModel::fit(Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(2)), std::invalid_argument);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(3);
  y[1] = std::nan("");
  EXPECT_THROW(GpModel::fit(Eigen::MatrixXd::Random(3, 2), y), std::invalid_argument);
}
