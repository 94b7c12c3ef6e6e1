#include "devbo/metrics.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace devbo;

TEST(RunningMaxQ3, HandExample) {
  const std::vector<double> s{0, 40, 80, 60};
  EXPECT_EQ(running_max_q3(s).values, (std::vector<double>{0, 30, 60, 65}));
}

TEST(RunningMaxQ3, ConstantAndReset) {
  const std::vector<double> c{50, 50, 50};
  EXPECT_EQ(running_max_q3(c).values, c);
  const std::vector<double> s{10, 90, 20};
  const std::size_t lens[] = {2, 1};
  const MetricSeries m = running_max_q3(s, lens);
  EXPECT_EQ(m.values[2], 20.0);
  EXPECT_EQ(m.segment_starts, (std::vector<std::size_t>{0, 2}));
  const std::size_t wrong[] = {1, 1};
  EXPECT_THROW(running_max_q3(s, wrong), std::invalid_argument);
  EXPECT_TRUE(running_max_q3(std::vector<double>{}).values.empty());
}

TEST(RunningMaxQ3, MatchesOracleExactly) {
  CounterRng rng(1);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> s(1 + rng.below(80));
    for (double& v : s) v = 100.0 * static_cast<double>(rng.below(16)) / 15.0;
    const auto got = running_max_q3(s).values;
    const auto want = oracle::running_max_q3(s);
    ASSERT_EQ(got, want);
    for (std::size_t i = 1; i < got.size(); ++i) ASSERT_GE(got[i], got[i - 1]);
  }
}

TEST(AggregateMean, Pointwise) {
  const MetricSeries a{{0, 100}, {0}}, b{{100, 0}, {0}};
  EXPECT_EQ(aggregate_mean({a, b}).values, (std::vector<double>{50, 50}));
  EXPECT_EQ(aggregate_mean({a, a}), a);
  EXPECT_THROW(aggregate_mean({a, MetricSeries{{1}, {0}}}), std::invalid_argument);
}

TEST(MovingAverage, ShrinksAtEdges) {
  EXPECT_EQ(moving_average({1, 2, 3, 4, 5}, 3), (std::vector<double>{1.5, 2, 3, 4, 4.5}));
  EXPECT_THROW(moving_average({1}, 0), std::invalid_argument);
}

namespace {

RunReport report(const std::string& label, const std::string& id, std::vector<double> finals) {
  RunReport r;
  r.run_id = id;
  r.object_label = label;
  r.final_scores = std::move(finals);
  return r;
}

}  // namespace

TEST(FinalStats, SingleRun) {
  const auto g = final_stats({report("A", "r", {80, 80, 80})});
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0].all.mean, 80.0);
  EXPECT_EQ(g[0].all.sd, 0.0);
  EXPECT_EQ(g[0].all.median, 80.0);
}

TEST(FinalStats, BestRunAndPooled) {
  const auto g = final_stats({report("A", "low", {60, 80}), report("A", "high", {100, 80}), report("B", "b", {10})});
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].label, "A");
  EXPECT_EQ(g[0].runs, 2u);
  EXPECT_EQ(g[0].best_run_id, "high");
  EXPECT_EQ(g[0].best.mean, 90.0);
  EXPECT_NEAR(g[0].best.sd, std::sqrt(200.0), 1e-12);
  EXPECT_EQ(g[0].all.mean, 80.0);
  EXPECT_NEAR(g[0].all.sd, std::sqrt(800.0 / 3.0), 1e-12);
  EXPECT_EQ(g[0].all.median, 80.0);
}

TEST(FinalStats, MatchesOracle) {
  CounterRng rng(4);
  std::vector<double> pooled;
  std::vector<RunReport> reps;
  for (int r = 0; r < 6; ++r) {
    std::vector<double> f;
    for (int i = 0; i < 12; ++i) f.push_back(100.0 * static_cast<double>(rng.below(16)) / 15.0);
    pooled.insert(pooled.end(), f.begin(), f.end());
    reps.push_back(report("A", "r" + std::to_string(r), f));
  }
  long double sum = 0;
  for (double v : pooled) sum += v;
  const double mean = static_cast<double>(sum / pooled.size());
  long double ss = 0;
  for (double v : pooled) ss += (v - mean) * (v - mean);
  std::sort(pooled.begin(), pooled.end());
  const auto g = final_stats(reps)[0];
  EXPECT_NEAR(g.all.mean, mean, 1e-12);
  EXPECT_NEAR(g.all.sd, std::sqrt(static_cast<double>(ss / (pooled.size() - 1))), 1e-12);
  EXPECT_NEAR(g.all.median, 0.5 * (pooled[35] + pooled[36]), 1e-12);
}
