#include "devbo/bo_engine.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace devbo;

namespace {

// Smooth deterministic objective peaking at 0.3 in every coordinate.
double peak(const EvalRequest& r) {
  const double d2 = (r.params.eigen().array() - 0.3).square().sum();
  return 100.0 * std::exp(-4.0 * d2);
}

RunOptions small(std::uint64_t seed) {
  RunOptions o;
  o.budget = {6, 8, 3};
  o.seed = seed;
  o.lhs_restarts = 10;
  o.gp.evals_per_param = 40;
  o.search.evals_per_restart = 300;
  o.clock = [] { return 0.0; };
  return o;
}

std::filesystem::path temp_store(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("devbo_bo_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(BudgetSpec, ParseAndCheck) {
  const BudgetSpec b = BudgetSpec::parse("18,50,12");
  EXPECT_EQ(b, (BudgetSpec{18, 50, 12}));
  EXPECT_EQ(b.total(), 80u);
  EXPECT_THROW(BudgetSpec::parse("18,50"), std::invalid_argument);
  EXPECT_THROW(BudgetSpec::parse("1,50,12"), std::invalid_argument);
  EXPECT_THROW(BudgetSpec::parse("18,50,0"), std::invalid_argument);
  EXPECT_THROW(BudgetSpec::parse("18,50,12x"), std::invalid_argument);
}

TEST(RunOptimization, PhasesAndIterationNumbers) {
  const RunReport r = run_optimization(peak, ParamSpace::uniform(2), small(1));
  ASSERT_EQ(r.history.size(), 17u);
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    EXPECT_EQ(r.history[i].iteration, i + 1);
    const Phase want = i < 6 ? Phase::Init : i < 14 ? Phase::Infill : Phase::Final;
    EXPECT_EQ(r.history[i].phase, want);
    EXPECT_TRUE(ParamSpace::uniform(2).validate(r.history[i].params).empty());
  }
  EXPECT_EQ(r.final_scores.size(), 3u);
  for (std::size_t i = 14; i < 17; ++i) EXPECT_EQ(r.history[i].params, r.best_params);
  EXPECT_EQ(r.wall_times.size(), 17u);
  EXPECT_FALSE(r.aborted);
}

TEST(RunOptimization, FindsSmoothPeak) {
  RunOptions o = small(2);
  o.budget = {8, 15, 1};
  const RunReport r = run_optimization(peak, ParamSpace::uniform(2), o);
  EXPECT_GT(r.final_scores.front(), 95.0);
}

TEST(RunOptimization, BitwiseDeterministic) {
  const RunReport a = run_optimization(peak, ParamSpace::uniform(3), small(9));
  const RunReport b = run_optimization(peak, ParamSpace::uniform(3), small(9));
  EXPECT_TRUE(a == b);
  const RunReport c = run_optimization(peak, ParamSpace::uniform(3), small(10));
  EXPECT_FALSE(a == c);
}

TEST(RunOptimization, TransferredPointsAreEvaluatedLastInInit) {
  RunOptions o = small(3);
  o.transfer = {ParamVector({0.3, 0.3}), ParamVector({0.31, 0.29})};
  const RunReport r = run_optimization(peak, ParamSpace::uniform(2), o);
  EXPECT_EQ(r.history[3].source, Source::Lhs);
  EXPECT_EQ(r.history[4].source, Source::Transferred);
  EXPECT_EQ(r.history[5].source, Source::Transferred);
  EXPECT_EQ(r.history[4].params, o.transfer[0]);
  EXPECT_EQ(r.history[6].source, Source::Acquisition);
}

TEST(RunOptimization, RejectsOversizedTransfer) {
  RunOptions o = small(3);
  o.transfer.assign(7, ParamVector({0.5, 0.5}));
  EXPECT_THROW(run_optimization(peak, ParamSpace::uniform(2), o), std::invalid_argument);
  o.transfer.assign(1, ParamVector({0.5}));
  EXPECT_THROW(run_optimization(peak, ParamSpace::uniform(2), o), std::invalid_argument);
}

TEST(RunOptimization, ObjectiveReceivesNaturalCoordinates) {
  const ParamSpace space({"speed", "depth"}, {10.0, -1.0}, {20.0, 1.0});
  bool ok = true;
  run_optimization([&](const EvalRequest& r) {
    const auto expect = space.to_natural(r.params);
    ok = ok && r.params_natural == expect;
    return 50.0;
  }, space, small(4));
  EXPECT_TRUE(ok);
}

TEST(RunOptimization, PersistsEveryEvaluation) {
  const auto root = temp_store("persist");
  {
    MemoryStore store(root);
    store.set_clock([] { return std::string("2020-01-01T00:00:00Z"); });
    RunOptions o = small(5);
    o.run_id = "r1";
    o.object_label = "cup";
    o.memory = &store;
    run_optimization(peak, ParamSpace::uniform(2), o);
  }
  MemoryStore reopened(root, MemoryStore::Mode::ReadOnly);
  EXPECT_EQ(reopened.episodes_for_run("r1").size(), 17u);
  ASSERT_EQ(reopened.strategies_ranked("cup").size(), 1u);
  EXPECT_EQ(reopened.strategies_ranked("cup").front().final_scores.size(), 3u);
  std::filesystem::remove_all(root);
}

TEST(RunOptimization, ObjectiveFailureAbortsAndIsRecorded) {
  const auto root = temp_store("abort");
  MemoryStore store(root);
  RunOptions o = small(6);
  o.run_id = "bad";
  o.memory = &store;
  int calls = 0;
  auto flaky = [&](const EvalRequest&) -> double {
    if (++calls == 9) throw std::runtime_error("robot offline");
    return 40.0;
  };
  try {
    run_optimization(flaky, ParamSpace::uniform(2), o);
    FAIL() << "expected RunAborted";
  } catch (const RunAborted& e) {
    EXPECT_TRUE(e.partial().aborted);
    EXPECT_EQ(e.partial().history.size(), 8u);
    EXPECT_NE(e.partial().abort_reason.find("robot offline"), std::string::npos);
  }
  EXPECT_EQ(store.episodes_for_run("bad").size(), 8u);
  ASSERT_EQ(store.aborts().size(), 1u);
  EXPECT_TRUE(store.strategies().empty());

  calls = 0;
  o.run_id = "range";
  EXPECT_THROW(run_optimization([](const EvalRequest&) { return 120.0; }, ParamSpace::uniform(2), o), RunAborted);
  std::filesystem::remove_all(root);
}

TEST(ProposeNext, StaysInCubeAndDeterministic) {
  Eigen::MatrixXd X(6, 3);
  Eigen::VectorXd y(6);
  CounterRng rng(2);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 3; ++j) X(i, j) = rng.uniform();
    y[i] = -rng.uniform(0.0, 100.0);
  }
  const GpModel m = GpModel::condition(X, y, {400.0, Eigen::VectorXd::Constant(3, 0.4), 50.0});
  const EqiConfig cfg{0.7, 50.0};
  const ParamVector a = propose_next(m, X, cfg, 11);
  EXPECT_TRUE(ParamSpace::uniform(3).validate(a).empty());
  EXPECT_EQ(a, propose_next(m, X, cfg, 11));
  // no evaluated point has a larger criterion value than the proposal
  const double q_min = incumbent_qmin(m, X, cfg.beta);
  for (int i = 0; i < 6; ++i) EXPECT_GE(eqi(m, a.eigen(), q_min, cfg), eqi(m, X.row(i).transpose(), q_min, cfg));
}

TEST(BestPredicted, NoWorseThanBestEvaluatedMean) {
  Eigen::MatrixXd X(5, 2);
  X << 0.1, 0.1, 0.9, 0.2, 0.5, 0.5, 0.3, 0.8, 0.7, 0.7;
  Eigen::VectorXd y(5);
  y << -10, -20, -70, -30, -40;
  const GpModel m = GpModel::condition(X, y, {900.0, Eigen::VectorXd::Constant(2, 0.3), 1.0});
  const ParamVector b = best_predicted(m, X, 1);
  double best = 0.0;
  for (int i = 0; i < 5; ++i) best = std::min(best, m.predict(X.row(i).transpose()).mean);
  EXPECT_LE(m.predict(b.eigen()).mean, best);
}
