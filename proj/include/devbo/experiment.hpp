#pragma once

#include "devbo/bo_engine.hpp"
#include "devbo/grasp_bench.hpp"
#include "devbo/memory.hpp"
#include "devbo/metrics.hpp"
#include "devbo/similarity.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace devbo {

inline std::uint64_t label_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Benchmark object as a black box; the noise stream depends only on
// (noise_seed, object label) so paired arms see common random numbers.
inline Objective bench_objective(const bench::SyntheticObject& obj, const bench::BenchConfig& cfg,
                                 std::uint64_t noise_seed) {
  auto rng = std::make_shared<CounterRng>(cfg.seed ^ noise_seed, label_hash(obj.label));
  return [obj, cfg, rng](const EvalRequest& req) { return bench::evaluate(obj, req.params, cfg, *rng); };
}

// Deterministic cloud and D2 feature for a benchmark object.
inline std::pair<PointCloud, ShapeFeature> object_shape(const bench::SyntheticObject& obj,
                                                        std::uint64_t seed) {
  const PointCloud cloud = normalize_cloud(sample_mesh(bench::object_mesh(obj), kDefaultCloudSize, seed));
  D2Config cfg;
  cfg.seed = seed;
  return {cloud, extract_feature(cloud, cfg)};
}

struct CompareOptions {
  BudgetSpec budget;
  double beta = 0.7;
  std::vector<std::uint64_t> seeds;
  std::size_t transfer = 3;
  std::string query_label;          // empty: last object of the family
  std::size_t reference_runs = 0;   // cold runs per reference object; 0 means `transfer`
  std::uint64_t reference_seed = 1000;
  std::filesystem::path store;
  bench::BenchConfig bench;
  GpFitOptions gp;
  SearchBudget search;
  std::function<void(const std::string&)> log;
};

struct ArmResult {
  std::string arm;
  std::vector<RunReport> reports;
  MetricSeries mean_progress;
  GroupStats stats;
};

struct CompareResult {
  ArmResult cold;
  ArmResult warm;
  std::string query_label;
  std::string matched_label;
  double match_distance = 0.0;
  std::vector<ParamVector> transferred;
  std::vector<std::string> warnings;
};

namespace detail {

inline ArmResult summarize_arm(std::string arm, std::vector<RunReport> reports) {
  ArmResult a;
  a.arm = std::move(arm);
  std::vector<MetricSeries> series;
  for (const auto& r : reports) series.push_back(run_progress(r));
  a.mean_progress = aggregate_mean(series);
  std::vector<RunReport> relabeled = reports;
  for (auto& r : relabeled) r.object_label = a.arm;
  auto stats = final_stats(relabeled);
  if (!stats.empty()) a.stats = stats.front();
  a.reports = std::move(reports);
  return a;
}

}  // namespace detail

// Cold-start vs warm-start comparison on one query object of a family. The
// other objects are references: they are added to semantic memory and
// optimized cold to fill procedural memory before the query runs.
inline CompareResult compare_experiment(const bench::BenchFamily& family, const CompareOptions& opt) {
  if (family.objects.size() < 2) throw std::invalid_argument("compare: family needs at least 2 objects");
  if (opt.seeds.empty()) throw std::invalid_argument("compare: no seeds");
  auto log = [&](const std::string& m) {
    if (opt.log) opt.log(m);
  };
  const ParamSpace space = ParamSpace::uniform(family.objects.front().dims());
  const std::string query_label = opt.query_label.empty() ? family.objects.back().label : opt.query_label;
  const bench::SyntheticObject& query = family.find(query_label);
  const std::size_t ref_runs = opt.reference_runs ? opt.reference_runs : opt.transfer;

  MemoryStore store(opt.store);
  CompareResult result;
  result.query_label = query_label;

  auto base_options = [&](std::string run_id, const std::string& label, std::uint64_t seed) {
    RunOptions ro;
    ro.run_id = std::move(run_id);
    ro.object_label = label;
    ro.budget = opt.budget;
    ro.beta = opt.beta;
    ro.seed = seed;
    ro.memory = &store;
    ro.gp = opt.gp;
    ro.search = opt.search;
    return ro;
  };

  // References: semantic memory plus cold runs for procedural memory.
  for (const auto& obj : family.objects) {
    if (obj.label == query_label) continue;
    if (!store.find_object(obj.label)) {
      const auto [cloud, feature] = object_shape(obj, family.seed ^ label_hash(obj.label));
      store.add_object(obj.label, cloud, feature);
    }
    for (std::size_t r = 0; r < ref_runs; ++r) {
      const std::string run_id = "ref:" + obj.label + ":" + std::to_string(r);
      if (!store.episodes_for_run(run_id).empty()) continue;
      log("reference run " + run_id);
      const std::uint64_t seed = opt.reference_seed + r;
      run_optimization(bench_objective(obj, opt.bench, seed), space, base_options(run_id, obj.label, seed));
    }
  }

  // Retrieval for the query from a fresh sampling of its mesh.
  const auto query_shape = object_shape(query, ~(family.seed ^ label_hash(query.label)));
  std::vector<LabeledFeature> known;
  for (auto& f : store.features(FeatureKind::D2))
    if (f.label != query_label) known.push_back(std::move(f));
  const auto matches = most_similar(query_shape.second, known, 1);
  if (!matches.empty()) {
    result.matched_label = matches.front().label;
    result.match_distance = matches.front().distance;
    result.transferred = store.strategies_for(result.matched_label, opt.transfer);
  }
  if (result.transferred.empty())
    result.warnings.push_back("no stored strategies for a similar object; warm arm runs cold");
  log("query " + query_label + " matched " + result.matched_label + " (" +
      std::to_string(result.transferred.size()) + " strategies)");

  std::vector<RunReport> cold, warm;
  for (const std::uint64_t seed : opt.seeds) {
    const std::string tag = query_label + ":" + std::to_string(seed);
    log("cold run " + tag);
    cold.push_back(run_optimization(bench_objective(query, opt.bench, seed), space,
                                    base_options("cold:" + tag, query_label, seed)));
    log("warm run " + tag);
    RunOptions wo = base_options("warm:" + tag, query_label, seed);
    wo.transfer = result.transferred;
    warm.push_back(run_optimization(bench_objective(query, opt.bench, seed), space, wo));
  }
  result.cold = detail::summarize_arm("cold", std::move(cold));
  result.warm = detail::summarize_arm("warm", std::move(warm));
  return result;
}

inline constexpr const char* kCompareCsvHeader =
    "row,arm,phase,iteration,value,smoothed,runs,all_mean,all_sd,all_median,best_mean,best_sd,best_median,note";

// One row per arm and init/infill iteration, then one summary row per arm
// and one row per warning.
inline void write_compare_csv(const CompareResult& res, const BudgetSpec& budget, std::ostream& out,
                              bool smooth = false) {
  out << "# devbo compare schema v1\n" << kCompareCsvHeader << '\n';
  char buf[512];
  for (const ArmResult* arm : {&res.cold, &res.warm}) {
    const auto& v = arm->mean_progress.values;
    std::vector<double> sm;
    if (smooth) {
      const std::vector<double> init(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(budget.init));
      const std::vector<double> infill(v.begin() + static_cast<std::ptrdiff_t>(budget.init), v.end());
      sm = moving_average(init);
      const auto s2 = moving_average(infill);
      sm.insert(sm.end(), s2.begin(), s2.end());
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      const bool in_init = i < budget.init;
      const std::size_t it = in_init ? i + 1 : i + 1 - budget.init;
      if (smooth)
        std::snprintf(buf, sizeof buf, "iter,%s,%s,%zu,%.10g,%.10g,,,,,,,,", arm->arm.c_str(),
                      in_init ? "init" : "infill", it, v[i], sm[i]);
      else
        std::snprintf(buf, sizeof buf, "iter,%s,%s,%zu,%.10g,,,,,,,,,", arm->arm.c_str(),
                      in_init ? "init" : "infill", it, v[i]);
      out << buf << '\n';
    }
  }
  for (const ArmResult* arm : {&res.cold, &res.warm}) {
    const auto& s = arm->stats;
    std::snprintf(buf, sizeof buf, "summary,%s,final,,,,%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%s",
                  arm->arm.c_str(), s.runs, s.all.mean, s.all.sd, s.all.median, s.best.mean, s.best.sd,
                  s.best.median, s.best_run_id.c_str());
    out << buf << '\n';
  }
  for (const auto& w : res.warnings) out << "warning,,,,,,,,,,,,," << '"' << w << '"' << '\n';
}

}  // namespace devbo
