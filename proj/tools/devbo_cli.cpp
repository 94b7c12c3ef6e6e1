#include "devbo/experiment.hpp"
#include "devbo/remote.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

using namespace devbo;
namespace fs = std::filesystem;

namespace {

// Writes to --out when given, stdout otherwise.
void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  std::ofstream f(out);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + out);
}

nlohmann::json vec_json(const ParamVector& p) { return p.coords(); }

std::string history_csv(const RunReport& r, const ParamSpace& space) {
  std::ostringstream out;
  out << "# devbo run schema v1\niteration,phase,source,score";
  for (const auto& n : space.names()) out << ',' << n;
  out << '\n';
  char buf[64];
  for (const auto& o : r.history) {
    out << o.iteration << ',' << to_string(o.phase) << ',' << to_string(o.source) << ',';
    std::snprintf(buf, sizeof buf, "%.10g", o.score);
    out << buf;
    for (double v : space.to_natural(o.params)) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

nlohmann::json report_json(const RunReport& r, const ParamSpace& space) {
  const auto progress = run_progress(r);
  return {{"run_id", r.run_id},
          {"object", r.object_label},
          {"seed", r.seed},
          {"budget", {r.budget.init, r.budget.infill, r.budget.final_evals}},
          {"best_params_unit", vec_json(r.best_params)},
          {"best_params_natural", r.best_params.size() ? space.to_natural(r.best_params) : std::vector<double>{}},
          {"final_scores", r.final_scores},
          {"final_mean", mean_of(r.final_scores)},
          {"final_median", median_of(r.final_scores)},
          {"running_max_q3", progress.values},
          {"aborted", r.aborted},
          {"abort_reason", r.abort_reason}};
}

ShapeFeature query_feature(const std::string& mesh_path, const std::string& embedding_path, std::uint64_t seed) {
  if (!embedding_path.empty()) return load_embedding(embedding_path);
  return mesh_feature(load_obj(mesh_path), seed);
}

// --- optimize -------------------------------------------------------------

struct OptimizeArgs {
  std::string space, budget = "18,50,12", object, family, store, remote, out, run_id, query;
  double beta = 0.7;
  std::uint64_t seed = 0;
  std::size_t transfer = 0;
  int timeout_sec = 600;
};

int run_optimize(const OptimizeArgs& a) {
  std::optional<bench::BenchFamily> family;
  if (!a.family.empty()) family = bench::load_family(a.family);
  if (a.remote.empty() && !family) throw std::invalid_argument("optimize: need --family (benchmark) or --remote");
  if (a.object.empty()) throw std::invalid_argument("optimize: --object is required");

  ParamSpace space = !a.space.empty() ? ParamSpace::load(a.space)
                     : family        ? ParamSpace::uniform(family->find(a.object).dims())
                                     : throw std::invalid_argument("optimize: --space is required with --remote");

  std::optional<MemoryStore> store;
  if (!a.store.empty()) store.emplace(a.store);

  RunOptions ro;
  ro.run_id = a.run_id.empty() ? a.object + ":" + std::to_string(a.seed) : a.run_id;
  ro.object_label = a.object;
  ro.budget = BudgetSpec::parse(a.budget);
  ro.beta = a.beta;
  ro.seed = a.seed;
  ro.memory = store ? &*store : nullptr;

  nlohmann::json retrieval = nullptr;
  if (a.transfer > 0) {
    if (!store) throw std::invalid_argument("optimize: --transfer needs --store");
    std::optional<ShapeFeature> feature;
    if (!a.query.empty()) feature = query_feature(a.query, "", a.seed);
    else if (family) feature = object_shape(family->find(a.object), label_hash(a.object)).second;
    else throw std::invalid_argument("optimize: --transfer with --remote needs --query mesh.obj");
    std::vector<LabeledFeature> known;
    for (auto& f : store->features(feature->kind))
      if (f.label != a.object) known.push_back(std::move(f));
    const auto match = most_similar(*feature, known, 1);
    if (!match.empty()) {
      ro.transfer = store->strategies_for(match.front().label, a.transfer);
      retrieval = {{"matched", match.front().label}, {"distance", match.front().distance},
                   {"transferred", ro.transfer.size()}};
    }
    if (ro.transfer.empty()) std::cerr << "devbo: no stored strategies for a similar object; cold start\n";
  }
  if (store && family && !store->find_object(a.object)) {
    const auto [cloud, feature] = object_shape(family->find(a.object), label_hash(a.object));
    store->add_object(a.object, cloud, feature);
  }

  Objective objective;
  if (!a.remote.empty())
    objective = remote::RemoteObjective(a.remote, std::chrono::seconds(a.timeout_sec));
  else
    objective = bench_objective(family->find(a.object), {}, a.seed);

  const RunReport r = run_optimization(objective, space, ro);
  nlohmann::json j = report_json(r, space);
  j["retrieval"] = retrieval;
  if (a.out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    fs::create_directories(a.out);
    emit((fs::path(a.out) / "report.json").string(), j.dump(2) + "\n");
    emit((fs::path(a.out) / "history.csv").string(), history_csv(r, space));
  }
  return 0;
}

// --- bench ----------------------------------------------------------------

struct FamilyArgs {
  std::uint64_t seed = 0;
  std::size_t count = 3;
  double delta = 0.05;
  std::string prefix = "obj", out;
  double width_min = 0.05, width_max = 0.5;
};

int run_make_family(const FamilyArgs& a) {
  if (a.out.empty()) throw std::invalid_argument("bench make-family: --out DIR is required");
  bench::FamilyOptions fo;
  fo.width_min = a.width_min;
  fo.width_max = a.width_max;
  bench::BenchFamily fam{bench::make_family(a.seed, a.count, a.delta, a.prefix, fo), a.seed, a.delta};
  bench::save_family(fam, a.out);
  std::cout << "wrote " << fam.objects.size() << " objects to " << a.out << '\n';
  return 0;
}

// --- similar --------------------------------------------------------------

struct SimilarArgs {
  std::string query, embedding, store, out;
  std::size_t k = 5;
  std::uint64_t seed = 0;
};

int run_similar(const SimilarArgs& a) {
  if (a.query.empty() == a.embedding.empty())
    throw std::invalid_argument("similar: give exactly one of --query mesh.obj or --embedding file.json");
  const MemoryStore store(a.store, MemoryStore::Mode::ReadOnly);
  const ShapeFeature f = query_feature(a.query, a.embedding, a.seed);
  std::ostringstream csv;
  csv << "# devbo similar schema v1\nrank,label,distance\n";
  std::size_t rank = 0;
  char buf[64];
  for (const auto& m : most_similar(f, store.features(f.kind), a.k)) {
    std::snprintf(buf, sizeof buf, "%.10g", m.distance);
    csv << ++rank << ',' << m.label << ',' << buf << '\n';
  }
  emit(a.out, csv.str());
  return 0;
}

// --- memory ---------------------------------------------------------------

struct MemoryArgs {
  std::string store, out, run, object;
};

int run_memory_ls(const MemoryArgs& a) {
  const MemoryStore store(a.store, MemoryStore::Mode::ReadOnly);
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& id : store.run_ids()) {
    const auto eps = store.episodes_for_run(id);
    runs.push_back({{"run_id", id}, {"object", eps.front().object_label}, {"episodes", eps.size()}});
  }
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : store.objects()) objects.push_back({{"label", o.object_label}, {"feature", to_string(o.feature.kind)}});
  nlohmann::json strategies = nlohmann::json::array();
  for (const auto& s : store.strategies())
    strategies.push_back({{"run_id", s.run_id}, {"object", s.object_label}, {"final_median", s.final_median},
                          {"final_mean", s.final_mean}});
  nlohmann::json aborts = nlohmann::json::array();
  for (const auto& ab : store.aborts()) aborts.push_back({{"run_id", ab.run_id}, {"reason", ab.reason}});
  const nlohmann::json j{{"runs", runs}, {"objects", objects}, {"strategies", strategies}, {"aborts", aborts}};
  emit(a.out, j.dump(2) + "\n");
  return 0;
}

int run_memory_show(const MemoryArgs& a) {
  if (a.run.empty() == a.object.empty()) throw std::invalid_argument("memory show: give exactly one of --run or --object");
  const MemoryStore store(a.store, MemoryStore::Mode::ReadOnly);
  nlohmann::json j;
  if (!a.run.empty()) {
    const auto eps = store.episodes_for_run(a.run);
    if (eps.empty()) throw std::invalid_argument("memory show: no run '" + a.run + "'");
    j = nlohmann::json::array();
    for (const auto& e : eps) j.push_back(detail::to_json(e));
  } else {
    const auto* obj = store.find_object(a.object);
    j = {{"object", a.object}, {"known_shape", obj != nullptr}, {"strategies", nlohmann::json::array()}};
    if (obj) j["feature"] = to_string(obj->feature.kind);
    for (const auto& s : store.strategies_ranked(a.object)) j["strategies"].push_back(detail::to_json(s));
  }
  emit(a.out, j.dump(2) + "\n");
  return 0;
}

// --- compare --------------------------------------------------------------

struct CompareArgs {
  std::string family, budget = "18,50,12", store, query, out;
  std::size_t seeds = 10, transfer = 3, reference_runs = 0;
  double beta = 0.7;
  bool smooth = false, quiet = false;
};

int run_compare(const CompareArgs& a) {
  const bench::BenchFamily fam = bench::load_family(a.family);
  CompareOptions o;
  o.budget = BudgetSpec::parse(a.budget);
  o.beta = a.beta;
  for (std::size_t s = 1; s <= a.seeds; ++s) o.seeds.push_back(s);
  o.transfer = a.transfer;
  o.reference_runs = a.reference_runs;
  o.query_label = a.query;
  o.store = a.store.empty() ? fs::path(a.out.empty() ? "." : a.out).parent_path() / "compare-store" : fs::path(a.store);
  if (!a.quiet) o.log = [](const std::string& m) { std::cerr << "devbo: " << m << '\n'; };
  const CompareResult res = compare_experiment(fam, o);
  std::ostringstream csv;
  write_compare_csv(res, o.budget, csv, a.smooth);
  emit(a.out, csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"devbo: Bayesian optimization of grasping parameters with memory-based warm starts"};
  app.require_subcommand(1);

  OptimizeArgs oa;
  auto* opt = app.add_subcommand("optimize", "run one optimization (init, infill, final evaluation)");
  opt->add_option("--space", oa.space, "parameter space JSON {names, lower, upper}");
  opt->add_option("--budget", oa.budget, "init,infill,final")->capture_default_str();
  opt->add_option("--beta", oa.beta, "quantile level")->capture_default_str();
  opt->add_option("--seed", oa.seed)->capture_default_str();
  opt->add_option("--object", oa.object, "object label");
  opt->add_option("--family", oa.family, "benchmark family directory (synthetic black box)");
  opt->add_option("--store", oa.store, "memory store directory");
  opt->add_option("--transfer", oa.transfer, "strategies to transfer from the most similar object")->capture_default_str();
  opt->add_option("--query", oa.query, "mesh of the object, for retrieval with --remote");
  opt->add_option("--remote", oa.remote, "host:port of a remote black box");
  opt->add_option("--timeout", oa.timeout_sec, "remote reply timeout in seconds")->capture_default_str();
  opt->add_option("--run-id", oa.run_id);
  opt->add_option("--out", oa.out, "output directory (report.json, history.csv)");

  FamilyArgs fa;
  auto* bench_cmd = app.add_subcommand("bench", "synthetic benchmark tools");
  bench_cmd->require_subcommand(1);
  auto* mk = bench_cmd->add_subcommand("make-family", "generate a family of similar objects");
  mk->add_option("--seed", fa.seed)->capture_default_str();
  mk->add_option("--count", fa.count)->capture_default_str();
  mk->add_option("--delta", fa.delta, "sibling jitter per coordinate")->capture_default_str();
  mk->add_option("--prefix", fa.prefix)->capture_default_str();
  mk->add_option("--width-min", fa.width_min)->capture_default_str();
  mk->add_option("--width-max", fa.width_max)->capture_default_str();
  mk->add_option("--out", fa.out, "output directory")->required();

  SimilarArgs sa;
  auto* sim = app.add_subcommand("similar", "rank stored objects by shape similarity");
  sim->add_option("--query", sa.query, "query mesh (OBJ)");
  sim->add_option("--embedding", sa.embedding, "query embedding (JSON array of 1024 reals)");
  sim->add_option("--store", sa.store)->required();
  sim->add_option("-k", sa.k)->capture_default_str();
  sim->add_option("--seed", sa.seed)->capture_default_str();
  sim->add_option("--out", sa.out, "output CSV");

  MemoryArgs ma;
  auto* mem = app.add_subcommand("memory", "inspect a memory store");
  mem->require_subcommand(1);
  auto* ls = mem->add_subcommand("ls", "list runs, objects and strategies");
  auto* show = mem->add_subcommand("show", "show one run or one object");
  for (auto* c : {ls, show}) {
    c->add_option("--store", ma.store)->required();
    c->add_option("--out", ma.out, "output JSON");
  }
  show->add_option("--run", ma.run);
  show->add_option("--object", ma.object);

  CompareArgs ca;
  auto* cmp = app.add_subcommand("compare", "cold start vs memory warm start on a benchmark family");
  cmp->add_option("--family", ca.family)->required();
  cmp->add_option("--seeds", ca.seeds, "number of paired runs")->capture_default_str();
  cmp->add_option("--transfer", ca.transfer)->capture_default_str();
  cmp->add_option("--budget", ca.budget)->capture_default_str();
  cmp->add_option("--beta", ca.beta)->capture_default_str();
  cmp->add_option("--reference-runs", ca.reference_runs, "cold runs per reference object (0: same as --transfer)");
  cmp->add_option("--query", ca.query, "query object label (default: last in family)");
  cmp->add_option("--store", ca.store, "memory store directory");
  cmp->add_option("--out", ca.out, "output CSV");
  cmp->add_flag("--smooth", ca.smooth, "add a moving-average column");
  cmp->add_flag("--quiet", ca.quiet);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*opt) return run_optimize(oa);
    if (*mk) return run_make_family(fa);
    if (*sim) return run_similar(sa);
    if (*ls) return run_memory_ls(ma);
    if (*show) return run_memory_show(ma);
    if (*cmp) return run_compare(ca);
  } catch (const RunAborted& e) {
    std::cerr << "devbo: error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "devbo: error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
