#pragma once

#include "devbo/acquisition.hpp"
#include "devbo/cmaes.hpp"
#include "devbo/gp.hpp"
#include "devbo/initial_design.hpp"
#include "devbo/memory.hpp"
#include "devbo/param_space.hpp"
#include "devbo/rng.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace devbo {

struct BudgetSpec {
  std::size_t init = 18;
  std::size_t infill = 50;
  std::size_t final_evals = 12;

  void check() const {
    if (init < 2) throw std::invalid_argument("budget: init must be >= 2");
    if (final_evals < 1) throw std::invalid_argument("budget: final must be >= 1");
  }
  std::size_t total() const { return init + infill + final_evals; }

  // "init,infill,final"
  static BudgetSpec parse(const std::string& text) {
    std::istringstream in(text);
    BudgetSpec b;
    char c1 = 0, c2 = 0;
    long i = -1, f = -1, e = -1;
    if (!(in >> i >> c1 >> f >> c2 >> e) || c1 != ',' || c2 != ',' || i < 0 || f < 0 || e < 0 ||
        !(in >> std::ws).eof())
      throw std::invalid_argument("budget: expected init,infill,final but got '" + text + "'");
    b.init = static_cast<std::size_t>(i);
    b.infill = static_cast<std::size_t>(f);
    b.final_evals = static_cast<std::size_t>(e);
    b.check();
    return b;
  }

  bool operator==(const BudgetSpec&) const = default;
};

// Where a point came from.
enum class Source { Lhs, Transferred, Acquisition, BestPredicted };

inline std::string to_string(Source s) {
  switch (s) {
    case Source::Lhs: return "lhs";
    case Source::Transferred: return "transferred";
    case Source::Acquisition: return "eqi";
    case Source::BestPredicted: return "best_predicted";
  }
  return "?";
}

struct Observation {
  std::size_t iteration = 0;  // 1-based over the whole run
  Phase phase = Phase::Init;
  Source source = Source::Lhs;
  ParamVector params;
  double score = 0.0;  // raw, in [0,100]

  bool operator==(const Observation&) const = default;
};

struct RunReport {
  std::string run_id;
  std::string object_label;
  std::vector<Observation> history;  // init, infill and final observations in order
  ParamVector best_params;
  std::vector<double> final_scores;
  BudgetSpec budget;
  std::uint64_t seed = 0;
  std::vector<double> wall_times;  // seconds per evaluation
  bool aborted = false;
  std::string abort_reason;

  std::vector<double> scores(Phase phase) const {
    std::vector<double> out;
    for (const auto& o : history)
      if (o.phase == phase) out.push_back(o.score);
    return out;
  }

  bool operator==(const RunReport&) const = default;
};

// What the black box sees for one evaluation.
struct EvalRequest {
  const std::string& run_id;
  std::size_t iteration;
  Phase phase;
  const ParamVector& params;
  const std::vector<double>& params_natural;
};

// Returns a score in [0,100]. Throwing signals an infrastructure failure.
using Objective = std::function<double(const EvalRequest&)>;

class RunAborted : public std::runtime_error {
 public:
  RunAborted(const std::string& what, RunReport partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const RunReport& partial() const { return partial_; }

 private:
  RunReport partial_;
};

struct SearchBudget {
  double sigma0 = 0.25;
  std::size_t evals_per_restart = 2000;
};

struct RunOptions {
  std::string run_id = "run";
  std::string object_label;
  BudgetSpec budget;
  double beta = 0.7;
  std::uint64_t seed = 0;
  std::vector<ParamVector> transfer;
  MemoryStore* memory = nullptr;
  std::size_t lhs_restarts = kDefaultLhsRestarts;
  GpFitOptions gp;  // seed is overridden per iteration
  SearchBudget search;
  std::function<double()> clock;  // seconds; steady clock when empty
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  CounterRng rng(seed, stream);
  return rng.split(index)();
}

inline Eigen::MatrixXd as_matrix(const std::vector<ParamVector>& pts) {
  if (pts.empty()) return {};
  Eigen::MatrixXd X(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(pts.front().size()));
  for (std::size_t i = 0; i < pts.size(); ++i) X.row(static_cast<Eigen::Index>(i)) = pts[i].eigen().transpose();
  return X;
}

inline ParamVector clamp_to_cube(const Eigen::VectorXd& x) {
  return ParamVector(Eigen::VectorXd(x.cwiseMax(0.0).cwiseMin(1.0)));
}

// Maximizes EQI over the unit cube: CMA-ES restarted from the incumbent design
// point and from the cube center; evaluated points compete as candidates too.
inline ParamVector propose_next(const GpModel& model, const Eigen::MatrixXd& evaluated,
                                const EqiConfig& cfg, std::uint64_t seed,
                                const SearchBudget& search = {}) {
  const double q_min = incumbent_qmin(model, evaluated, cfg.beta);
  const auto n = static_cast<Eigen::Index>(model.dims());
  auto neg_eqi = [&](const Eigen::VectorXd& x) { return -eqi(model, x, q_min, cfg); };

  Eigen::Index incumbent = 0;
  Eigen::VectorXd best_x;
  double best_f = std::numeric_limits<double>::infinity();
  double inc_q = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < evaluated.rows(); ++i) {
    const Eigen::VectorXd x = evaluated.row(i).transpose();
    const GpPrediction p = model.predict(x);
    const double q = quantile_value(p, cfg.beta);
    if (q < inc_q) {
      inc_q = q;
      incumbent = i;
    }
    const double f = -eqi(p, q_min, cfg);
    if (f < best_f) {
      best_f = f;
      best_x = x;
    }
  }

  CmaConfig cma;
  cma.sigma0 = search.sigma0;
  cma.max_evals = search.evals_per_restart;
  cma.lower = Eigen::VectorXd::Zero(n);
  cma.upper = Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd starts[2] = {evaluated.row(incumbent).transpose(),
                                     Eigen::VectorXd::Constant(n, 0.5)};
  for (int r = 0; r < 2; ++r) {
    cma.seed = derive_seed(seed, 0xe91, static_cast<std::uint64_t>(r));
    const CmaResult res = cma_minimize(neg_eqi, starts[r], cma);
    if (res.f_best < best_f) {
      best_f = res.f_best;
      best_x = res.x_best;
    }
  }
  return clamp_to_cube(best_x);
}

// Minimizer of the posterior mean, searched from the evaluated point with the
// lowest posterior mean.
inline ParamVector best_predicted(const GpModel& model, const Eigen::MatrixXd& evaluated,
                                  std::uint64_t seed, const SearchBudget& search = {}) {
  if (evaluated.rows() == 0) throw std::invalid_argument("best_predicted: no evaluated points");
  const auto n = static_cast<Eigen::Index>(model.dims());
  auto mean_at = [&](const Eigen::VectorXd& x) { return model.predict(x).mean; };
  Eigen::Index start = 0;
  double start_f = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < evaluated.rows(); ++i) {
    const double f = mean_at(evaluated.row(i).transpose());
    if (f < start_f) {
      start_f = f;
      start = i;
    }
  }
  CmaConfig cma;
  cma.sigma0 = search.sigma0;
  cma.max_evals = search.evals_per_restart;
  cma.lower = Eigen::VectorXd::Zero(n);
  cma.upper = Eigen::VectorXd::Ones(n);
  cma.seed = derive_seed(seed, 0xb35, 0);
  const CmaResult res = cma_minimize(mean_at, evaluated.row(start).transpose(), cma);
  return clamp_to_cube(res.x_best);
}

namespace detail {

inline double steady_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

}  // namespace detail

// One optimization run: init_design, infill_eqi, final_eval. Scores enter the
// surrogate negated so that every internal search minimizes.
inline RunReport run_optimization(const Objective& objective, const ParamSpace& space,
                                  const RunOptions& opt) {
  opt.budget.check();
  EqiConfig eqi_cfg{opt.beta, 0.0};
  eqi_cfg.check();
  if (opt.transfer.size() > opt.budget.init)
    throw std::invalid_argument("run: more transferred strategies than init budget");
  for (const auto& t : opt.transfer)
    if (!space.validate(t).empty()) throw std::invalid_argument("run: transferred strategy does not fit the space");

  const auto clock = opt.clock ? opt.clock : std::function<double()>(detail::steady_seconds);
  RunReport report;
  report.run_id = opt.run_id;
  report.object_label = opt.object_label;
  report.budget = opt.budget;
  report.seed = opt.seed;

  std::size_t iteration = 0;
  auto evaluate = [&](const ParamVector& p, Phase phase, Source source, double started) {
    ++iteration;
    const std::vector<double> natural = space.to_natural(p);
    double score = 0.0;
    try {
      score = objective(EvalRequest{report.run_id, iteration, phase, p, natural});
      if (!(score >= 0.0 && score <= 100.0))
        throw std::runtime_error("objective returned score outside [0,100]: " + std::to_string(score));
    } catch (const std::exception& e) {
      report.aborted = true;
      report.abort_reason = "iteration " + std::to_string(iteration) + ": " + e.what();
      if (opt.memory) opt.memory->mark_aborted(report.run_id, report.abort_reason);
      throw RunAborted("run " + report.run_id + " aborted at " + report.abort_reason, report);
    }
    report.history.push_back({iteration, phase, source, p, score});
    report.wall_times.push_back(clock() - started);
    if (opt.memory)
      opt.memory->append_episode({report.run_id, iteration, phase, report.object_label, p, natural,
                                  score, opt.memory->now()});
    return score;
  };

  // init_design
  const DesignSet design = make_initial_design(opt.budget.init, space.dims(), opt.transfer,
                                               derive_seed(opt.seed, 0x1d, 0), opt.lhs_restarts);
  for (std::size_t i = 0; i < design.size(); ++i) {
    const double t0 = clock();
    evaluate(design.points[i], Phase::Init,
             design.provenance[i] == Provenance::Lhs ? Source::Lhs : Source::Transferred, t0);
  }

  std::vector<ParamVector> xs;
  std::vector<double> ys;
  for (const auto& o : report.history) {
    xs.push_back(o.params);
    ys.push_back(-o.score);
  }
  auto fit_model = [&](std::size_t step) {
    GpFitOptions gp = opt.gp;
    gp.seed = derive_seed(opt.seed, 0x9f, step);
    return GpModel::fit(as_matrix(xs), Eigen::Map<const Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size())), gp);
  };

  // infill_eqi
  for (std::size_t t = 0; t < opt.budget.infill; ++t) {
    const double t0 = clock();
    const GpModel model = fit_model(t);
    eqi_cfg.future_noise = model.kernel().nugget;
    const ParamVector next = propose_next(model, model.inputs(), eqi_cfg, derive_seed(opt.seed, 0xa7, t), opt.search);
    const double s = evaluate(next, Phase::Infill, Source::Acquisition, t0);
    xs.push_back(next);
    ys.push_back(-s);
  }

  // final_eval: one best-predicted point, evaluated repeatedly
  const double t0 = clock();
  const GpModel model = fit_model(opt.budget.infill);
  report.best_params = best_predicted(model, model.inputs(), derive_seed(opt.seed, 0xf1, 0), opt.search);
  for (std::size_t r = 0; r < opt.budget.final_evals; ++r) {
    const double started = r == 0 ? t0 : clock();
    report.final_scores.push_back(evaluate(report.best_params, Phase::Final, Source::BestPredicted, started));
  }
  if (opt.memory)
    opt.memory->store_strategy(make_procedural(report.run_id, report.object_label, report.best_params,
                                               report.final_scores));
  return report;
}

}  // namespace devbo
