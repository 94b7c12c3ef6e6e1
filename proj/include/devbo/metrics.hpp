#pragma once

#include "devbo/bo_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace devbo {

// Linear-interpolation quantile, h = (m - 1) q on the sorted sample.
inline double quantile_linear(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double h = static_cast<double>(v.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct MetricSeries {
  std::vector<double> values;
  std::vector<std::size_t> segment_starts;  // index where each phase segment begins

  bool operator==(const MetricSeries&) const = default;
};

// Running maximum of the third quartile of scores seen so far, restarted at
// the beginning of every phase segment. `segment_lengths` must sum to the
// number of scores; an empty list means one segment.
inline MetricSeries running_max_q3(std::span<const double> scores,
                                   std::span<const std::size_t> segment_lengths = {}) {
  std::vector<std::size_t> lengths(segment_lengths.begin(), segment_lengths.end());
  if (lengths.empty() && !scores.empty()) lengths.push_back(scores.size());
  if (std::accumulate(lengths.begin(), lengths.end(), std::size_t{0}) != scores.size())
    throw std::invalid_argument("running_max_q3: segment lengths do not cover the scores");
  MetricSeries out;
  std::size_t start = 0;
  for (std::size_t len : lengths) {
    out.segment_starts.push_back(start);
    std::vector<double> prefix;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < len; ++i) {
      prefix.push_back(scores[start + i]);
      best = std::max(best, quantile_linear(prefix, 0.75));
      out.values.push_back(best);
    }
    start += len;
  }
  return out;
}

// Per-phase running max Q3 over a run's init and infill observations.
inline MetricSeries run_progress(const RunReport& r) {
  std::vector<double> scores = r.scores(Phase::Init);
  const std::vector<double> infill = r.scores(Phase::Infill);
  const std::size_t lengths[] = {scores.size(), infill.size()};
  scores.insert(scores.end(), infill.begin(), infill.end());
  return running_max_q3(scores, lengths);
}

inline MetricSeries aggregate_mean(const std::vector<MetricSeries>& runs) {
  if (runs.empty()) return {};
  MetricSeries out{std::vector<double>(runs.front().values.size(), 0.0), runs.front().segment_starts};
  for (const auto& r : runs) {
    if (r.values.size() != out.values.size() || r.segment_starts != out.segment_starts)
      throw std::invalid_argument("aggregate_mean: series are not aligned");
    for (std::size_t i = 0; i < r.values.size(); ++i) out.values[i] += r.values[i];
  }
  for (double& v : out.values) v /= static_cast<double>(runs.size());
  return out;
}

// Centered moving average, window shrunk at the edges. Plot output only.
inline std::vector<double> moving_average(const std::vector<double>& v, std::size_t window = 5) {
  if (window == 0) throw std::invalid_argument("moving_average: zero window");
  const std::size_t half = window / 2;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(v.size() - 1, i + half);
    double s = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) s += v[k];
    out[i] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

struct SummaryStats {
  double mean = 0.0;
  double sd = 0.0;  // sample sd, n - 1 denominator; 0 for a single value
  double median = 0.0;
  std::size_t count = 0;
};

inline SummaryStats summarize(const std::vector<double>& v) {
  SummaryStats s;
  s.count = v.size();
  if (v.empty()) return s;
  s.mean = mean_of(v);
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  s.median = median_of(v);
  return s;
}

struct GroupStats {
  std::string label;
  std::size_t runs = 0;
  SummaryStats all;   // final scores pooled over every run
  SummaryStats best;  // final scores of the run with the highest final mean
  std::string best_run_id;
};

// Final-evaluation statistics per object label, labels in sorted order.
inline std::vector<GroupStats> final_stats(const std::vector<RunReport>& reports) {
  std::map<std::string, std::vector<const RunReport*>> groups;
  for (const auto& r : reports) groups[r.object_label].push_back(&r);
  std::vector<GroupStats> out;
  for (const auto& [label, runs] : groups) {
    GroupStats g;
    g.label = label;
    g.runs = runs.size();
    std::vector<double> pooled;
    const RunReport* best = nullptr;
    double best_mean = -std::numeric_limits<double>::infinity();
    for (const RunReport* r : runs) {
      pooled.insert(pooled.end(), r->final_scores.begin(), r->final_scores.end());
      const double m = mean_of(r->final_scores);
      if (m > best_mean) {
        best_mean = m;
        best = r;
      }
    }
    g.all = summarize(pooled);
    g.best = summarize(best->final_scores);
    g.best_run_id = best->run_id;
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace devbo
