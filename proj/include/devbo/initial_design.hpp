#pragma once

#include "devbo/param_space.hpp"
#include "devbo/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace devbo {

enum class Provenance { Lhs, Transferred };

inline std::string to_string(Provenance p) { return p == Provenance::Lhs ? "lhs" : "transferred"; }

// Points to evaluate during init_design, in evaluation order.
struct DesignSet {
  std::vector<ParamVector> points;
  std::vector<Provenance> provenance;

  std::size_t size() const { return points.size(); }
};

// Plain jittered Latin hypercube: point i sits in stratum perm_j[i] along
// every dimension j, uniformly placed within the stratum.
inline DesignSet latin_hypercube(std::size_t k, std::size_t n, CounterRng& rng) {
  DesignSet out;
  if (k == 0) return out;
  std::vector<std::vector<double>> coords(k, std::vector<double>(n));
  std::vector<std::size_t> perm(k);
  for (std::size_t j = 0; j < n; ++j) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(perm));
    for (std::size_t i = 0; i < k; ++i)
      coords[i][j] = (static_cast<double>(perm[i]) + rng.uniform()) / static_cast<double>(k);
  }
  for (auto& c : coords) {
    out.points.emplace_back(std::move(c));
    out.provenance.push_back(Provenance::Lhs);
  }
  return out;
}

inline double min_pairwise_distance(const std::vector<ParamVector>& pts) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < pts.size(); ++a)
    for (std::size_t b = a + 1; b < pts.size(); ++b) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < pts[a].size(); ++j) {
        const double d = pts[a][j] - pts[b][j];
        d2 += d * d;
      }
      best = std::min(best, d2);
    }
  return std::sqrt(best);
}

inline constexpr std::size_t kDefaultLhsRestarts = 100;

// Best of `restarts` independent Latin hypercubes under the maximin criterion.
inline DesignSet maximin_lhs(std::size_t k, std::size_t n, std::uint64_t seed,
                             std::size_t restarts = kDefaultLhsRestarts) {
  if (k < 2) throw std::invalid_argument("maximin_lhs: need at least 2 points");
  if (n < 1) throw std::invalid_argument("maximin_lhs: need at least 1 dimension");
  if (restarts < 1) restarts = 1;
  CounterRng rng(seed, 0x1a5);
  DesignSet best;
  double best_dist = -1.0;
  for (std::size_t r = 0; r < restarts; ++r) {
    DesignSet cand = latin_hypercube(k, n, rng);
    const double d = min_pairwise_distance(cand.points);
    if (d > best_dist) {
      best_dist = d;
      best = std::move(cand);
    }
  }
  return best;
}

// Appends transferred strategies after an LHS part sized total - |strategies|.
inline DesignSet inject_transfer(DesignSet design, const std::vector<ParamVector>& strategies,
                                 std::size_t total) {
  if (strategies.size() > total)
    throw std::invalid_argument("inject_transfer: more strategies (" +
                                std::to_string(strategies.size()) + ") than budget (" +
                                std::to_string(total) + ")");
  if (design.size() + strategies.size() != total)
    throw std::invalid_argument("inject_transfer: design has " + std::to_string(design.size()) +
                                " points, expected " +
                                std::to_string(total - strategies.size()));
  const std::size_t n = design.size() ? design.points.front().size()
                                      : (strategies.empty() ? 0 : strategies.front().size());
  for (const auto& s : strategies) {
    if (s.size() != n) throw std::invalid_argument("inject_transfer: strategy dimension mismatch");
    for (std::size_t j = 0; j < s.size(); ++j)
      if (!(s[j] >= 0.0 && s[j] <= 1.0))
        throw std::invalid_argument("inject_transfer: strategy outside the unit cube");
    design.points.push_back(s);
    design.provenance.push_back(Provenance::Transferred);
  }
  return design;
}

// init_design with an optional warm start at a fixed total budget.
inline DesignSet make_initial_design(std::size_t total, std::size_t n,
                                     const std::vector<ParamVector>& strategies,
                                     std::uint64_t seed,
                                     std::size_t restarts = kDefaultLhsRestarts) {
  if (strategies.size() > total)
    throw std::invalid_argument("initial design: more strategies than init budget");
  const std::size_t lhs_count = total - strategies.size();
  DesignSet lhs;
  if (lhs_count >= 2) {
    lhs = maximin_lhs(lhs_count, n, seed, restarts);
  } else {
    CounterRng rng(seed, 0x1a5);
    lhs = latin_hypercube(lhs_count, n, rng);
  }
  return inject_transfer(std::move(lhs), strategies, total);
}

}  // namespace devbo
