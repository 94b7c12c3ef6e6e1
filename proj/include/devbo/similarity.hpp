#pragma once

#include "devbo/rng.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace devbo {

struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<std::size_t, 3>> triangles;

  double triangle_area(std::size_t t) const {
    const auto& tri = triangles[t];
    return 0.5 * (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]).norm();
  }

  void check() const {
    bool any_area = false;
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      for (auto idx : triangles[t])
        if (idx >= vertices.size()) throw std::invalid_argument("mesh: vertex index out of range");
      any_area = any_area || triangle_area(t) > 0.0;
    }
    if (!any_area) throw std::invalid_argument("mesh: no triangle with positive area");
  }
};

struct PointCloud {
  std::vector<Eigen::Vector3d> points;

  std::size_t size() const { return points.size(); }
  bool operator==(const PointCloud&) const = default;
};

enum class FeatureKind { D2, Embedding };

inline std::string to_string(FeatureKind k) { return k == FeatureKind::D2 ? "d2" : "imported-embedding"; }

inline FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "d2") return FeatureKind::D2;
  if (s == "imported-embedding") return FeatureKind::Embedding;
  throw std::invalid_argument("unknown feature kind '" + s + "'");
}

inline constexpr std::size_t kD2Bins = 64;
inline constexpr std::size_t kEmbeddingDim = 1024;
inline constexpr std::size_t kDefaultCloudSize = 1024;

struct ShapeFeature {
  FeatureKind kind = FeatureKind::D2;
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }

  void check() const {
    if (kind == FeatureKind::Embedding) {
      if (values.size() != kEmbeddingDim)
        throw std::invalid_argument("embedding feature must have 1024 entries");
      return;
    }
    if (values.size() != kD2Bins) throw std::invalid_argument("d2 feature must have 64 bins");
    double sum = 0.0;
    for (double v : values) {
      if (!(v >= 0.0)) throw std::invalid_argument("d2 feature has a negative bin");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("d2 feature does not sum to 1");
  }

  bool operator==(const ShapeFeature&) const = default;
};

// ---------------------------------------------------------------------------
// Mesh and cloud I/O

// ASCII OBJ: "v x y z" and "f i j k ..." (1-based, negative = relative,
// "i/t/n" forms accepted). Polygons are fan-triangulated.
inline TriangleMesh parse_obj(std::istream& in) {
  TriangleMesh mesh;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Eigen::Vector3d v;
      if (!(ls >> v.x() >> v.y() >> v.z()))
        throw std::runtime_error("obj: bad vertex on line " + std::to_string(line_no));
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<std::size_t> idx;
      std::string tok;
      while (ls >> tok) {
        const long raw = std::stol(tok.substr(0, tok.find('/')));
        const long resolved = raw < 0 ? static_cast<long>(mesh.vertices.size()) + raw : raw - 1;
        if (raw == 0 || resolved < 0)
          throw std::runtime_error("obj: bad face index on line " + std::to_string(line_no));
        idx.push_back(static_cast<std::size_t>(resolved));
      }
      if (idx.size() < 3) throw std::runtime_error("obj: face with < 3 vertices on line " + std::to_string(line_no));
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  mesh.check();
  return mesh;
}

inline TriangleMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mesh " + path);
  return parse_obj(in);
}

inline void write_obj(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write mesh " + path);
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline void write_cloud(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write cloud " + path);
  char buf[128];
  for (const auto& p : cloud.points) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out << buf;
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline PointCloud load_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open cloud " + path);
  PointCloud c;
  Eigen::Vector3d p;
  while (in >> p.x() >> p.y() >> p.z()) c.points.push_back(p);
  if (!in.eof()) throw std::runtime_error("malformed cloud file " + path);
  return c;
}

inline ShapeFeature load_embedding(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding " + path);
  ShapeFeature f{FeatureKind::Embedding, nlohmann::json::parse(in).get<std::vector<double>>()};
  f.check();
  return f;
}

// ---------------------------------------------------------------------------
// Sampling and normalization

// Area-weighted triangle choice, uniform barycentric placement inside it.
inline PointCloud sample_mesh(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  mesh.check();
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    total += mesh.triangle_area(t);
    cumulative[t] = total;
  }
  CounterRng rng(seed, 0x5a3);
  PointCloud cloud;
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double target = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    if (it == cumulative.end()) --it;
    const auto& tri = mesh.triangles[static_cast<std::size_t>(it - cumulative.begin())];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const Eigen::Vector3d& a = mesh.vertices[tri[0]];
    const Eigen::Vector3d& b = mesh.vertices[tri[1]];
    const Eigen::Vector3d& c = mesh.vertices[tri[2]];
    cloud.points.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
  }
  return cloud;
}

// Centroid to the origin, farthest point to unit distance.
inline PointCloud normalize_cloud(const PointCloud& c) {
  if (c.points.size() < 2) throw std::invalid_argument("normalize: need at least 2 points");
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : c.points) centroid += p;
  centroid /= static_cast<double>(c.points.size());
  double max_norm = 0.0;
  for (const auto& p : c.points) max_norm = std::max(max_norm, (p - centroid).norm());
  if (!(max_norm > 0.0)) throw std::invalid_argument("normalize: all points identical");
  PointCloud out;
  out.points.reserve(c.points.size());
  for (const auto& p : c.points) out.points.push_back((p - centroid) / max_norm);
  return out;
}

// ---------------------------------------------------------------------------
// D2 shape distribution

struct D2Config {
  std::size_t pairs = 100000;
  std::size_t bins = kD2Bins;
  double max_distance = 2.0;
  std::uint64_t seed = 0;
};

// Canonical point order: distance to the centroid, ties broken
// lexicographically. The centroid is summed in lexicographic order so the
// result is exactly independent of input order, and a rigid rotation leaves
// the order (and thus the sampled pairs) unchanged up to rounding.
inline std::vector<Eigen::Vector3d> canonical_order(std::vector<Eigen::Vector3d> pts) {
  auto lex = [](const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
  };
  std::sort(pts.begin(), pts.end(), lex);
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  std::vector<std::pair<double, std::size_t>> keys(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) keys[i] = {(pts[i] - centroid).squaredNorm(), i};
  std::sort(keys.begin(), keys.end());
  std::vector<Eigen::Vector3d> out;
  out.reserve(pts.size());
  for (const auto& k : keys) out.push_back(pts[k.second]);
  return out;
}

// Histogram of distances between random point pairs drawn from the
// canonically ordered cloud.
inline ShapeFeature extract_feature(const PointCloud& c, const D2Config& cfg = {}) {
  if (c.points.size() < 2) throw std::invalid_argument("d2: need at least 2 points");
  if (cfg.bins != kD2Bins) throw std::invalid_argument("d2: bin count is fixed at 64");
  const std::vector<Eigen::Vector3d> pts = canonical_order(c.points);
  CounterRng rng(cfg.seed, 0xd2);
  std::vector<double> hist(cfg.bins, 0.0);
  const auto n = static_cast<std::uint64_t>(pts.size());
  const double scale = static_cast<double>(cfg.bins) / cfg.max_distance;
  for (std::size_t k = 0; k < cfg.pairs; ++k) {
    const auto i = rng.below(n);
    auto j = rng.below(n - 1);
    if (j >= i) ++j;
    const double d = (pts[i] - pts[j]).norm();
    const auto bin = std::min<std::size_t>(static_cast<std::size_t>(d * scale), cfg.bins - 1);
    hist[bin] += 1.0;
  }
  for (double& h : hist) h /= static_cast<double>(cfg.pairs);
  return {FeatureKind::D2, std::move(hist)};
}

// ---------------------------------------------------------------------------
// Retrieval

inline double pair_distance(const ShapeFeature& a, const ShapeFeature& b) {
  if (a.kind != b.kind) throw std::invalid_argument("pair_distance: feature kinds differ");
  if (a.dim() != b.dim()) throw std::invalid_argument("pair_distance: feature dimensions differ");
  double s = 0.0;
  for (std::size_t j = 0; j < a.dim(); ++j) {
    const double d = a.values[j] - b.values[j];
    s += d * d;
  }
  return std::sqrt(s);
}

struct LabeledFeature {
  std::string label;
  ShapeFeature feature;
};

struct Match {
  std::string label;
  double distance;
};

// k nearest stored features, ascending distance, ties by label.
inline std::vector<Match> most_similar(const ShapeFeature& query,
                                       const std::vector<LabeledFeature>& store, std::size_t k) {
  std::vector<Match> out;
  for (const auto& entry : store) {
    if (entry.feature.kind != query.kind) continue;
    out.push_back({entry.label, pair_distance(query, entry.feature)});
  }
  std::sort(out.begin(), out.end(), [](const Match& a, const Match& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.label < b.label;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

// Mesh -> normalized cloud -> D2 feature.
inline ShapeFeature mesh_feature(const TriangleMesh& mesh, std::uint64_t seed,
                                 std::size_t cloud_size = kDefaultCloudSize) {
  D2Config cfg;
  cfg.seed = seed;
  return extract_feature(normalize_cloud(sample_mesh(mesh, cloud_size, seed)), cfg);
}

}  // namespace devbo
