#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <fstream>
#include <initializer_list>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace devbo {

// A point of the closed unit hypercube. Optimizer internals only ever see
// these; natural units exist at the black-box boundary and in stored records.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::vector<double> coords) : coords_(std::move(coords)) {}
  ParamVector(std::initializer_list<double> coords) : coords_(coords) {}
  explicit ParamVector(const Eigen::Ref<const Eigen::VectorXd>& v)
      : coords_(v.data(), v.data() + v.size()) {}

  std::size_t size() const { return coords_.size(); }
  double operator[](std::size_t j) const { return coords_[j]; }
  double& operator[](std::size_t j) { return coords_[j]; }
  const std::vector<double>& coords() const { return coords_; }

  Eigen::Map<const Eigen::VectorXd> eigen() const {
    return {coords_.data(), static_cast<Eigen::Index>(coords_.size())};
  }

  bool operator==(const ParamVector&) const = default;

 private:
  std::vector<double> coords_;
};

struct Violation {
  enum class Kind { Dimension, OutOfRange };
  Kind kind;
  std::size_t index;  // offending coordinate; unused for Dimension
  double value;
  std::string message;
};

class ParamSpace {
 public:
  ParamSpace(std::vector<std::string> names, std::vector<double> lower, std::vector<double> upper)
      : names_(std::move(names)), lower_(std::move(lower)), upper_(std::move(upper)) {
    if (names_.size() != lower_.size() || names_.size() != upper_.size())
      throw std::invalid_argument("param space: names/lower/upper lengths differ");
    if (names_.empty()) throw std::invalid_argument("param space: no dimensions");
    std::set<std::string> seen;
    for (std::size_t j = 0; j < names_.size(); ++j) {
      if (!seen.insert(names_[j]).second)
        throw std::invalid_argument("param space: duplicate name '" + names_[j] + "'");
      if (!(lower_[j] < upper_[j]))
        throw std::invalid_argument("param space: lower >= upper for '" + names_[j] + "'");
    }
  }

  // n parameters p0..p{n-1} with common bounds.
  static ParamSpace uniform(std::size_t n, double lo = 0.0, double hi = 1.0) {
    std::vector<std::string> names;
    for (std::size_t j = 0; j < n; ++j) names.push_back("p" + std::to_string(j));
    return {std::move(names), std::vector<double>(n, lo), std::vector<double>(n, hi)};
  }

  std::size_t dims() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }

  std::vector<Violation> validate(const ParamVector& p) const {
    std::vector<Violation> out;
    if (p.size() != dims()) {
      out.push_back({Violation::Kind::Dimension, 0, static_cast<double>(p.size()),
                     "expected " + std::to_string(dims()) + " coordinates, got " +
                         std::to_string(p.size())});
      return out;
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (!(p[j] >= 0.0 && p[j] <= 1.0))
        out.push_back({Violation::Kind::OutOfRange, j, p[j],
                       "coordinate " + std::to_string(j) + " outside [0,1]"});
    }
    return out;
  }

  std::vector<double> to_natural(const ParamVector& p) const {
    require_dims(p.size());
    std::vector<double> x(dims());
    for (std::size_t j = 0; j < dims(); ++j) x[j] = lower_[j] + p[j] * (upper_[j] - lower_[j]);
    return x;
  }

  ParamVector from_natural(const std::vector<double>& x) const {
    require_dims(x.size());
    std::vector<double> u(dims());
    for (std::size_t j = 0; j < dims(); ++j) {
      if (!(x[j] >= lower_[j] && x[j] <= upper_[j]))
        throw std::out_of_range("param space: value for '" + names_[j] + "' outside bounds");
      u[j] = (x[j] - lower_[j]) / (upper_[j] - lower_[j]);
    }
    return ParamVector(std::move(u));
  }

  bool operator==(const ParamSpace&) const = default;

  nlohmann::json to_json() const { return {{"names", names_}, {"lower", lower_}, {"upper", upper_}}; }

  static ParamSpace from_json(const nlohmann::json& j) {
    return {j.at("names").get<std::vector<std::string>>(), j.at("lower").get<std::vector<double>>(),
            j.at("upper").get<std::vector<double>>()};
  }

  static ParamSpace load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open space file " + path);
    return from_json(nlohmann::json::parse(in));
  }

 private:
  void require_dims(std::size_t n) const {
    if (n != dims())
      throw std::invalid_argument("param space: dimension mismatch (expected " +
                                  std::to_string(dims()) + ", got " + std::to_string(n) + ")");
  }

  std::vector<std::string> names_;
  std::vector<double> lower_;
  std::vector<double> upper_;
};

}  // namespace devbo
