#include "devbo/param_space.hpp"
#include "devbo/rng.hpp"

#include <gtest/gtest.h>

using devbo::ParamSpace;
using devbo::ParamVector;
using devbo::Violation;

TEST(ParamSpace, ToNaturalMidpointAndEndpoints) {
  EXPECT_EQ(ParamSpace({"a"}, {0.0}, {10.0}).to_natural({0.5}), std::vector<double>{5.0});
  const ParamSpace sym({"a", "b"}, {-2.0, -2.0}, {2.0, 2.0});
  EXPECT_EQ(sym.to_natural({0.0, 1.0}), (std::vector<double>{-2.0, 2.0}));
  EXPECT_EQ(ParamSpace({"a"}, {-2.0}, {2.0}).to_natural({0.25}), std::vector<double>{-1.0});
}

TEST(ParamSpace, FromNatural) {
  EXPECT_EQ(ParamSpace({"a"}, {0.0}, {10.0}).from_natural({5.0}), ParamVector({0.5}));
  EXPECT_EQ(ParamSpace({"a"}, {-2.0}, {2.0}).from_natural({-2.0}), ParamVector({0.0}));
  const ParamSpace s({"a"}, {0.0}, {1.0});
  EXPECT_NEAR(s.from_natural(s.to_natural({0.123456789}))[0], 0.123456789, 1e-12);
}

TEST(ParamSpace, RejectsBadInput) {
  const ParamSpace s({"a", "b"}, {0.0, 0.0}, {1.0, 1.0});
  EXPECT_THROW(s.to_natural({0.5}), std::invalid_argument);
  EXPECT_THROW(s.from_natural({0.5, 2.0}), std::out_of_range);
  EXPECT_THROW(ParamSpace({"a", "a"}, {0, 0}, {1, 1}), std::invalid_argument);
  EXPECT_THROW(ParamSpace({"a"}, {1.0}, {1.0}), std::invalid_argument);
  EXPECT_THROW(ParamSpace({"a"}, {0.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST(ParamSpace, Validate) {
  EXPECT_TRUE(ParamSpace::uniform(2).validate({0.5, 0.5}).empty());
  const auto v = ParamSpace::uniform(1).validate({1.2});
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, Violation::Kind::OutOfRange);
  EXPECT_EQ(v[0].index, 0u);
  const auto d = ParamSpace::uniform(9).validate({0.5});
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].kind, Violation::Kind::Dimension);
  // closed cube
  EXPECT_TRUE(ParamSpace::uniform(2).validate({0.0, 1.0}).empty());
}

TEST(ParamSpace, RoundTripAndMonotoneProperty) {
  devbo::CounterRng rng(42);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(9);
    std::vector<std::string> names;
    std::vector<double> lo, hi;
    for (std::size_t j = 0; j < n; ++j) {
      names.push_back("x" + std::to_string(j));
      lo.push_back(rng.uniform(-1e3, 1e3));
      hi.push_back(lo.back() + rng.uniform(1e-3, 1e3));
    }
    const ParamSpace s(names, lo, hi);
    std::vector<double> u(n), w(n);
    for (std::size_t j = 0; j < n; ++j) {
      u[j] = rng.uniform();
      w[j] = std::min(1.0, u[j] + rng.uniform(0.0, 0.2));
    }
    const auto back = s.from_natural(s.to_natural(ParamVector(u)));
    const auto xu = s.to_natural(ParamVector(u));
    const auto xw = s.to_natural(ParamVector(w));
    for (std::size_t j = 0; j < n; ++j) {
      EXPECT_NEAR(back[j], u[j], 1e-12);
      EXPECT_LE(xu[j], xw[j]);
    }
  }
}

TEST(ParamSpace, JsonDocument) {
  const auto j = nlohmann::json::parse(R"({"names":["speed","force"],"lower":[0,-1],"upper":[2,1]})");
  const ParamSpace s = ParamSpace::from_json(j);
  EXPECT_EQ(s.dims(), 2u);
  EXPECT_EQ(s.names()[1], "force");
  EXPECT_EQ(ParamSpace::from_json(s.to_json()), s);
  EXPECT_THROW(ParamSpace::from_json(nlohmann::json::parse(R"({"names":["a"],"lower":[0]})")),
               nlohmann::json::exception);
}
