#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <complex>

#include "haarlab/circle_function.hpp"
#include "haarlab/group.hpp"
#include "oracles.hpp"

using namespace haarlab;

namespace {

std::vector<GroupSpec> all_kinds() {
  return {GroupSpec::torus(1),
          GroupSpec::torus(3),
          GroupSpec::cyclic(6),
          GroupSpec::so3(),
          GroupSpec::circle_affine(),
          GroupSpec::product({GroupSpec::so3(), GroupSpec::torus(2)}),
          GroupSpec::product({GroupSpec::circle_affine(), GroupSpec::cyclic(4)})};
}

}  // namespace

TEST(Wrap, ReducesIntoHalfOpenUnitInterval) {
  EXPECT_DOUBLE_EQ(wrap01(1.25), 0.25);
  EXPECT_DOUBLE_EQ(wrap01(-0.25), 0.75);
  EXPECT_EQ(wrap01(-1e-18), 0.0);  // rounds up to 1.0 naively
  EXPECT_NEAR(circle_distance(0.95, 0.05), 0.1, 1e-15);
  EXPECT_DOUBLE_EQ(centered(0.75), -0.25);
}

TEST(GroupSpec, RejectsEmptyShapes) {
  EXPECT_THROW(GroupSpec::torus(0), Error);
  EXPECT_THROW(GroupSpec::cyclic(0), Error);
  EXPECT_THROW(GroupSpec::product({}), Error);
}

TEST(GroupSpec, Cardinality) {
  EXPECT_EQ(cardinality(GroupSpec::cyclic(8)), 8u);
  EXPECT_EQ(cardinality(GroupSpec::product({GroupSpec::cyclic(2), GroupSpec::cyclic(3)})), 6u);
  EXPECT_FALSE(cardinality(GroupSpec::torus(2)).has_value());
  EXPECT_FALSE(cardinality(GroupSpec::product({GroupSpec::cyclic(2), GroupSpec::so3()})).has_value());
}

TEST(GroupLaw, WorkedProducts) {
  const auto t2 = GroupSpec::torus(2);
  const auto s = op(t2, Element::torus({0.25, 0.5}), Element::torus({0.90, 0.70}));
  EXPECT_NEAR(s.coords()[0], 0.15, 1e-15);
  EXPECT_NEAR(s.coords()[1], 0.20, 1e-15);

  EXPECT_EQ(op(GroupSpec::cyclic(6), Element::residue(4), Element::residue(5)).as<Residue>().value, 3);

  const auto ca = op(GroupSpec::circle_affine(), Element::affine_pair(0.25, -1), Element::affine_pair(0.5, -1));
  EXPECT_NEAR(ca.as<AffinePair>().y, 0.75, 1e-15);
  EXPECT_EQ(ca.as<AffinePair>().t, 1);
}

TEST(GroupLaw, WorkedInverses) {
  EXPECT_NEAR(inv(GroupSpec::torus(1), Element::torus({0.3})).coords()[0], 0.7, 1e-15);
  EXPECT_EQ(inv(GroupSpec::cyclic(5), Element::residue(2)).as<Residue>().value, 3);
  const auto so3 = GroupSpec::so3();
  const auto a = haar_sample_at(so3, 7, 0);
  const auto ai = inv(so3, a);
  EXPECT_LE((a.matrix() * ai.matrix() - Eigen::Matrix3d::Identity()).norm(), 1e-12);
}

TEST(GroupLaw, ShapeMismatchIsTypeError) {
  EXPECT_THROW(op(GroupSpec::torus(2), Element::torus({0.1}), Element::torus({0.1, 0.2})), Error);
  EXPECT_THROW(op(GroupSpec::cyclic(3), Element::residue(5), Element::residue(1)), Error);
  EXPECT_THROW(inv(GroupSpec::so3(), Element::torus({0.1})), Error);
}

TEST(GroupLaw, RotationConstructionValidates) {
  Eigen::Matrix3d bad = Eigen::Matrix3d::Identity();
  bad(0, 0) = -1.0;  // det -1
  EXPECT_THROW(Element::rotation(bad), Error);
  Eigen::Matrix3d nearly = Eigen::Matrix3d::Identity();
  nearly(0, 1) = 1e-8;
  const auto r = Element::rotation(nearly);
  EXPECT_LE(orthogonality_drift(r.matrix()), 1e-12);
}

// Property: associativity, identity and inverse laws on sampled triples.
TEST(GroupLaw, AxiomsHoldOnSamples) {
  for (const auto& g : all_kinds()) {
    const auto e = identity(g);
    for (std::uint64_t i = 0; i < 200; ++i) {
      const auto a = haar_sample_at(g, 11, 3 * i);
      const auto b = haar_sample_at(g, 11, 3 * i + 1);
      const auto c = haar_sample_at(g, 11, 3 * i + 2);
      EXPECT_LE(distance(g, op(g, op(g, a, b), c), op(g, a, op(g, b, c))), 1e-12) << g.describe();
      EXPECT_LE(distance(g, op(g, a, e), a), 1e-15) << g.describe();
      EXPECT_LE(distance(g, op(g, a, inv(g, a)), e), 1e-12) << g.describe();
    }
  }
}

TEST(Haar, SamplesConformAndAreDeterministic) {
  for (const auto& g : all_kinds()) {
    const auto a = haar_sample(g, 300, 42);
    const auto b = haar_sample(g, 300, 42, Sampling::Uniform, 4);
    ASSERT_EQ(a.size(), 300u);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_TRUE(conforms(g, a[i]));
      EXPECT_EQ(a[i], b[i]) << g.describe();
      EXPECT_EQ(a[i], haar_sample_at(g, 42, i));
    }
    EXPECT_NE(haar_sample(g, 4, 43), std::vector<Element>(a.begin(), a.begin() + 4)) << g.describe();
  }
  EXPECT_THROW(haar_sample(GroupSpec::torus(1), 0, 1), Error);
}

TEST(Haar, CyclicFrequenciesAreUniform) {
  const auto pts = haar_sample(GroupSpec::cyclic(5), 100000, 0xC0FFEE);
  std::array<int, 5> count{};
  for (const auto& p : pts) ++count[static_cast<std::size_t>(p.as<Residue>().value)];
  for (int c : count) EXPECT_NEAR(c / 100000.0, 0.2, 0.004);
}

TEST(Haar, CircleCharacterMeanIsSmall) {
  const auto pts = haar_sample(GroupSpec::torus(1), 65536, 0xC0FFEE);
  std::complex<double> s = 0.0;
  for (const auto& p : pts) s += std::polar(1.0, oracle::kTwoPi * p.coords()[0]);
  EXPECT_LE(std::abs(s) / 65536.0, 4.0 / 256.0);
}

TEST(Haar, RotationTraceMomentsMatchWeylIntegration) {
  const double m1 = oracle::so3_trace_moment(1);
  const double m2 = oracle::so3_trace_moment(2);
  ASSERT_NEAR(m1, 0.0, 1e-9);
  ASSERT_NEAR(m2, 1.0, 1e-9);
  const auto pts = haar_sample(GroupSpec::so3(), 65536, 0xC0FFEE);
  double s1 = 0.0, s2 = 0.0;
  for (const auto& p : pts) {
    const double tr = p.matrix().trace();
    s1 += tr;
    s2 += tr * tr;
    ASSERT_NEAR(p.matrix().determinant(), 1.0, 1e-9);
  }
  EXPECT_NEAR(s1 / 65536.0, m1, 0.02);
  EXPECT_NEAR(s2 / 65536.0, m2, 0.03);
}

TEST(Haar, LatticeModeCoversTorusEvenly) {
  const auto pts = haar_sample(GroupSpec::torus(2), 4096, 3, Sampling::Lattice);
  std::complex<double> s = 0.0;
  for (const auto& p : pts) s += std::polar(1.0, oracle::kTwoPi * (p.coords()[0] - 2.0 * p.coords()[1]));
  EXPECT_LE(std::abs(s) / 4096.0, 4.0 / 64.0);
}

TEST(CircleFunction, IntegerWindingMakesItWellDefined) {
  const CircleFunction g({1, -2}, 0.3, {TrigTerm{{1, 0}, 0.1, 0.0}, TrigTerm{{2, 3}, 0.0, -0.05}});
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto x = haar_sample_at(GroupSpec::torus(2), 5, i).coords();
    for (int j = 0; j < 2; ++j) {
      auto y = x;
      y[static_cast<std::size_t>(j)] += 1.0;
      EXPECT_NEAR(g.lift(y) - g.lift(x), static_cast<double>(g.winding()[static_cast<std::size_t>(j)]), 1e-12);
      EXPECT_LE(circle_distance(g(y), g(x)), 1e-12);
    }
  }
}

TEST(CircleFunction, EvaluatesClosedForm) {
  const CircleFunction g({0}, 0.2, {TrigTerm{{1}, 0.0, 0.1}});
  for (double x : {0.0, 0.125, 0.4, 0.9})
    EXPECT_NEAR(g.lift(std::vector<double>{x}), 0.2 + 0.1 * std::sin(oracle::kTwoPi * x), 1e-15);
}

TEST(CircleFunction, RejectsMalformedTerms) {
  EXPECT_THROW(CircleFunction({}, 0.0), Error);
  EXPECT_THROW(CircleFunction({0, 0}, 0.0, {TrigTerm{{1}, 0.1, 0.0}}), Error);
  EXPECT_THROW(CircleFunction({0}, 0.0, {TrigTerm{{0}, 0.1, 0.0}}), Error);
  EXPECT_THROW(CircleFunction({0}, std::nan("")), Error);
}
