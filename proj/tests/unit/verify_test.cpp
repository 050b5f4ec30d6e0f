#include <gtest/gtest.h>

#include <set>

#include "haarlab/verify.hpp"
#include "oracles.hpp"

using namespace haarlab;

namespace {

MapSpec skew_example() { return MapSpec::skew_torus(2, 0.3, {CircleFunction({0}, 0.2, {TrigTerm{{1}, 0.0, 0.1}})}); }

MapSpec counterexample() {
  return MapSpec::torus_trig({CircleFunction({1, 1}, 0.0),
                              CircleFunction({1, 0}, 0.0, {TrigTerm{{0, 1}, 0.0, 1.0 / oracle::kTwoPi}})});
}

}  // namespace

TEST(Family, Counts) {
  EXPECT_EQ(default_family(GroupSpec::torus(2), 2).size(), 24u);
  EXPECT_EQ(default_family(GroupSpec::torus(2), 5).size(), 120u);
  EXPECT_EQ(default_family(GroupSpec::so3(), 5).size(), 11u);
  EXPECT_EQ(default_family(GroupSpec::so3(), 1).size(), 11u);
  EXPECT_EQ(default_family(GroupSpec::product({GroupSpec::so3(), GroupSpec::so3()}), 5).size(), 143u);
  EXPECT_EQ(default_family(GroupSpec::cyclic(5), 5).size(), 4u);
  EXPECT_EQ(default_family(GroupSpec::cyclic(12), 3).size(), 11u);  // whole dual, max_freq ignored
}

TEST(Family, IdsAreUniqueAndTrivialTestExcluded) {
  const auto fam = default_family(GroupSpec::product({GroupSpec::so3(), GroupSpec::torus(1)}), 2);
  std::set<std::string> ids;
  for (const auto& t : fam) {
    EXPECT_FALSE(t.id().empty());
    ids.insert(t.id());
  }
  EXPECT_EQ(ids.size(), fam.size());
  EXPECT_EQ(fam.size(), 12u * 5u - 1u);
}

// Property: every family member has Haar integral zero, so the identity map
// must keep every statistic at the noise floor.
TEST(CharacterTest, IdentityPasses) {
  const auto g = GroupSpec::torus(2);
  const auto rep = character_test(MapSpec::identity(g), default_family(g, 3), 65536, 0xC0FFEE, 1, Sampling::Uniform);
  EXPECT_EQ(rep.verdict, Verdict::Pass);
  for (const auto& t : rep.tests) EXPECT_LE(t.statistic, 4.0 / 256.0) << t.id;
}

TEST(CharacterTest, SkewExamplePasses) {
  const auto f = skew_example();
  const auto rep = character_test(f, default_family(f.domain(), 5), 65536, 0xC0FFEE, 1, Sampling::Uniform);
  EXPECT_EQ(rep.verdict, Verdict::Pass) << rep.worst_check << " " << rep.worst_ratio;
  EXPECT_EQ(rep.tests.size(), 120u);
}

TEST(CharacterTest, CounterexampleFailsAtBesselValue) {
  const double j1 = oracle::counterexample_character();
  ASSERT_NEAR(j1, 0.4400505857, 1e-9);
  const auto f = counterexample();
  const auto rep = character_test(f, default_family(f.domain(), 5), 65536, 0xC0FFEE, 1, Sampling::Uniform);
  EXPECT_EQ(rep.verdict, Verdict::Fail);
  const auto* t = rep.find("k=[1,-1]");
  ASSERT_NE(t, nullptr);
  EXPECT_NEAR(t->statistic, j1, 0.02);
  EXPECT_FALSE(t->pass);
}

TEST(CharacterTest, ThreadCountDoesNotChangeStatistics) {
  const auto f = skew_example();
  const auto fam = default_family(f.domain(), 3);
  const auto a = character_test(f, fam, 20000, 9, 1, Sampling::Uniform);
  const auto b = character_test(f, fam, 20000, 9, 7, Sampling::Uniform);
  ASSERT_EQ(a.tests.size(), b.tests.size());
  for (std::size_t i = 0; i < a.tests.size(); ++i) EXPECT_EQ(a.tests[i].statistic, b.tests[i].statistic);
}

TEST(CharacterTest, Errors) {
  const auto f = skew_example();
  EXPECT_THROW(character_test(f, {}, 1024, 1, 1, Sampling::Uniform), Error);
  EXPECT_THROW(character_test(f, default_family(f.domain(), 1), 0, 1, 1, Sampling::Uniform), Error);
  const auto unverified = MapSpec::endo_quotient(GroupSpec::torus(1), EndoSpec::power(3), EndoSpec::identity(), false);
  try {
    character_test(unverified, default_family(unverified.domain(), 1), 1024, 1, 1, Sampling::Uniform);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BijectionUnverified);
  }
}

TEST(CharacterTest, VerdictBands) {
  VerificationReport r;
  r.tests = {{"a", 0.9, 1.0, true}};
  r.finalize();
  EXPECT_EQ(r.verdict, Verdict::Pass);
  r.tests.push_back({"b", 1.5, 1.0, false});
  r.finalize();
  EXPECT_EQ(r.verdict, Verdict::Inconclusive);
  EXPECT_EQ(r.worst_check, "b");
  r.tests.push_back({"c", 2.5, 1.0, false});
  r.finalize();
  EXPECT_EQ(r.verdict, Verdict::Fail);
}

TEST(ChiSquare, IdentityOnCirclePasses) {
  const auto r = chi_square_test(MapSpec::identity(GroupSpec::torus(1)), 64, 65536, 3, 1);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.dof, 63);
  EXPECT_LT(r.statistic, r.critical_value);
}

TEST(ChiSquare, SkewPassesCounterexampleFails) {
  EXPECT_TRUE(chi_square_test(skew_example(), 32, 200000, 3, 1).pass);
  const auto bad = chi_square_test(counterexample(), 32, 200000, 3, 1);
  EXPECT_FALSE(bad.pass);
  EXPECT_GT(bad.statistic, 10 * bad.critical_value);
}

TEST(ChiSquare, Refusals) {
  try {
    chi_square_test(MapSpec::swap_so3(), 32, 100000, 1, 1);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnbinnableDomain);
  }
  try {
    chi_square_test(MapSpec::identity(GroupSpec::torus(2)), 32, 5000, 1, 1);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UndersampledBins);
  }
  EXPECT_FALSE(is_binnable(GroupSpec::torus(4)));
  EXPECT_TRUE(is_binnable(GroupSpec::product({GroupSpec::circle_affine(), GroupSpec::torus(1)})));
}

TEST(VerifyMap, SwapOnRotationPairsSkipsChiSquare) {
  const auto rep = verify_map(MapSpec::swap_so3());
  EXPECT_EQ(rep.verdict, Verdict::Pass);
  EXPECT_EQ(rep.tests.size(), 143u);
  EXPECT_FALSE(rep.chi_square.has_value());
}

TEST(VerifyMap, CircleAffineSkewPasses) {
  const auto f = MapSpec::circle_affine_skew(0.25, -1, CircleFunction({0}, 0.1, {TrigTerm{{1}, 0.05, 0.0}}));
  const auto rep = verify_map(f);
  EXPECT_EQ(rep.verdict, Verdict::Pass) << rep.worst_check;
  ASSERT_TRUE(rep.chi_square.has_value());
}

TEST(VerifyMap, NonPreservingCircleMapFails) {
  // homeomorphism with non-uniform pushforward; k=1 statistic is J_1(0.2 pi) ~ 0.30
  const auto f = MapSpec::opaque(GroupSpec::torus(1), "x+0.1sin", [](const Element& x) {
    const double u = x.coords()[0];
    return Element::torus({u + 0.1 * std::sin(oracle::kTwoPi * u)});
  });
  EXPECT_EQ(verify_map(f).verdict, Verdict::Fail);
}
