#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "haarlab/error.hpp"
#include "haarlab/group.hpp"
#include "haarlab/maps.hpp"
#include "haarlab/parallel.hpp"

namespace haarlab {

enum class Membership { MemberConsistent, NonMember, Inconclusive };

inline const char* to_string(Membership m) {
  switch (m) {
    case Membership::MemberConsistent: return "MEMBER-CONSISTENT";
    case Membership::NonMember: return "NON-MEMBER";
    case Membership::Inconclusive: return "INCONCLUSIVE";
  }
  return "?";
}

struct MembershipReport {
  std::string map_description;
  std::string group;
  std::size_t x_samples = 0;
  std::size_t pair_samples = 0;
  std::uint64_t seed = 0;
  double tol = 0.0;
  std::vector<double> defects;  // one per sampled x
  double max_defect = 0.0;
  Membership verdict = Membership::MemberConsistent;
};

namespace detail {

inline std::vector<double> torus_sub(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = wrap01(a[i] - b[i]);
  return r;
}

inline std::vector<double> torus_add(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = wrap01(a[i] + b[i]);
  return r;
}

/// c = f o L_x o f^{-1}
inline std::vector<double> conjugated_translation(const MapSpec& f, const MapSpec& finv, const std::vector<double>& x,
                                                  const std::vector<double>& z) {
  const auto pre = eval(finv, Element::torus(z)).coords();
  return eval(f, Element::torus(torus_add(x, pre))).coords();
}

inline void require_torus(const MapSpec& f) {
  if (!f.domain().is<TorusGroup>()) throw Error(ErrorCode::TypeMismatch, "map is not defined on a torus");
  if (has_unverified_bijection(f))
    throw Error(ErrorCode::BijectionUnverified, f.describe() + " has not been shown to be a bijection");
}

}  // namespace detail

/// Homomorphism defect of d(z) = c(z) - c(0) at one pair, where
/// c = f o L_x o f^{-1}. Zero for every affine f.
inline double conjugation_defect(const MapSpec& f, const MapSpec& finv, const std::vector<double>& x,
                                 const std::vector<double>& z, const std::vector<double>& w) {
  const auto zero = std::vector<double>(x.size(), 0.0);
  const auto t = detail::conjugated_translation(f, finv, x, zero);
  auto d = [&](const std::vector<double>& u) { return detail::torus_sub(detail::conjugated_translation(f, finv, x, u), t); };
  const auto lhs = d(detail::torus_add(z, w));
  const auto rhs = detail::torus_add(d(z), d(w));
  double worst = 0.0;
  for (std::size_t i = 0; i < lhs.size(); ++i) worst = std::max(worst, circle_distance(lhs[i], rhs[i]));
  return worst;
}

inline double conjugation_defect(const MapSpec& f, const std::vector<double>& x, const std::vector<double>& z,
                                 const std::vector<double>& w) {
  detail::require_torus(f);
  return conjugation_defect(f, invert(f), x, z, w);
}

/// Necessary condition for f in E_G(AF(T^n)): every conjugate f L_x f^{-1}
/// must be affine. MEMBER-CONSISTENT when all defects are within tol,
/// NON-MEMBER when one exceeds 2 tol.
inline MembershipReport affine_conjugation_test(const MapSpec& f, std::size_t x_samples = 64,
                                                std::size_t pair_samples = 256, double tol = 1e-6,
                                                std::uint64_t seed = 0xC0FFEE, unsigned threads = 1) {
  detail::require_torus(f);
  if (x_samples == 0 || pair_samples == 0) throw Error(ErrorCode::EmptyRequest, "need at least one sample");
  const MapSpec finv = invert(f);
  const GroupSpec& g = f.domain();
  const std::uint64_t pair_seed = rng::mix64(seed ^ 0x7061697273ULL);

  MembershipReport rep;
  rep.map_description = f.describe();
  rep.group = g.describe();
  rep.x_samples = x_samples;
  rep.pair_samples = pair_samples;
  rep.seed = seed;
  rep.tol = tol;
  rep.defects.assign(x_samples, 0.0);
  parallel_for(x_samples, threads, [&](std::size_t i) {
    const auto x = haar_sample_at(g, seed, i).coords();
    double worst = 0.0;
    for (std::size_t j = 0; j < pair_samples; ++j) {
      const auto z = haar_sample_at(g, pair_seed, 2 * j).coords();
      const auto w = haar_sample_at(g, pair_seed, 2 * j + 1).coords();
      worst = std::max(worst, conjugation_defect(f, finv, x, z, w));
    }
    rep.defects[i] = worst;
  });
  rep.max_defect = *std::max_element(rep.defects.begin(), rep.defects.end());
  rep.verdict = rep.max_defect <= tol       ? Membership::MemberConsistent
                : rep.max_defect > 2 * tol ? Membership::NonMember
                                           : Membership::Inconclusive;
  return rep;
}

struct CocycleReport {
  std::string map_description;
  std::string h;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  double tol = 0.0;
  double identity_defect = 0.0;
  double defect1 = 0.0;  // f(xz) against f(x) phi_x(f(z))
  double defect2 = 0.0;  // phi_x phi_y against phi_xy
  bool pass = false;
};

/// phi_x(z) = h(x) z h(x)^{-1}
inline Element conjugation_cocycle(const GroupSpec& g, const EndoSpec& h, const Element& x, const Element& z) {
  const Element hx = h.apply(g, x);
  return detail::op_unchecked(g, detail::op_unchecked(g, hx, z), detail::inv_unchecked(g, hx));
}

/// Checks f(xz) = f(x) phi_x(f(z)) and phi_x phi_y = phi_xy at sampled points.
inline CocycleReport cocycle_check(const MapSpec& f, const EndoSpec& h, std::size_t samples = 1000, double tol = 1e-8,
                                   std::uint64_t seed = 0xC0FFEE) {
  if (samples == 0) throw Error(ErrorCode::EmptyRequest, "need at least one sample");
  const GroupSpec& g = f.domain();
  CocycleReport rep;
  rep.map_description = f.describe();
  rep.h = h.describe();
  rep.samples = samples;
  rep.seed = seed;
  rep.tol = tol;
  const Element e = identity(g);
  rep.identity_defect = distance(g, eval(f, e), e);
  if (rep.identity_defect > tol)
    throw Error(ErrorCode::IdentityNotFixed, f.describe() + " does not fix the identity", rep.identity_defect);

  for (std::size_t i = 0; i < samples; ++i) {
    const Element x = haar_sample_at(g, seed, 3 * i);
    const Element y = haar_sample_at(g, seed, 3 * i + 1);
    const Element z = haar_sample_at(g, seed, 3 * i + 2);
    const Element lhs = eval(f, detail::op_unchecked(g, x, z));
    const Element rhs = detail::op_unchecked(g, eval(f, x), conjugation_cocycle(g, h, x, eval(f, z)));
    rep.defect1 = std::max(rep.defect1, distance(g, lhs, rhs));
    const Element nested = conjugation_cocycle(g, h, x, conjugation_cocycle(g, h, y, z));
    const Element joint = conjugation_cocycle(g, h, detail::op_unchecked(g, x, y), z);
    rep.defect2 = std::max(rep.defect2, distance(g, nested, joint));
  }
  rep.pass = rep.defect1 <= tol && rep.defect2 <= tol;
  return rep;
}

struct NonaffineWitness {
  Eigen::Matrix3d b1;
  Eigen::Matrix3d b2;
  double defect = 0.0;
};

namespace detail {

inline void require_so3_pair(const GroupSpec& g) {
  const auto* p = g.get_if<ProductGroup>();
  if (!p || p->factors.size() != 2 || !p->factors[0].is<SO3Group>() || !p->factors[1].is<SO3Group>())
    throw Error(ErrorCode::TypeMismatch, "map must act on so3 x so3");
}

inline double frobenius_pair(const Element& a, const Element& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < 2; ++i) s += (a.items()[i].matrix() - b.items()[i].matrix()).squaredNorm();
  return std::sqrt(s);
}

}  // namespace detail

/// ||f((E,B1)(E,B2)) - f(E,B1) f(E,B2)||_F; zero whenever f is an automorphism.
inline double nonaffine_defect(const MapSpec& f, const Eigen::Matrix3d& b1, const Eigen::Matrix3d& b2) {
  detail::require_so3_pair(f.domain());
  const GroupSpec& g = f.domain();
  const Element e = make_rotation_unchecked(Eigen::Matrix3d::Identity());
  const Element x = Element::tuple({e, Element::rotation(b1)});
  const Element y = Element::tuple({e, Element::rotation(b2)});
  return detail::frobenius_pair(eval(f, detail::op_unchecked(g, x, y)),
                                detail::op_unchecked(g, eval(f, x), eval(f, y)));
}

/// First sampled pair whose defect exceeds 0.1; a map fixing the identity
/// with such a pair is not affine.
inline std::optional<NonaffineWitness> nonaffine_witness(const MapSpec& f, std::size_t trials = 1000,
                                                         std::uint64_t seed = 0xC0FFEE) {
  detail::require_so3_pair(f.domain());
  const GroupSpec& g = f.domain();
  const Element e = identity(g);
  const double drift = distance(g, eval(f, e), e);
  if (drift > 1e-9) throw Error(ErrorCode::IdentityNotFixed, f.describe() + " does not fix the identity", drift);
  const GroupSpec so3 = GroupSpec::so3();
  for (std::size_t i = 0; i < trials; ++i) {
    const auto b1 = haar_sample_at(so3, seed, 2 * i).matrix();
    const auto b2 = haar_sample_at(so3, seed, 2 * i + 1).matrix();
    const double d = nonaffine_defect(f, b1, b2);
    if (d > 0.1) return NonaffineWitness{b1, b2, d};
  }
  return std::nullopt;
}

}  // namespace haarlab
