#pragma once

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "haarlab/error.hpp"
#include "haarlab/group.hpp"
#include "haarlab/maps.hpp"
#include "haarlab/parallel.hpp"

namespace haarlab {

// ---------------------------------------------------------------------------
// Test functions with Haar integral zero

namespace tests {

struct One {
  bool operator==(const One&) const = default;
};
/// x -> e^{2 pi i k.x}
struct TorusCharacter {
  std::vector<std::int64_t> k;
  bool operator==(const TorusCharacter&) const = default;
};
/// v -> e^{2 pi i k v / m}
struct CyclicCharacter {
  std::int64_t k = 1;
  bool operator==(const CyclicCharacter&) const = default;
};
struct SO3Coefficient {
  enum class Kind { Entry, Trace, TraceSqMinusOne };
  Kind kind = Kind::Trace;
  int i = 0;
  int j = 0;
  bool operator==(const SO3Coefficient&) const = default;
};
/// (y, t) -> e^{2 pi i k y} or e^{2 pi i k y} t
struct CircleAffineCharacter {
  std::int64_t k = 0;
  bool with_sign = false;
  bool operator==(const CircleAffineCharacter&) const = default;
};

}  // namespace tests

using LeafTest =
    std::variant<tests::One, tests::TorusCharacter, tests::CyclicCharacter, tests::SO3Coefficient, tests::CircleAffineCharacter>;

inline std::string leaf_test_id(const LeafTest& t) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, tests::One>) {
          return "1";
        } else if constexpr (std::is_same_v<T, tests::TorusCharacter>) {
          std::string s = "k=[";
          for (std::size_t i = 0; i < v.k.size(); ++i) s += (i ? "," : "") + std::to_string(v.k[i]);
          return s + "]";
        } else if constexpr (std::is_same_v<T, tests::CyclicCharacter>) {
          return "k=" + std::to_string(v.k);
        } else if constexpr (std::is_same_v<T, tests::SO3Coefficient>) {
          if (v.kind == tests::SO3Coefficient::Kind::Entry)
            return "a" + std::to_string(v.i) + std::to_string(v.j);
          return v.kind == tests::SO3Coefficient::Kind::Trace ? "tr" : "tr^2-1";
        } else {
          return "k=" + std::to_string(v.k) + (v.with_sign ? "*t" : "");
        }
      },
      t);
}

/// Haar L2 norm of a leaf test. For SO(3): E[a_ij^2] = 1/3, E[tr^2] = 1,
/// E[tr^4] = 3 so E[(tr^2 - 1)^2] = 2.
inline double leaf_l2_norm(const LeafTest& t) {
  if (const auto* c = std::get_if<tests::SO3Coefficient>(&t)) {
    switch (c->kind) {
      case tests::SO3Coefficient::Kind::Entry: return 1.0 / std::sqrt(3.0);
      case tests::SO3Coefficient::Kind::Trace: return 1.0;
      case tests::SO3Coefficient::Kind::TraceSqMinusOne: return std::sqrt(2.0);
    }
  }
  return 1.0;
}

/// Product of one leaf test per leaf factor of the domain.
struct TestFunction {
  std::vector<LeafTest> leaves;

  std::string id() const {
    std::string s;
    bool first = true;
    for (const auto& l : leaves) {
      if (leaves.size() > 1 && std::holds_alternative<tests::One>(l)) continue;
      if (!first) s += " * ";
      s += leaf_test_id(l);
      first = false;
    }
    return s;
  }
  double l2_norm() const {
    double n = 1.0;
    for (const auto& l : leaves) n *= leaf_l2_norm(l);
    return n;
  }
  bool operator==(const TestFunction&) const = default;
};

namespace detail {

inline std::vector<LeafTest> leaf_family(const GroupSpec& leaf, int max_freq) {
  std::vector<LeafTest> out;
  if (const auto* t = leaf.get_if<TorusGroup>()) {
    std::vector<std::int64_t> k(static_cast<std::size_t>(t->n), -max_freq);
    for (;;) {
      bool zero = true;
      for (auto v : k) zero = zero && v == 0;
      if (!zero) out.push_back(tests::TorusCharacter{k});
      int j = t->n - 1;
      while (j >= 0 && k[static_cast<std::size_t>(j)] == max_freq) k[static_cast<std::size_t>(j--)] = -max_freq;
      if (j < 0) break;
      ++k[static_cast<std::size_t>(j)];
    }
  } else if (const auto* c = leaf.get_if<CyclicGroup>()) {
    for (std::int64_t k = 1; k < c->m; ++k) out.push_back(tests::CyclicCharacter{k});
  } else if (leaf.is<SO3Group>()) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out.push_back(tests::SO3Coefficient{tests::SO3Coefficient::Kind::Entry, i, j});
    out.push_back(tests::SO3Coefficient{tests::SO3Coefficient::Kind::Trace});
    out.push_back(tests::SO3Coefficient{tests::SO3Coefficient::Kind::TraceSqMinusOne});
  } else if (leaf.is<CircleAffineGroup>()) {
    for (std::int64_t k = -max_freq; k <= max_freq; ++k)
      for (bool s : {false, true})
        if (k != 0 || s) out.push_back(tests::CircleAffineCharacter{k, s});
  }
  return out;
}

}  // namespace detail

/// Non-trivial characters and matrix coefficients for every leaf, combined
/// over product factors; the all-One combination is left out.
inline std::vector<TestFunction> default_family(const GroupSpec& g, int max_freq = 5) {
  if (max_freq < 1) throw Error(ErrorCode::InvariantViolation, "max_freq must be >= 1");
  std::vector<const GroupSpec*> leaves;
  flatten_leaves(g, leaves);
  std::vector<std::vector<LeafTest>> per_leaf;
  for (const auto* l : leaves) {
    auto fam = detail::leaf_family(*l, max_freq);
    fam.insert(fam.begin(), tests::One{});
    per_leaf.push_back(std::move(fam));
  }
  std::vector<TestFunction> out;
  std::vector<std::size_t> idx(per_leaf.size(), 0);
  for (;;) {
    bool trivial = true;
    for (auto i : idx) trivial = trivial && i == 0;
    if (!trivial) {
      TestFunction t;
      for (std::size_t l = 0; l < idx.size(); ++l) t.leaves.push_back(per_leaf[l][idx[l]]);
      out.push_back(std::move(t));
    }
    std::size_t l = idx.size();
    while (l > 0 && idx[l - 1] + 1 == per_leaf[l - 1].size()) idx[--l] = 0;
    if (l == 0) break;
    ++idx[l - 1];
  }
  return out;
}

namespace detail {

inline bool leaf_supports(const GroupSpec& leaf, const LeafTest& t) {
  return std::visit(
      [&](const auto& v) -> bool {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, tests::One>) {
          return true;
        } else if constexpr (std::is_same_v<T, tests::TorusCharacter>) {
          const auto* g = leaf.get_if<TorusGroup>();
          return g && static_cast<int>(v.k.size()) == g->n;
        } else if constexpr (std::is_same_v<T, tests::CyclicCharacter>) {
          return leaf.is<CyclicGroup>();
        } else if constexpr (std::is_same_v<T, tests::SO3Coefficient>) {
          return leaf.is<SO3Group>() && v.i >= 0 && v.i < 3 && v.j >= 0 && v.j < 3;
        } else {
          return leaf.is<CircleAffineGroup>();
        }
      },
      t);
}

inline std::complex<double> unit_phase(double turns) {
  const double a = 2.0 * std::numbers::pi * wrap01(turns);
  return {std::cos(a), std::sin(a)};
}

inline std::complex<double> leaf_value(const GroupSpec& leaf, const Element& x, const LeafTest& t) {
  return std::visit(
      [&](const auto& v) -> std::complex<double> {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, tests::One>) {
          return 1.0;
        } else if constexpr (std::is_same_v<T, tests::TorusCharacter>) {
          double turns = 0.0;
          const auto& c = x.coords();
          for (std::size_t j = 0; j < c.size(); ++j) turns += wrap01(static_cast<double>(v.k[j]) * c[j]);
          return unit_phase(turns);
        } else if constexpr (std::is_same_v<T, tests::CyclicCharacter>) {
          const auto m = leaf.get_if<CyclicGroup>()->m;
          return unit_phase(static_cast<double>((v.k * x.as<Residue>().value) % m) / static_cast<double>(m));
        } else if constexpr (std::is_same_v<T, tests::SO3Coefficient>) {
          const auto& a = x.matrix();
          switch (v.kind) {
            case tests::SO3Coefficient::Kind::Entry: return a(v.i, v.j);
            case tests::SO3Coefficient::Kind::Trace: return a.trace();
            case tests::SO3Coefficient::Kind::TraceSqMinusOne: return a.trace() * a.trace() - 1.0;
          }
          return 0.0;
        } else {
          const auto& p = x.as<AffinePair>();
          const auto z = unit_phase(static_cast<double>(v.k) * p.y);
          return v.with_sign ? z * static_cast<double>(p.t) : z;
        }
      },
      t);
}

/// Per-leaf deduplicated tests, so each distinct leaf value is computed once per sample.
struct FamilyPlan {
  std::vector<const GroupSpec*> leaves;
  std::vector<std::vector<LeafTest>> distinct;      // per leaf
  std::vector<std::vector<std::uint32_t>> lookup;  // per test, index into distinct[leaf]

  FamilyPlan(const GroupSpec& g, const std::vector<TestFunction>& family) {
    flatten_leaves(g, leaves);
    distinct.resize(leaves.size());
    for (const auto& t : family) {
      if (t.leaves.size() != leaves.size())
        throw Error(ErrorCode::TypeMismatch, "test function '" + t.id() + "' does not match " + g.describe());
      std::vector<std::uint32_t> row(leaves.size());
      for (std::size_t l = 0; l < leaves.size(); ++l) {
        if (!leaf_supports(*leaves[l], t.leaves[l]))
          throw Error(ErrorCode::TypeMismatch, "test function '" + t.id() + "' does not match " + g.describe());
        auto& d = distinct[l];
        auto it = std::find(d.begin(), d.end(), t.leaves[l]);
        row[l] = static_cast<std::uint32_t>(it - d.begin());
        if (it == d.end()) d.push_back(t.leaves[l]);
      }
      lookup.push_back(std::move(row));
    }
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Reports

enum class Verdict { Pass, Fail, Inconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "PASS";
    case Verdict::Fail: return "FAIL";
    case Verdict::Inconclusive: return "INCONCLUSIVE";
  }
  return "?";
}

struct TestOutcome {
  std::string id;
  double statistic = 0.0;  // |empirical mean|
  double threshold = 0.0;
  bool pass = true;
};

struct ChiSquareOutcome {
  std::vector<std::int64_t> bins;  // per binned dimension
  std::int64_t total_bins = 0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  double statistic = 0.0;
  std::int64_t dof = 0;
  double critical_value = 0.0;
  bool pass = true;
};

struct VerificationReport {
  std::string map_description;
  std::string group;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  std::vector<TestOutcome> tests;
  std::optional<ChiSquareOutcome> chi_square;
  /// Largest statistic/threshold ratio over all checks.
  double worst_ratio = 0.0;
  std::string worst_check;
  Verdict verdict = Verdict::Pass;

  const TestOutcome* find(const std::string& id) const {
    for (const auto& t : tests)
      if (t.id == id) return &t;
    return nullptr;
  }

  /// PASS when every check is within threshold, FAIL when some check exceeds
  /// twice its threshold, INCONCLUSIVE in between.
  void finalize() {
    worst_ratio = 0.0;
    worst_check.clear();
    for (const auto& t : tests) {
      const double r = t.statistic / t.threshold;
      if (r > worst_ratio || worst_check.empty()) {
        worst_ratio = r;
        worst_check = t.id;
      }
    }
    if (chi_square) {
      const double r = chi_square->statistic / chi_square->critical_value;
      if (r > worst_ratio || worst_check.empty()) {
        worst_ratio = r;
        worst_check = "chi_square";
      }
    }
    verdict = worst_ratio <= 1.0 ? Verdict::Pass : worst_ratio <= 2.0 ? Verdict::Inconclusive : Verdict::Fail;
  }
};

struct VerifyOptions {
  std::size_t samples = 65536;
  std::uint64_t seed = 0xC0FFEE;
  int max_freq = 5;
  int bins = 32;
  unsigned threads = 1;
  Sampling sampling = Sampling::Uniform;
  /// Run the binned second opinion when the domain is binnable.
  bool chi_square = true;
};

/// Threshold for a test with Haar L2 norm `norm` at N samples.
inline double character_threshold(double norm, std::size_t n) { return 4.0 * norm / std::sqrt(static_cast<double>(n)); }

/// |(1/N) sum phi(f(x_i))| for each phi over Haar samples x_i.
inline VerificationReport character_test(const MapSpec& f, const std::vector<TestFunction>& family, std::size_t n,
                                         std::uint64_t seed, unsigned threads = 1,
                                         Sampling sampling = Sampling::Uniform) {
  if (has_unverified_bijection(f))
    throw Error(ErrorCode::BijectionUnverified, f.describe() + " has not been shown to be a bijection");
  if (family.empty()) throw Error(ErrorCode::EmptyFamily, "empty test family");
  if (n == 0) throw Error(ErrorCode::EmptyRequest, "character_test needs N >= 1");

  const GroupSpec& g = f.domain();
  const detail::FamilyPlan plan(g, family);
  const SamplerOptions sopts{sampling, sampling == Sampling::Lattice ? n : 0};
  const std::size_t chunks = chunk_count(n);
  const std::size_t m = family.size();

  // Per-chunk sums, reduced afterwards in chunk order.
  std::vector<std::vector<CompensatedSum>> re(chunks), im(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    auto& cr = re[c];
    auto& ci = im[c];
    cr.assign(m, {});
    ci.assign(m, {});
    std::vector<std::vector<std::complex<double>>> vals(plan.leaves.size());
    std::vector<const Element*> parts;
    const std::size_t end = std::min(n, (c + 1) * kSampleChunk);
    for (std::size_t i = c * kSampleChunk; i < end; ++i) {
      const Element y = detail::eval_node(f, haar_sample_at(g, seed, i, sopts));
      parts.clear();
      flatten_leaves(y, parts);
      for (std::size_t l = 0; l < plan.leaves.size(); ++l) {
        vals[l].resize(plan.distinct[l].size());
        for (std::size_t d = 0; d < plan.distinct[l].size(); ++d)
          vals[l][d] = detail::leaf_value(*plan.leaves[l], *parts[l], plan.distinct[l][d]);
      }
      for (std::size_t t = 0; t < m; ++t) {
        std::complex<double> v = 1.0;
        const auto& row = plan.lookup[t];
        for (std::size_t l = 0; l < row.size(); ++l) v *= vals[l][row[l]];
        cr[t].add(v.real());
        ci[t].add(v.imag());
      }
    }
  });

  VerificationReport report;
  report.map_description = f.describe();
  report.group = g.describe();
  report.samples = n;
  report.seed = seed;
  report.tests.reserve(m);
  for (std::size_t t = 0; t < m; ++t) {
    CompensatedSum sr, si;
    for (std::size_t c = 0; c < chunks; ++c) {
      sr.add(re[c][t].value());
      si.add(im[c][t].value());
    }
    TestOutcome o;
    o.id = family[t].id();
    o.statistic = std::hypot(sr.value(), si.value()) / static_cast<double>(n);
    o.threshold = character_threshold(family[t].l2_norm(), n);
    o.pass = o.statistic <= o.threshold;
    report.tests.push_back(std::move(o));
  }
  report.finalize();
  return report;
}

namespace detail {

struct Binning {
  std::vector<std::int64_t> dims;
  std::int64_t total = 1;
};

inline Binning binning_for(const GroupSpec& g, int bins) {
  if (bins < 1) throw Error(ErrorCode::InvariantViolation, "bins must be >= 1");
  std::vector<const GroupSpec*> leaves;
  flatten_leaves(g, leaves);
  Binning b;
  int continuous = 0;
  for (const auto* l : leaves) {
    if (const auto* t = l->get_if<TorusGroup>()) {
      continuous += t->n;
      for (int j = 0; j < t->n; ++j) b.dims.push_back(bins);
    } else if (const auto* c = l->get_if<CyclicGroup>()) {
      b.dims.push_back(c->m);
    } else if (l->is<CircleAffineGroup>()) {
      ++continuous;
      b.dims.push_back(bins);
      b.dims.push_back(2);
    } else {
      throw Error(ErrorCode::UnbinnableDomain, g.describe() + " has an SO(3) factor and cannot be binned");
    }
  }
  if (continuous > 3) throw Error(ErrorCode::UnbinnableDomain, g.describe() + " has more than 3 continuous dimensions");
  for (auto d : b.dims) {
    if (b.total > (std::int64_t{1} << 40) / d) throw Error(ErrorCode::UnbinnableDomain, "too many bins");
    b.total *= d;
  }
  return b;
}

inline std::int64_t bin_of(const std::vector<const GroupSpec*>& leaves, const Element& y, int bins) {
  std::vector<const Element*> parts;
  flatten_leaves(y, parts);
  std::int64_t idx = 0;
  auto push = [&](std::int64_t v, std::int64_t radix) { idx = idx * radix + v; };
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    if (leaves[l]->is<TorusGroup>()) {
      for (double c : parts[l]->coords()) push(std::min<std::int64_t>(bins - 1, static_cast<std::int64_t>(c * bins)), bins);
    } else if (const auto* c = leaves[l]->get_if<CyclicGroup>()) {
      push(parts[l]->as<Residue>().value, c->m);
    } else {
      const auto& p = parts[l]->as<AffinePair>();
      push(std::min<std::int64_t>(bins - 1, static_cast<std::int64_t>(p.y * bins)), bins);
      push(p.t < 0 ? 1 : 0, 2);
    }
  }
  return idx;
}

}  // namespace detail

inline bool is_binnable(const GroupSpec& g, int bins = 32) {
  try {
    detail::binning_for(g, bins);
    return true;
  } catch (const Error&) {
    return false;
  }
}

/// Pearson goodness-of-fit of the pushforward against the uniform histogram,
/// at significance 1e-4.
inline ChiSquareOutcome chi_square_test(const MapSpec& f, int bins, std::size_t n, std::uint64_t seed,
                                        unsigned threads = 1) {
  if (has_unverified_bijection(f))
    throw Error(ErrorCode::BijectionUnverified, f.describe() + " has not been shown to be a bijection");
  const GroupSpec& g = f.domain();
  const auto b = detail::binning_for(g, bins);
  if (static_cast<double>(n) < 10.0 * static_cast<double>(b.total))
    throw Error(ErrorCode::UndersampledBins,
                std::to_string(n) + " samples for " + std::to_string(b.total) + " bins; need at least 10 per bin",
                static_cast<double>(n) / static_cast<double>(b.total));
  std::vector<const GroupSpec*> leaves;
  flatten_leaves(g, leaves);

  std::vector<std::uint32_t> idx(n);
  parallel_for(chunk_count(n), threads, [&](std::size_t c) {
    const std::size_t end = std::min(n, (c + 1) * kSampleChunk);
    for (std::size_t i = c * kSampleChunk; i < end; ++i)
      idx[i] = static_cast<std::uint32_t>(detail::bin_of(leaves, detail::eval_node(f, haar_sample_at(g, seed, i)), bins));
  });
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(b.total), 0);
  for (auto i : idx) ++counts[i];

  const double expected = static_cast<double>(n) / static_cast<double>(b.total);
  CompensatedSum stat;
  for (auto c : counts) {
    const double d = static_cast<double>(c) - expected;
    stat.add(d * d / expected);
  }
  ChiSquareOutcome out;
  out.bins = b.dims;
  out.total_bins = b.total;
  out.samples = n;
  out.seed = seed;
  out.statistic = stat.value();
  out.dof = b.total - 1;
  if (out.dof < 1) throw Error(ErrorCode::UnbinnableDomain, "a single bin carries no information");
  boost::math::chi_squared dist(static_cast<double>(out.dof));
  out.critical_value = boost::math::quantile(boost::math::complement(dist, 1e-4));
  out.pass = out.statistic <= out.critical_value;
  return out;
}

/// Seed for the binned check, kept independent of the character-test stream.
inline std::uint64_t chi_square_seed(std::uint64_t seed) { return rng::mix64(seed ^ 0x63686932ULL); }

/// Default family character test plus, on binnable domains, the chi-square check.
inline VerificationReport verify_map(const MapSpec& f, const VerifyOptions& opts = {}) {
  auto report =
      character_test(f, default_family(f.domain(), opts.max_freq), opts.samples, opts.seed, opts.threads, opts.sampling);
  if (opts.chi_square && is_binnable(f.domain(), opts.bins)) {
    const auto b = detail::binning_for(f.domain(), opts.bins);
    const auto n = std::max<std::size_t>(opts.samples, static_cast<std::size_t>(10 * b.total));
    report.chi_square = chi_square_test(f, opts.bins, n, chi_square_seed(opts.seed), opts.threads);
    report.finalize();
  }
  return report;
}

}  // namespace haarlab
