#pragma once

#include <algorithm>
#include <boost/rational.hpp>
#include <cstdint>
#include <iterator>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "haarlab/error.hpp"
#include "haarlab/parallel.hpp"
#include "haarlab/rng.hpp"

namespace haarlab {

/// Cayley table of a finite group on indices 0..m-1.
class FiniteGroupTable {
 public:
  /// Validates the Latin-square property, the identity, inverses and
  /// associativity (exhaustively).
  static FiniteGroupTable from_rows(std::vector<std::vector<int>> rows, std::string name = "table") {
    const int m = static_cast<int>(rows.size());
    if (m < 1) throw Error(ErrorCode::InvariantViolation, "Cayley table is empty");
    for (const auto& r : rows) {
      if (static_cast<int>(r.size()) != m) throw Error(ErrorCode::InvariantViolation, "Cayley table is not square");
      for (int v : r)
        if (v < 0 || v >= m) throw Error(ErrorCode::InvariantViolation, "Cayley table entry out of range");
    }
    for (int i = 0; i < m; ++i) {
      std::vector<char> row_seen(static_cast<std::size_t>(m), 0), col_seen(static_cast<std::size_t>(m), 0);
      for (int j = 0; j < m; ++j) {
        row_seen[static_cast<std::size_t>(rows[i][j])] = 1;
        col_seen[static_cast<std::size_t>(rows[j][i])] = 1;
      }
      for (int v = 0; v < m; ++v)
        if (!row_seen[static_cast<std::size_t>(v)] || !col_seen[static_cast<std::size_t>(v)])
          throw Error(ErrorCode::InvariantViolation, "Cayley table is not a Latin square");
    }
    int e = -1;
    for (int i = 0; i < m && e < 0; ++i) {
      bool ok = true;
      for (int j = 0; j < m && ok; ++j) ok = rows[i][j] == j && rows[j][i] == j;
      if (ok) e = i;
    }
    if (e < 0) throw Error(ErrorCode::InvariantViolation, "Cayley table has no identity");
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        for (int c = 0; c < m; ++c)
          if (rows[rows[a][b]][c] != rows[a][rows[b][c]])
            throw Error(ErrorCode::InvariantViolation, "Cayley table is not associative");
    FiniteGroupTable t;
    t.m_ = m;
    t.e_ = e;
    t.name_ = std::move(name);
    t.flat_.reserve(static_cast<std::size_t>(m * m));
    for (const auto& r : rows) t.flat_.insert(t.flat_.end(), r.begin(), r.end());
    t.inv_.assign(static_cast<std::size_t>(m), 0);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        if (rows[a][b] == e) t.inv_[static_cast<std::size_t>(a)] = b;
    return t;
  }

  static FiniteGroupTable cyclic(int m) {
    if (m < 1) throw Error(ErrorCode::InvariantViolation, "cyclic order must be >= 1");
    std::vector<std::vector<int>> rows(static_cast<std::size_t>(m), std::vector<int>(static_cast<std::size_t>(m)));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) rows[i][j] = (i + j) % m;
    return from_rows(std::move(rows), "cyclic(" + std::to_string(m) + ")");
  }

  /// Permutations of {0,1,2} in lexicographic order, (p q)(i) = p(q(i)).
  static FiniteGroupTable s3() {
    std::vector<std::vector<int>> perms;
    std::vector<int> p{0, 1, 2};
    do perms.push_back(p);
    while (std::next_permutation(p.begin(), p.end()));
    std::vector<std::vector<int>> rows(6, std::vector<int>(6));
    for (int a = 0; a < 6; ++a)
      for (int b = 0; b < 6; ++b) {
        std::vector<int> c(3);
        for (int i = 0; i < 3; ++i) c[i] = perms[a][perms[b][i]];
        rows[a][b] = static_cast<int>(std::find(perms.begin(), perms.end(), c) - perms.begin());
      }
    return from_rows(std::move(rows), "s3");
  }

  /// Z/2 x Z/2 as bitwise xor on {0,1,2,3}.
  static FiniteGroupTable klein() {
    std::vector<std::vector<int>> rows(4, std::vector<int>(4));
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) rows[a][b] = a ^ b;
    return from_rows(std::move(rows), "klein");
  }

  int order() const noexcept { return m_; }
  int identity() const noexcept { return e_; }
  int mul(int a, int b) const noexcept { return flat_[static_cast<std::size_t>(a * m_ + b)]; }
  int inverse(int a) const noexcept { return inv_[static_cast<std::size_t>(a)]; }
  const std::string& name() const noexcept { return name_; }

  std::vector<std::vector<int>> rows() const {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(m_));
    for (int i = 0; i < m_; ++i) out[i].assign(flat_.begin() + i * m_, flat_.begin() + (i + 1) * m_);
    return out;
  }

  bool operator==(const FiniteGroupTable& o) const { return flat_ == o.flat_; }

 private:
  FiniteGroupTable() = default;
  int m_ = 0;
  int e_ = 0;
  std::string name_;
  std::vector<int> flat_;
  std::vector<int> inv_;
};

/// A bijection of {0..m-1}, stored as its image array.
struct PermutationMap {
  std::vector<int> image;

  static PermutationMap identity(int m) {
    PermutationMap p;
    p.image.resize(static_cast<std::size_t>(m));
    std::iota(p.image.begin(), p.image.end(), 0);
    return p;
  }
  static PermutationMap from_image(std::vector<int> image) {
    std::vector<char> seen(image.size(), 0);
    for (int v : image) {
      if (v < 0 || v >= static_cast<int>(image.size()) || seen[static_cast<std::size_t>(v)])
        throw Error(ErrorCode::InvariantViolation, "image array is not a permutation");
      seen[static_cast<std::size_t>(v)] = 1;
    }
    return PermutationMap{std::move(image)};
  }

  int order() const noexcept { return static_cast<int>(image.size()); }
  int operator()(int x) const noexcept { return image[static_cast<std::size_t>(x)]; }

  PermutationMap inverse() const {
    PermutationMap r;
    r.image.resize(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) r.image[static_cast<std::size_t>(image[i])] = static_cast<int>(i);
    return r;
  }

  auto operator<=>(const PermutationMap&) const = default;
};

/// f o g
inline PermutationMap compose(const PermutationMap& f, const PermutationMap& g) {
  PermutationMap r;
  r.image.resize(g.image.size());
  for (std::size_t i = 0; i < g.image.size(); ++i) r.image[i] = f(g.image[i]);
  return r;
}

/// Sorted, deduplicated set of permutations.
class MapSet {
 public:
  enum class Tag { Translations, Automorphisms, Affine, Custom };

  MapSet() = default;
  MapSet(std::vector<PermutationMap> maps, Tag tag = Tag::Custom) : tag_(tag), maps_(std::move(maps)) {
    std::sort(maps_.begin(), maps_.end());
    maps_.erase(std::unique(maps_.begin(), maps_.end()), maps_.end());
  }

  Tag tag() const noexcept { return tag_; }
  std::size_t size() const noexcept { return maps_.size(); }
  bool empty() const noexcept { return maps_.empty(); }
  const std::vector<PermutationMap>& maps() const noexcept { return maps_; }
  auto begin() const { return maps_.begin(); }
  auto end() const { return maps_.end(); }

  bool contains(const PermutationMap& p) const { return std::binary_search(maps_.begin(), maps_.end(), p); }
  bool subset_of(const MapSet& other) const {
    return std::includes(other.maps_.begin(), other.maps_.end(), maps_.begin(), maps_.end());
  }
  /// Elements of this set missing from `other`.
  std::vector<PermutationMap> minus(const MapSet& other) const {
    std::vector<PermutationMap> out;
    std::set_difference(maps_.begin(), maps_.end(), other.maps_.begin(), other.maps_.end(), std::back_inserter(out));
    return out;
  }

  /// Set equality; tags are ignored.
  bool operator==(const MapSet& o) const { return maps_ == o.maps_; }

 private:
  Tag tag_ = Tag::Custom;
  std::vector<PermutationMap> maps_;
};

inline const char* to_string(MapSet::Tag t) {
  switch (t) {
    case MapSet::Tag::Translations: return "translations";
    case MapSet::Tag::Automorphisms: return "automorphisms";
    case MapSet::Tag::Affine: return "affine";
    case MapSet::Tag::Custom: return "custom";
  }
  return "?";
}

/// Left translations L_a(x) = a x.
inline MapSet translations(const FiniteGroupTable& t) {
  std::vector<PermutationMap> out;
  for (int a = 0; a < t.order(); ++a) {
    PermutationMap p;
    for (int x = 0; x < t.order(); ++x) p.image.push_back(t.mul(a, x));
    out.push_back(std::move(p));
  }
  return MapSet(std::move(out), MapSet::Tag::Translations);
}

inline constexpr int kMaxEnumerationOrder = 8;

/// Brute force over bijections fixing the identity.
inline MapSet enumerate_automorphisms(const FiniteGroupTable& t) {
  const int m = t.order();
  if (m > kMaxEnumerationOrder)
    throw Error(ErrorCode::OrderTooLarge, "automorphism enumeration is limited to order " +
                                              std::to_string(kMaxEnumerationOrder), m);
  std::vector<int> rest;
  for (int x = 0; x < m; ++x)
    if (x != t.identity()) rest.push_back(x);
  std::vector<PermutationMap> out;
  do {
    PermutationMap f;
    f.image.assign(static_cast<std::size_t>(m), 0);
    f.image[static_cast<std::size_t>(t.identity())] = t.identity();
    std::size_t k = 0;
    for (int x = 0; x < m; ++x)
      if (x != t.identity()) f.image[static_cast<std::size_t>(x)] = rest[k++];
    bool hom = true;
    for (int a = 0; a < m && hom; ++a)
      for (int b = 0; b < m && hom; ++b) hom = f(t.mul(a, b)) == t.mul(f(a), f(b));
    if (hom) out.push_back(std::move(f));
  } while (std::next_permutation(rest.begin(), rest.end()));
  return MapSet(std::move(out), MapSet::Tag::Automorphisms);
}

/// AF(G) = { L_a o phi }.
inline MapSet affine_set(const FiniteGroupTable& t) {
  const auto autos = enumerate_automorphisms(t);
  const auto trans = translations(t);
  std::vector<PermutationMap> out;
  for (const auto& l : trans)
    for (const auto& phi : autos) out.push_back(compose(l, phi));
  MapSet s(std::move(out), MapSet::Tag::Affine);
  if (s.size() != trans.size() * autos.size())
    throw Error(ErrorCode::InvariantViolation, "affine maps are not pairwise distinct");
  return s;
}

namespace detail {

inline std::uint64_t factorial(int m) {
  std::uint64_t f = 1;
  for (int i = 2; i <= m; ++i) f *= static_cast<std::uint64_t>(i);
  return f;
}

/// The rank-th permutation of {0..m-1} in lexicographic order.
inline std::vector<int> unrank_permutation(std::uint64_t rank, int m) {
  std::vector<int> pool(static_cast<std::size_t>(m));
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<int> out;
  for (int i = m; i >= 1; --i) {
    const std::uint64_t f = factorial(i - 1);
    const auto k = static_cast<std::size_t>(rank / f);
    rank %= f;
    out.push_back(pool[k]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

}  // namespace detail

/// E_K(P) = { f : for every k in K, f k f^{-1} is in P }, by exhaustive
/// enumeration of all m! bijections.
inline MapSet normalizer_exact(const FiniteGroupTable& t, const MapSet& k, const MapSet& p,
                               int search_bound = kMaxEnumerationOrder, unsigned threads = 1) {
  const int m = t.order();
  if (m > search_bound || m > kMaxEnumerationOrder)
    throw Error(ErrorCode::OrderTooLarge, "normalizer enumeration is limited to order " +
                                              std::to_string(std::min(search_bound, kMaxEnumerationOrder)), m);
  for (const auto* s : {&k, &p})
    for (const auto& f : *s)
      if (f.order() != m) throw Error(ErrorCode::TypeMismatch, "map set does not act on the table's elements");

  const std::uint64_t total = detail::factorial(m);
  const std::size_t chunk = 4096;
  const std::size_t chunks = chunk_count(static_cast<std::size_t>(total), chunk);
  std::vector<std::vector<PermutationMap>> found(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::uint64_t begin = c * chunk;
    const std::uint64_t end = std::min<std::uint64_t>(total, begin + chunk);
    PermutationMap f{detail::unrank_permutation(begin, m)};
    PermutationMap conj;
    conj.image.resize(static_cast<std::size_t>(m));
    for (std::uint64_t r = begin; r < end; ++r) {
      const auto finv = f.inverse();
      bool ok = true;
      for (const auto& kk : k) {
        for (int x = 0; x < m; ++x) conj.image[static_cast<std::size_t>(x)] = f(kk(finv(x)));
        if (!p.contains(conj)) {
          ok = false;
          break;
        }
      }
      if (ok) found[c].push_back(f);
      std::next_permutation(f.image.begin(), f.image.end());
    }
  });
  std::vector<PermutationMap> all;
  for (auto& v : found) all.insert(all.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  return MapSet(std::move(all));
}

/// Translations, AF(G), N(AF(G)) and E_G(AF(G)) with the equalities between them.
struct FiniteChain {
  MapSet translations;
  MapSet automorphisms;
  MapSet affine;
  MapSet normalizer_of_translations;  // E_{Trans}(Trans) = N({L_x})
  MapSet normalizer_of_affine;        // N(AF) = E_{AF}(AF)
  MapSet translation_normalizer;      // E_G(AF) = E_{Trans}(AF)

  bool chain_holds() const {
    return translations.subset_of(affine) && affine.subset_of(normalizer_of_affine) &&
           normalizer_of_affine.subset_of(translation_normalizer);
  }
  bool affine_is_translation_normalizer() const { return affine == normalizer_of_translations; }
  bool all_equal() const { return affine == normalizer_of_affine && affine == translation_normalizer; }
};

inline FiniteChain finite_chain(const FiniteGroupTable& t, unsigned threads = 1) {
  FiniteChain c;
  c.translations = translations(t);
  c.automorphisms = enumerate_automorphisms(t);
  c.affine = affine_set(t);
  c.normalizer_of_translations = normalizer_exact(t, c.translations, c.translations, kMaxEnumerationOrder, threads);
  c.normalizer_of_affine = normalizer_exact(t, c.affine, c.affine, kMaxEnumerationOrder, threads);
  c.translation_normalizer = normalizer_exact(t, c.translations, c.affine, kMaxEnumerationOrder, threads);
  return c;
}

// ---------------------------------------------------------------------------
// Invariant measures

using Rational = boost::rational<std::int64_t>;

struct InvariantMeasureResult {
  bool unique = false;
  /// Dimension of the space of K-invariant signed measures.
  int invariant_dimension = 0;
  std::vector<Rational> measure;  // set when unique
  std::vector<Rational> witness_a, witness_b;  // set when not unique
};

/// mu(k(x)) = mu(x) for every k in K and every point x.
inline bool is_invariant(const MapSet& k, const std::vector<Rational>& mu) {
  for (const auto& f : k)
    for (int x = 0; x < f.order(); ++x)
      if (mu[static_cast<std::size_t>(f(x))] != mu[static_cast<std::size_t>(x)]) return false;
  return true;
}

namespace detail {

/// Rank over Q by Gaussian elimination.
inline int rational_rank(std::vector<std::vector<Rational>> a) {
  if (a.empty()) return 0;
  const std::size_t cols = a[0].size();
  int rank = 0;
  for (std::size_t c = 0; c < cols && rank < static_cast<int>(a.size()); ++c) {
    std::size_t piv = static_cast<std::size_t>(rank);
    while (piv < a.size() && a[piv][c].numerator() == 0) ++piv;
    if (piv == a.size()) continue;
    std::swap(a[piv], a[static_cast<std::size_t>(rank)]);
    const auto& pr = a[static_cast<std::size_t>(rank)];
    for (std::size_t r = 0; r < a.size(); ++r) {
      if (r == static_cast<std::size_t>(rank) || a[r][c].numerator() == 0) continue;
      const Rational f = a[r][c] / pr[c];
      for (std::size_t j = c; j < cols; ++j) a[r][j] -= f * pr[j];
    }
    ++rank;
  }
  return rank;
}

}  // namespace detail

/// Solves mu o k = mu for all k in K over the rationals. Invariant measures are
/// exactly the functions constant on orbits of the group K generates, so the
/// solution is unique iff there is one orbit. Witnesses are the uniform
/// measures on the orbit of the identity and on the next orbit.
inline InvariantMeasureResult invariant_measure_unique(const FiniteGroupTable& t, const MapSet& k) {
  const int m = t.order();
  std::vector<std::vector<Rational>> rows;
  for (const auto& f : k) {
    if (f.order() != m) throw Error(ErrorCode::TypeMismatch, "map set does not act on the table's elements");
    for (int x = 0; x < m; ++x) {
      if (f(x) == x) continue;
      std::vector<Rational> r(static_cast<std::size_t>(m), Rational(0));
      r[static_cast<std::size_t>(f(x))] += 1;
      r[static_cast<std::size_t>(x)] -= 1;
      rows.push_back(std::move(r));
    }
  }
  InvariantMeasureResult res;
  res.invariant_dimension = m - detail::rational_rank(std::move(rows));

  std::vector<int> parent(static_cast<std::size_t>(m));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
    return x;
  };
  for (const auto& f : k)
    for (int x = 0; x < m; ++x) parent[static_cast<std::size_t>(find(x))] = find(f(x));
  int orbits = 0;
  for (int x = 0; x < m; ++x) orbits += find(x) == x;
  if (orbits != res.invariant_dimension)
    throw Error(ErrorCode::InvariantViolation, "orbit count disagrees with the rank computation");

  auto uniform_on = [&](int root) {
    std::vector<Rational> mu(static_cast<std::size_t>(m), Rational(0));
    std::int64_t size = 0;
    for (int x = 0; x < m; ++x) size += find(x) == root;
    for (int x = 0; x < m; ++x)
      if (find(x) == root) mu[static_cast<std::size_t>(x)] = Rational(1, size);
    return mu;
  };
  const int first = find(t.identity());
  if (orbits == 1) {
    res.unique = true;
    res.measure = uniform_on(first);
  } else {
    int second = -1;
    for (int x = 0; x < m && second < 0; ++x)
      if (find(x) != first) second = find(x);
    res.witness_a = uniform_on(first);
    res.witness_b = uniform_on(second);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Monotonicity and closure properties

struct PropertyCheck {
  std::string name;
  std::size_t lhs_size = 0;
  std::size_t rhs_size = 0;
  bool holds = false;
};

struct PropertyReport {
  std::vector<PropertyCheck> checks;
  bool all_hold() const {
    return std::all_of(checks.begin(), checks.end(), [](const PropertyCheck& c) { return c.holds; });
  }
};

namespace detail {

inline MapSet random_subset(const MapSet& s, std::uint64_t seed, std::uint64_t tag) {
  const auto stream = rng::CounterStream(seed).derive(tag);
  std::vector<PermutationMap> out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (stream.bits(i, 0) >> 63) out.push_back(s.maps()[i]);
  // Keeping the identity makes E_R(R) non-empty, so closure checks have content.
  out.push_back(PermutationMap::identity(s.maps().front().order()));
  return MapSet(std::move(out));
}

inline bool closed_under_composition_and_inverse(const MapSet& s) {
  for (const auto& f : s) {
    if (!s.contains(f.inverse())) return false;
    for (const auto& g : s)
      if (!s.contains(compose(f, g))) return false;
  }
  return true;
}

}  // namespace detail

/// Checks, exactly: K2 in K1 gives E_{K1}(P) in E_{K2}(P); P1 in P2 gives
/// E_K(P1) in E_K(P2); and for P in K, E_K(P) is closed under composition
/// and inverses. Candidate sets are translations, AF(G) and seeded random
/// subsets of both (each with the identity added).
inline PropertyReport monotonicity_suite(const FiniteGroupTable& t, std::uint64_t seed = 0xC0FFEE,
                                         unsigned threads = 1) {
  if (t.order() > 7) throw Error(ErrorCode::OrderTooLarge, "property suite is limited to order 7", t.order());
  const auto trans = translations(t);
  const auto aff = affine_set(t);
  const auto rt = detail::random_subset(trans, seed, 1);
  const auto ra = detail::random_subset(aff, seed, 2);
  struct Named {
    const char* name;
    const MapSet* set;
  };
  const Named T{"Trans", &trans}, A{"AF", &aff}, RT{"rand(Trans)", &rt}, RA{"rand(AF)", &ra};

  std::map<std::pair<const MapSet*, const MapSet*>, MapSet> cache;
  auto E = [&](const Named& k, const Named& p) -> const MapSet& {
    auto key = std::make_pair(k.set, p.set);
    auto it = cache.find(key);
    if (it == cache.end())
      it = cache.emplace(key, normalizer_exact(t, *k.set, *p.set, kMaxEnumerationOrder, threads)).first;
    return it->second;
  };
  auto label = [](const Named& k, const Named& p) { return std::string("E_") + k.name + "(" + p.name + ")"; };

  PropertyReport rep;
  for (const auto& [k2, k1] : {std::pair{T, A}, std::pair{RT, T}, std::pair{RA, A}})
    for (const auto& p : {T, A, RA}) {
      const auto& big = E(k2, p);
      const auto& small = E(k1, p);
      rep.checks.push_back({label(k1, p) + " <= " + label(k2, p), small.size(), big.size(), small.subset_of(big)});
    }
  for (const auto& [p1, p2] : {std::pair{T, A}, std::pair{RA, A}, std::pair{RT, T}})
    for (const auto& k : {T, RT, A}) {
      const auto& small = E(k, p1);
      const auto& big = E(k, p2);
      rep.checks.push_back({label(k, p1) + " <= " + label(k, p2), small.size(), big.size(), small.subset_of(big)});
    }
  for (const auto& [p, k] : {std::pair{T, T}, std::pair{A, A}, std::pair{T, A}, std::pair{RT, RT}, std::pair{RA, RA}}) {
    const auto& e = E(k, p);
    rep.checks.push_back({label(k, p) + " closed", e.size(), e.size(), detail::closed_under_composition_and_inverse(e)});
  }
  return rep;
}

}  // namespace haarlab
