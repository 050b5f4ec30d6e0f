#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "haarlab/circle_function.hpp"
#include "haarlab/error.hpp"
#include "haarlab/group.hpp"

namespace haarlab {

// ---------------------------------------------------------------------------
// Exact integer matrices

struct IntMatrix {
  int n = 0;
  std::vector<std::int64_t> entries;  // row-major

  static IntMatrix identity(int n) {
    IntMatrix m{n, std::vector<std::int64_t>(static_cast<std::size_t>(n * n), 0)};
    for (int i = 0; i < n; ++i) m.at(i, i) = 1;
    return m;
  }
  static IntMatrix scalar(int n, std::int64_t k) {
    IntMatrix m = identity(n);
    for (int i = 0; i < n; ++i) m.at(i, i) = k;
    return m;
  }
  static IntMatrix diagonal(const std::vector<std::int64_t>& d) {
    IntMatrix m = identity(static_cast<int>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) m.at(static_cast<int>(i), static_cast<int>(i)) = d[i];
    return m;
  }
  static IntMatrix from_rows(const std::vector<std::vector<std::int64_t>>& rows) {
    const int n = static_cast<int>(rows.size());
    IntMatrix m{n, {}};
    m.entries.reserve(static_cast<std::size_t>(n * n));
    for (const auto& r : rows) {
      if (static_cast<int>(r.size()) != n) throw Error(ErrorCode::InvariantViolation, "matrix must be square");
      m.entries.insert(m.entries.end(), r.begin(), r.end());
    }
    return m;
  }

  std::int64_t& at(int i, int j) { return entries[static_cast<std::size_t>(i * n + j)]; }
  std::int64_t at(int i, int j) const { return entries[static_cast<std::size_t>(i * n + j)]; }

  std::vector<std::vector<std::int64_t>> rows() const {
    std::vector<std::vector<std::int64_t>> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      out[static_cast<std::size_t>(i)].assign(entries.begin() + i * n, entries.begin() + (i + 1) * n);
    return out;
  }

  IntMatrix operator*(const IntMatrix& o) const {
    IntMatrix r{n, std::vector<std::int64_t>(entries.size(), 0)};
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j) r.at(i, j) += at(i, k) * o.at(k, j);
    return r;
  }
  IntMatrix operator-(const IntMatrix& o) const {
    IntMatrix r = *this;
    for (std::size_t i = 0; i < entries.size(); ++i) r.entries[i] -= o.entries[i];
    return r;
  }

  /// x -> M x (mod 1).
  std::vector<double> apply_mod1(std::span<const double> x) const {
    std::vector<double> y(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += static_cast<double>(at(i, j)) * x[static_cast<std::size_t>(j)];
      y[static_cast<std::size_t>(i)] = wrap01(s);
    }
    return y;
  }

  bool operator==(const IntMatrix&) const = default;
};

/// Exact determinant by fraction-free (Bareiss) elimination.
inline std::int64_t determinant(const IntMatrix& m) {
  const int n = m.n;
  if (n == 0) return 1;
  std::vector<__int128> a(m.entries.begin(), m.entries.end());
  auto at = [&](int i, int j) -> __int128& { return a[static_cast<std::size_t>(i * n + j)]; };
  __int128 sign = 1;
  __int128 prev = 1;
  for (int k = 0; k < n - 1; ++k) {
    if (at(k, k) == 0) {
      int pivot = -1;
      for (int i = k + 1; i < n; ++i)
        if (at(i, k) != 0) {
          pivot = i;
          break;
        }
      if (pivot < 0) return 0;
      for (int j = 0; j < n; ++j) std::swap(at(k, j), at(pivot, j));
      sign = -sign;
    }
    for (int i = k + 1; i < n; ++i)
      for (int j = k + 1; j < n; ++j) at(i, j) = (at(i, j) * at(k, k) - at(i, k) * at(k, j)) / prev;
    prev = at(k, k);
  }
  return static_cast<std::int64_t>(sign * at(n - 1, n - 1));
}

/// Inverse of a matrix with determinant +-1 (adjugate times determinant).
inline IntMatrix unimodular_inverse(const IntMatrix& m) {
  const std::int64_t det = determinant(m);
  if (det != 1 && det != -1) throw Error(ErrorCode::InvariantViolation, "matrix is not unimodular");
  const int n = m.n;
  if (n == 1) return IntMatrix{1, {det}};
  IntMatrix inv{n, std::vector<std::int64_t>(m.entries.size(), 0)};
  IntMatrix minor{n - 1, std::vector<std::int64_t>(static_cast<std::size_t>((n - 1) * (n - 1)), 0)};
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      int mi = 0;
      for (int i = 0; i < n; ++i) {
        if (i == r) continue;
        int mj = 0;
        for (int j = 0; j < n; ++j) {
          if (j == c) continue;
          minor.at(mi, mj++) = m.at(i, j);
        }
        ++mi;
      }
      const std::int64_t cof = ((r + c) % 2 ? -1 : 1) * determinant(minor);
      inv.at(c, r) = cof * det;
    }
  }
  return inv;
}

/// Multiplicative inverse of a unit modulo m.
inline std::int64_t mod_inverse(std::int64_t a, std::int64_t m) {
  std::int64_t g = m, x = 0, x1 = 1, a1 = ((a % m) + m) % m;
  while (a1 != 0) {
    const std::int64_t q = g / a1;
    std::tie(g, a1) = std::make_tuple(a1, g - q * a1);
    std::tie(x, x1) = std::make_tuple(x1, x - q * x1);
  }
  if (g != 1) throw Error(ErrorCode::InvariantViolation, "not a unit modulo m");
  return ((x % m) + m) % m;
}

/// z^k under the group law of g (negative k uses the inverse).
inline Element group_power(const GroupSpec& g, const Element& z, std::int64_t k) {
  Element base = k < 0 ? inv(g, z) : z;
  std::uint64_t e = static_cast<std::uint64_t>(k < 0 ? -k : k);
  Element result = identity(g);
  while (e) {
    if (e & 1u) result = detail::op_unchecked(g, result, base);
    e >>= 1;
    if (e) base = detail::op_unchecked(g, base, base);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Endomorphisms

class EndoSpec {
 public:
  enum class Kind {
    Identity,
    ProjectSwap,  ///< (a, b) -> (b, e) on G x G
    ProjectKeep,  ///< (a, b) -> (a, b) on G x G
    Matrix,       ///< x -> M x on T^n
    Power,        ///< z -> z^k; an endomorphism on abelian groups only
  };

  static EndoSpec identity() { return EndoSpec(Kind::Identity); }
  static EndoSpec project_swap() { return EndoSpec(Kind::ProjectSwap); }
  static EndoSpec project_keep() { return EndoSpec(Kind::ProjectKeep); }
  static EndoSpec matrix(IntMatrix m) {
    EndoSpec e(Kind::Matrix);
    e.matrix_ = std::move(m);
    return e;
  }
  static EndoSpec power(std::int64_t k) {
    EndoSpec e(Kind::Power);
    e.power_ = k;
    return e;
  }

  Kind kind() const noexcept { return kind_; }
  const IntMatrix& matrix() const noexcept { return matrix_; }
  std::int64_t power() const noexcept { return power_; }

  Element apply(const GroupSpec& g, const Element& z) const {
    require_conforms(g, z);
    switch (kind_) {
      case Kind::Identity:
        return z;
      case Kind::ProjectKeep:
      case Kind::ProjectSwap: {
        const auto* p = g.get_if<ProductGroup>();
        if (!p || p->factors.size() != 2 || !(p->factors[0] == p->factors[1]))
          throw Error(ErrorCode::TypeMismatch, "projection endomorphisms need a square product G x G");
        if (kind_ == Kind::ProjectKeep) return z;
        return Element::tuple({z.items()[1], haarlab::identity(p->factors[1])});
      }
      case Kind::Matrix: {
        const auto* t = g.get_if<TorusGroup>();
        if (!t || t->n != matrix_.n) throw Error(ErrorCode::TypeMismatch, "matrix endomorphism needs torus(n)");
        return Element::torus(matrix_.apply_mod1(z.coords()));
      }
      case Kind::Power:
        return group_power(g, z, power_);
    }
    throw Error(ErrorCode::TypeMismatch, "unknown endomorphism");
  }

  std::string describe() const {
    switch (kind_) {
      case Kind::Identity: return "identity";
      case Kind::ProjectSwap: return "project_swap";
      case Kind::ProjectKeep: return "project_keep";
      case Kind::Matrix: return "matrix";
      case Kind::Power: return "power(" + std::to_string(power_) + ")";
    }
    return "?";
  }

  bool operator==(const EndoSpec&) const = default;

 private:
  explicit EndoSpec(Kind k) : kind_(k) {}
  Kind kind_;
  IntMatrix matrix_{};
  std::int64_t power_ = 1;
};

// ---------------------------------------------------------------------------
// Map expressions

struct MapNode;

/// Immutable expression tree describing a self-map of a compact group.
class MapSpec {
 public:
  using Hook = std::function<Element(const Element&)>;

  static MapSpec identity(GroupSpec g);
  /// x -> t + M x (mod 1); M must be unimodular.
  static MapSpec affine_torus(std::vector<double> translation, IntMatrix matrix);
  /// z -> s + t z (mod m); t must be a unit.
  static MapSpec affine_cyclic(std::int64_t modulus, std::int64_t shift, std::int64_t multiplier);
  /// Left translation z -> a z.
  static MapSpec translation(GroupSpec g, Element a);
  /// (x1, ..., xn) -> (x1 + alpha, x2 + g2(x1), ..., xn + gn(x1..x_{n-1})).
  static MapSpec skew_torus(int n, double alpha, std::vector<CircleFunction> fibers);
  /// ((y, t), x) -> ((alpha + y, beta t), x + g(y)) on AF(T) x T.
  static MapSpec circle_affine_skew(double alpha, int beta, CircleFunction g);
  /// (A, B) -> (A B^T, B) on SO(3) x SO(3).
  static MapSpec swap_so3();
  /// General continuous self-map of T^n, one circle function per output
  /// coordinate. Bijectivity is not known, so it cannot be inverted.
  static MapSpec torus_trig(std::vector<CircleFunction> coords);
  /// Library-only evaluation hook; not serializable.
  static MapSpec opaque(GroupSpec g, std::string name, Hook forward, Hook inverse = {});

  static MapSpec composition(std::vector<MapSpec> maps);
  static MapSpec inverse_of(MapSpec inner);
  static MapSpec endo_quotient(GroupSpec g, EndoSpec num, EndoSpec den, bool bijection_verified);

  const GroupSpec& domain() const noexcept { return domain_; }
  const MapNode& node() const noexcept { return *node_; }
  template <class T>
  const T* as() const noexcept;

  std::string describe() const;
  bool operator==(const MapSpec& other) const;

 private:
  MapSpec(GroupSpec g, std::shared_ptr<const MapNode> node) : domain_(std::move(g)), node_(std::move(node)) {}
  GroupSpec domain_;
  std::shared_ptr<const MapNode> node_;
};

namespace nodes {

struct Identity {
  bool operator==(const Identity&) const = default;
};
struct AffineTorus {
  std::vector<double> translation;
  IntMatrix matrix;
  bool operator==(const AffineTorus&) const = default;
};
struct AffineCyclic {
  std::int64_t modulus = 1;
  std::int64_t shift = 0;
  std::int64_t multiplier = 1;
  bool operator==(const AffineCyclic&) const = default;
};
struct Translation {
  Element by;
  bool operator==(const Translation&) const = default;
};
struct SkewTorus {
  double alpha = 0.0;
  std::vector<CircleFunction> fibers;  // fibers[j] has arity j + 1
  bool operator==(const SkewTorus&) const = default;
};
struct CircleAffineSkew {
  double alpha = 0.0;
  int beta = 1;
  CircleFunction g;
  bool operator==(const CircleAffineSkew&) const = default;
};
struct EndoQuotient {
  EndoSpec num;  // g
  EndoSpec den;  // h
  bool bijection_verified = false;
  bool operator==(const EndoQuotient&) const = default;
};
struct SwapSO3 {
  bool operator==(const SwapSO3&) const = default;
};
struct TorusTrig {
  std::vector<CircleFunction> coords;
  bool operator==(const TorusTrig&) const = default;
};
struct Opaque {
  std::string name;
  MapSpec::Hook forward;
  MapSpec::Hook inverse;
  bool operator==(const Opaque& o) const { return name == o.name; }
};
struct Compose {
  std::vector<MapSpec> maps;  // maps.front() is applied last
  bool operator==(const Compose&) const = default;
};
struct Invert {
  MapSpec inner;
  bool operator==(const Invert&) const = default;
};

}  // namespace nodes

struct MapNode {
  std::variant<nodes::Identity, nodes::AffineTorus, nodes::AffineCyclic, nodes::Translation, nodes::SkewTorus,
               nodes::CircleAffineSkew, nodes::EndoQuotient, nodes::SwapSO3, nodes::TorusTrig, nodes::Opaque,
               nodes::Compose, nodes::Invert>
      v;
};

template <class T>
const T* MapSpec::as() const noexcept {
  return std::get_if<T>(&node_->v);
}

inline bool MapSpec::operator==(const MapSpec& other) const {
  return domain_ == other.domain_ && node_->v == other.node_->v;
}

inline MapSpec MapSpec::identity(GroupSpec g) {
  return MapSpec(std::move(g), std::make_shared<MapNode>(MapNode{nodes::Identity{}}));
}

inline MapSpec MapSpec::affine_torus(std::vector<double> translation, IntMatrix matrix) {
  if (matrix.n != static_cast<int>(translation.size()) || matrix.n < 1)
    throw Error(ErrorCode::InvariantViolation, "affine_torus: matrix and translation sizes differ");
  const auto det = determinant(matrix);
  if (det != 1 && det != -1)
    throw Error(ErrorCode::InvariantViolation, "affine_torus: matrix is not unimodular (det " + std::to_string(det) + ")",
                static_cast<double>(det));
  for (auto& t : translation) t = wrap01(t);
  const int n = matrix.n;
  return MapSpec(GroupSpec::torus(n),
                 std::make_shared<MapNode>(MapNode{nodes::AffineTorus{std::move(translation), std::move(matrix)}}));
}

inline MapSpec MapSpec::affine_cyclic(std::int64_t modulus, std::int64_t shift, std::int64_t multiplier) {
  if (modulus < 1) throw Error(ErrorCode::InvariantViolation, "affine_cyclic: modulus must be >= 1");
  shift = ((shift % modulus) + modulus) % modulus;
  multiplier = ((multiplier % modulus) + modulus) % modulus;
  if (std::gcd(multiplier, modulus) != 1)
    throw Error(ErrorCode::InvariantViolation, "affine_cyclic: multiplier is not coprime to the modulus");
  return MapSpec(GroupSpec::cyclic(modulus),
                 std::make_shared<MapNode>(MapNode{nodes::AffineCyclic{modulus, shift, multiplier}}));
}

inline MapSpec MapSpec::translation(GroupSpec g, Element a) {
  require_conforms(g, a);
  return MapSpec(std::move(g), std::make_shared<MapNode>(MapNode{nodes::Translation{std::move(a)}}));
}

inline MapSpec MapSpec::skew_torus(int n, double alpha, std::vector<CircleFunction> fibers) {
  if (n < 1) throw Error(ErrorCode::InvariantViolation, "skew_torus: n must be >= 1");
  if (static_cast<int>(fibers.size()) != n - 1)
    throw Error(ErrorCode::InvariantViolation, "skew_torus: expected n - 1 fibers");
  for (std::size_t j = 0; j < fibers.size(); ++j)
    if (fibers[j].arity() != static_cast<int>(j) + 1)
      throw Error(ErrorCode::InvariantViolation, "skew_torus: fiber " + std::to_string(j + 2) + " must have arity " +
                                                     std::to_string(j + 1));
  return MapSpec(GroupSpec::torus(n),
                 std::make_shared<MapNode>(MapNode{nodes::SkewTorus{wrap01(alpha), std::move(fibers)}}));
}

inline MapSpec MapSpec::circle_affine_skew(double alpha, int beta, CircleFunction g) {
  if (beta != 1 && beta != -1) throw Error(ErrorCode::InvariantViolation, "circle_affine_skew: beta must be +-1");
  if (g.arity() != 1) throw Error(ErrorCode::InvariantViolation, "circle_affine_skew: g must have arity 1");
  return MapSpec(GroupSpec::product({GroupSpec::circle_affine(), GroupSpec::torus(1)}),
                 std::make_shared<MapNode>(MapNode{nodes::CircleAffineSkew{wrap01(alpha), beta, std::move(g)}}));
}

inline MapSpec MapSpec::swap_so3() {
  return MapSpec(GroupSpec::product({GroupSpec::so3(), GroupSpec::so3()}),
                 std::make_shared<MapNode>(MapNode{nodes::SwapSO3{}}));
}

inline MapSpec MapSpec::torus_trig(std::vector<CircleFunction> coords) {
  const int n = static_cast<int>(coords.size());
  if (n < 1) throw Error(ErrorCode::InvariantViolation, "torus_trig: needs at least one coordinate");
  for (const auto& c : coords)
    if (c.arity() != n) throw Error(ErrorCode::InvariantViolation, "torus_trig: every coordinate must have arity n");
  return MapSpec(GroupSpec::torus(n), std::make_shared<MapNode>(MapNode{nodes::TorusTrig{std::move(coords)}}));
}

inline MapSpec MapSpec::opaque(GroupSpec g, std::string name, Hook forward, Hook inverse) {
  if (!forward) throw Error(ErrorCode::InvariantViolation, "opaque map needs a forward hook");
  return MapSpec(std::move(g), std::make_shared<MapNode>(
                                   MapNode{nodes::Opaque{std::move(name), std::move(forward), std::move(inverse)}}));
}

inline MapSpec MapSpec::composition(std::vector<MapSpec> maps) {
  if (maps.empty()) throw Error(ErrorCode::InvariantViolation, "composition of nothing");
  for (const auto& m : maps)
    if (!(m.domain() == maps.front().domain()))
      throw Error(ErrorCode::DomainMismatch, "composition of maps on different groups");
  GroupSpec g = maps.front().domain();
  return MapSpec(std::move(g), std::make_shared<MapNode>(MapNode{nodes::Compose{std::move(maps)}}));
}

inline MapSpec MapSpec::inverse_of(MapSpec inner) {
  GroupSpec g = inner.domain();
  return MapSpec(std::move(g), std::make_shared<MapNode>(MapNode{nodes::Invert{std::move(inner)}}));
}

inline MapSpec MapSpec::endo_quotient(GroupSpec g, EndoSpec num, EndoSpec den, bool bijection_verified) {
  return MapSpec(std::move(g), std::make_shared<MapNode>(MapNode{
                                   nodes::EndoQuotient{std::move(num), std::move(den), bijection_verified}}));
}

namespace detail {

inline std::string fmt_real(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

}  // namespace detail

inline std::string MapSpec::describe() const {
  return std::visit(
      [&](const auto& n) -> std::string {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, nodes::Identity>) {
          return "identity on " + domain_.describe();
        } else if constexpr (std::is_same_v<T, nodes::AffineTorus>) {
          return "affine_torus(n=" + std::to_string(n.matrix.n) + ")";
        } else if constexpr (std::is_same_v<T, nodes::AffineCyclic>) {
          return "affine_cyclic(m=" + std::to_string(n.modulus) + ", s=" + std::to_string(n.shift) +
                 ", t=" + std::to_string(n.multiplier) + ")";
        } else if constexpr (std::is_same_v<T, nodes::Translation>) {
          return "translation on " + domain_.describe();
        } else if constexpr (std::is_same_v<T, nodes::SkewTorus>) {
          return "skew_torus(n=" + std::to_string(n.fibers.size() + 1) + ", alpha=" + detail::fmt_real(n.alpha) + ")";
        } else if constexpr (std::is_same_v<T, nodes::CircleAffineSkew>) {
          return "circle_affine_skew(alpha=" + detail::fmt_real(n.alpha) + ", beta=" + std::to_string(n.beta) + ")";
        } else if constexpr (std::is_same_v<T, nodes::EndoQuotient>) {
          return "endo_quotient(" + n.num.describe() + ", " + n.den.describe() + ")";
        } else if constexpr (std::is_same_v<T, nodes::SwapSO3>) {
          return "swap_so3";
        } else if constexpr (std::is_same_v<T, nodes::TorusTrig>) {
          return "torus_trig(n=" + std::to_string(n.coords.size()) + ")";
        } else if constexpr (std::is_same_v<T, nodes::Opaque>) {
          return "opaque(" + n.name + ")";
        } else if constexpr (std::is_same_v<T, nodes::Compose>) {
          std::string s = "compose[";
          for (std::size_t i = 0; i < n.maps.size(); ++i) s += (i ? ", " : "") + n.maps[i].describe();
          return s + "]";
        } else {
          return "invert[" + n.inner.describe() + "]";
        }
      },
      node_->v);
}

// ---------------------------------------------------------------------------
// Evaluation

enum class QuotientInverse { None, PairSwap, LinearTorus, CyclicUnit };

namespace detail {

inline std::optional<IntMatrix> endo_as_torus_matrix(const EndoSpec& e, int n) {
  switch (e.kind()) {
    case EndoSpec::Kind::Identity: return IntMatrix::identity(n);
    case EndoSpec::Kind::Power: return IntMatrix::scalar(n, e.power());
    case EndoSpec::Kind::Matrix:
      if (e.matrix().n == n) return e.matrix();
      return std::nullopt;
    default: return std::nullopt;
  }
}

inline std::optional<std::int64_t> endo_as_multiplier(const EndoSpec& e) {
  if (e.kind() == EndoSpec::Kind::Identity) return 1;
  if (e.kind() == EndoSpec::Kind::Power) return e.power();
  return std::nullopt;
}

}  // namespace detail

/// Which closed-form inverse, if any, is registered for z -> g(z) h(z)^{-1}.
inline QuotientInverse quotient_inverse_kind(const GroupSpec& g, const EndoSpec& num, const EndoSpec& den) {
  using K = EndoSpec::Kind;
  if (const auto* p = g.get_if<ProductGroup>()) {
    const bool keeps = num.kind() == K::ProjectKeep || num.kind() == K::Identity ||
                       (num.kind() == K::Power && num.power() == 1);
    if (p->factors.size() == 2 && p->factors[0] == p->factors[1] && keeps && den.kind() == K::ProjectSwap)
      return QuotientInverse::PairSwap;
    return QuotientInverse::None;
  }
  if (const auto* t = g.get_if<TorusGroup>()) {
    auto a = detail::endo_as_torus_matrix(num, t->n);
    auto b = detail::endo_as_torus_matrix(den, t->n);
    if (a && b) {
      const auto det = determinant(*a - *b);
      if (det == 1 || det == -1) return QuotientInverse::LinearTorus;
    }
    return QuotientInverse::None;
  }
  if (const auto* c = g.get_if<CyclicGroup>()) {
    auto a = detail::endo_as_multiplier(num);
    auto b = detail::endo_as_multiplier(den);
    if (a && b && std::gcd(((*a - *b) % c->m + c->m) % c->m, c->m) == 1) return QuotientInverse::CyclicUnit;
  }
  return QuotientInverse::None;
}

Element eval(const MapSpec& f, const Element& x);

namespace detail {

inline Element eval_node(const MapSpec& f, const Element& x);
inline Element eval_inverse(const MapSpec& f, const Element& y);

inline Element eval_node(const MapSpec& f, const Element& x) {
  const GroupSpec& g = f.domain();
  return std::visit(
      [&](const auto& n) -> Element {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, nodes::Identity>) {
          return x;
        } else if constexpr (std::is_same_v<T, nodes::AffineTorus>) {
          auto y = n.matrix.apply_mod1(x.coords());
          for (std::size_t i = 0; i < y.size(); ++i) y[i] += n.translation[i];
          return Element::torus(std::move(y));
        } else if constexpr (std::is_same_v<T, nodes::AffineCyclic>) {
          const auto v = x.as<Residue>().value;
          return Element::residue((n.shift + n.multiplier * v) % n.modulus);
        } else if constexpr (std::is_same_v<T, nodes::Translation>) {
          return op_unchecked(g, n.by, x);
        } else if constexpr (std::is_same_v<T, nodes::SkewTorus>) {
          const auto& c = x.coords();
          std::vector<double> y(c.size());
          y[0] = c[0] + n.alpha;
          for (std::size_t j = 1; j < c.size(); ++j)
            y[j] = c[j] + n.fibers[j - 1](std::span<const double>(c.data(), j));
          return Element::torus(std::move(y));
        } else if constexpr (std::is_same_v<T, nodes::CircleAffineSkew>) {
          const auto& pair = x.items()[0].template as<AffinePair>();
          const double fiber = x.items()[1].coords()[0];
          return Element::tuple({Element::affine_pair(n.alpha + pair.y, n.beta * pair.t),
                                 Element::torus({fiber + n.g(pair.y)})});
        } else if constexpr (std::is_same_v<T, nodes::EndoQuotient>) {
          return op_unchecked(g, n.num.apply(g, x), inv_unchecked(g, n.den.apply(g, x)));
        } else if constexpr (std::is_same_v<T, nodes::SwapSO3>) {
          const auto& a = x.items()[0].matrix();
          const auto& b = x.items()[1].matrix();
          return Element::tuple({make_rotation_unchecked(a * b.transpose()), x.items()[1]});
        } else if constexpr (std::is_same_v<T, nodes::TorusTrig>) {
          const auto& c = x.coords();
          std::vector<double> y(c.size());
          for (std::size_t j = 0; j < c.size(); ++j) y[j] = n.coords[j].lift(c);
          return Element::torus(std::move(y));
        } else if constexpr (std::is_same_v<T, nodes::Opaque>) {
          return n.forward(x);
        } else if constexpr (std::is_same_v<T, nodes::Compose>) {
          Element y = x;
          for (auto it = n.maps.rbegin(); it != n.maps.rend(); ++it) y = eval_node(*it, y);
          return y;
        } else {
          return eval_inverse(n.inner, x);
        }
      },
      f.node().v);
}

/// f^{-1}(y), by back-substitution or the registered closed form.
inline Element eval_inverse(const MapSpec& f, const Element& y) {
  const GroupSpec& g = f.domain();
  return std::visit(
      [&](const auto& n) -> Element {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, nodes::Identity>) {
          return y;
        } else if constexpr (std::is_same_v<T, nodes::AffineTorus>) {
          const IntMatrix inv_m = unimodular_inverse(n.matrix);
          std::vector<double> shifted(y.coords());
          for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] -= n.translation[i];
          return Element::torus(inv_m.apply_mod1(shifted));
        } else if constexpr (std::is_same_v<T, nodes::AffineCyclic>) {
          const auto u = mod_inverse(n.multiplier, n.modulus);
          const auto v = y.as<Residue>().value;
          return Element::residue(((u * (v - n.shift)) % n.modulus + n.modulus) % n.modulus);
        } else if constexpr (std::is_same_v<T, nodes::Translation>) {
          return op_unchecked(g, inv_unchecked(g, n.by), y);
        } else if constexpr (std::is_same_v<T, nodes::SkewTorus>) {
          const auto& w = y.coords();
          std::vector<double> x(w.size());
          x[0] = wrap01(w[0] - n.alpha);
          for (std::size_t j = 1; j < w.size(); ++j)
            x[j] = wrap01(w[j] - n.fibers[j - 1](std::span<const double>(x.data(), j)));
          return Element::torus(std::move(x));
        } else if constexpr (std::is_same_v<T, nodes::CircleAffineSkew>) {
          const auto& pair = y.items()[0].template as<AffinePair>();
          const double base = wrap01(pair.y - n.alpha);
          return Element::tuple({Element::affine_pair(base, n.beta * pair.t),
                                 Element::torus({y.items()[1].coords()[0] - n.g(base)})});
        } else if constexpr (std::is_same_v<T, nodes::EndoQuotient>) {
          switch (quotient_inverse_kind(g, n.num, n.den)) {
            case QuotientInverse::PairSwap: {
              const auto& factor = g.get_if<ProductGroup>()->factors[0];
              const auto& c = y.items()[0];
              const auto& b = y.items()[1];
              return Element::tuple({op_unchecked(factor, c, b), b});
            }
            case QuotientInverse::LinearTorus: {
              const int dim = g.get_if<TorusGroup>()->n;
              const IntMatrix d = *endo_as_torus_matrix(n.num, dim) - *endo_as_torus_matrix(n.den, dim);
              return Element::torus(unimodular_inverse(d).apply_mod1(y.coords()));
            }
            case QuotientInverse::CyclicUnit: {
              const auto m = g.get_if<CyclicGroup>()->m;
              const auto u = mod_inverse(*endo_as_multiplier(n.num) - *endo_as_multiplier(n.den), m);
              return Element::residue((u * y.as<Residue>().value) % m);
            }
            case QuotientInverse::None:
              break;
          }
          throw Error(ErrorCode::BijectionUnverified, "no closed-form inverse registered for " + f.describe());
        } else if constexpr (std::is_same_v<T, nodes::SwapSO3>) {
          const auto& a = y.items()[0].matrix();
          const auto& b = y.items()[1].matrix();
          return Element::tuple({make_rotation_unchecked(a * b), y.items()[1]});
        } else if constexpr (std::is_same_v<T, nodes::TorusTrig>) {
          throw Error(ErrorCode::NotInvertible, "torus_trig maps have no inverse");
        } else if constexpr (std::is_same_v<T, nodes::Opaque>) {
          if (!n.inverse) throw Error(ErrorCode::NotInvertible, "opaque map '" + n.name + "' has no inverse hook");
          return n.inverse(y);
        } else if constexpr (std::is_same_v<T, nodes::Compose>) {
          Element x = y;
          for (const auto& m : n.maps) x = eval_inverse(m, x);
          return x;
        } else {
          return eval_node(n.inner, y);
        }
      },
      f.node().v);
}

}  // namespace detail

inline Element eval(const MapSpec& f, const Element& x) {
  require_conforms(f.domain(), x);
  return detail::eval_node(f, x);
}

/// True when some EndoQuotient in the tree has not been shown bijective.
inline bool has_unverified_bijection(const MapSpec& f) {
  if (const auto* q = f.as<nodes::EndoQuotient>()) return !q->bijection_verified;
  if (const auto* c = f.as<nodes::Compose>()) {
    for (const auto& m : c->maps)
      if (has_unverified_bijection(m)) return true;
    return false;
  }
  if (const auto* i = f.as<nodes::Invert>()) return has_unverified_bijection(i->inner);
  return false;
}

inline MapSpec invert(const MapSpec& f) {
  return std::visit(
      [&](const auto& n) -> MapSpec {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, nodes::Identity>) {
          return f;
        } else if constexpr (std::is_same_v<T, nodes::AffineTorus>) {
          const IntMatrix inv_m = unimodular_inverse(n.matrix);
          std::vector<double> neg(n.translation);
          for (auto& t : neg) t = -t;
          return MapSpec::affine_torus(inv_m.apply_mod1(neg), inv_m);
        } else if constexpr (std::is_same_v<T, nodes::AffineCyclic>) {
          const auto u = mod_inverse(n.multiplier, n.modulus);
          return MapSpec::affine_cyclic(n.modulus, -u * n.shift, u);
        } else if constexpr (std::is_same_v<T, nodes::Translation>) {
          return MapSpec::translation(f.domain(), inv(f.domain(), n.by));
        } else if constexpr (std::is_same_v<T, nodes::EndoQuotient>) {
          if (!n.bijection_verified || quotient_inverse_kind(f.domain(), n.num, n.den) == QuotientInverse::None)
            throw Error(ErrorCode::BijectionUnverified, "cannot invert " + f.describe());
          return MapSpec::inverse_of(f);
        } else if constexpr (std::is_same_v<T, nodes::TorusTrig>) {
          throw Error(ErrorCode::NotInvertible, "torus_trig maps have no inverse");
        } else if constexpr (std::is_same_v<T, nodes::Opaque>) {
          if (!n.inverse) throw Error(ErrorCode::NotInvertible, "opaque map '" + n.name + "' has no inverse hook");
          return MapSpec::opaque(f.domain(), "inverse(" + n.name + ")", n.inverse, n.forward);
        } else if constexpr (std::is_same_v<T, nodes::Compose>) {
          std::vector<MapSpec> parts;
          parts.reserve(n.maps.size());
          for (auto it = n.maps.rbegin(); it != n.maps.rend(); ++it) parts.push_back(invert(*it));
          return MapSpec::composition(std::move(parts));
        } else if constexpr (std::is_same_v<T, nodes::Invert>) {
          return n.inner;
        } else {
          return MapSpec::inverse_of(f);
        }
      },
      f.node().v);
}

/// f after g. Affine-affine pairs on tori and cyclic groups fold into a single affine node.
inline MapSpec compose(const MapSpec& f, const MapSpec& g) {
  if (!(f.domain() == g.domain()))
    throw Error(ErrorCode::DomainMismatch,
                "cannot compose maps on " + f.domain().describe() + " and " + g.domain().describe());
  if (const auto* a = f.as<nodes::AffineTorus>()) {
    if (const auto* b = g.as<nodes::AffineTorus>()) {
      auto t = a->matrix.apply_mod1(b->translation);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] += a->translation[i];
      return MapSpec::affine_torus(std::move(t), a->matrix * b->matrix);
    }
  }
  if (const auto* a = f.as<nodes::AffineCyclic>()) {
    if (const auto* b = g.as<nodes::AffineCyclic>()) {
      const auto m = a->modulus;
      return MapSpec::affine_cyclic(m, (a->shift + a->multiplier * b->shift) % m, (a->multiplier * b->multiplier) % m);
    }
  }
  std::vector<MapSpec> parts;
  auto push = [&](const MapSpec& m) {
    if (const auto* c = m.as<nodes::Compose>()) {
      parts.insert(parts.end(), c->maps.begin(), c->maps.end());
    } else {
      parts.push_back(m);
    }
  };
  push(f);
  push(g);
  return MapSpec::composition(std::move(parts));
}

/// Builds z -> g(z) h(z)^{-1}. Both endomorphisms are probed for the
/// homomorphism law; the result is marked bijection-verified only when a
/// closed-form inverse is registered and round-trips on the probes.
inline MapSpec build_endo_quotient(const EndoSpec& num, const EndoSpec& den, const GroupSpec& domain,
                                   std::size_t probes, std::uint64_t seed) {
  if (probes == 0) throw Error(ErrorCode::EmptyRequest, "need at least one probe");
  const auto pts = haar_sample(domain, 2 * probes, seed);
  for (const EndoSpec* e : {&num, &den}) {
    double worst = 0.0;
    for (std::size_t i = 0; i < probes; ++i) {
      const Element& x = pts[2 * i];
      const Element& y = pts[2 * i + 1];
      const Element lhs = e->apply(domain, detail::op_unchecked(domain, x, y));
      const Element rhs = detail::op_unchecked(domain, e->apply(domain, x), e->apply(domain, y));
      worst = std::max(worst, distance(domain, lhs, rhs));
    }
    if (worst > 1e-8)
      throw Error(ErrorCode::HomomorphismCheckFailed, e->describe() + " is not an endomorphism of " + domain.describe(),
                  worst);
  }

  const MapSpec candidate = MapSpec::endo_quotient(domain, num, den, false);
  std::vector<Element> images;
  images.reserve(pts.size());
  for (const auto& p : pts) images.push_back(eval(candidate, p));
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      if (distance(domain, pts[i], pts[j]) > 1e-6 && distance(domain, images[i], images[j]) <= 1e-12)
        throw Error(ErrorCode::BijectionUnverified, candidate.describe() + " is not injective on the probes");
  const Element e = identity(domain);
  const Element fe = eval(candidate, e);
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (distance(domain, pts[i], e) > 1e-6 && distance(domain, images[i], fe) <= 1e-12)
      throw Error(ErrorCode::BijectionUnverified, candidate.describe() + " is not injective on the probes");
  // Random probes never land in a finite kernel; try the small torsion points too.
  std::vector<Element> torsion;
  if (const auto* t = domain.get_if<TorusGroup>(); t && t->n <= 2) {
    for (int q = 2; q <= 8; ++q)
      for (int a = 0; a < q; ++a)
        for (int b = 0; b < (t->n == 2 ? q : 1); ++b)
          if (a || b)
            torsion.push_back(Element::torus(t->n == 2 ? std::vector<double>{double(a) / q, double(b) / q}
                                                       : std::vector<double>{double(a) / q}));
  } else if (const auto* c = domain.get_if<CyclicGroup>(); c && c->m <= 4096) {
    for (std::int64_t r = 1; r < c->m; ++r) torsion.push_back(Element::residue(r));
  }
  for (const auto& p : torsion)
    if (distance(domain, eval(candidate, p), fe) <= 1e-12)
      throw Error(ErrorCode::BijectionUnverified, candidate.describe() + " has a nontrivial torsion point in its kernel");

  if (quotient_inverse_kind(domain, num, den) == QuotientInverse::None) return candidate;

  double worst = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    worst = std::max(worst, distance(domain, detail::eval_inverse(candidate, images[i]), pts[i]));
  if (worst > 1e-10)
    throw Error(ErrorCode::BijectionUnverified, "registered inverse failed the round trip", worst);
  return MapSpec::endo_quotient(domain, num, den, true);
}

}  // namespace haarlab
