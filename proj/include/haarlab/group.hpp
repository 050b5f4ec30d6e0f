#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "haarlab/error.hpp"
#include "haarlab/parallel.hpp"
#include "haarlab/rng.hpp"

namespace haarlab {

/// Canonical representative of x mod 1 in [0, 1). Never returns 1.0, even
/// when x is a tiny negative number whose naive reduction rounds up.
inline double wrap01(double x) noexcept {
  double r = x - std::floor(x);
  if (r >= 1.0) r = 0.0;
  return r;
}

/// Arc-length distance on R/Z, in [0, 1/2].
inline double circle_distance(double a, double b) noexcept {
  const double d = wrap01(a - b);
  return std::min(d, 1.0 - d);
}

/// Signed representative of x mod 1 in [-1/2, 1/2).
inline double centered(double x) noexcept { return wrap01(x + 0.5) - 0.5; }

// ---------------------------------------------------------------------------
// Group descriptions

class GroupSpec;

struct TorusGroup {
  int n = 1;
  bool operator==(const TorusGroup&) const = default;
};
struct CyclicGroup {
  std::int64_t m = 1;
  bool operator==(const CyclicGroup&) const = default;
};
struct SO3Group {
  bool operator==(const SO3Group&) const = default;
};
/// AF(T) = T x| {+1, -1}, multiplication (y1,t1)(y2,t2) = (y1 + t1 y2, t1 t2).
struct CircleAffineGroup {
  bool operator==(const CircleAffineGroup&) const = default;
};
struct ProductGroup {
  std::vector<GroupSpec> factors;
  bool operator==(const ProductGroup& other) const;
};

class GroupSpec {
 public:
  using Variant = std::variant<TorusGroup, CyclicGroup, SO3Group, CircleAffineGroup, ProductGroup>;

  static GroupSpec torus(int n) {
    if (n < 1) throw Error(ErrorCode::InvariantViolation, "torus dimension must be >= 1");
    return GroupSpec(TorusGroup{n});
  }
  static GroupSpec cyclic(std::int64_t m) {
    if (m < 1) throw Error(ErrorCode::InvariantViolation, "cyclic order must be >= 1");
    return GroupSpec(CyclicGroup{m});
  }
  static GroupSpec so3() { return GroupSpec(SO3Group{}); }
  static GroupSpec circle_affine() { return GroupSpec(CircleAffineGroup{}); }
  static GroupSpec product(std::vector<GroupSpec> factors) {
    if (factors.empty()) throw Error(ErrorCode::InvariantViolation, "product needs at least one factor");
    return GroupSpec(ProductGroup{std::move(factors)});
  }

  const Variant& variant() const noexcept { return v_; }
  template <class T>
  bool is() const noexcept {
    return std::holds_alternative<T>(v_);
  }
  template <class T>
  const T* get_if() const noexcept {
    return std::get_if<T>(&v_);
  }

  bool is_finite() const {
    if (is<CyclicGroup>()) return true;
    if (const auto* p = get_if<ProductGroup>()) {
      for (const auto& f : p->factors)
        if (!f.is_finite()) return false;
      return true;
    }
    return false;
  }

  std::string describe() const {
    return std::visit(
        [](const auto& g) -> std::string {
          using T = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<T, TorusGroup>) {
            return "torus(" + std::to_string(g.n) + ")";
          } else if constexpr (std::is_same_v<T, CyclicGroup>) {
            return "cyclic(" + std::to_string(g.m) + ")";
          } else if constexpr (std::is_same_v<T, SO3Group>) {
            return "so3";
          } else if constexpr (std::is_same_v<T, CircleAffineGroup>) {
            return "circle_affine";
          } else {
            std::string s = "product[";
            for (std::size_t i = 0; i < g.factors.size(); ++i) {
              if (i) s += ",";
              s += g.factors[i].describe();
            }
            return s + "]";
          }
        },
        v_);
  }

  bool operator==(const GroupSpec&) const = default;

 private:
  explicit GroupSpec(Variant v) : v_(std::move(v)) {}
  Variant v_;
};

inline bool ProductGroup::operator==(const ProductGroup& other) const { return factors == other.factors; }

/// Number of elements, or nullopt when the group is infinite.
inline std::optional<std::uint64_t> cardinality(const GroupSpec& g) {
  if (const auto* c = g.get_if<CyclicGroup>()) return static_cast<std::uint64_t>(c->m);
  if (const auto* p = g.get_if<ProductGroup>()) {
    std::uint64_t total = 1;
    for (const auto& f : p->factors) {
      auto c = cardinality(f);
      if (!c) return std::nullopt;
      total *= *c;
    }
    return total;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Elements

class Element;

struct TorusPoint {
  std::vector<double> coords;
  bool operator==(const TorusPoint&) const = default;
};
struct Residue {
  std::int64_t value = 0;
  bool operator==(const Residue&) const = default;
};
struct Rotation {
  Eigen::Matrix3d matrix = Eigen::Matrix3d::Identity();
  bool operator==(const Rotation& other) const { return matrix == other.matrix; }
};
struct AffinePair {
  double y = 0.0;
  int t = 1;
  bool operator==(const AffinePair&) const = default;
};
struct Tuple {
  std::vector<Element> items;
  bool operator==(const Tuple& other) const;
};

inline double orthogonality_drift(const Eigen::Matrix3d& a) {
  return (a.transpose() * a - Eigen::Matrix3d::Identity()).norm();
}

/// Nearest rotation in Frobenius norm (polar factor via SVD).
inline Eigen::Matrix3d project_to_so3(const Eigen::Matrix3d& a) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0) u.col(2) *= -1.0;
  return u * v.transpose();
}

/// Rotation by `angle` radians about a unit axis (Rodrigues).
inline Eigen::Matrix3d axis_rotation(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

class Element {
 public:
  using Variant = std::variant<TorusPoint, Residue, Rotation, AffinePair, Tuple>;

  static Element torus(std::vector<double> coords) {
    for (auto& c : coords) c = wrap01(c);
    return Element(TorusPoint{std::move(coords)});
  }
  static Element residue(std::int64_t value) { return Element(Residue{value}); }
  static Element residue(std::int64_t value, std::int64_t modulus) {
    return Element(Residue{((value % modulus) + modulus) % modulus});
  }
  /// Validated rotation; matrices with small drift are polar-projected.
  static Element rotation(const Eigen::Matrix3d& m) {
    const double drift = orthogonality_drift(m);
    if (!(drift <= 1e-6) || m.determinant() <= 0.0)
      throw Error(ErrorCode::InvariantViolation, "matrix is not a rotation", drift);
    return Element(Rotation{drift > 1e-9 ? project_to_so3(m) : m});
  }
  static Element affine_pair(double y, int t) {
    if (t != 1 && t != -1) throw Error(ErrorCode::InvariantViolation, "affine sign must be +1 or -1");
    return Element(AffinePair{wrap01(y), t});
  }
  static Element tuple(std::vector<Element> items) { return Element(Tuple{std::move(items)}); }

  const Variant& variant() const noexcept { return v_; }
  template <class T>
  bool is() const noexcept {
    return std::holds_alternative<T>(v_);
  }
  template <class T>
  const T& as() const {
    if (const T* p = std::get_if<T>(&v_)) return *p;
    throw Error(ErrorCode::TypeMismatch, "element has unexpected shape");
  }

  const std::vector<double>& coords() const { return as<TorusPoint>().coords; }
  const Eigen::Matrix3d& matrix() const { return as<Rotation>().matrix; }
  const std::vector<Element>& items() const { return as<Tuple>().items; }

  bool operator==(const Element&) const = default;

 private:
  friend Element make_rotation_unchecked(const Eigen::Matrix3d& m);
  explicit Element(Variant v) : v_(std::move(v)) {}
  Variant v_;
};

inline bool Tuple::operator==(const Tuple& other) const { return items == other.items; }

/// Rotation from trusted arithmetic; projects only when drift exceeds 1e-9.
inline Element make_rotation_unchecked(const Eigen::Matrix3d& m) {
  return Element(Rotation{orthogonality_drift(m) > 1e-9 ? project_to_so3(m) : m});
}

// ---------------------------------------------------------------------------
// Group law

inline bool conforms(const GroupSpec& g, const Element& a) {
  return std::visit(
      [&](const auto& spec) -> bool {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, TorusGroup>) {
          const auto* p = std::get_if<TorusPoint>(&a.variant());
          if (!p || static_cast<int>(p->coords.size()) != spec.n) return false;
          for (double c : p->coords)
            if (!(c >= 0.0 && c < 1.0)) return false;
          return true;
        } else if constexpr (std::is_same_v<T, CyclicGroup>) {
          const auto* p = std::get_if<Residue>(&a.variant());
          return p && p->value >= 0 && p->value < spec.m;
        } else if constexpr (std::is_same_v<T, SO3Group>) {
          return a.is<Rotation>();
        } else if constexpr (std::is_same_v<T, CircleAffineGroup>) {
          return a.is<AffinePair>();
        } else {
          const auto* p = std::get_if<Tuple>(&a.variant());
          if (!p || p->items.size() != spec.factors.size()) return false;
          for (std::size_t i = 0; i < spec.factors.size(); ++i)
            if (!conforms(spec.factors[i], p->items[i])) return false;
          return true;
        }
      },
      g.variant());
}

inline void require_conforms(const GroupSpec& g, const Element& a) {
  if (!conforms(g, a)) throw Error(ErrorCode::TypeMismatch, "element does not belong to " + g.describe());
}

inline Element identity(const GroupSpec& g) {
  return std::visit(
      [](const auto& spec) -> Element {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, TorusGroup>) {
          return Element::torus(std::vector<double>(spec.n, 0.0));
        } else if constexpr (std::is_same_v<T, CyclicGroup>) {
          return Element::residue(0);
        } else if constexpr (std::is_same_v<T, SO3Group>) {
          return make_rotation_unchecked(Eigen::Matrix3d::Identity());
        } else if constexpr (std::is_same_v<T, CircleAffineGroup>) {
          return Element::affine_pair(0.0, 1);
        } else {
          std::vector<Element> items;
          items.reserve(spec.factors.size());
          for (const auto& f : spec.factors) items.push_back(identity(f));
          return Element::tuple(std::move(items));
        }
      },
      g.variant());
}

namespace detail {

inline Element op_unchecked(const GroupSpec& g, const Element& a, const Element& b) {
  return std::visit(
      [&](const auto& spec) -> Element {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, TorusGroup>) {
          const auto& x = a.coords();
          const auto& y = b.coords();
          std::vector<double> out(x.size());
          for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
          return Element::torus(std::move(out));
        } else if constexpr (std::is_same_v<T, CyclicGroup>) {
          return Element::residue((a.as<Residue>().value + b.as<Residue>().value) % spec.m);
        } else if constexpr (std::is_same_v<T, SO3Group>) {
          return make_rotation_unchecked(a.matrix() * b.matrix());
        } else if constexpr (std::is_same_v<T, CircleAffineGroup>) {
          const auto& p = a.as<AffinePair>();
          const auto& q = b.as<AffinePair>();
          return Element::affine_pair(p.y + p.t * q.y, p.t * q.t);
        } else {
          const auto& xs = a.items();
          const auto& ys = b.items();
          std::vector<Element> out;
          out.reserve(xs.size());
          for (std::size_t i = 0; i < xs.size(); ++i) out.push_back(op_unchecked(spec.factors[i], xs[i], ys[i]));
          return Element::tuple(std::move(out));
        }
      },
      g.variant());
}

inline Element inv_unchecked(const GroupSpec& g, const Element& a) {
  return std::visit(
      [&](const auto& spec) -> Element {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, TorusGroup>) {
          std::vector<double> out(a.coords());
          for (auto& c : out) c = -c;
          return Element::torus(std::move(out));
        } else if constexpr (std::is_same_v<T, CyclicGroup>) {
          return Element::residue((spec.m - a.as<Residue>().value) % spec.m);
        } else if constexpr (std::is_same_v<T, SO3Group>) {
          return make_rotation_unchecked(a.matrix().transpose());
        } else if constexpr (std::is_same_v<T, CircleAffineGroup>) {
          const auto& p = a.as<AffinePair>();
          return Element::affine_pair(-p.t * p.y, p.t);
        } else {
          std::vector<Element> out;
          out.reserve(spec.factors.size());
          for (std::size_t i = 0; i < spec.factors.size(); ++i)
            out.push_back(inv_unchecked(spec.factors[i], a.items()[i]));
          return Element::tuple(std::move(out));
        }
      },
      g.variant());
}

}  // namespace detail

inline Element op(const GroupSpec& g, const Element& a, const Element& b) {
  require_conforms(g, a);
  require_conforms(g, b);
  return detail::op_unchecked(g, a, b);
}

inline Element inv(const GroupSpec& g, const Element& a) {
  require_conforms(g, a);
  return detail::inv_unchecked(g, a);
}

/// Left-invariant metric: max-coordinate arc length on tori, 0/1 on finite
/// groups, Frobenius on SO(3), max over factors on products.
inline double distance(const GroupSpec& g, const Element& a, const Element& b) {
  require_conforms(g, a);
  require_conforms(g, b);
  return std::visit(
      [&](const auto& spec) -> double {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, TorusGroup>) {
          double d = 0.0;
          for (int i = 0; i < spec.n; ++i) d = std::max(d, circle_distance(a.coords()[i], b.coords()[i]));
          return d;
        } else if constexpr (std::is_same_v<T, CyclicGroup>) {
          return a.as<Residue>().value == b.as<Residue>().value ? 0.0 : 1.0;
        } else if constexpr (std::is_same_v<T, SO3Group>) {
          return (a.matrix() - b.matrix()).norm();
        } else if constexpr (std::is_same_v<T, CircleAffineGroup>) {
          const auto& p = a.as<AffinePair>();
          const auto& q = b.as<AffinePair>();
          return std::max(circle_distance(p.y, q.y), p.t == q.t ? 0.0 : 1.0);
        } else {
          double d = 0.0;
          for (std::size_t i = 0; i < spec.factors.size(); ++i)
            d = std::max(d, distance(spec.factors[i], a.items()[i], b.items()[i]));
          return d;
        }
      },
      g.variant());
}

// ---------------------------------------------------------------------------
// Haar sampling

enum class Sampling {
  Uniform,  ///< counter-based pseudo-random stream
  Lattice,  ///< randomly shifted rank-1 lattice on torus factors
};

struct SamplerOptions {
  Sampling mode = Sampling::Uniform;
  /// Number of lattice points; required for Sampling::Lattice.
  std::uint64_t lattice_size = 0;
};

namespace detail {

/// Generating vector for an n-dimensional rank-1 lattice with `size` points,
/// taken from the additive recurrence on the generalized golden ratio and
/// nudged until each component is coprime to the lattice size.
inline std::vector<std::uint64_t> lattice_generator(int n, std::uint64_t size) {
  double phi = 2.0;
  for (int it = 0; it < 64; ++it) phi = std::pow(1.0 + phi, 1.0 / (n + 1));
  std::vector<std::uint64_t> z(n);
  for (int j = 0; j < n; ++j) {
    const double alpha = std::fmod(std::pow(1.0 / phi, j + 1), 1.0);
    auto zj = static_cast<std::uint64_t>(std::llround(alpha * static_cast<double>(size))) % size;
    if (zj == 0) zj = 1;
    while (std::gcd(zj, size) != 1) zj = (zj + 1) % size;
    z[j] = zj;
  }
  return z;
}

inline Element sample_with(const GroupSpec& g, const rng::CounterStream& stream, std::uint64_t index,
                           const SamplerOptions& opts) {
  return std::visit(
      [&](const auto& spec) -> Element {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, TorusGroup>) {
          std::vector<double> x(spec.n);
          if (opts.mode == Sampling::Lattice) {
            thread_local std::vector<std::uint64_t> z;
            thread_local std::pair<int, std::uint64_t> cached{0, 0};
            if (cached != std::pair<int, std::uint64_t>{spec.n, opts.lattice_size}) {
              z = lattice_generator(spec.n, opts.lattice_size);
              cached = {spec.n, opts.lattice_size};
            }
            for (int j = 0; j < spec.n; ++j) {
              const auto k = static_cast<std::uint64_t>(
                  (static_cast<unsigned __int128>(index % opts.lattice_size) * z[j]) % opts.lattice_size);
              x[j] = static_cast<double>(k) / static_cast<double>(opts.lattice_size) +
                     stream.uniform(0, static_cast<std::uint32_t>(j));
            }
          } else {
            for (int j = 0; j < spec.n; ++j) x[j] = stream.uniform(index, static_cast<std::uint32_t>(j));
          }
          return Element::torus(std::move(x));
        } else if constexpr (std::is_same_v<T, CyclicGroup>) {
          return Element::residue(static_cast<std::int64_t>(stream.below(index, 0, static_cast<std::uint64_t>(spec.m))));
        } else if constexpr (std::is_same_v<T, SO3Group>) {
          auto [a, b] = stream.normal_pair(index, 0);
          auto [c, d] = stream.normal_pair(index, 2);
          Eigen::Quaterniond q(a, b, c, d);
          q.normalize();
          return make_rotation_unchecked(q.toRotationMatrix());
        } else if constexpr (std::is_same_v<T, CircleAffineGroup>) {
          return Element::affine_pair(stream.uniform(index, 0), (stream.bits(index, 1) >> 63) ? -1 : 1);
        } else {
          std::vector<Element> items;
          items.reserve(spec.factors.size());
          for (std::size_t i = 0; i < spec.factors.size(); ++i)
            items.push_back(sample_with(spec.factors[i], stream.derive(i), index, opts));
          return Element::tuple(std::move(items));
        }
      },
      g.variant());
}

}  // namespace detail

/// The index-th Haar draw for `seed`; a pure function of its arguments.
inline Element haar_sample_at(const GroupSpec& g, std::uint64_t seed, std::uint64_t index,
                              const SamplerOptions& opts = {}) {
  if (opts.mode == Sampling::Lattice && opts.lattice_size == 0)
    throw Error(ErrorCode::EmptyRequest, "lattice sampling needs a lattice size");
  return detail::sample_with(g, rng::CounterStream(seed), index, opts);
}

inline std::vector<Element> haar_sample(const GroupSpec& g, std::size_t n, std::uint64_t seed,
                                        Sampling mode = Sampling::Uniform, unsigned threads = 1) {
  if (n == 0) throw Error(ErrorCode::EmptyRequest, "haar_sample needs n >= 1");
  const SamplerOptions opts{mode, mode == Sampling::Lattice ? n : 0};
  std::vector<Element> out(n, identity(g));
  parallel_for(chunk_count(n), threads, [&](std::size_t c) {
    const std::size_t end = std::min(n, (c + 1) * kSampleChunk);
    for (std::size_t i = c * kSampleChunk; i < end; ++i) out[i] = haar_sample_at(g, seed, i, opts);
  });
  return out;
}

/// Leaf factors of a (possibly nested) product, in depth-first order.
inline void flatten_leaves(const GroupSpec& g, std::vector<const GroupSpec*>& out) {
  if (const auto* p = g.get_if<ProductGroup>()) {
    for (const auto& f : p->factors) flatten_leaves(f, out);
  } else {
    out.push_back(&g);
  }
}

inline void flatten_leaves(const Element& a, std::vector<const Element*>& out) {
  if (const auto* t = std::get_if<Tuple>(&a.variant())) {
    for (const auto& e : t->items) flatten_leaves(e, out);
  } else {
    out.push_back(&a);
  }
}

}  // namespace haarlab
