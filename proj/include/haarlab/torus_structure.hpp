#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "haarlab/circle_function.hpp"
#include "haarlab/error.hpp"
#include "haarlab/group.hpp"
#include "haarlab/maps.hpp"
#include "haarlab/parallel.hpp"

namespace haarlab {

/// Black-box access to a self-map of a group.
struct MapOracle {
  GroupSpec domain;
  std::function<Element(const Element&)> fn;

  static MapOracle of(const MapSpec& f) {
    return {f.domain(), [f](const Element& x) { return eval(f, x); }};
  }
  static MapOracle torus(int n, std::function<std::vector<double>(const std::vector<double>&)> g) {
    return {GroupSpec::torus(n), [g = std::move(g)](const Element& x) { return Element::torus(g(x.coords())); }};
  }

  Element operator()(const Element& x) const { return fn(x); }
  /// Torus convenience; coordinates are wrapped on the way in.
  std::vector<double> operator()(std::vector<double> x) const { return fn(Element::torus(std::move(x))).coords(); }

  int torus_dim() const {
    const auto* t = domain.get_if<TorusGroup>();
    if (!t) throw Error(ErrorCode::TypeMismatch, "oracle is not defined on a torus");
    return t->n;
  }
};

struct CircleClassification {
  double alpha = 0.0;
  int beta = 1;
  double residual = 0.0;
};

/// Triangular form (s1 x1 + alpha, s2 x2 + g2(x1), ..., sn xn + gn(x1..x_{n-1})).
struct TriangularForm {
  int n = 0;
  double alpha = 0.0;
  std::vector<int> signs;
  /// fiber_grids[j] points per axis for the fiber of coordinate j + 2; the
  /// samples of that fiber live in fibers[j], row-major over T^{j+1}.
  std::vector<int> fiber_grids;
  std::vector<std::vector<double>> fibers;
  double residual = 0.0;
  std::string note;
};

namespace detail {

inline CircleClassification classify_values(const std::function<double(double)>& f, std::size_t probes) {
  CircleClassification c;
  c.alpha = wrap01(f(0.0));
  const double q = f(0.25) - c.alpha;
  c.beta = circle_distance(q, 0.25) <= circle_distance(q, -0.25) ? 1 : -1;
  for (std::size_t i = 0; i < probes; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(probes);
    c.residual = std::max(c.residual, circle_distance(f(x), c.alpha + c.beta * x));
  }
  return c;
}

inline void require_probes(std::size_t probes) {
  if (probes < 4) throw Error(ErrorCode::InvariantViolation, "need at least 4 probes");
}

}  // namespace detail

/// Fits x -> alpha + beta x; the sign is read off at x = 1/4.
inline CircleClassification classify_circle(const MapOracle& f, std::size_t probes = 64, double tol = 1e-6) {
  detail::require_probes(probes);
  if (f.torus_dim() != 1) throw Error(ErrorCode::TypeMismatch, "classify_circle needs a map on torus(1)");
  auto c = detail::classify_values([&](double x) { return f(std::vector<double>{x})[0]; }, probes);
  if (c.residual > tol)
    throw Error(ErrorCode::ResidualExceedsTol, "circle map is not of the form alpha +- x", c.residual);
  return c;
}

namespace detail {

inline double grid_point(std::size_t i, std::size_t n) { return static_cast<double>(i) / static_cast<double>(n); }

inline void require_fixes_first(const MapOracle& f, std::size_t x_grid, std::size_t probes) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x_grid; ++i)
    for (std::size_t k = 0; k < probes; ++k) {
      const double x = grid_point(i, x_grid);
      worst = std::max(worst, circle_distance(f({x, grid_point(k, probes)})[0], x));
    }
  if (worst > 1e-12)
    throw Error(ErrorCode::NotCoordinateFixing, "first output coordinate differs from the first input", worst);
}

inline std::vector<CircleClassification> classify_fibers(const MapOracle& f, std::size_t x_grid, std::size_t probes,
                                                         unsigned threads) {
  std::vector<CircleClassification> out(x_grid);
  parallel_for(x_grid, threads, [&](std::size_t i) {
    const double x = grid_point(i, x_grid);
    out[i] = classify_values([&](double y) { return f({x, y})[1]; }, probes);
  });
  return out;
}

}  // namespace detail

/// Classifies every fiber y -> g(x_i, y) of a map (x, y) -> (x, g(x, y)).
inline std::vector<CircleClassification> fiber_restriction_check(const MapOracle& f, std::size_t x_grid = 256,
                                                                 std::size_t probes = 64, double tol = 1e-6,
                                                                 unsigned threads = 1) {
  detail::require_probes(probes);
  if (f.torus_dim() != 2) throw Error(ErrorCode::TypeMismatch, "fiber_restriction_check needs a map on torus(2)");
  if (x_grid == 0) throw Error(ErrorCode::EmptyRequest, "empty x grid");
  detail::require_fixes_first(f, x_grid, probes);
  auto fibers = detail::classify_fibers(f, x_grid, probes, threads);
  for (std::size_t i = 0; i < fibers.size(); ++i)
    if (fibers[i].residual > tol)
      throw Error(ErrorCode::ResidualExceedsTol,
                  "fiber at x = " + std::to_string(detail::grid_point(i, x_grid)) + " is not of the form alpha +- y",
                  fibers[i].residual);
  return fibers;
}

/// (x, y) -> (x, h(x) +- y): recovers h on the grid and the common sign.
/// Also probes h for jumps just left and right of each grid point.
inline TriangularForm decompose_fixed_first(const MapOracle& f, std::size_t x_grid = 256, std::size_t probes = 64,
                                            double tol = 1e-6, unsigned threads = 1) {
  detail::require_probes(probes);
  if (f.torus_dim() != 2) throw Error(ErrorCode::TypeMismatch, "decompose_fixed_first needs a map on torus(2)");
  if (x_grid == 0) throw Error(ErrorCode::EmptyRequest, "empty x grid");
  detail::require_fixes_first(f, x_grid, probes);
  const auto fibers = detail::classify_fibers(f, x_grid, probes, threads);

  TriangularForm form;
  form.n = 2;
  form.signs = {1, fibers[0].beta};
  form.fiber_grids = {static_cast<int>(x_grid)};
  form.fibers.emplace_back();
  for (const auto& c : fibers) {
    form.residual = std::max(form.residual, c.residual);
    form.fibers[0].push_back(c.alpha);
  }
  if (form.residual > tol)
    throw Error(ErrorCode::ResidualExceedsTol, "some fiber is not of the form alpha +- y", form.residual);
  for (const auto& c : fibers)
    if (c.beta != form.signs[1])
      throw Error(ErrorCode::SignNotConstant, "fiber sign changes across the base circle");

  constexpr double eps = 1e-9;
  const double jump_tol = std::max(tol, 1e-6);
  double jump = 0.0;
  for (std::size_t i = 0; i < x_grid; ++i) {
    const double x = detail::grid_point(i, x_grid);
    jump = std::max(jump, circle_distance(f({x + eps, 0.0})[1], f({x - eps, 0.0})[1]));
  }
  if (jump > jump_tol) throw Error(ErrorCode::Discontinuous, "fiber offset h jumps across a grid point", jump);
  return form;
}

/// (x, y) -> (x + g1(y), g2(x + g1(y)) +- y). With k(x, y) = (x - g1(y), y)
/// the map f o k fixes the first coordinate, and its fiber offset is g2.
inline TriangularForm decompose_translation_first(const MapOracle& f, const CircleFunction& g1, std::size_t x_grid = 256,
                                                  std::size_t probes = 64, double tol = 1e-6, unsigned threads = 1) {
  detail::require_probes(probes);
  if (f.torus_dim() != 2) throw Error(ErrorCode::TypeMismatch, "decompose_translation_first needs a map on torus(2)");
  if (g1.arity() != 1) throw Error(ErrorCode::InvariantViolation, "g1 must have arity 1");
  double worst = 0.0;
  for (std::size_t i = 0; i < x_grid; ++i)
    for (std::size_t k = 0; k < probes; ++k) {
      const double x = detail::grid_point(i, x_grid);
      const double y = detail::grid_point(k, probes);
      worst = std::max(worst, circle_distance(f({x, y})[0], x + g1(y)));
    }
  if (worst > 1e-10)
    throw Error(ErrorCode::FirstCoordinateMismatch, "first output coordinate is not x + g1(y)", worst);

  const MapOracle fk{f.domain, [&f, g1](const Element& p) {
                       const auto& c = p.coords();
                       return f.fn(Element::torus({c[0] - g1(c[1]), c[1]}));
                     }};
  auto form = decompose_fixed_first(fk, x_grid, probes, tol, threads);
  form.note = "fibers hold g2, read from f o k with k(x, y) = (x - g1(y), y)";
  return form;
}

namespace detail {

inline std::vector<double> grid_coords(std::size_t flat, std::size_t dims, std::size_t grid) {
  std::vector<double> u(dims);
  for (std::size_t d = dims; d-- > 0;) {
    u[d] = grid_point(flat % grid, grid);
    flat /= grid;
  }
  return u;
}

}  // namespace detail

/// Per-level fiber grid sizes that keep the peel at desk scale.
inline std::vector<int> default_fiber_grids(int n) {
  std::vector<int> g;
  for (int j = 1; j < n; ++j) g.push_back(j == 1 ? 256 : j == 2 ? 256 : 32);
  return g;
}

/// Peels a coordinate-triangular map on T^n level by level: the first
/// coordinate is classified as a circle map, then for each later coordinate
/// j every fiber y -> f(u, y, 0, ...)_j over the grid of u in T^{j-1}.
inline TriangularForm decompose_triangular_nd(const MapOracle& f, std::vector<int> grids = {}, std::size_t probes = 64,
                                              double tol = 1e-6, unsigned threads = 1) {
  detail::require_probes(probes);
  const int n = f.torus_dim();
  if (grids.empty()) grids = default_fiber_grids(n);
  if (static_cast<int>(grids.size()) != n - 1)
    throw Error(ErrorCode::InvariantViolation, "need one fiber grid size per coordinate after the first");
  for (int g : grids)
    if (g < 1) throw Error(ErrorCode::EmptyRequest, "empty fiber grid");

  // Necessary condition: moving a later coordinate by 1/3 leaves earlier outputs alone.
  {
    const auto pts = haar_sample(GroupSpec::torus(n), std::max<std::size_t>(probes, 16), 0x7121A1ULL);
    double worst = 0.0;
    for (const auto& p : pts) {
      const auto base = f(p.coords());
      for (int j = 1; j < n; ++j) {
        auto q = p.coords();
        q[static_cast<std::size_t>(j)] += 1.0 / 3.0;
        const auto moved = f(q);
        for (int i = 0; i < j; ++i)
          worst = std::max(worst, circle_distance(moved[static_cast<std::size_t>(i)], base[static_cast<std::size_t>(i)]));
      }
    }
    if (worst > tol) throw Error(ErrorCode::NotTriangular, "an output depends on a later input coordinate", worst);
  }

  TriangularForm form;
  form.n = n;
  const auto first = detail::classify_values(
      [&](double x) {
        std::vector<double> p(static_cast<std::size_t>(n), 0.0);
        p[0] = x;
        return f(p)[0];
      },
      probes);
  form.alpha = first.alpha;
  form.signs.push_back(first.beta);
  form.residual = first.residual;

  for (int j = 1; j < n; ++j) {
    const auto grid = static_cast<std::size_t>(grids[static_cast<std::size_t>(j - 1)]);
    std::size_t count = 1;
    for (int d = 0; d < j; ++d) count *= grid;
    std::vector<CircleClassification> fib(count);
    parallel_for(chunk_count(count, 64), threads, [&](std::size_t c) {
      const std::size_t end = std::min(count, (c + 1) * 64);
      for (std::size_t k = c * 64; k < end; ++k) {
        auto u = detail::grid_coords(k, static_cast<std::size_t>(j), grid);
        u.resize(static_cast<std::size_t>(n), 0.0);
        fib[k] = detail::classify_values(
            [&](double y) {
              auto p = u;
              p[static_cast<std::size_t>(j)] = y;
              return f(p)[static_cast<std::size_t>(j)];
            },
            probes);
      }
    });
    std::vector<double> samples;
    samples.reserve(count);
    for (const auto& c : fib) {
      form.residual = std::max(form.residual, c.residual);
      samples.push_back(c.alpha);
    }
    form.signs.push_back(fib[0].beta);
    form.fiber_grids.push_back(static_cast<int>(grid));
    form.fibers.push_back(std::move(samples));
    if (form.residual > tol)
      throw Error(ErrorCode::ResidualExceedsTol,
                  "coordinate " + std::to_string(j + 1) + " has a fiber not of the form alpha +- y", form.residual);
    for (const auto& c : fib)
      if (c.beta != form.signs.back())
        throw Error(ErrorCode::SignNotConstant, "fiber sign of coordinate " + std::to_string(j + 1) + " is not constant");
  }
  if (form.residual > tol)
    throw Error(ErrorCode::ResidualExceedsTol, "first coordinate is not of the form alpha +- x", form.residual);
  return form;
}

/// Least-squares trigonometric fit of circle-valued samples on a regular grid
/// over T^d. The winding is read along each axis; the periodic remainder must
/// stay within 1/2 of its value at the origin.
inline CircleFunction fit_circle_function(const std::vector<double>& samples, int dims, int grid, int max_freq) {
  if (dims < 1 || grid < 1) throw Error(ErrorCode::InvariantViolation, "bad grid");
  const auto g = static_cast<std::size_t>(grid);
  std::size_t total = 1;
  for (int d = 0; d < dims; ++d) total *= g;
  if (samples.size() != total) throw Error(ErrorCode::InvariantViolation, "sample count does not match the grid");
  if (2 * max_freq >= grid) throw Error(ErrorCode::InvariantViolation, "grid too coarse for the requested frequencies");

  std::vector<std::int64_t> winding(static_cast<std::size_t>(dims), 0);
  for (int d = 0; d < dims; ++d) {
    std::size_t stride = 1;
    for (int e = d + 1; e < dims; ++e) stride *= g;
    double lift = 0.0;
    for (std::size_t i = 0; i < g; ++i)
      lift += centered(samples[((i + 1) % g) * stride] - samples[i * stride]);
    winding[static_cast<std::size_t>(d)] = std::llround(lift);
  }

  const double origin = samples[0];
  std::vector<double> r(total);
  for (std::size_t k = 0; k < total; ++k) {
    const auto u = detail::grid_coords(k, static_cast<std::size_t>(dims), g);
    double lin = 0.0;
    for (int d = 0; d < dims; ++d) lin += static_cast<double>(winding[static_cast<std::size_t>(d)]) * u[static_cast<std::size_t>(d)];
    r[k] = origin + centered(samples[k] - lin - origin);
  }
  CompensatedSum mean;
  for (double v : r) mean.add(v);
  const double constant = mean.value() / static_cast<double>(total);

  // One representative of each {q, -q}: first non-zero component positive.
  std::vector<TrigTerm> terms;
  std::vector<std::int64_t> q(static_cast<std::size_t>(dims), -max_freq);
  for (;;) {
    std::int64_t lead = 0;
    for (auto v : q)
      if (v != 0) {
        lead = v;
        break;
      }
    if (lead > 0) {
      CompensatedSum c, s;
      for (std::size_t k = 0; k < total; ++k) {
        const auto u = detail::grid_coords(k, static_cast<std::size_t>(dims), g);
        double phase = 0.0;
        for (int d = 0; d < dims; ++d) phase += static_cast<double>(q[static_cast<std::size_t>(d)]) * u[static_cast<std::size_t>(d)];
        const double a = 2.0 * std::numbers::pi * wrap01(phase);
        c.add(r[k] * std::cos(a));
        s.add(r[k] * std::sin(a));
      }
      const double ca = 2.0 * c.value() / static_cast<double>(total);
      const double sa = 2.0 * s.value() / static_cast<double>(total);
      if (std::abs(ca) > 1e-13 || std::abs(sa) > 1e-13) terms.push_back(TrigTerm{q, ca, sa});
    }
    int d = dims - 1;
    while (d >= 0 && q[static_cast<std::size_t>(d)] == max_freq) q[static_cast<std::size_t>(d--)] = -max_freq;
    if (d < 0) break;
    ++q[static_cast<std::size_t>(d)];
  }
  return CircleFunction(std::move(winding), constant, std::move(terms));
}

/// u -> g(s1 u1, s2 u2, ...).
inline CircleFunction reflect_arguments(const CircleFunction& g, const std::vector<int>& signs) {
  auto w = g.winding();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] *= signs[i];
  auto terms = g.terms();
  for (auto& t : terms)
    for (std::size_t i = 0; i < t.frequency.size(); ++i) t.frequency[i] *= signs[i];
  return CircleFunction(std::move(w), g.constant_term(), std::move(terms));
}

/// MapSpec for a recovered form: SkewTorus(alpha, G) after diag(signs), where
/// G_j(u) = g_j(diag(signs) u) so that the composite has fibers g_j.
inline MapSpec rebuild(const TriangularForm& form, int max_freq = 5) {
  std::vector<CircleFunction> fibers;
  for (std::size_t j = 0; j < form.fibers.size(); ++j) {
    const auto g = fit_circle_function(form.fibers[j], static_cast<int>(j) + 1, form.fiber_grids[j], max_freq);
    fibers.push_back(reflect_arguments(g, form.signs));
  }
  std::vector<std::int64_t> d(form.signs.begin(), form.signs.end());
  return compose(MapSpec::skew_torus(form.n, form.alpha, std::move(fibers)),
                 MapSpec::affine_torus(std::vector<double>(static_cast<std::size_t>(form.n), 0.0), IntMatrix::diagonal(d)));
}

}  // namespace haarlab
