#pragma once

#include <cmath>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "haarlab/circle_function.hpp"
#include "haarlab/error.hpp"
#include "haarlab/finite.hpp"
#include "haarlab/group.hpp"
#include "haarlab/maps.hpp"

namespace haarlab::io {

using json = nlohmann::json;

/// Probe count and seed used when a file asks for an endo_quotient.
inline constexpr std::size_t kQuotientProbes = 64;
inline constexpr std::uint64_t kQuotientSeed = 0x51AB;

struct ParsedSpec {
  std::optional<GroupSpec> group;
  std::optional<MapSpec> map;
  std::optional<EndoSpec> h;
  std::optional<FiniteGroupTable> table;
  /// Expected exit code per command, for the fixture matrix.
  json expect = json::object();
};

namespace detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::ParseError, path + ": " + what);
}

inline const json& field(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) fail(path, std::string("missing field '") + key + "'");
  return *it;
}

inline double real(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

/// Integers may be written as 3 or 3.0; 0.5 violates integrality.
inline std::int64_t integer(const json& j, const std::string& path) {
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 9.0e15) return static_cast<std::int64_t>(v);
    throw Error(ErrorCode::InvariantViolation, path + ": must be an integer, got " + j.dump());
  }
  fail(path, "expected an integer");
}

inline const json& array(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array");
  return j;
}

inline std::vector<std::int64_t> int_vector(const json& j, const std::string& path) {
  std::vector<std::int64_t> out;
  const auto& a = array(j, path);
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(integer(a[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline std::vector<double> real_vector(const json& j, const std::string& path) {
  std::vector<double> out;
  const auto& a = array(j, path);
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(real(a[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

/// Single-key object {"name": body} or bare string "name".
inline std::pair<std::string, const json*> tagged(const json& j, const std::string& path) {
  static const json null_body;
  if (j.is_string()) return {j.get<std::string>(), &null_body};
  if (j.is_object() && j.size() == 1) return {j.begin().key(), &j.begin().value()};
  fail(path, "expected a string or a single-key object");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parsing

inline GroupSpec parse_group(const json& j, const std::string& path = "group") {
  auto [tag, body] = detail::tagged(j, path);
  const std::string p = path + "." + tag;
  if (tag == "torus") return GroupSpec::torus(static_cast<int>(detail::integer(*body, p)));
  if (tag == "cyclic") return GroupSpec::cyclic(detail::integer(*body, p));
  if (tag == "so3") return GroupSpec::so3();
  if (tag == "circle_affine") return GroupSpec::circle_affine();
  if (tag == "product") {
    std::vector<GroupSpec> f;
    const auto& a = detail::array(*body, p);
    for (std::size_t i = 0; i < a.size(); ++i) f.push_back(parse_group(a[i], p + "[" + std::to_string(i) + "]"));
    return GroupSpec::product(std::move(f));
  }
  detail::fail(path, "unknown group '" + tag + "'");
}

inline CircleFunction parse_circle_function(const json& j, const std::string& path) {
  auto winding = detail::int_vector(detail::field(j, "winding", path), path + ".winding");
  const double constant = j.contains("constant") ? detail::real(j["constant"], path + ".constant") : 0.0;
  std::vector<TrigTerm> terms;
  if (j.contains("coeffs")) {
    const auto& a = detail::array(j["coeffs"], path + ".coeffs");
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::string p = path + ".coeffs[" + std::to_string(i) + "]";
      TrigTerm t;
      t.frequency = detail::int_vector(detail::field(a[i], "q", p), p + ".q");
      t.cos_amp = a[i].contains("cos") ? detail::real(a[i]["cos"], p + ".cos") : 0.0;
      t.sin_amp = a[i].contains("sin") ? detail::real(a[i]["sin"], p + ".sin") : 0.0;
      terms.push_back(std::move(t));
    }
  }
  return CircleFunction(std::move(winding), constant, std::move(terms));
}

inline IntMatrix parse_int_matrix(const json& j, const std::string& path) {
  std::vector<std::vector<std::int64_t>> rows;
  const auto& a = detail::array(j, path);
  for (std::size_t i = 0; i < a.size(); ++i) rows.push_back(detail::int_vector(a[i], path + "[" + std::to_string(i) + "]"));
  return IntMatrix::from_rows(rows);
}

inline EndoSpec parse_endo(const json& j, const std::string& path) {
  auto [tag, body] = detail::tagged(j, path);
  if (tag == "identity") return EndoSpec::identity();
  if (tag == "project_swap") return EndoSpec::project_swap();
  if (tag == "project_keep") return EndoSpec::project_keep();
  if (tag == "matrix") return EndoSpec::matrix(parse_int_matrix(*body, path + ".matrix"));
  if (tag == "power") return EndoSpec::power(detail::integer(*body, path + ".power"));
  detail::fail(path, "unknown endomorphism '" + tag + "'");
}

inline Element parse_element(const GroupSpec& g, const json& j, const std::string& path) {
  if (const auto* t = g.get_if<TorusGroup>()) {
    auto v = detail::real_vector(j, path);
    if (static_cast<int>(v.size()) != t->n) detail::fail(path, "expected " + std::to_string(t->n) + " coordinates");
    return Element::torus(std::move(v));
  }
  if (const auto* c = g.get_if<CyclicGroup>()) return Element::residue(detail::integer(j, path), c->m);
  if (g.is<SO3Group>()) {
    const auto& a = detail::array(j, path);
    if (a.size() != 3) detail::fail(path, "expected 3 rows");
    Eigen::Matrix3d m;
    for (int i = 0; i < 3; ++i) {
      auto row = detail::real_vector(a[i], path + "[" + std::to_string(i) + "]");
      if (row.size() != 3) detail::fail(path, "expected 3 columns");
      for (int k = 0; k < 3; ++k) m(i, k) = row[static_cast<std::size_t>(k)];
    }
    return Element::rotation(m);
  }
  if (g.is<CircleAffineGroup>())
    return Element::affine_pair(detail::real(detail::field(j, "y", path), path + ".y"),
                                static_cast<int>(detail::integer(detail::field(j, "t", path), path + ".t")));
  const auto& factors = g.get_if<ProductGroup>()->factors;
  const auto& a = detail::array(j, path);
  if (a.size() != factors.size()) detail::fail(path, "expected " + std::to_string(factors.size()) + " components");
  std::vector<Element> items;
  for (std::size_t i = 0; i < a.size(); ++i)
    items.push_back(parse_element(factors[i], a[i], path + "[" + std::to_string(i) + "]"));
  return Element::tuple(std::move(items));
}

inline MapSpec parse_map(const json& j, const GroupSpec& g, const std::string& path = "map") {
  auto [tag, body] = detail::tagged(j, path);
  const std::string p = path + "." + tag;
  auto check = [&](MapSpec f) {
    if (!(f.domain() == g))
      throw Error(ErrorCode::DomainMismatch,
                  p + ": map acts on " + f.domain().describe() + " but the group is " + g.describe());
    return f;
  };
  if (tag == "identity") return MapSpec::identity(g);
  if (tag == "affine_torus") {
    auto t = detail::real_vector(detail::field(*body, "t", p), p + ".t");
    return check(MapSpec::affine_torus(std::move(t), parse_int_matrix(detail::field(*body, "matrix", p), p + ".matrix")));
  }
  if (tag == "affine_cyclic") {
    const auto* c = g.get_if<CyclicGroup>();
    if (!c) throw Error(ErrorCode::DomainMismatch, p + ": affine_cyclic needs a cyclic group");
    return MapSpec::affine_cyclic(c->m, detail::integer(detail::field(*body, "s", p), p + ".s"),
                                  detail::integer(detail::field(*body, "t", p), p + ".t"));
  }
  if (tag == "translation") return MapSpec::translation(g, parse_element(g, detail::field(*body, "a", p), p + ".a"));
  if (tag == "skew_torus") {
    const auto n = static_cast<int>(detail::integer(detail::field(*body, "n", p), p + ".n"));
    std::vector<CircleFunction> fibers;
    const auto& a = detail::array(detail::field(*body, "fibers", p), p + ".fibers");
    for (std::size_t i = 0; i < a.size(); ++i)
      fibers.push_back(parse_circle_function(a[i], p + ".fibers[" + std::to_string(i) + "]"));
    return check(MapSpec::skew_torus(n, detail::real(detail::field(*body, "alpha", p), p + ".alpha"), std::move(fibers)));
  }
  if (tag == "circle_affine_skew") {
    return check(MapSpec::circle_affine_skew(
        detail::real(detail::field(*body, "alpha", p), p + ".alpha"),
        static_cast<int>(detail::integer(detail::field(*body, "beta", p), p + ".beta")),
        parse_circle_function(detail::field(*body, "g", p), p + ".g")));
  }
  if (tag == "endo_quotient") {
    return build_endo_quotient(parse_endo(detail::field(*body, "g", p), p + ".g"),
                               parse_endo(detail::field(*body, "h", p), p + ".h"), g, kQuotientProbes, kQuotientSeed);
  }
  if (tag == "swap_so3") return check(MapSpec::swap_so3());
  if (tag == "torus_trig") {
    const auto n = detail::integer(detail::field(*body, "n", p), p + ".n");
    std::vector<CircleFunction> coords;
    const auto& a = detail::array(detail::field(*body, "coords", p), p + ".coords");
    for (std::size_t i = 0; i < a.size(); ++i)
      coords.push_back(parse_circle_function(a[i], p + ".coords[" + std::to_string(i) + "]"));
    if (static_cast<std::int64_t>(coords.size()) != n)
      throw Error(ErrorCode::InvariantViolation, p + ": expected n coordinate functions");
    return check(MapSpec::torus_trig(std::move(coords)));
  }
  if (tag == "compose") {
    std::vector<MapSpec> maps;
    const auto& a = detail::array(*body, p);
    for (std::size_t i = 0; i < a.size(); ++i) maps.push_back(parse_map(a[i], g, p + "[" + std::to_string(i) + "]"));
    return MapSpec::composition(std::move(maps));
  }
  if (tag == "invert") return invert(parse_map(*body, g, p));
  detail::fail(path, "unknown map node '" + tag + "'");
}

inline FiniteGroupTable parse_table(const json& j, const std::string& name = "table") {
  std::vector<std::vector<int>> rows;
  const auto& a = detail::array(j, "table");
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::vector<int> row;
    for (auto v : detail::int_vector(a[i], "table[" + std::to_string(i) + "]")) row.push_back(static_cast<int>(v));
    rows.push_back(std::move(row));
  }
  return FiniteGroupTable::from_rows(std::move(rows), name);
}

/// Reads JSON text; syntax errors are reported with their line number.
inline json read_json(std::string_view bytes) {
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, bytes.size()); ++i) line += bytes[i] == '\n';
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + e.what());
  }
}

inline ParsedSpec parse_spec(std::string_view bytes) {
  const json doc = read_json(bytes);
  if (!doc.is_object()) detail::fail("$", "expected an object");
  ParsedSpec s;
  if (doc.contains("group")) s.group = parse_group(doc["group"]);
  if (doc.contains("map")) {
    if (!s.group) detail::fail("map", "a map needs a group");
    s.map = parse_map(doc["map"], *s.group);
  }
  if (doc.contains("h")) s.h = parse_endo(doc["h"], "h");
  if (doc.contains("table"))
    s.table = parse_table(doc["table"], doc.contains("name") && doc["name"].is_string() ? doc["name"].get<std::string>()
                                                                                         : "table");
  if (doc.contains("expect")) {
    if (!doc["expect"].is_object()) detail::fail("expect", "expected an object");
    s.expect = doc["expect"];
  }
  if (!s.group && !s.table) detail::fail("$", "expected a 'group' or a 'table'");
  return s;
}

/// A circle function, either bare or wrapped as {"g1": ...}.
inline CircleFunction parse_g1(std::string_view bytes) {
  const json doc = read_json(bytes);
  if (doc.is_object() && doc.contains("g1")) return parse_circle_function(doc["g1"], "g1");
  return parse_circle_function(doc, "g1");
}

// ---------------------------------------------------------------------------
// Serialization

inline json to_json(const GroupSpec& g) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, TorusGroup>) {
          return {{"torus", v.n}};
        } else if constexpr (std::is_same_v<T, CyclicGroup>) {
          return {{"cyclic", v.m}};
        } else if constexpr (std::is_same_v<T, SO3Group>) {
          return "so3";
        } else if constexpr (std::is_same_v<T, CircleAffineGroup>) {
          return "circle_affine";
        } else {
          json a = json::array();
          for (const auto& f : v.factors) a.push_back(to_json(f));
          return {{"product", a}};
        }
      },
      g.variant());
}

inline json to_json(const CircleFunction& f) {
  json coeffs = json::array();
  for (const auto& t : f.terms()) coeffs.push_back({{"q", t.frequency}, {"cos", t.cos_amp}, {"sin", t.sin_amp}});
  return {{"winding", f.winding()}, {"constant", f.constant_term()}, {"coeffs", coeffs}};
}

inline json to_json(const IntMatrix& m) { return m.rows(); }

inline json to_json(const EndoSpec& e) {
  switch (e.kind()) {
    case EndoSpec::Kind::Identity: return "identity";
    case EndoSpec::Kind::ProjectSwap: return "project_swap";
    case EndoSpec::Kind::ProjectKeep: return "project_keep";
    case EndoSpec::Kind::Matrix: return {{"matrix", to_json(e.matrix())}};
    case EndoSpec::Kind::Power: return {{"power", e.power()}};
  }
  return nullptr;
}

inline json to_json(const GroupSpec& g, const Element& a) {
  return std::visit(
      [&](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, TorusGroup>) {
          return a.coords();
        } else if constexpr (std::is_same_v<T, CyclicGroup>) {
          return a.as<Residue>().value;
        } else if constexpr (std::is_same_v<T, SO3Group>) {
          json rows = json::array();
          for (int i = 0; i < 3; ++i) rows.push_back({a.matrix()(i, 0), a.matrix()(i, 1), a.matrix()(i, 2)});
          return rows;
        } else if constexpr (std::is_same_v<T, CircleAffineGroup>) {
          return {{"y", a.as<AffinePair>().y}, {"t", a.as<AffinePair>().t}};
        } else {
          json out = json::array();
          for (std::size_t i = 0; i < v.factors.size(); ++i) out.push_back(to_json(v.factors[i], a.items()[i]));
          return out;
        }
      },
      g.variant());
}

inline json to_json(const MapSpec& f) {
  return std::visit(
      [&](const auto& n) -> json {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, nodes::Identity>) {
          return "identity";
        } else if constexpr (std::is_same_v<T, nodes::AffineTorus>) {
          return {{"affine_torus", {{"t", n.translation}, {"matrix", to_json(n.matrix)}}}};
        } else if constexpr (std::is_same_v<T, nodes::AffineCyclic>) {
          return {{"affine_cyclic", {{"s", n.shift}, {"t", n.multiplier}}}};
        } else if constexpr (std::is_same_v<T, nodes::Translation>) {
          return {{"translation", {{"a", to_json(f.domain(), n.by)}}}};
        } else if constexpr (std::is_same_v<T, nodes::SkewTorus>) {
          json fib = json::array();
          for (const auto& g : n.fibers) fib.push_back(to_json(g));
          return {{"skew_torus", {{"n", n.fibers.size() + 1}, {"alpha", n.alpha}, {"fibers", fib}}}};
        } else if constexpr (std::is_same_v<T, nodes::CircleAffineSkew>) {
          return {{"circle_affine_skew", {{"alpha", n.alpha}, {"beta", n.beta}, {"g", to_json(n.g)}}}};
        } else if constexpr (std::is_same_v<T, nodes::EndoQuotient>) {
          return {{"endo_quotient", {{"g", to_json(n.num)}, {"h", to_json(n.den)}}}};
        } else if constexpr (std::is_same_v<T, nodes::SwapSO3>) {
          return "swap_so3";
        } else if constexpr (std::is_same_v<T, nodes::TorusTrig>) {
          json c = json::array();
          for (const auto& g : n.coords) c.push_back(to_json(g));
          return {{"torus_trig", {{"n", n.coords.size()}, {"coords", c}}}};
        } else if constexpr (std::is_same_v<T, nodes::Opaque>) {
          throw Error(ErrorCode::UnsupportedCombination, "opaque map '" + n.name + "' cannot be serialized");
        } else if constexpr (std::is_same_v<T, nodes::Compose>) {
          json a = json::array();
          for (const auto& m : n.maps) a.push_back(to_json(m));
          return {{"compose", a}};
        } else {
          return {{"invert", to_json(n.inner)}};
        }
      },
      f.node().v);
}

inline json to_json(const FiniteGroupTable& t) { return t.rows(); }

/// Document that parse_spec reads back to an equal object graph.
inline std::string serialize(const GroupSpec& g, const std::optional<MapSpec>& map = std::nullopt,
                             const std::optional<EndoSpec>& h = std::nullopt) {
  json doc = {{"group", to_json(g)}};
  if (map) doc["map"] = to_json(*map);
  if (h) doc["h"] = to_json(*h);
  return doc.dump(2) + "\n";
}

inline std::string serialize(const FiniteGroupTable& t) {
  json doc = {{"name", t.name()}, {"table", to_json(t)}};
  return doc.dump(2) + "\n";
}

}  // namespace haarlab::io
