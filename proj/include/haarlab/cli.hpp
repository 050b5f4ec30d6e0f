#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <unistd.h>

#include "haarlab/error.hpp"
#include "haarlab/finite.hpp"
#include "haarlab/io.hpp"
#include "haarlab/membership.hpp"
#include "haarlab/torus_structure.hpp"
#include "haarlab/verify.hpp"

#ifndef HAARLAB_VERSION
#define HAARLAB_VERSION "0.0.0"
#endif

namespace haarlab::cli {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

enum ExitCode : int { kPass = 0, kFail = 1, kInconclusive = 2, kInputError = 3 };

struct RunConfig {
  std::string command;
  std::string input_path;
  std::size_t samples = 65536;
  std::uint64_t seed = 0xC0FFEE;
  double tol = 1e-6;
  int max_freq = 5;
  int bins = 32;
  std::string output_path;  // empty: stdout
  std::optional<int> cyclic;
  std::string table_path;
  std::string g1_path;
  /// Worker threads; reports do not depend on it and do not echo it.
  unsigned threads = 1;
  bool wall_time = false;
};

struct RunResult {
  int exit_code = kPass;
  json report;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot read '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::InvariantViolation, "SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

/// Temp file in the target directory, then rename over the destination.
inline void write_atomically(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::ParseError, "cannot write '" + tmp + "'");
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::ParseError, "short write to '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorCode::ParseError, "cannot rename onto '" + path + "': " + ec.message());
  }
}

// ---------------------------------------------------------------------------
// Payload encoders

inline json to_json(const VerificationReport& r) {
  json tests = json::array();
  for (const auto& t : r.tests)
    tests.push_back({{"id", t.id}, {"statistic", t.statistic}, {"threshold", t.threshold}, {"pass", t.pass}});
  json out = {{"map", r.map_description},
              {"group", r.group},
              {"samples", r.samples},
              {"seed", r.seed},
              {"tests", tests},
              {"chi_square", nullptr},
              {"worst_check", r.worst_check},
              {"worst_ratio", r.worst_ratio},
              {"verdict", to_string(r.verdict)}};
  if (r.chi_square) {
    const auto& c = *r.chi_square;
    out["chi_square"] = {{"bins", c.bins},       {"total_bins", c.total_bins}, {"samples", c.samples},
                         {"seed", c.seed},       {"statistic", c.statistic},   {"dof", c.dof},
                         {"critical_value", c.critical_value}, {"significance", 1e-4}, {"pass", c.pass}};
  }
  return out;
}

inline json to_json(const TriangularForm& f) {
  return {{"n", f.n},          {"alpha", f.alpha},     {"signs", f.signs},      {"fiber_grids", f.fiber_grids},
          {"fibers", f.fibers}, {"residual", f.residual}, {"note", f.note}};
}

inline json to_json(const MembershipReport& r) {
  return {{"map", r.map_description}, {"group", r.group},       {"x_samples", r.x_samples},
          {"pair_samples", r.pair_samples}, {"seed", r.seed},  {"tol", r.tol},
          {"defects", r.defects},     {"max_defect", r.max_defect}, {"verdict", to_string(r.verdict)}};
}

inline json to_json(const CocycleReport& r) {
  return {{"map", r.map_description}, {"h", r.h},         {"samples", r.samples},
          {"seed", r.seed},           {"tol", r.tol},     {"identity_defect", r.identity_defect},
          {"defect1", r.defect1},     {"defect2", r.defect2}, {"pass", r.pass}};
}

inline json to_json(const MapSet& s) {
  json a = json::array();
  for (const auto& p : s) a.push_back(p.image);
  return a;
}

inline json rationals(const std::vector<Rational>& v) {
  json a = json::array();
  for (const auto& r : v) a.push_back(std::to_string(r.numerator()) + "/" + std::to_string(r.denominator()));
  return a;
}

inline json error_json(const Error& e) {
  json out = {{"code", to_string(e.code())}, {"message", e.what()}};
  if (e.has_measurement()) out["measured"] = e.measured();
  return out;
}

/// Outcomes of the decomposition and membership procedures that reject the
/// input map, as opposed to malformed input.
inline bool is_rejection(ErrorCode c) {
  switch (c) {
    case ErrorCode::ResidualExceedsTol:
    case ErrorCode::NotCoordinateFixing:
    case ErrorCode::SignNotConstant:
    case ErrorCode::Discontinuous:
    case ErrorCode::FirstCoordinateMismatch:
    case ErrorCode::NotTriangular:
    case ErrorCode::IdentityNotFixed:
      return true;
    default:
      return false;
  }
}

// ---------------------------------------------------------------------------
// Commands

namespace detail {

struct Inputs {
  std::optional<io::ParsedSpec> spec;
  std::optional<FiniteGroupTable> table;
  std::optional<CircleFunction> g1;
  std::string digest_source;
};

inline Inputs load(const RunConfig& cfg) {
  Inputs in;
  if (!cfg.input_path.empty()) {
    const auto bytes = read_file(cfg.input_path);
    in.digest_source += bytes;
    in.spec = io::parse_spec(bytes);
    if (in.spec->table) in.table = in.spec->table;
  }
  if (!cfg.table_path.empty()) {
    const auto bytes = read_file(cfg.table_path);
    in.digest_source += bytes;
    auto s = io::parse_spec(bytes);
    if (!s.table) throw Error(ErrorCode::ParseError, cfg.table_path + ": no 'table' field");
    in.table = s.table;
  }
  if (!cfg.g1_path.empty()) {
    const auto bytes = read_file(cfg.g1_path);
    in.digest_source += bytes;
    in.g1 = io::parse_g1(bytes);
  }
  return in;
}

inline const MapSpec& need_map(const Inputs& in) {
  if (!in.spec || !in.spec->map) throw Error(ErrorCode::UnsupportedCombination, "this command needs an input map");
  return *in.spec->map;
}

inline std::pair<int, json> run_verify(const RunConfig& cfg, const Inputs& in, std::string& verdict) {
  if (cfg.samples < 1024) throw Error(ErrorCode::InvariantViolation, "verify needs --samples >= 1024");
  VerifyOptions o;
  o.samples = cfg.samples;
  o.seed = cfg.seed;
  o.max_freq = cfg.max_freq;
  o.bins = cfg.bins;
  o.threads = cfg.threads;
  const auto r = verify_map(need_map(in), o);
  verdict = to_string(r.verdict);
  const int code = r.verdict == Verdict::Pass ? kPass : r.verdict == Verdict::Fail ? kFail : kInconclusive;
  return {code, to_json(r)};
}

inline bool fixes_first_coordinate(const MapOracle& f, std::size_t probes) {
  for (std::size_t i = 0; i < probes; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(probes);
    if (circle_distance(f({x, 0.5 - x})[0], x) > 1e-12) return false;
  }
  return true;
}

inline std::pair<int, json> run_decompose(const RunConfig& cfg, const Inputs& in, std::string& verdict) {
  const MapSpec& f = need_map(in);
  const auto* t = f.domain().get_if<TorusGroup>();
  if (!t) throw Error(ErrorCode::UnsupportedCombination, "decompose needs a map on a torus");
  constexpr std::size_t grid = 256, probes = 64;
  const auto oracle = MapOracle::of(f);
  json payload = {{"x_grid", grid}, {"probes", probes}, {"tol", cfg.tol}};
  try {
    if (t->n == 1) {
      const auto c = classify_circle(oracle, probes, cfg.tol);
      payload["procedure"] = "classify_circle";
      payload["classification"] = {{"alpha", c.alpha}, {"beta", c.beta}, {"residual", c.residual}};
    } else if (in.g1) {
      if (t->n != 2) throw Error(ErrorCode::UnsupportedCombination, "--g1 applies to maps on torus(2)");
      payload["procedure"] = "decompose_translation_first";
      payload["g1"] = io::to_json(*in.g1);
      payload["form"] = to_json(decompose_translation_first(oracle, *in.g1, grid, probes, cfg.tol, cfg.threads));
    } else if (t->n == 2 && detail::fixes_first_coordinate(oracle, probes)) {
      payload["procedure"] = "decompose_fixed_first";
      payload["form"] = to_json(decompose_fixed_first(oracle, grid, probes, cfg.tol, cfg.threads));
    } else {
      payload["procedure"] = "decompose_triangular_nd";
      payload["fiber_grids"] = default_fiber_grids(t->n);
      payload["form"] = to_json(decompose_triangular_nd(oracle, {}, probes, cfg.tol, cfg.threads));
    }
  } catch (const Error& e) {
    if (!is_rejection(e.code())) throw;
    payload["rejection"] = error_json(e);
    verdict = "REJECTED";
    return {kFail, payload};
  }
  verdict = "DECOMPOSED";
  return {kPass, payload};
}

inline std::pair<int, json> run_normalizer(const RunConfig& cfg, const Inputs& in, std::string& verdict) {
  std::optional<FiniteGroupTable> table = in.table;
  if (cfg.cyclic) {
    if (table) throw Error(ErrorCode::UnsupportedCombination, "give either --cyclic or a table, not both");
    table = FiniteGroupTable::cyclic(*cfg.cyclic);
  }
  if (!table) throw Error(ErrorCode::UnsupportedCombination, "normalizer-finite needs --cyclic M or a table");
  const auto chain = finite_chain(*table, cfg.threads);
  const auto measure = invariant_measure_unique(*table, chain.translations);
  const bool trans_normalizer_is_af = chain.affine_is_translation_normalizer();
  const bool equal = chain.all_equal();
  json payload = {{"group", table->name()},
                  {"order", table->order()},
                  {"sizes",
                   {{"translations", chain.translations.size()},
                    {"automorphisms", chain.automorphisms.size()},
                    {"affine", chain.affine.size()},
                    {"normalizer_of_translations", chain.normalizer_of_translations.size()},
                    {"normalizer_of_affine", chain.normalizer_of_affine.size()},
                    {"translation_normalizer_of_affine", chain.translation_normalizer.size()}}},
                  {"chain_inclusions_hold", chain.chain_holds()},
                  {"affine_equals_normalizer_of_translations", trans_normalizer_is_af},
                  {"affine_equals_normalizer_of_affine", chain.affine == chain.normalizer_of_affine},
                  {"affine_equals_translation_normalizer_of_affine", chain.affine == chain.translation_normalizer},
                  {"automorphisms", to_json(chain.automorphisms)},
                  {"translation_invariant_measure",
                   {{"unique", measure.unique}, {"measure", rationals(measure.measure)}}}};
  const auto extra = chain.translation_normalizer.minus(chain.affine);
  if (!extra.empty()) payload["non_affine_witness"] = extra.front().image;
  verdict = trans_normalizer_is_af && equal ? "EQUAL" : "NOT-EQUAL";
  return {trans_normalizer_is_af && equal ? kPass : kFail, payload};
}

inline std::pair<int, json> run_membership(const RunConfig& cfg, const Inputs& in, std::string& verdict) {
  const auto r = affine_conjugation_test(need_map(in), 64, 256, cfg.tol, cfg.seed, cfg.threads);
  verdict = to_string(r.verdict);
  const int code = r.verdict == Membership::MemberConsistent ? kPass
                   : r.verdict == Membership::NonMember      ? kFail
                                                             : kInconclusive;
  return {code, to_json(r)};
}

inline std::pair<int, json> run_cocycle(const RunConfig& cfg, const Inputs& in, std::string& verdict) {
  const MapSpec& f = need_map(in);
  if (!in.spec->h) throw Error(ErrorCode::UnsupportedCombination, "cocycle needs an 'h' endomorphism in the input");
  json payload;
  int code = kPass;
  try {
    const auto r = cocycle_check(f, *in.spec->h, 1000, cfg.tol, cfg.seed);
    payload = to_json(r);
    code = r.pass ? kPass : kFail;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::IdentityNotFixed) throw;
    verdict = "FAIL";
    return {kFail, {{"rejection", error_json(e)}}};
  }
  const auto* p = f.domain().get_if<ProductGroup>();
  if (p && p->factors.size() == 2 && p->factors[0].is<SO3Group>() && p->factors[1].is<SO3Group>()) {
    const auto w = nonaffine_witness(f, 1000, cfg.seed);
    if (w) {
      json b1 = json::array(), b2 = json::array();
      for (int i = 0; i < 3; ++i) {
        b1.push_back({w->b1(i, 0), w->b1(i, 1), w->b1(i, 2)});
        b2.push_back({w->b2(i, 0), w->b2(i, 1), w->b2(i, 2)});
      }
      payload["nonaffine_witness"] = {{"b1", b1}, {"b2", b2}, {"defect", w->defect}};
    } else {
      payload["nonaffine_witness"] = nullptr;
    }
  }
  verdict = code == kPass ? "PASS" : "FAIL";
  return {code, payload};
}

inline std::pair<int, json> run_sample(const RunConfig& cfg, const Inputs& in, std::string& verdict) {
  if (!in.spec || !in.spec->group) throw Error(ErrorCode::UnsupportedCombination, "sample needs a group");
  const GroupSpec& g = *in.spec->group;
  const auto pts = haar_sample(g, cfg.samples, cfg.seed, Sampling::Uniform, cfg.threads);
  json a = json::array();
  for (const auto& p : pts) a.push_back(io::to_json(g, p));
  verdict = "OK";
  return {kPass, {{"group", g.describe()}, {"n", cfg.samples}, {"seed", cfg.seed}, {"samples", a}}};
}

}  // namespace detail

inline json config_echo(const RunConfig& cfg) {
  json c = {{"command", cfg.command}, {"samples", cfg.samples}, {"seed", cfg.seed},  {"tol", cfg.tol},
            {"max_freq", cfg.max_freq}, {"bins", cfg.bins},     {"input", cfg.input_path}};
  if (cfg.cyclic) c["cyclic"] = *cfg.cyclic;
  if (!cfg.table_path.empty()) c["table"] = cfg.table_path;
  if (!cfg.g1_path.empty()) c["g1"] = cfg.g1_path;
  return c;
}

/// Dispatches one command. Exit codes: 0 pass / member-consistent / equality
/// holds, 1 fail / non-member / inequality, 2 inconclusive, 3 input error.
inline RunResult run(const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  json doc = {{"schema_version", kSchemaVersion}, {"tool_version", HAARLAB_VERSION}, {"config", config_echo(cfg)}};
  RunResult res;
  std::string verdict;
  try {
    const auto in = detail::load(cfg);
    doc["input_digest"] = in.digest_source.empty() ? json(nullptr) : json("sha256:" + sha256_hex(in.digest_source));
    std::pair<int, json> out;
    if (cfg.command == "verify") {
      out = detail::run_verify(cfg, in, verdict);
    } else if (cfg.command == "decompose") {
      out = detail::run_decompose(cfg, in, verdict);
    } else if (cfg.command == "normalizer-finite") {
      out = detail::run_normalizer(cfg, in, verdict);
    } else if (cfg.command == "membership") {
      out = detail::run_membership(cfg, in, verdict);
    } else if (cfg.command == "cocycle") {
      out = detail::run_cocycle(cfg, in, verdict);
    } else if (cfg.command == "sample") {
      out = detail::run_sample(cfg, in, verdict);
    } else {
      throw Error(ErrorCode::UnsupportedCombination, "unknown command '" + cfg.command + "'");
    }
    res.exit_code = out.first;
    doc["payload"] = std::move(out.second);
  } catch (const Error& e) {
    res.exit_code = kInputError;
    verdict = "INPUT-ERROR";
    doc["error"] = error_json(e);
  }
  doc["verdict"] = verdict;
  doc["exit_code"] = res.exit_code;
  if (cfg.wall_time)
    doc["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  res.report = std::move(doc);
  return res;
}

inline std::string render(const json& report) { return report.dump(2) + "\n"; }

/// Runs and writes the report to the configured destination.
inline int run_and_write(const RunConfig& cfg) {
  const auto res = run(cfg);
  const auto text = render(res.report);
  if (cfg.output_path.empty() || cfg.output_path == "-") {
    std::fwrite(text.data(), 1, text.size(), stdout);
    std::fflush(stdout);
  } else {
    try {
      write_atomically(cfg.output_path, text);
    } catch (const Error& e) {
      std::fprintf(stderr, "haarlab: %s\n", e.what());
      return kInputError;
    }
  }
  return res.exit_code;
}

}  // namespace haarlab::cli
