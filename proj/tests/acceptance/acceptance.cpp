// Acceptance criteria runner. One line per criterion:
//   AC<n> PASS|FAIL <measurements>
// `--criterion N` runs a single one (ctest registers each separately).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "../unit/oracles.hpp"
#include "haarlab/cli.hpp"

using namespace haarlab;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kCharBound = 4.0 / 256.0;          // 4 / sqrt(65536)
constexpr double kCounterexampleBand = 0.02;
constexpr double kTraceMeanBand = 0.02;
constexpr double kTraceSqBand = 0.03;
constexpr double kQuarterTurnDefect = 2.4;
constexpr double kCocycleTol = 1e-8;
constexpr double kGridError = 1e-6;
constexpr double kCounterexampleResidual = 0.15;
constexpr double kAffineDefect = 1e-10;
constexpr double kSkewDefectBound = 0.05;
constexpr double kAc1Seconds = 60.0, kAc2Seconds = 30.0, kAc3Seconds = 10.0;
constexpr std::size_t kN = 65536;

const fs::path kFixtures = HAARLAB_FIXTURE_DIR;

struct Outcome {
  bool pass = true;
  std::ostringstream note;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      note << " [violated: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int phi(int m) {
  int c = 0;
  for (int k = 1; k <= m; ++k) c += std::gcd(k, m) == 1;
  return c;
}

io::ParsedSpec load(const std::string& name) { return io::parse_spec(cli::read_file((kFixtures / name).string())); }

// ---------------------------------------------------------------------------

void ac1(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int m = 2; m <= 8; ++m) {
    const auto c = finite_chain(FiniteGroupTable::cyclic(m));
    const auto want = static_cast<std::size_t>(m * phi(m));
    o.note << " m=" << m << ":|AF|=" << c.affine.size() << ",|N(AF)|=" << c.normalizer_of_affine.size()
           << ",|E(AF)|=" << c.translation_normalizer.size();
    o.require(c.affine.size() == want, "|AF(Z/" + std::to_string(m) + ")| = m phi(m)");
    o.require(c.affine == c.normalizer_of_affine, "AF = N(AF) for m=" + std::to_string(m));
    o.require(c.affine == c.translation_normalizer, "AF = E(AF) for m=" + std::to_string(m));
  }
  const double s = seconds_since(t0);
  o.note << " time=" << s << "s";
  o.require(s < kAc1Seconds, "runtime < 60 s");
}

void ac2(Outcome& o) {
  for (const auto& [file, size] : {std::pair{"s3_table.json", 36u}, std::pair{"klein_table.json", 24u}}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto t = *load(file).table;
    const auto tr = translations(t);
    const auto n = normalizer_exact(t, tr, tr);
    const auto af = affine_set(t);
    const double s = seconds_since(t0);
    o.note << " " << t.name() << ":|N(Trans)|=" << n.size() << ",|AF|=" << af.size() << ",time=" << s << "s";
    o.require(n == af, std::string("N(Trans) = AF on ") + file);
    o.require(af.size() == size, std::string("|AF| on ") + file);
    o.require(s < kAc2Seconds, "runtime < 30 s");
  }
}

void ac3(Outcome& o) {
  for (const char* file : {"skew2.json", "skew3.json"}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto spec = load(file);
    VerifyOptions opts;
    opts.samples = kN;
    const auto r = verify_map(*spec.map, opts);
    double worst = 0.0;
    for (const auto& t : r.tests) worst = std::max(worst, t.statistic);
    const double s = seconds_since(t0);
    o.note << " " << file << ":tests=" << r.tests.size() << ",max_stat=" << worst;
    o.require(worst <= kCharBound, std::string("all statistics <= 4/sqrt(N) on ") + file);
    o.require(r.chi_square.has_value() && r.chi_square->pass, std::string("chi-square at 1e-4 on ") + file);
    if (r.chi_square) o.note << ",chi2=" << r.chi_square->statistic << "/" << r.chi_square->critical_value;
    o.note << ",time=" << s << "s";
    o.require(s < kAc3Seconds, "runtime < 10 s");
  }
}

void ac4(Outcome& o) {
  const double j1 = oracle::counterexample_character();
  cli::RunConfig c;
  c.command = "verify";
  c.input_path = (kFixtures / "counterexample.json").string();
  const auto r = cli::run(c);
  double stat = -1.0;
  for (const auto& t : r.report["payload"]["tests"])
    if (t["id"] == "k=[1,-1]") stat = t["statistic"].get<double>();
  o.note << " oracle=" << j1 << " statistic=" << stat << " exit=" << r.exit_code;
  o.require(std::abs(j1 - 0.4400506) < 1e-6, "quadrature oracle");
  o.require(std::abs(stat - 0.44) <= kCounterexampleBand, "statistic within 0.44 +- 0.02");
  o.require(r.exit_code == 1, "exit code 1");
}

void ac5(Outcome& o) {
  const auto pts = haar_sample(GroupSpec::so3(), kN, 0xC0FFEE);
  CompensatedSum s1, s2;
  for (const auto& p : pts) {
    const double tr = p.matrix().trace();
    s1.add(tr);
    s2.add(tr * tr);
  }
  const double m1 = s1.value() / kN, m2 = s2.value() / kN;
  o.note << " mean_tr=" << m1 << " mean_tr2=" << m2 << " (Weyl: " << oracle::so3_trace_moment(1) << ", "
         << oracle::so3_trace_moment(2) << ")";
  o.require(std::abs(m1) <= kTraceMeanBand, "mean tr in 0 +- 0.02");
  o.require(std::abs(m2 - 1.0) <= kTraceSqBand, "mean tr^2 in 1 +- 0.03");
}

void ac6(Outcome& o) {
  const auto spec = load("swap_so3.json");
  const auto& f = *spec.map;
  const auto fam = default_family(f.domain(), 5);
  const auto r = character_test(f, fam, kN, 0xC0FFEE, 1, Sampling::Uniform);
  o.note << " family=" << fam.size() << " verdict=" << to_string(r.verdict) << " worst_ratio=" << r.worst_ratio;
  o.require(fam.size() == 143 && r.verdict == Verdict::Pass, "character test on 143 products passes");

  const Eigen::Matrix3d b1 = axis_rotation({1, 0, 0}, std::numbers::pi / 2);
  const Eigen::Matrix3d b2 = axis_rotation({0, 0, 1}, std::numbers::pi / 2);
  const double d = nonaffine_defect(f, b1, b2);
  const auto w = nonaffine_witness(f);
  o.note << " quarter_turn_defect=" << d << " witness=" << (w ? w->defect : -1.0);
  o.require(d >= kQuarterTurnDefect && std::abs(d - std::sqrt(6.0)) < 1e-9, "quarter-turn defect ~ sqrt 6");
  o.require(w.has_value(), "nonaffine_witness returns a certificate");

  const auto cc = cocycle_check(f, *spec.h, 1000, kCocycleTol);
  o.note << " cocycle=(" << cc.defect1 << ", " << cc.defect2 << ")";
  o.require(cc.pass, "cocycle check with ProjectSwap at 1e-8");
}

void ac7(Outcome& o) {
  using V = std::vector<double>;
  const double tau = oracle::kTwoPi;
  auto h = [tau](double x) {
    return 0.3 + 0.04 * std::sin(tau * x) + 0.05 * std::cos(3 * tau * x) - 0.02 * std::sin(5 * tau * x);
  };
  double worst = 0.0;
  for (int sign : {1, -1}) {
    const auto form = decompose_fixed_first(MapOracle::torus(2, [&](const V& p) { return V{p[0], h(p[0]) + sign * p[1]}; }));
    o.require(form.signs[1] == sign, "fixed-first sign " + std::to_string(sign));
    for (std::size_t i = 0; i < 256; ++i) worst = std::max(worst, circle_distance(form.fibers[0][i], h(i / 256.0)));
  }
  o.note << " fixed_first_err=" << worst;
  o.require(worst <= kGridError, "fixed-first grid error <= 1e-6");

  const CircleFunction g1({1}, 0.0, {TrigTerm{{2}, 0.1, 0.0}});
  worst = 0.0;
  for (int sign : {1, -1}) {
    const auto f = MapOracle::torus(2, [&](const V& p) {
      const double u = p[0] + g1(p[1]);
      return V{u, h(u) + sign * p[1]};
    });
    const auto form = decompose_translation_first(f, g1);
    o.require(form.signs[1] == sign, "translation-first sign " + std::to_string(sign));
    for (std::size_t i = 0; i < 256; ++i) worst = std::max(worst, circle_distance(form.fibers[0][i], h(i / 256.0)));
  }
  o.note << " translation_first_err=" << worst;
  o.require(worst <= kGridError, "translation-first grid error <= 1e-6");

  const auto counter = MapOracle::of(*load("counterexample.json").map);
  double residual = 0.0;
  try {
    decompose_translation_first(counter, CircleFunction({1}, 0.0));
  } catch (const Error& e) {
    residual = e.measured();
    o.note << " counterexample=" << to_string(e.code());
  }
  o.note << " residual=" << residual;
  o.require(residual >= kCounterexampleResidual, "counterexample residual >= 0.15");
}

void ac8(Outcome& o) {
  std::mt19937_64 gen(0xAC8);
  std::uniform_int_distribution<int> step(-2, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  int consistent = 0;
  for (int i = 0; i < 10; ++i) {
    IntMatrix m = IntMatrix::identity(2);
    for (int k = 0; k < 4; ++k) {
      m = m * IntMatrix::from_rows({{1, step(gen)}, {0, 1}});
      m = m * IntMatrix::from_rows({{1, 0}, {step(gen), 1}});
    }
    const auto f = MapSpec::affine_torus({unit(gen), unit(gen)}, m);
    const auto r = affine_conjugation_test(f);
    worst = std::max(worst, r.max_defect);
    consistent += r.verdict == Membership::MemberConsistent;
  }
  o.note << " affine: consistent=" << consistent << "/10 max_defect=" << worst;
  o.require(consistent == 10 && worst <= kAffineDefect, "10 affine maps MEMBER-CONSISTENT with defects <= 1e-10");

  double grid = 0.0;
  constexpr int kGrid = 48;
  for (int a = 0; a < kGrid; ++a)
    for (int b = 0; b < kGrid; ++b)
      for (int c = 0; c < kGrid; ++c)
        grid = std::max(grid, oracle::skew_defect(0.3, 0.1, double(a) / kGrid, double(b) / kGrid, double(c) / kGrid));
  const auto skew = MapSpec::skew_torus(2, 0.3, {CircleFunction({0}, 0.0, {TrigTerm{{1}, 0.0, 0.1}})});
  const auto r = affine_conjugation_test(skew);
  o.note << " skew: verdict=" << to_string(r.verdict) << " max_defect=" << r.max_defect << " grid_oracle_max=" << grid;
  o.require(r.verdict == Membership::NonMember, "sine skew is NON-MEMBER");
  o.require(r.max_defect >= kSkewDefectBound, "sine skew max defect >= 0.05");
}

void ac9(Outcome& o) {
  for (const auto& t : {FiniteGroupTable::cyclic(6), *load("s3_table.json").table}) {
    const auto rep = monotonicity_suite(t);
    std::size_t held = 0;
    for (const auto& c : rep.checks) {
      held += c.holds;
      if (!c.holds) o.note << " " << t.name() << ":" << c.name << " fails";
    }
    o.note << " " << t.name() << ":" << held << "/" << rep.checks.size();
    o.require(rep.all_hold(), "all property checks hold on " + t.name());
  }
}

void ac10(Outcome& o) {
  std::vector<FiniteGroupTable> tables;
  for (int m = 1; m <= 8; ++m) tables.push_back(FiniteGroupTable::cyclic(m));
  tables.push_back(*load("s3_table.json").table);
  tables.push_back(*load("klein_table.json").table);
  int unique = 0;
  for (const auto& t : tables) {
    const auto r = invariant_measure_unique(t, translations(t));
    bool uniform = r.unique && r.measure.size() == static_cast<std::size_t>(t.order());
    for (const auto& q : r.measure) uniform = uniform && q == Rational(1, t.order());
    unique += uniform;
  }
  o.note << " unique_uniform=" << unique << "/" << tables.size();
  o.require(unique == static_cast<int>(tables.size()), "translations give the unique uniform measure");

  const auto z4 = FiniteGroupTable::cyclic(4);
  const MapSet k({PermutationMap::from_image({2, 3, 0, 1})});
  const auto r = invariant_measure_unique(z4, k);
  o.require(!r.unique && r.witness_a != r.witness_b, "{L_2} on Z/4 is not unique");
  for (const auto* w : {&r.witness_a, &r.witness_b}) {
    // mass of the pushforward at each point, by direct multiplication
    for (int x = 0; x < 4; ++x) {
      Rational pushed(0);
      for (int y = 0; y < 4; ++y)
        if (z4.mul(2, y) == x) pushed += (*w)[static_cast<std::size_t>(y)];
      o.require(pushed == (*w)[static_cast<std::size_t>(x)], "witness invariant");
    }
    Rational total(0);
    for (const auto& q : *w) total += q;
    o.require(total == Rational(1), "witness is a probability measure");
  }
  o.note << " z4_dimension=" << r.invariant_dimension;
}

void ac11(Outcome& o) {
  int runs = 0;
  for (const auto& e : fs::directory_iterator(kFixtures)) {
    if (e.path().extension() != ".json" || e.path().stem() == "g1_identity") continue;
    const auto spec = io::parse_spec(cli::read_file(e.path().string()));
    for (const auto& [command, code] : spec.expect.items()) {
      cli::RunConfig c;
      c.command = command;
      c.input_path = e.path().string();
      c.threads = 1;
      const auto a = cli::render(cli::run(c).report);
      c.threads = 8;
      const auto b = cli::render(cli::run(c).report);
      ++runs;
      o.require(a == b, e.path().filename().string() + " " + command + " differs across thread counts");
    }
  }
  o.note << " fixture_runs=" << runs;
  o.require(runs > 0, "at least one fixture run");
}

const std::vector<std::function<void(Outcome&)>> kCriteria = {ac1, ac2, ac3, ac4, ac5, ac6, ac7, ac8, ac9, ac10, ac11};

bool run_one(std::size_t n) {
  Outcome o;
  try {
    kCriteria[n - 1](o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.note << " [exception: " << e.what() << "]";
  }
  std::printf("AC%zu %s%s\n", n, o.pass ? "PASS" : "FAIL", o.note.str().c_str());
  std::fflush(stdout);
  return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc == 3 && std::string(argv[1]) == "--criterion") {
    const auto n = static_cast<std::size_t>(std::strtoul(argv[2], nullptr, 10));
    if (n < 1 || n > kCriteria.size()) {
      std::fprintf(stderr, "criterion must be 1..%zu\n", kCriteria.size());
      return 2;
    }
    return run_one(n) ? 0 : 1;
  }
  if (argc != 1) {
    std::fprintf(stderr, "usage: %s [--criterion N]\n", argv[0]);
    return 2;
  }
  bool all = true;
  for (std::size_t n = 1; n <= kCriteria.size(); ++n) all = run_one(n) && all;
  return all ? 0 : 1;
}
