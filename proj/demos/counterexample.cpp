// A skew map keeps Haar measure; the homeomorphism (x + y, x + sin(2 pi y) / 2 pi)
// does not, and the character k = (1, -1) shows it.
#include <cstdio>
#include <numbers>

#include "haarlab/verify.hpp"

using namespace haarlab;

static void report(const char* label, const MapSpec& f) {
  VerifyOptions opts;
  opts.samples = 65536;
  const auto r = verify_map(f, opts);
  std::printf("%-14s %s  worst %s (ratio %.3f)\n", label, std::string(to_string(r.verdict)).c_str(),
              r.worst_check.c_str(), r.worst_ratio);
  if (const auto* t = r.find("k=[1,-1]")) std::printf("%-14s k=[1,-1] mean %.4f\n", "", t->statistic);
}

int main() {
  const auto skew = MapSpec::skew_torus(2, 0.3, {CircleFunction({0}, 0.0, {TrigTerm{{1}, 0.0, 0.1}})});
  const auto bad = MapSpec::torus_trig(
      {CircleFunction({1, 1}, 0.0), CircleFunction({1, 0}, 0.0, {TrigTerm{{0, 1}, 0.0, 0.5 / std::numbers::pi}})});
  report("skew", skew);
  report("counterexample", bad);
}
