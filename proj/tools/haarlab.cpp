// haarlab command-line driver.
#include <CLI11.hpp>

#include <cstdio>
#include <string>

#include "haarlab/cli.hpp"

int main(int argc, char** argv) {
  haarlab::cli::RunConfig cfg;
  std::string seed_text = "0xC0FFEE";
  int cyclic = 0;

  CLI::App app{"Haar-measure verification and normalizer experiments"};
  app.set_version_flag("--version", HAARLAB_VERSION);
  app.add_option("command", cfg.command, "verify | decompose | normalizer-finite | membership | cocycle | sample")
      ->required()
      ->check(CLI::IsMember({"verify", "decompose", "normalizer-finite", "membership", "cocycle", "sample"}));
  app.add_option("input", cfg.input_path, "group/map spec (JSON)");
  app.add_option("--samples,-n", cfg.samples, "Haar samples")->capture_default_str();
  app.add_option("--seed", seed_text, "RNG seed, decimal or 0x-hex")->capture_default_str();
  app.add_option("--tol", cfg.tol, "classification / membership tolerance")->capture_default_str();
  app.add_option("--max-freq", cfg.max_freq, "largest character frequency")->capture_default_str();
  app.add_option("--bins", cfg.bins, "chi-square bins per circle axis")->capture_default_str();
  app.add_option("--output,-o", cfg.output_path, "report path (default stdout)");
  auto* cyc = app.add_option("--cyclic", cyclic, "use the cyclic group Z/M")->check(CLI::Range(1, 64));
  app.add_option("--table", cfg.table_path, "Cayley table (JSON)")->check(CLI::ExistingFile);
  app.add_option("--g1", cfg.g1_path, "first-coordinate g1 for translation-first decomposition")
      ->check(CLI::ExistingFile);
  app.add_option("--threads,-j", cfg.threads, "worker threads; reports do not depend on it")
      ->check(CLI::Range(1u, 1024u));
  app.add_flag("--wall-time", cfg.wall_time, "add elapsed seconds to the report");

  try {
    app.parse(argc, argv);
    cfg.seed = std::stoull(seed_text, nullptr, 0);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : haarlab::cli::kInputError;
  } catch (const std::exception&) {
    std::fprintf(stderr, "haarlab: bad --seed '%s'\n", seed_text.c_str());
    return haarlab::cli::kInputError;
  }
  if (*cyc) cfg.cyclic = cyclic;
  return haarlab::cli::run_and_write(cfg);
}
