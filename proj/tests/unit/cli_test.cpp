#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "haarlab/cli.hpp"

using namespace haarlab;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = HAARLAB_FIXTURE_DIR;

std::vector<fs::path> fixture_files() {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(kFixtures))
    if (e.path().extension() == ".json" && e.path().stem() != "g1_identity") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

ErrorCode parse_error_code(std::string_view text) {
  try {
    io::parse_spec(text);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "parsed: " << text;
  return ErrorCode::TypeMismatch;
}

}  // namespace

TEST(ParseSpec, WorkedExamples) {
  const auto s = io::parse_spec(R"({"group":{"cyclic":5},"map":{"affine_cyclic":{"s":2,"t":3}}})");
  ASSERT_TRUE(s.map.has_value());
  EXPECT_EQ(eval(*s.map, Element::residue(4)).as<Residue>().value, 4);

  EXPECT_EQ(parse_error_code(R"({"group":{"cyclic":4},"map":{"affine_cyclic":{"s":1,"t":2}}})"),
            ErrorCode::InvariantViolation);
  EXPECT_EQ(parse_error_code(
                R"({"group":{"torus":2},"map":{"skew_torus":{"n":2,"alpha":0.1,"fibers":[{"winding":[0.5]}]}}})"),
            ErrorCode::InvariantViolation);
  EXPECT_EQ(parse_error_code(
                R"({"group":{"torus":2},"map":{"affine_torus":{"t":[0,0],"matrix":[[2,0],[0,1]]}}})"),
            ErrorCode::InvariantViolation);
  EXPECT_EQ(parse_error_code(R"({"table":[[0,1],[0,1]]})"), ErrorCode::InvariantViolation);
}

TEST(ParseSpec, ErrorsCarryLocation) {
  try {
    io::parse_spec("{\n  \"group\": {\"torus\": 2},\n  \"map\": oops\n}");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  try {
    io::parse_spec(R"({"group":{"torus":2},"map":{"skew_torus":{"n":2,"alpha":0.1,"fibers":[{"coeffs":[]}]}}})");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find("map.skew_torus.fibers[0]"), std::string::npos) << e.what();
  }
  EXPECT_EQ(parse_error_code(R"({"group":{"klein_bottle":2}})"), ErrorCode::ParseError);
  EXPECT_EQ(parse_error_code(R"({"group":{"torus":1},"map":"swap_so3"})"), ErrorCode::DomainMismatch);
  EXPECT_EQ(parse_error_code(R"([1,2])"), ErrorCode::ParseError);
}

// Property: serialize then parse gives back an equal object graph.
TEST(ParseSpec, FixturesRoundTrip) {
  for (const auto& p : fixture_files()) {
    const auto spec = io::parse_spec(cli::read_file(p.string()));
    if (spec.table) {
      const auto again = io::parse_spec(io::serialize(*spec.table));
      ASSERT_TRUE(again.table.has_value());
      EXPECT_EQ(*again.table, *spec.table) << p;
      continue;
    }
    const auto text = io::serialize(*spec.group, spec.map, spec.h);
    const auto again = io::parse_spec(text);
    EXPECT_EQ(*again.group, *spec.group) << p;
    ASSERT_EQ(again.map.has_value(), spec.map.has_value());
    if (spec.map) EXPECT_EQ(*again.map, *spec.map) << p;
    EXPECT_EQ(again.h, spec.h) << p;
    EXPECT_EQ(io::serialize(*again.group, again.map, again.h), text) << p;
  }
}

TEST(ParseSpec, OtherNodesRoundTrip) {
  const auto g = GroupSpec::product({GroupSpec::so3(), GroupSpec::torus(1)});
  const auto t = MapSpec::translation(g, haar_sample_at(g, 3, 0));
  const auto back = io::parse_spec(io::serialize(g, t));
  EXPECT_EQ(*back.map, t);

  const auto t2 = GroupSpec::torus(2);
  const auto c = MapSpec::composition({MapSpec::affine_torus({0.1, 0.2}, IntMatrix::from_rows({{1, 1}, {0, 1}})),
                                       MapSpec::skew_torus(2, 0.3, {CircleFunction({0}, 0.1)})});
  EXPECT_EQ(*io::parse_spec(io::serialize(t2, c)).map, c);

  const auto q = io::parse_spec(
      R"({"group":{"product":["so3","so3"]},"map":{"endo_quotient":{"g":"project_keep","h":"project_swap"}}})");
  EXPECT_FALSE(has_unverified_bijection(*q.map));
  EXPECT_EQ(*io::parse_spec(io::serialize(*q.group, q.map)).map, *q.map);
}

TEST(Digest, KnownVector) {
  EXPECT_EQ(cli::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Run, CyclicSixNormalizer) {
  cli::RunConfig c;
  c.command = "normalizer-finite";
  c.cyclic = 6;
  const auto r = cli::run(c);
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.report["payload"]["sizes"]["affine"], 12);
  EXPECT_TRUE(r.report["payload"]["affine_equals_normalizer_of_affine"].get<bool>());
  EXPECT_TRUE(r.report["payload"]["affine_equals_translation_normalizer_of_affine"].get<bool>());
  EXPECT_EQ(r.report["schema_version"], cli::kSchemaVersion);
  EXPECT_FALSE(r.report["config"].contains("threads"));
  EXPECT_FALSE(r.report.contains("wall_time"));
}

TEST(Run, CounterexampleNamesTheFailingCharacter) {
  cli::RunConfig c;
  c.command = "verify";
  c.input_path = (kFixtures / "counterexample.json").string();
  const auto r = cli::run(c);
  EXPECT_EQ(r.exit_code, 1);
  bool found = false;
  for (const auto& t : r.report["payload"]["tests"])
    if (t["id"] == "k=[1,-1]") {
      found = true;
      EXPECT_NEAR(t["statistic"].get<double>(), 0.44, 0.02);
      EXPECT_FALSE(t["pass"].get<bool>());
    }
  EXPECT_TRUE(found);
  EXPECT_EQ(r.report["input_digest"], "sha256:" + cli::sha256_hex(cli::read_file(c.input_path)));
}

TEST(Run, InputErrors) {
  cli::RunConfig c;
  c.command = "verify";
  c.input_path = (kFixtures / "skew2.json").string();
  c.samples = 1000;
  EXPECT_EQ(cli::run(c).exit_code, 3);
  c.samples = 65536;
  c.input_path = "/nonexistent.json";
  const auto r = cli::run(c);
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_EQ(r.report["error"]["code"], "ParseError");
  c.command = "frobnicate";
  c.input_path = (kFixtures / "skew2.json").string();
  EXPECT_EQ(cli::run(c).exit_code, 3);
  cli::RunConfig n;
  n.command = "normalizer-finite";
  EXPECT_EQ(cli::run(n).exit_code, 3);
}

TEST(Run, TranslationFirstThroughG1File) {
  cli::RunConfig c;
  c.command = "decompose";
  c.input_path = (kFixtures / "counterexample.json").string();
  c.g1_path = (kFixtures / "g1_identity.json").string();
  const auto r = cli::run(c);
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_EQ(r.report["payload"]["procedure"], "decompose_translation_first");
  EXPECT_GE(r.report["payload"]["rejection"]["measured"].get<double>(), 0.15);
}

TEST(Run, SampleCommand) {
  cli::RunConfig c;
  c.command = "sample";
  c.input_path = (kFixtures / "swap_so3.json").string();
  c.samples = 5;
  const auto r = cli::run(c);
  EXPECT_EQ(r.exit_code, 0);
  ASSERT_EQ(r.report["payload"]["samples"].size(), 5u);
  EXPECT_EQ(r.report["payload"]["samples"][0].size(), 2u);
}

// Every fixture carries the exit code each command must produce.
TEST(Run, FixtureMatrix) {
  for (const auto& p : fixture_files()) {
    const auto spec = io::parse_spec(cli::read_file(p.string()));
    ASSERT_FALSE(spec.expect.empty()) << p;
    for (const auto& [command, code] : spec.expect.items()) {
      cli::RunConfig c;
      c.command = command;
      c.input_path = p.string();
      EXPECT_EQ(cli::run(c).exit_code, code.get<int>()) << p.filename() << " " << command;
    }
  }
}

TEST(Output, AtomicWriteReplacesFile) {
  const auto dir = fs::temp_directory_path() / "haarlab_cli_test";
  fs::create_directories(dir);
  const auto target = dir / "report.json";
  {
    std::ofstream(target) << "old";
  }
  cli::RunConfig c;
  c.command = "normalizer-finite";
  c.cyclic = 3;
  c.output_path = target.string();
  EXPECT_EQ(cli::run_and_write(c), 0);
  const auto text = cli::read_file(target.string());
  EXPECT_EQ(text, cli::render(cli::run(c).report));
  for (const auto& e : fs::directory_iterator(dir)) EXPECT_EQ(e.path(), target);  // no temp left behind
  fs::remove_all(dir);
}

TEST(Output, WallTimeOnlyWhenAsked) {
  cli::RunConfig c;
  c.command = "normalizer-finite";
  c.cyclic = 3;
  c.wall_time = true;
  EXPECT_TRUE(cli::run(c).report.contains("wall_time"));
}
