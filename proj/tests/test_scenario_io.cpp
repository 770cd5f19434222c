#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "vfguide/scenario_io.hpp"

using namespace vfg;
namespace fs = std::filesystem;

namespace {

std::string config_error(const std::string& text, Errc expected = Errc::ConfigError) {
  try {
    io::config_from_json(text, "cfg.json");
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), expected) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "config accepted:\n" << text;
  return {};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("vfguide_io_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(ConfigJson, DefaultsRoundTrip) {
  ScenarioConfig c;
  c.seed = 77;
  c.tumor_semi_axes = Vec3(12, 15, 18);
  c.motion.kind = MotionScript::Kind::Waypoints;
  c.motion.waypoints = {{0.0, Vec3::Zero()}, {2.5, Vec3(1, -2, 0.25)}};
  c.vf.enabled = false;
  c.controller.bias_mm = 0.1;
  const auto text = io::config_to_json(c).dump(2);
  const auto back = io::config_from_json(text);
  EXPECT_EQ(io::config_to_json(back).dump(2), text);
  EXPECT_EQ(back.seed, 77u);
  EXPECT_EQ(back.motion.waypoints.size(), 2u);
  EXPECT_FALSE(back.vf.enabled);
}

TEST(ConfigJson, MinimalDocumentTakesDefaults) {
  const auto c = io::config_from_json(R"({"schema": 1})");
  EXPECT_EQ(io::config_to_json(c).dump(), io::config_to_json(ScenarioConfig{}).dump());
}

TEST(ConfigJson, DiameterShortcutSetsAllSemiAxes) {
  const auto c = io::config_from_json(R"({"schema": 1, "tumor": {"diameter_mm": 30}})");
  EXPECT_EQ(c.tumor_semi_axes, Vec3::Constant(15.0));
}

TEST(ConfigJson, UnknownKeyIsReportedAtItsLine) {
  const std::string text =
      "{\n"
      "  \"schema\": 1,\n"
      "  \"tumor\": {\n"
      "    \"diameter_mm\": 30,\n"
      "    \"colour\": \"red\"\n"
      "  }\n"
      "}\n";
  EXPECT_EQ(config_error(text), "ConfigError: cfg.json:5: /tumor/colour: unknown key 'colour'");
}

TEST(ConfigJson, WrongTypeIsReportedAtItsLine) {
  const std::string text = "{\n  \"schema\": 1,\n  \"servo\": {\n    \"rate_hz\": \"fast\"\n  }\n}";
  EXPECT_EQ(config_error(text), "ConfigError: cfg.json:4: /servo/rate_hz: expected a number");
}

TEST(ConfigJson, OutOfRangeDiameterNamesTheBoundAndLine) {
  const std::string text = "{\n  \"schema\": 1,\n  \"tumor\": {\"diameter_mm\": 60}\n}";
  const auto msg = config_error(text);
  EXPECT_EQ(msg, "ConfigError: cfg.json:3: /tumor/diameter_mm: tumor diameter 60 mm is outside the supported range [20, 50] mm");
}

TEST(ConfigJson, TumorOutsideThePhantomIsTumorOutOfBounds) {
  const std::string text = "{\"schema\": 1,\n\"tumor\": {\"diameter_mm\": 40,\n \"center_offset_mm\": [0, 0, 10]}}";
  const auto msg = config_error(text, Errc::TumorOutOfBounds);
  EXPECT_NE(msg.find("cfg.json:3: /tumor/center_offset_mm"), std::string::npos) << msg;
}

TEST(ConfigJson, SyntaxErrorGivesLineAndColumn) {
  const std::string text = "{\n  \"schema\": 1,\n  \"seed\": 4,,\n}";
  const auto msg = config_error(text);
  EXPECT_EQ(msg.rfind("ConfigError: cfg.json:3:13: syntax error", 0), 0u) << msg;
}

TEST(ConfigJson, SchemaAndShapeErrors) {
  EXPECT_NE(config_error(R"({"seed": 1})").find("missing \"schema\""), std::string::npos);
  EXPECT_NE(config_error(R"({"schema": 2})").find("/schema: unsupported schema"), std::string::npos);
  EXPECT_NE(config_error(R"({"schema": 1, "tumor": {"diameter_mm": 30, "semi_axes_mm": [15, 15, 15]}})").find("not both"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"schema": 1, "phantom": {"size_mm": [1, 2]}})").find("array of 3 numbers"), std::string::npos);
  EXPECT_NE(config_error(R"({"schema": 1, "motion": {"kind": "wobble"}})").find("/motion/kind"), std::string::npos);
  EXPECT_NE(config_error(R"({"schema": 1, "contouring": {"slices": 2.5}})").find("expected an integer"), std::string::npos);
  EXPECT_NE(config_error("[1, 2]").find("must be a JSON object"), std::string::npos);
}

TEST(ConfigJson, AllProblemsAreListed) {
  const std::string text = "{\"schema\": 1,\n\"noise\": {\"bogus\": 1},\n\"report\": {\"nope\": true}}";
  const auto msg = config_error(text);
  EXPECT_NE(msg.find("cfg.json:2: /noise/bogus"), std::string::npos) << msg;
  EXPECT_NE(msg.find("cfg.json:3: /report/nope"), std::string::npos) << msg;
}

TEST(ConfigJson, KeysWithPointerCharactersAreEscaped) {
  const auto msg = config_error("{\"schema\": 1,\n\"a/b~c\": 0}");
  EXPECT_EQ(msg, "ConfigError: cfg.json:2: /a~1b~0c: unknown key 'a/b~c'");
}

TEST(ScenarioFiles, ReloadReproducesTheScenario) {
  ScenarioConfig c;
  c.seed = 11;
  const Scenario sc = generate_scenario(c);
  const auto dir = scratch("reload");
  io::write_scenario(dir, sc);
  for (const char* f : {"scenario.json", "contours.json", "tumor_mesh.bin", "fixture_mesh.bin"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;

  const Scenario back = io::load_scenario(dir);
  EXPECT_EQ(back.fixture.vertices, sc.fixture.vertices);
  EXPECT_EQ(back.fixture.triangles, sc.fixture.triangles);
  ASSERT_EQ(back.contours.contours.size(), sc.contours.contours.size());
  EXPECT_EQ(back.tumor_center, sc.tumor_center);

  const auto again = scratch("reload2");
  io::write_scenario(again, back);
  for (const char* f : {"scenario.json", "contours.json", "tumor_mesh.bin", "fixture_mesh.bin"}) {
    std::ifstream a(dir / f, std::ios::binary), b(again / f, std::ios::binary);
    EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}), std::string(std::istreambuf_iterator<char>(b), {})) << f;
  }
  fs::remove_all(dir);
  fs::remove_all(again);
}

TEST(ScenarioFiles, TamperedContoursAreRejected) {
  const auto dir = scratch("tamper");
  io::write_scenario(dir, generate_scenario(ScenarioConfig{}));
  {
    std::ofstream out(dir / "contours.json", std::ios::app);
    out << " ";
  }
  try {
    io::load_scenario(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("does not match"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(ScenarioFiles, MissingDirectoryIsAConfigError) {
  try {
    io::load_scenario(scratch("absent"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ConfigError);
  }
}

namespace {

io::BatchEntry fake(std::uint64_t seed, bool guided, double minutes, double vol, double margin) {
  io::BatchEntry e;
  e.seed = seed;
  e.result.guided = guided;
  e.result.completed = true;
  e.result.report.duration_s = minutes * 60.0;
  e.result.report.volume_removed_pct = vol;
  e.result.report.min_margin_mm = margin;
  classify(e.result.report);
  return e;
}

}  // namespace

TEST(Summary, MeansAndSampleDeviations) {
  const std::vector<io::BatchEntry> entries = {fake(1, true, 10, 15, 3), fake(1, false, 8, 12, 1),
                                               fake(2, true, 14, 19, 2.5), fake(2, false, 9, 14, -1)};
  const auto g = io::summarize(entries, true), u = io::summarize(entries, false);
  EXPECT_EQ(g.runs, 2u);
  EXPECT_DOUBLE_EQ(g.duration_min_mean, 12.0);
  EXPECT_NEAR(g.duration_min_sd, std::sqrt(8.0), 1e-12);  // (2^2 + 2^2) / (2 - 1)
  EXPECT_DOUBLE_EQ(g.volume_pct_mean, 17.0);
  EXPECT_EQ(g.positive, 0u);
  EXPECT_EQ(u.positive, 2u);
  EXPECT_EQ(u.transected, 1u);
  EXPECT_DOUBLE_EQ(u.min_margin_worst, -1.0);

  const auto table = io::summary_table(entries);
  EXPECT_NE(table.find("VF guidance"), std::string::npos);
  EXPECT_NE(table.find("12.0 +/- 2.8"), std::string::npos) << table;
  EXPECT_NE(table.find("13.8 +/- 6.7"), std::string::npos);
  EXPECT_NE(table.find("15.2 +/- 1.4"), std::string::npos);

  const auto csv = io::summary_csv(entries);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), io::kSummaryCsvHeader);
  EXPECT_NE(csv.find("\nvf,2,2,0,0,12,"), std::string::npos) << csv;
}

TEST(Summary, ReportRowMatchesHeader) {
  const auto e = fake(5, false, 1, 2, 0.5);
  const auto row = io::report_csv_row(5, e.result);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(io::kReportCsvHeader.begin(), io::kReportCsvHeader.end(), ','));
  EXPECT_EQ(row.substr(0, 9), "5,no_vf,1");
  const auto j = io::run_json(5, e.result);
  EXPECT_EQ(j["arm"], "no_vf");
  EXPECT_EQ(j["report"]["positive_margin"], true);
  EXPECT_FALSE(j.contains("p99_period_ns"));
}

TEST(Batch, ParallelResultsMatchSequentialRuns) {
  ScenarioConfig c;
  const std::vector<std::uint64_t> seeds = {2, 5, 9};
  const auto batch = io::run_batch(c, seeds, {false}, 3);
  ASSERT_EQ(batch.size(), 3u);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    EXPECT_EQ(batch[i].seed, seeds[i]);
    ScenarioConfig s = c;
    s.seed = seeds[i];
    const auto direct = run_resection(generate_scenario(s), false);
    EXPECT_EQ(io::run_json(seeds[i], batch[i].result).dump(), io::run_json(seeds[i], direct).dump());
  }
  EXPECT_THROW(io::run_batch(c, {}, {true}), Error);
}

TEST(Batch, WorkerErrorsPropagate) {
  ScenarioConfig c;
  c.tumor_semi_axes = Vec3::Constant(40);
  EXPECT_THROW(io::run_batch(c, {1, 2}, {false}, 2), Error);
}
