#include <gtest/gtest.h>

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "vfguide/scenario_io.hpp"
#include "vfguide/wire_net.hpp"

using namespace vfg;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

extern char** environ;

namespace {

const fs::path kCli = VFGUIDE_CLI;

struct Proc {
  pid_t pid = -1;
  int wait() const {
    int status = 0;
    ::waitpid(pid, &status, 0);
    return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  }
};

Proc spawn(std::vector<std::string> args, const fs::path& log) {
  args.insert(args.begin(), kCli.string());
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  posix_spawn_file_actions_t fa;
  posix_spawn_file_actions_init(&fa);
  posix_spawn_file_actions_addopen(&fa, 1, log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_adddup2(&fa, 1, 2);
  Proc p;
  EXPECT_EQ(posix_spawn(&p.pid, argv[0], &fa, nullptr, argv.data(), environ), 0);
  posix_spawn_file_actions_destroy(&fa);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("vfguide_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    out_ = dir_ / "log.txt";
    return spawn(std::move(args), out_).wait();
  }
  std::string log() const { return slurp(out_); }

  fs::path dir_, out_;
};

}  // namespace

TEST_F(Cli, ScenarioWritesFilesThatReload) {
  ASSERT_EQ(run({"scenario", "--seed", "3", "--out", (dir_ / "sc").string()}), 0) << log();
  const Scenario sc = io::load_scenario(dir_ / "sc");
  EXPECT_EQ(sc.config.seed, 3u);
}

TEST_F(Cli, OversizedTumorIsAConfigErrorCitingTheBound) {
  std::ofstream(dir_ / "bad.json") << "{\n  \"schema\": 1,\n  \"tumor\": {\"diameter_mm\": 60}\n}\n";
  EXPECT_EQ(run({"scenario", "--config", (dir_ / "bad.json").string(), "--out", (dir_ / "x").string()}), 2);
  EXPECT_NE(log().find("bad.json:3: /tumor/diameter_mm"), std::string::npos) << log();
  EXPECT_NE(log().find("[20, 50]"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "x"));
}

TEST_F(Cli, ManySeedsGiveDistinctDeterministicScenarios) {
  ASSERT_EQ(run({"scenario", "--seeds", "100", "--out", (dir_ / "a").string()}), 0) << log();
  ASSERT_EQ(run({"scenario", "--seeds", "100", "--out", (dir_ / "b").string()}), 0) << log();
  std::set<std::string> contours;
  for (int s = 1; s <= 100; ++s) {
    char name[16];
    std::snprintf(name, sizeof name, "seed_%04d", s);
    const auto a = slurp(dir_ / "a" / name / "contours.json");
    ASSERT_FALSE(a.empty()) << name;
    EXPECT_EQ(a, slurp(dir_ / "b" / name / "contours.json")) << name;
    contours.insert(a);
  }
  EXPECT_EQ(contours.size(), 100u);
}

TEST_F(Cli, SingleSeedRunGivesOneReport) {
  ASSERT_EQ(run({"scenario", "--seed", "2", "--out", (dir_ / "sc").string()}), 0);
  ASSERT_EQ(run({"run", "--scenario", (dir_ / "sc").string(), "--unguided", "--out", (dir_ / "r").string()}), 0) << log();
  const auto report = io::json::parse(slurp(dir_ / "r" / "runs" / "seed_0002_no_vf.json"));
  EXPECT_EQ(report["seed"], 2);
  EXPECT_EQ(report["arm"], "no_vf");
  const auto csv = slurp(dir_ / "r" / "reports.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_NE(log().find("No VF guidance"), std::string::npos);
}

TEST_F(Cli, RerunningIsByteIdentical) {
  for (const char* o : {"r1", "r2"})
    ASSERT_EQ(run({"run", "--seed", "6", "--seeds", "2", "--unguided", "--virtual-clock", "--out", (dir_ / o).string()}), 0)
        << log();
  for (const char* f : {"reports.csv", "summary.csv", "summary.txt", "runs/seed_0006_no_vf.json", "runs/seed_0007_no_vf.json",
                        "runs/seed_0007_no_vf_trajectory.csv"})
    EXPECT_EQ(slurp(dir_ / "r1" / f), slurp(dir_ / "r2" / f)) << f;
}

TEST_F(Cli, MissingScenarioFails) {
  EXPECT_NE(run({"run", "--scenario", (dir_ / "nowhere").string(), "--out", (dir_ / "r").string()}), 0);
  EXPECT_NE(log().find("missing scenario.json"), std::string::npos) << log();
}

TEST_F(Cli, BadFlagsAreConfigErrors) {
  EXPECT_EQ(run({"run", "--guided", "--unguided", "--out", (dir_ / "r").string()}), 2);
  EXPECT_EQ(run({"serve", "--vf", "maybe"}), 2);
  EXPECT_EQ(run({"frobnicate"}), 2);
  EXPECT_EQ(run({"--help"}), 0);
}

TEST_F(Cli, ServeStreamsAndShutsDownCleanlyOnSigint) {
  std::uint16_t port, ui_port;
  {
    wire::ServerOptions o;
    o.port = 0;
    wire::WireServer a(o), b(o);
    port = a.port();
    ui_port = b.port();
  }
  out_ = dir_ / "serve.txt";
  const Proc p = spawn({"serve", "--port", std::to_string(port), "--ui-port", std::to_string(ui_port), "--vf", "off", "--out",
                        (dir_ / "s").string()},
                       out_);
  wire::ClientOptions co;
  co.port = port;
  co.subscriptions = {"Force", "NeedleSensor"};
  wire::WireClient client(co);
  ASSERT_TRUE(client.wait_connected(5s)) << log();
  int forces = 0, poses = 0;
  const auto end = std::chrono::steady_clock::now() + 1s;
  while (std::chrono::steady_clock::now() < end)
    if (auto m = client.pop(50ms)) {
      if (m->type() == wire::MsgType::Force) {
        ++forces;
        EXPECT_EQ(std::get<wire::ForceBody>(m->body).newtons, Vec3::Zero());
      } else {
        ++poses;
      }
    }
  EXPECT_GT(forces, 10);
  EXPECT_GT(poses, 10);

  ::kill(p.pid, SIGINT);
  EXPECT_EQ(p.wait(), 0) << log();
  EXPECT_NE(log().find("stopped"), std::string::npos) << log();
  const auto kv = slurp(dir_ / "s" / "serve_stats.kv");
  EXPECT_NE(kv.find("tick_count="), std::string::npos) << kv;
}

TEST_F(Cli, ServeReportsPortConflicts) {
  wire::ServerOptions o;
  o.port = 0;
  wire::WireServer busy(o);
  EXPECT_EQ(run({"serve", "--port", std::to_string(busy.port()), "--ui-port", "0", "--duration", "1"}), 3);
  EXPECT_NE(log().find(std::to_string(busy.port())), std::string::npos) << log();
}
