// vfguide: scenario generation, headless resection batches and the live
// serve mode (wire protocol + UI bridge).

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "vfguide/scenario_io.hpp"
#include "vfguide/ui_bridge.hpp"

namespace fs = std::filesystem;
using namespace vfg;

namespace {

constexpr int kExitOk = 0, kExitConfig = 2, kExitRuntime = 3;

volatile std::sig_atomic_t g_interrupted = 0;
extern "C" void on_signal(int) { g_interrupted = 1; }

struct Common {
  std::string config;
  std::uint64_t seed = 1;
  bool seed_given = false;
  std::string out;
};

ScenarioConfig base_config(const Common& c) {
  ScenarioConfig cfg = c.config.empty() ? ScenarioConfig{} : io::load_config(c.config);
  if (c.seed_given || c.config.empty()) cfg.seed = c.seed;
  return cfg;
}

std::vector<std::uint64_t> seed_list(std::uint64_t first, std::uint64_t n) {
  std::vector<std::uint64_t> s(n);
  for (std::uint64_t i = 0; i < n; ++i) s[i] = first + i;
  return s;
}

void write_file(const fs::path& p, const std::string& text) { io::write_text(p, text); }

std::string seed_dir(std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seed_%04llu", static_cast<unsigned long long>(seed));
  return buf;
}

int cmd_scenario(const Common& c, std::uint64_t seeds) {
  if (c.out.empty()) throw Error(Errc::ConfigError, "--out is required");
  const ScenarioConfig base = base_config(c);
  if (seeds <= 1) {
    const Scenario sc = generate_scenario(base);
    io::write_scenario(c.out, sc);
    std::cout << "scenario seed " << base.seed << ": " << sc.fixture.face_count() << " fixture faces, written to " << c.out << "\n";
    return kExitOk;
  }
  for (auto s : seed_list(base.seed, seeds)) {
    ScenarioConfig cfg = base;
    cfg.seed = s;
    io::write_scenario(fs::path(c.out) / seed_dir(s), generate_scenario(cfg));
  }
  std::cout << seeds << " scenarios written to " << c.out << "\n";
  return kExitOk;
}

int cmd_run(const Common& c, const std::string& scenario_dir, std::uint64_t seeds, bool guided, bool unguided,
            unsigned threads) {
  if (c.out.empty()) throw Error(Errc::ConfigError, "--out is required");
  ScenarioConfig base;
  std::vector<std::uint64_t> seed_vec;
  if (!scenario_dir.empty()) {
    if (!c.config.empty()) throw Error(Errc::ConfigError, "give either --scenario or --config, not both");
    base = io::load_scenario(scenario_dir).config;
    if (c.seed_given) base.seed = c.seed;
  } else {
    base = base_config(c);
  }
  seed_vec = seed_list(base.seed, std::max<std::uint64_t>(seeds, 1));
  std::vector<bool> arms;
  if (guided) arms.push_back(true);
  if (unguided) arms.push_back(false);

  const auto entries = io::run_batch(base, seed_vec, arms, threads);
  const fs::path out(c.out);
  fs::create_directories(out / "runs");
  std::string csv(io::kReportCsvHeader);
  csv += "\n";
  for (const auto& e : entries) {
    const std::string stem = seed_dir(e.seed) + "_" + io::arm_name(e.result.guided);
    write_file(out / "runs" / (stem + ".json"), io::run_json(e.seed, e.result).dump(2) + "\n");
    std::ostringstream traj;
    write_trajectory_csv(traj, e.result.trajectory);
    write_file(out / "runs" / (stem + "_trajectory.csv"), traj.str());
    write_file(out / "runs" / (stem + "_servo.kv"), e.result.servo.to_kv());
    csv += io::report_csv_row(e.seed, e.result) + "\n";
  }
  write_file(out / "reports.csv", csv);
  write_file(out / "summary.csv", io::summary_csv(entries));
  const auto table = io::summary_table(entries);
  write_file(out / "summary.txt", table);
  write_file(out / "config.json", io::config_to_json(base).dump(2) + "\n");
  std::cout << table;
  return kExitOk;
}

int cmd_serve(const Common& c, std::uint16_t port, std::uint16_t ui_port, const std::string& ui_root, bool vf_on,
              double duration_s) {
  const ScenarioConfig cfg = base_config(c);
  Scenario sc = generate_scenario(cfg);

  wire::ServerOptions so;
  so.port = port;
  wire::WireServer server(so);
  LiveOptions lo;
  lo.vf_enabled = vf_on;
  LiveSession live(std::move(sc), lo, &server);
  ui::BridgeOptions bo;
  bo.port = ui_port;
  bo.static_root = ui_root;
  ui::UiBridge bridge(live, bo);

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "serving: wire protocol on 127.0.0.1:" << server.port() << ", UI bridge on http://127.0.0.1:" << bridge.port()
            << "/ (fixture " << (vf_on ? "on" : "off") << ")" << std::endl;
  const auto start = std::chrono::steady_clock::now();
  while (!g_interrupted &&
         (duration_s <= 0 || std::chrono::steady_clock::now() - start < std::chrono::duration<double>(duration_s)))
    std::this_thread::sleep_for(std::chrono::milliseconds(20));

  bridge.stop();
  live.stop();
  const auto servo = live.final_servo();
  const auto nav = live.final_nav();
  const auto ws = server.stats();
  server.stop();

  std::ostringstream kv;
  kv << servo.to_kv() << "nav_emitted=" << nav.emitted << "\nnav_dropped=" << nav.dropped << "\nwire_dropped=" << ws.dropped
     << "\nui_sessions=" << bridge.stats().sessions_opened << "\n";
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_file(fs::path(c.out) / "serve_stats.kv", kv.str());
    const auto traj = live.trajectory();
    std::ostringstream t;
    write_trajectory_csv(t, traj);
    write_file(fs::path(c.out) / "trajectory.csv", t.str());
  }
  std::cout << "stopped\n" << kv.str();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ultrasound-defined virtual fixture guidance: scenarios, batch runs and live serving"};
  app.require_subcommand(1);
  Common c;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config, "scenario config JSON (schema 1)");
    sub->add_option("--seed", c.seed, "base seed")->each([&](const std::string&) { c.seed_given = true; });
    sub->add_option("--out", c.out, "output directory");
  };

  std::uint64_t seeds = 1;
  auto* scen = app.add_subcommand("scenario", "generate scenario files");
  add_common(scen);
  scen->add_option("--seeds", seeds, "number of consecutive seeds")->check(CLI::PositiveNumber);

  std::string scenario_dir;
  bool guided = false, unguided = false, both = false, virtual_clock = true;
  unsigned threads = 0;
  auto* run = app.add_subcommand("run", "run guided and/or unguided resections headless");
  add_common(run);
  run->add_option("--scenario", scenario_dir, "scenario directory written by 'scenario'");
  run->add_option("--seeds", seeds, "number of consecutive seeds")->check(CLI::PositiveNumber);
  auto* g = run->add_flag("--guided", guided, "virtual fixture arm only");
  auto* u = run->add_flag("--unguided", unguided, "unguided arm only");
  auto* b = run->add_flag("--both", both, "paired arms (default)");
  g->excludes(u)->excludes(b);
  u->excludes(b);
  run->add_flag("--virtual-clock", virtual_clock, "simulated 1 ms servo clock (batch runs always use it)");
  run->add_option("--threads", threads, "worker threads (0 = all cores)");

  std::uint16_t port = wire::kDefaultPort, ui_port = 8080;
  std::string ui_root, vf = "on";
  double duration = 0;
  auto* serve = app.add_subcommand("serve", "live session: wire protocol server and UI bridge");
  add_common(serve);
  serve->add_option("--port", port, "wire protocol port")->capture_default_str();
  serve->add_option("--ui-port", ui_port, "UI bridge port")->capture_default_str();
  serve->add_option("--ui-root", ui_root, "directory of static UI files");
  serve->add_option("--vf", vf, "virtual fixture on|off")->check(CLI::IsMember({"on", "off"}));
  serve->add_option("--duration", duration, "seconds to run (0 = until SIGINT)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*scen) return cmd_scenario(c, seeds);
    if (*run) {
      if (!guided && !unguided) guided = unguided = true;
      return cmd_run(c, scenario_dir, seeds, guided, unguided, threads);
    }
    return cmd_serve(c, port, ui_port, ui_root, vf == "on", duration);
  } catch (const Error& e) {
    std::cerr << "vfguide: " << e.what() << "\n";
    return e.code() == Errc::ConfigError || e.code() == Errc::TumorOutOfBounds ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "vfguide: " << e.what() << "\n";
    return kExitRuntime;
  }
}
