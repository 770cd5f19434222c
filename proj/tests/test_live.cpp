#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "vfguide/ui_bridge.hpp"

using namespace vfg;
using namespace std::chrono_literals;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using json = nlohmann::json;

namespace {

Scenario scenario() {
  ScenarioConfig c;
  c.seed = 4;
  return generate_scenario(c);
}

// Scripted console: blocking WebSocket client with a per-call deadline.
class Console {
 public:
  explicit Console(std::uint16_t port) : ws_(ioc_) {
    tcp::resolver r(ioc_);
    net::connect(ws_.next_layer(), r.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", "/");
  }

  json next() {
    buf_.clear();
    ws_.read(buf_);
    return json::parse(beast::buffers_to_string(buf_.data()));
  }

  /// First message of `type` satisfying `pred` before the deadline.
  template <class Pred>
  std::optional<json> wait_for(const std::string& type, Pred pred, std::chrono::milliseconds timeout = 2s) {
    const auto end = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < end) {
      json m = next();
      if (m["type"] == type && pred(m)) return m;
    }
    return std::nullopt;
  }

  void send(const json& j) { ws_.write(net::buffer(j.dump())); }

 private:
  net::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
  beast::flat_buffer buf_;
};

double top_of(const FixtureMesh& m) {
  double z = -1e9;
  for (const auto& v : m.vertices) z = std::max(z, v.z());
  return z;
}

}  // namespace

TEST(UiBridge, MeshArrivesFirstThenStateAtThirtyHertz) {
  LiveSession live(scenario(), {});
  ui::BridgeOptions o;
  o.port = 0;
  ui::UiBridge bridge(live, o);
  Console c(bridge.port());
  const json mesh = c.next();
  EXPECT_EQ(mesh["type"], "mesh");
  EXPECT_EQ(mesh["vertices"].size(), live.scenario().fixture.vertices.size());
  EXPECT_EQ(mesh["triangles"].size(), live.scenario().fixture.triangles.size());
  EXPECT_EQ(mesh["margin_mm"], 4.0);

  int states = 0, frames = 0, stats = 0;
  const auto t0 = std::chrono::steady_clock::now();
  while (std::chrono::steady_clock::now() - t0 < 1s) {
    const auto m = c.next();
    states += m["type"] == "state";
    frames += m["type"] == "frames";
    stats += m["type"] == "stats";
  }
  EXPECT_NEAR(states, 30, 4);
  EXPECT_NEAR(frames, 30, 4);
  EXPECT_NEAR(stats, 30, 4);
  EXPECT_EQ(bridge.session_count(), 1u);
}

TEST(UiBridge, DragIntoFixtureEchoesContactWithinHundredMs) {
  LiveSession live(scenario(), {});
  ui::BridgeOptions o;
  o.port = 0;
  ui::UiBridge bridge(live, o);
  Console c(bridge.port());
  ASSERT_TRUE(c.wait_for("state", [](const json& m) { return m["status"] == "free"; }));

  // 2 mm below the top of the margin-inflated hull.
  const double top = top_of(inflate(live.scenario().fixture, 4.0));
  const auto sent = std::chrono::steady_clock::now();
  c.send({{"type", "goal"}, {"p", {0.0, 0.0, top - 2.0}}});
  const auto hit = c.wait_for("state", [](const json& m) { return m["in_contact"] == true && m["force_n"] > 0.0; }, 500ms);
  const auto rtt = std::chrono::steady_clock::now() - sent;
  ASSERT_TRUE(hit);
  EXPECT_LT(rtt, 100ms);
  EXPECT_GT((*hit)["force"][2].get<double>(), 0.0);  // pushes back out through the top
  EXPECT_LE((*hit)["force_n"].get<double>(), 3.3 + 1e-9);

  c.send({{"type", "vf"}, {"enabled", false}});
  const auto off = c.wait_for("state", [](const json& m) { return m["vf_enabled"] == false && m["force_n"] == 0.0; }, 200ms);
  ASSERT_TRUE(off);
  EXPECT_EQ((*off)["in_contact"], false);
  EXPECT_TRUE(c.wait_for("stats", [](const json& m) { return m["vf_enabled"] == false; }, 200ms));

  c.send({{"type", "vf"}, {"enabled", true}});
  c.send({{"type", "goal"}, {"p", {0.0, 0.0, top + 20.0}}});
  EXPECT_TRUE(c.wait_for("state", [](const json& m) { return m["in_contact"] == false && m["force_n"] == 0.0 && m["vf_enabled"] == true; },
                         500ms));
}

TEST(UiBridge, CutToggleRecordsSamplesAndMargin) {
  LiveSession live(scenario(), {});
  ui::BridgeOptions o;
  o.port = 0;
  ui::UiBridge bridge(live, o);
  Console c(bridge.port());
  const double top = top_of(live.scenario().fixture);
  c.send({{"type", "goal"}, {"p", {0.0, 0.0, top + 10.0}}});
  c.send({{"type", "cut"}, {"active", true}});
  const auto s = c.wait_for("stats", [](const json& m) { return m["cutting_samples"].get<int>() > 5; });
  ASSERT_TRUE(s);
  EXPECT_EQ((*s)["cutting"], true);
  const double expected = live.scenario().tumor.signed_distance(Vec3(0, 0, top + 10.0));
  EXPECT_NEAR((*s)["min_margin_mm"].get<double>(), expected, 1e-9);
  c.send({{"type", "cut"}, {"active", false}});
  ASSERT_TRUE(c.wait_for("stats", [](const json& m) { return m["cutting"] == false; }));
  const auto n = live.trajectory().size();
  std::this_thread::sleep_for(100ms);
  EXPECT_EQ(live.trajectory().size(), n);
}

TEST(UiBridge, BadCommandsGetErrorReplies) {
  LiveSession live(scenario(), {});
  ui::BridgeOptions o;
  o.port = 0;
  ui::UiBridge bridge(live, o);
  Console c(bridge.port());
  auto expect_error = [&](const std::string& raw, const std::string& fragment) {
    c.send(json::parse(raw));
    const auto e = c.wait_for("error", [](const json&) { return true; }, 500ms);
    ASSERT_TRUE(e) << raw;
    EXPECT_NE((*e)["message"].get<std::string>().find(fragment), std::string::npos) << (*e)["message"];
  };
  expect_error(R"({"type": "teleport"})", "unknown command");
  expect_error(R"({"type": "goal", "p": [1, 2]})", "[x, y, z]");
  expect_error(R"({"type": "vf", "enabled": "yes"})", "true|false");
  expect_error(R"({"kind": "goal"})", "\"type\"");
  EXPECT_EQ(bridge.stats().rejected, 4u);
}

TEST(UiBridge, ServesStaticFiles) {
  LiveSession live(scenario(), {});
  const auto root = std::filesystem::temp_directory_path() / ("vfguide_ui_" + std::to_string(::getpid()));
  std::filesystem::create_directories(root);
  std::ofstream(root / "app.js") << "console.log('hi')";
  ui::BridgeOptions o;
  o.port = 0;
  o.static_root = root;
  ui::UiBridge bridge(live, o);

  auto get = [&](const std::string& target) {
    net::io_context ioc;
    beast::tcp_stream s(ioc);
    tcp::resolver r(ioc);
    s.connect(r.resolve("127.0.0.1", std::to_string(bridge.port())));
    http::request<http::empty_body> req{http::verb::get, target, 11};
    req.set(http::field::host, "127.0.0.1");
    http::write(s, req);
    beast::flat_buffer b;
    http::response<http::string_body> res;
    http::read(s, b, res);
    return res;
  };
  const auto js = get("/app.js");
  EXPECT_EQ(js.result(), http::status::ok);
  EXPECT_EQ(js.body(), "console.log('hi')");
  EXPECT_EQ(js[http::field::content_type], "text/javascript");
  EXPECT_EQ(get("/").result(), http::status::ok);  // built-in landing page
  EXPECT_EQ(get("/missing.css").result(), http::status::not_found);
  EXPECT_EQ(get("/../etc/passwd").result(), http::status::bad_request);
  std::filesystem::remove_all(root);
}

TEST(UiBridge, PortConflictIsReported) {
  LiveSession live(scenario(), {});
  ui::BridgeOptions o;
  o.port = 0;
  ui::UiBridge first(live, o);
  o.port = first.port();
  try {
    ui::UiBridge second(live, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::RuntimeError);
    EXPECT_NE(std::string(e.what()).find(std::to_string(o.port)), std::string::npos);
  }
}

TEST(LiveWire, ScriptedClientReceivesStreams) {
  wire::ServerOptions so;
  so.port = 0;
  wire::WireServer server(so);
  LiveSession live(scenario(), {}, &server);
  wire::ClientOptions co;
  co.port = server.port();
  wire::WireClient client(co);
  ASSERT_TRUE(client.wait_connected(2s));
  std::set<std::string> names;
  const auto end = std::chrono::steady_clock::now() + 2s;
  while (std::chrono::steady_clock::now() < end && names.size() < 5)
    if (auto m = client.pop(100ms)) names.insert(m->name);
  for (const char* n : {"Force", "Proxy", "TumorHull", "NeedleSensor", "StylusSensor"}) EXPECT_TRUE(names.contains(n)) << n;
}

TEST(LiveWire, DisabledFixtureStreamsZeroForce) {
  wire::ServerOptions so;
  so.port = 0;
  wire::WireServer server(so);
  LiveOptions lo;
  lo.vf_enabled = false;
  LiveSession live(scenario(), lo, &server);
  live.set_goal(Vec3::Zero());  // deep inside the fixture
  wire::ClientOptions co;
  co.port = server.port();
  co.subscriptions = {"Force"};
  wire::WireClient client(co);
  ASSERT_TRUE(client.wait_connected(2s));
  int forces = 0;
  const auto end = std::chrono::steady_clock::now() + 700ms;
  while (std::chrono::steady_clock::now() < end)
    if (auto m = client.pop(50ms)) {
      ASSERT_EQ(m->type(), wire::MsgType::Force);
      EXPECT_EQ(std::get<wire::ForceBody>(m->body).newtons, Vec3::Zero());
      ++forces;
    }
  EXPECT_GT(forces, 10);
}
