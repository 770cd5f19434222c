#pragma once

// JSON-over-WebSocket mirror of a live session for the navigation console,
// plus static file serving on the same port. Message schema: docs/ui-bridge.md.

#include <atomic>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "json.hpp"
#include "vfguide/live.hpp"

namespace vfg::ui {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using json = nlohmann::json;

struct BridgeOptions {
  std::uint16_t port = 8080;  // 0 picks an ephemeral port
  std::string bind_address = "127.0.0.1";
  double rate_hz = 30.0;
  std::filesystem::path static_root;  // empty: built-in landing page only
  std::size_t max_queued = 16;        // frames waiting on a slow client before ticks are skipped
};

struct BridgeStats {
  std::uint64_t sessions_opened = 0;
  std::uint64_t frames_sent = 0;
  std::uint64_t commands = 0;
  std::uint64_t rejected = 0;
  std::uint64_t skipped_ticks = 0;  // slow client, nothing queued that tick
};

inline json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline json state_json(const ProxyState& s, std::uint64_t seq, bool vf_enabled, bool cutting) {
  return {{"type", "state"},
          {"t_ns", s.timestamp_ns},
          {"seq", seq},
          {"frame", "TumorModel"},
          {"proxy", vec_json(s.proxy)},
          {"goal", vec_json(s.goal)},
          {"in_contact", s.in_contact},
          {"force", vec_json(s.force)},
          {"force_n", s.force.norm()},
          {"penetration_mm", s.penetration},
          {"status", std::string(to_string(s.status))},
          {"vf_enabled", vf_enabled},
          {"cutting", cutting}};
}

inline json frames_json(const FrameGraph& g, std::int64_t t_ns) {
  json frames = json::object();
  for (FrameId f : kAllFrames) {
    if (f == FrameId::Reference || !g.contains(f)) continue;
    const RigidTransform t = g.resolve(f, FrameId::Reference);
    json m = json::array();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m.push_back(t.rotation()(r, c));
      m.push_back(t.translation()[r]);
    }
    frames[std::string(to_string(f))] = m;
  }
  return {{"type", "frames"}, {"t_ns", t_ns}, {"to", "Reference"}, {"layout", "row-major 3x4 [R | t]"}, {"frames", frames}};
}

inline json mesh_json(const Scenario& sc) {
  json v = json::array(), t = json::array();
  for (const auto& p : sc.fixture.vertices) v.push_back(vec_json(p));
  for (const auto& tri : sc.fixture.triangles) t.push_back({tri[0], tri[1], tri[2]});
  return {{"type", "mesh"},
          {"frame", "TumorModel"},
          {"vertices", v},
          {"triangles", t},
          {"margin_mm", sc.config.vf.margin},
          {"tumor_semi_axes_mm", vec_json(sc.tumor.semi_axes)}};
}

inline json stats_json(const LiveStats& s, const BridgeStats& b, std::size_t clients) {
  const auto& v = s.servo;
  return {{"type", "stats"},
          {"servo",
           {{"tick_count", v.tick_count},
            {"mean_period_ns", v.mean_period_ns},
            {"p99_period_ns", v.p99_period_ns},
            {"max_period_ns", v.max_period_ns},
            {"mean_compute_ns", v.mean_compute_ns},
            {"max_compute_ns", v.max_compute_ns},
            {"overrun_count", v.overrun_count},
            {"stale_ticks", v.stale_ticks}}},
          {"nav", {{"emitted", s.nav.emitted}, {"dropped", s.nav.dropped}, {"stale_emits", s.nav.stale_emits}}},
          {"vf_enabled", s.vf_enabled},
          {"cutting", s.cutting},
          {"min_margin_mm", s.min_margin_mm ? json(*s.min_margin_mm) : json(nullptr)},
          {"cutting_samples", s.cutting_samples},
          {"clients", clients},
          {"skipped_ticks", b.skipped_ticks}};
}

inline json error_json(const std::string& message) { return {{"type", "error"}, {"message", message}}; }

/// Applies one inbound command; returns an error reply when it is rejected.
inline std::optional<json> apply_command(LiveSession& live, std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    return error_json(std::string("not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) return error_json("command needs a string \"type\"");
  const auto type = j["type"].get<std::string>();
  if (type == "goal") {
    const auto& p = j.value("p", json());
    if (!p.is_array() || p.size() != 3 || !std::all_of(p.begin(), p.end(), [](const json& x) { return x.is_number(); }))
      return error_json("goal needs p: [x, y, z] in mm");
    const Vec3 g(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
    if (!g.allFinite()) return error_json("goal is not finite");
    live.set_goal(g);
  } else if (type == "vf") {
    if (!j.contains("enabled") || !j["enabled"].is_boolean()) return error_json("vf needs enabled: true|false");
    live.set_vf_enabled(j["enabled"].get<bool>());
  } else if (type == "cut") {
    if (!j.contains("active") || !j["active"].is_boolean()) return error_json("cut needs active: true|false");
    live.set_cutting(j["active"].get<bool>());
  } else {
    return error_json("unknown command '" + type + "'");
  }
  return std::nullopt;
}

inline constexpr std::string_view kLandingPage =
    "<!doctype html><meta charset=utf-8><title>vfguide</title>"
    "<p>Navigation bridge is running. Connect a WebSocket client to this address; see docs/ui-bridge.md.</p>\n";

inline std::string_view mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json" || ext == ".map") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  return "application/octet-stream";
}

class UiBridge {
 public:
  UiBridge(LiveSession& live, BridgeOptions opt) : live_(live), opt_(std::move(opt)), acceptor_(ioc_) {
    if (!(opt_.rate_hz > 0)) throw Error(Errc::InvalidArgument, "bridge rate must be > 0");
    try {
      const tcp::endpoint ep(net::ip::make_address(opt_.bind_address), opt_.port);
      acceptor_.open(ep.protocol());
      acceptor_.set_option(net::socket_base::reuse_address(true));
      acceptor_.bind(ep);
      acceptor_.listen();
    } catch (const boost::system::system_error& e) {
      throw Error(Errc::RuntimeError, "UI bridge port " + std::to_string(opt_.port) + ": " + e.code().message());
    }
    port_ = acceptor_.local_endpoint().port();
    accept();
    thread_ = std::thread([this] { ioc_.run(); });
  }

  ~UiBridge() { stop(); }
  UiBridge(const UiBridge&) = delete;
  UiBridge& operator=(const UiBridge&) = delete;

  std::uint16_t port() const { return port_; }

  void stop() {
    if (stopped_.exchange(true)) return;
    ioc_.stop();
    if (thread_.joinable()) thread_.join();
  }

  BridgeStats stats() const {
    BridgeStats s;
    s.sessions_opened = opened_;
    s.frames_sent = sent_;
    s.commands = commands_;
    s.rejected = rejected_;
    s.skipped_ticks = skipped_;
    return s;
  }
  std::size_t session_count() const { return sessions_; }

 private:
  class HttpSession;
  class WsSession;

  void accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket sock) {
      if (ec) {
        if (ec == net::error::operation_aborted) return;
      } else {
        std::make_shared<HttpSession>(std::move(sock), *this)->run();
      }
      accept();
    });
  }

  http::response<http::string_body> static_response(const http::request<http::string_body>& req) const {
    auto respond = [&](http::status st, std::string body, std::string_view type) {
      http::response<http::string_body> res{st, req.version()};
      res.set(http::field::content_type, std::string(type));
      res.keep_alive(false);
      res.body() = std::move(body);
      res.prepare_payload();
      return res;
    };
    if (req.method() != http::verb::get && req.method() != http::verb::head)
      return respond(http::status::method_not_allowed, "GET only\n", "text/plain");
    std::string target(req.target());
    if (auto q = target.find('?'); q != std::string::npos) target.resize(q);
    if (target.empty() || target[0] != '/' || target.find("..") != std::string::npos)
      return respond(http::status::bad_request, "bad path\n", "text/plain");
    if (target == "/") target = "/index.html";
    if (!opt_.static_root.empty()) {
      const auto path = opt_.static_root / target.substr(1);
      std::ifstream in(path, std::ios::binary);
      if (in && std::filesystem::is_regular_file(path)) {
        std::ostringstream ss;
        ss << in.rdbuf();
        return respond(http::status::ok, ss.str(), mime_type(path));
      }
    }
    if (target == "/index.html") return respond(http::status::ok, std::string(kLandingPage), "text/html; charset=utf-8");
    return respond(http::status::not_found, "not found\n", "text/plain");
  }

  class HttpSession : public std::enable_shared_from_this<HttpSession> {
   public:
    HttpSession(tcp::socket sock, UiBridge& b) : stream_(std::move(sock)), bridge_(b) {}

    void run() {
      stream_.expires_after(std::chrono::seconds(10));
      http::async_read(stream_, buf_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return;
        if (websocket::is_upgrade(self->req_)) {
          std::make_shared<WsSession>(self->stream_.release_socket(), self->bridge_)->run(std::move(self->req_));
          return;
        }
        self->res_ = self->bridge_.static_response(self->req_);
        http::async_write(self->stream_, self->res_, [self](beast::error_code, std::size_t) {
          beast::error_code ignored;
          self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        });
      });
    }

   private:
    beast::tcp_stream stream_;
    beast::flat_buffer buf_;
    http::request<http::string_body> req_;
    http::response<http::string_body> res_;
    UiBridge& bridge_;
  };

  class WsSession : public std::enable_shared_from_this<WsSession> {
   public:
    WsSession(tcp::socket sock, UiBridge& b) : ws_(std::move(sock)), timer_(ws_.get_executor()), bridge_(b) {}
    ~WsSession() {
      if (counted_) --bridge_.sessions_;
    }

    void run(http::request<http::string_body> req) {
      ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      ws_.text(true);
      ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
        if (ec) return;
        self->counted_ = true;
        ++self->bridge_.sessions_;
        ++self->bridge_.opened_;
        self->enqueue(mesh_json(self->bridge_.live_.scenario()).dump());
        self->read();
        self->tick();
      });
    }

   private:
    void read() {
      ws_.async_read(rbuf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->close();
          return;
        }
        const auto text = beast::buffers_to_string(self->rbuf_.data());
        self->rbuf_.consume(self->rbuf_.size());
        ++self->bridge_.commands_;
        if (auto reply = apply_command(self->bridge_.live_, text)) {
          ++self->bridge_.rejected_;
          self->enqueue(reply->dump());
        }
        self->read();
      });
    }

    void tick() {
      timer_.expires_after(std::chrono::nanoseconds(static_cast<std::int64_t>(1e9 / bridge_.opt_.rate_hz)));
      timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
        if (ec || self->closed_) return;
        self->publish();
        self->tick();
      });
    }

    void publish() {
      if (queue_.size() >= bridge_.opt_.max_queued) {
        ++bridge_.skipped_;
        return;
      }
      auto& live = bridge_.live_;
      const LiveStats ls = live.stats();
      if (const auto st = live.states().latest()) enqueue(state_json(*st, st.seq, ls.vf_enabled, ls.cutting).dump());
      if (const auto g = live.graphs().latest()) enqueue(frames_json(*g, g.stamp_ns).dump());
      enqueue(stats_json(ls, bridge_.stats(), bridge_.session_count()).dump());
    }

    void enqueue(std::string msg) {
      queue_.push_back(std::move(msg));
      if (!writing_) write_next();
    }

    void write_next() {
      writing_ = true;
      ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
        self->queue_.pop_front();
        if (ec) {
          self->close();
          return;
        }
        ++self->bridge_.sent_;
        if (self->queue_.empty())
          self->writing_ = false;
        else
          self->write_next();
      });
    }

    void close() {
      closed_ = true;
      timer_.cancel();
    }

    websocket::stream<beast::tcp_stream> ws_;
    net::steady_timer timer_;
    beast::flat_buffer rbuf_;
    std::deque<std::string> queue_;
    bool writing_ = false, closed_ = false, counted_ = false;
    UiBridge& bridge_;
  };

  LiveSession& live_;
  BridgeOptions opt_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopped_{false};
  std::atomic<std::uint64_t> opened_{0}, sent_{0}, commands_{0}, rejected_{0}, skipped_{0};
  std::atomic<std::size_t> sessions_{0};
  // Last, so pending sessions are destroyed while the counters still exist.
  net::io_context ioc_{1};
  tcp::acceptor acceptor_;
  std::thread thread_;
};

}  // namespace vfg::ui
