#pragma once

// TCP transport for wire messages. The server keeps, per client session, one
// latest-value slot per (name, type) stream: a slot overwritten before it was
// sent counts as a drop, and the drop total rides on the keepalive STATUS.
// Clients subscribe by sending a Subscribe STATUS whose text is a comma list
// of stream names ("*" for all).

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "vfguide/error.hpp"
#include "vfguide/tracking.hpp"
#include "vfguide/wire.hpp"

namespace vfg::wire {

using StreamKey = std::pair<std::string, MsgType>;

namespace detail {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    reset();
    fd_ = std::exchange(o.fd_, -1);
    return *this;
  }
  ~Fd() { reset(); }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }

 private:
  int fd_ = -1;
};

inline void set_socket_options(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  ::setsockopt(fd, SOL_SOCKET, SO_KEEPALIVE, &one, sizeof one);
}

inline std::set<std::string> parse_subscriptions(const std::string& text) {
  std::set<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) out.insert(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

struct ServerOptions {
  std::uint16_t port = kDefaultPort;  // 0 picks an ephemeral port
  std::string bind_address = "127.0.0.1";
  std::chrono::milliseconds keepalive{1000};
  std::map<std::string, double> max_rate_hz;  // per stream name; absent = unlimited
  std::size_t send_buffer_limit = 1u << 20;   // bytes queued per session before slots start coalescing
  std::string name = "Server";
};

struct ServerStats {
  std::uint64_t sessions = 0, published = 0, sent = 0, dropped = 0, received = 0, decode_errors = 0;
};

class WireServer {
 public:
  using Handler = std::function<void(const Message&)>;

  explicit WireServer(ServerOptions opt = {}, Handler on_message = {}) : opt_(std::move(opt)), on_message_(std::move(on_message)) {
    listen_ = detail::Fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!listen_) throw Error(Errc::RuntimeError, std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(listen_.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(opt_.port);
    if (::inet_pton(AF_INET, opt_.bind_address.c_str(), &addr.sin_addr) != 1)
      throw Error(Errc::InvalidArgument, "bad bind address " + opt_.bind_address);
    if (::bind(listen_.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
      throw Error(Errc::RuntimeError, "bind port " + std::to_string(opt_.port) + ": " + std::strerror(errno));
    if (::listen(listen_.get(), 16) != 0) throw Error(Errc::RuntimeError, std::string("listen: ") + std::strerror(errno));
    socklen_t len = sizeof addr;
    ::getsockname(listen_.get(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    accept_thread_ = std::jthread([this](std::stop_token st) { accept_loop(st); });
  }

  ~WireServer() { stop(); }
  WireServer(const WireServer&) = delete;
  WireServer& operator=(const WireServer&) = delete;

  std::uint16_t port() const { return port_; }

  void stop() {
    accept_thread_.request_stop();
    if (accept_thread_.joinable()) accept_thread_.join();
    std::list<std::shared_ptr<Session>> sessions;
    {
      std::lock_guard lk(mu_);
      sessions.swap(sessions_);
    }
    for (auto& s : sessions) {
      s->thread.request_stop();
      s->cv.notify_all();
    }
    for (auto& s : sessions)
      if (s->thread.joinable()) s->thread.join();
  }

  /// Offers `m` to every subscribed session. Never blocks on the network.
  void publish(const Message& m) {
    auto bytes = std::make_shared<const std::vector<std::uint8_t>>(encode(m));
    std::lock_guard lk(mu_);
    ++stats_.published;
    for (auto& s : sessions_) s->offer({m.name, m.type()}, bytes);
  }

  ServerStats stats() const {
    std::lock_guard lk(mu_);
    ServerStats out = stats_;
    for (const auto& s : sessions_) {
      std::lock_guard sl(s->mu);
      out.sent += s->sent;
      out.dropped += s->dropped;
    }
    return out;
  }

  std::size_t session_count() const {
    std::lock_guard lk(mu_);
    return sessions_.size();
  }

 private:
  struct Slot {
    std::shared_ptr<const std::vector<std::uint8_t>> bytes;
    std::uint64_t order = 0;
    std::chrono::steady_clock::time_point last_sent{};
  };

  struct Session {
    detail::Fd fd;
    std::mutex mu;
    std::condition_variable cv;
    std::set<std::string> subscriptions;
    std::map<StreamKey, Slot> slots;
    std::uint64_t next_order = 0, sent = 0, dropped = 0;
    std::jthread thread;
    std::atomic<bool> closed{false};

    bool wants(const std::string& name) const { return subscriptions.contains("*") || subscriptions.contains(name); }

    void offer(const StreamKey& key, std::shared_ptr<const std::vector<std::uint8_t>> bytes) {
      std::lock_guard lk(mu);
      if (!wants(key.first)) return;
      auto& slot = slots[key];
      if (slot.bytes) ++dropped;
      slot.bytes = std::move(bytes);
      slot.order = ++next_order;
      cv.notify_all();
    }
  };

  void accept_loop(std::stop_token st) {
    while (!st.stop_requested()) {
      pollfd p{listen_.get(), POLLIN, 0};
      if (::poll(&p, 1, 50) <= 0) {
        reap();
        continue;
      }
      detail::Fd fd(::accept4(listen_.get(), nullptr, nullptr, SOCK_NONBLOCK | SOCK_CLOEXEC));
      if (!fd) continue;
      detail::set_socket_options(fd.get());
      auto s = std::make_shared<Session>();
      s->fd = std::move(fd);
      {
        std::lock_guard lk(mu_);
        ++stats_.sessions;
        sessions_.push_back(s);
      }
      s->thread = std::jthread([this, s](std::stop_token sst) { session_loop(*s, sst); });
    }
  }

  void reap() {
    std::list<std::shared_ptr<Session>> dead;
    {
      std::lock_guard lk(mu_);
      for (auto it = sessions_.begin(); it != sessions_.end();) {
        if ((*it)->closed) {
          std::lock_guard sl((*it)->mu);
          stats_.sent += (*it)->sent;
          stats_.dropped += (*it)->dropped;
          dead.push_back(*it);
          it = sessions_.erase(it);
        } else {
          ++it;
        }
      }
    }
    for (auto& s : dead)
      if (s->thread.joinable()) s->thread.join();
  }

  // Moves due slots into the outgoing buffer, oldest offer first.
  void fill(Session& s, std::vector<std::uint8_t>& out, std::chrono::steady_clock::time_point now) {
    std::lock_guard lk(s.mu);
    std::vector<std::pair<std::uint64_t, Slot*>> due;
    for (auto& [key, slot] : s.slots) {
      if (!slot.bytes) continue;
      if (auto it = opt_.max_rate_hz.find(key.first); it != opt_.max_rate_hz.end() && it->second > 0) {
        const auto gap = std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(1.0 / it->second));
        if (now - slot.last_sent < gap) continue;
      }
      due.emplace_back(slot.order, &slot);
    }
    std::sort(due.begin(), due.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [order, slot] : due) {
      if (out.size() >= opt_.send_buffer_limit) break;
      out.insert(out.end(), slot->bytes->begin(), slot->bytes->end());
      slot->bytes.reset();
      slot->last_sent = now;
      ++s.sent;
    }
  }

  void session_loop(Session& s, std::stop_token st) {
    using clock = std::chrono::steady_clock;
    std::vector<std::uint8_t> out;
    std::size_t out_pos = 0;
    StreamDecoder in;
    std::uint64_t seen_errors = 0;
    std::uint8_t buf[65536];
    auto next_keepalive = clock::now() + opt_.keepalive;
    while (!st.stop_requested()) {
      const auto now = clock::now();
      if (out_pos == out.size()) {
        out.clear();
        out_pos = 0;
      }
      if (now >= next_keepalive) {
        std::uint64_t drops;
        {
          std::lock_guard lk(s.mu);
          drops = s.dropped;
        }
        const auto ka = encode(status_message(opt_.name, static_cast<std::uint64_t>(monotonic_ns()), StatusCode::Keepalive,
                                              "drops=" + std::to_string(drops)));
        out.insert(out.end(), ka.begin(), ka.end());
        next_keepalive = now + opt_.keepalive;
      }
      if (out.size() - out_pos < opt_.send_buffer_limit) fill(s, out, now);

      if (out_pos == out.size()) {
        std::unique_lock lk(s.mu);
        s.cv.wait_for(lk, std::chrono::milliseconds(1), [&] {
          return st.stop_requested() || (opt_.max_rate_hz.empty() && std::any_of(s.slots.begin(), s.slots.end(),
                                                                                   [](const auto& kv) { return kv.second.bytes != nullptr; }));
        });
      }
      pollfd p{s.fd.get(), static_cast<short>(POLLIN | (out_pos < out.size() ? POLLOUT : 0)), 0};
      const int ready = ::poll(&p, 1, out_pos < out.size() ? 20 : 0);
      if (ready < 0 && errno != EINTR) break;
      if (ready <= 0) continue;
      if (p.revents & POLLIN) {
        const ssize_t n = ::recv(s.fd.get(), buf, sizeof buf, 0);
        if (n == 0 || (n < 0 && errno != EAGAIN && errno != EINTR)) break;
        if (n > 0) {
          in.feed({buf, static_cast<std::size_t>(n)});
          while (auto m = in.next()) handle_inbound(s, *m);
          std::lock_guard lk(mu_);
          stats_.decode_errors += in.errors() - seen_errors;
          seen_errors = in.errors();
        }
      } else if (p.revents & (POLLERR | POLLHUP | POLLNVAL)) {
        break;
      }
      if ((p.revents & POLLOUT) && out_pos < out.size()) {
        const ssize_t n = ::send(s.fd.get(), out.data() + out_pos, out.size() - out_pos, MSG_NOSIGNAL);
        if (n < 0 && errno != EAGAIN && errno != EINTR) break;
        if (n > 0) out_pos += static_cast<std::size_t>(n);
      }
    }
    s.closed = true;
  }

  void handle_inbound(Session& s, const Message& m) {
    if (const auto* st = std::get_if<StatusBody>(&m.body); st && st->code == static_cast<std::uint16_t>(StatusCode::Subscribe)) {
      std::lock_guard lk(s.mu);
      s.subscriptions = detail::parse_subscriptions(st->text);
      return;
    }
    {
      std::lock_guard lk(mu_);
      ++stats_.received;
    }
    if (on_message_) on_message_(m);
  }

  ServerOptions opt_;
  Handler on_message_;
  detail::Fd listen_;
  std::uint16_t port_ = 0;
  mutable std::mutex mu_;
  std::list<std::shared_ptr<Session>> sessions_;
  ServerStats stats_;
  std::jthread accept_thread_;
};

struct ClientOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = kDefaultPort;
  std::vector<std::string> subscriptions{"*"};
  std::chrono::milliseconds backoff_initial{100};
  std::chrono::milliseconds backoff_max{2000};
  std::optional<int> max_attempts;  // consecutive failed connects before giving up
  std::size_t queue_limit = 100000;  // oldest messages are discarded beyond this
};

enum class ClientState { Connecting, Connected, Lost, Stopped };

struct ClientStats {
  std::uint64_t received = 0, decode_errors = 0, connects = 0, failed_attempts = 0, discarded = 0;
  std::uint64_t server_drops = 0;  // from the latest keepalive
  std::uint64_t keepalives = 0;
};

class WireClient {
 public:
  explicit WireClient(ClientOptions opt) : opt_(std::move(opt)) {
    thread_ = std::jthread([this](std::stop_token st) { run(st); });
  }
  ~WireClient() { stop(); }
  WireClient(const WireClient&) = delete;
  WireClient& operator=(const WireClient&) = delete;

  void stop() {
    thread_.request_stop();
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
    std::lock_guard lk(mu_);
    if (state_ != ClientState::Lost) state_ = ClientState::Stopped;
  }

  /// True once connected; throws ConnectionLost if the client gave up first.
  bool wait_connected(std::chrono::milliseconds timeout) {
    std::unique_lock lk(mu_);
    cv_.wait_for(lk, timeout, [&] { return state_ == ClientState::Connected || state_ == ClientState::Lost; });
    if (state_ == ClientState::Lost) throw Error(Errc::ConnectionLost, last_error_);
    return state_ == ClientState::Connected;
  }

  std::optional<Message> pop(std::chrono::milliseconds timeout) {
    std::unique_lock lk(mu_);
    cv_.wait_for(lk, timeout, [&] { return !queue_.empty() || state_ == ClientState::Lost; });
    if (queue_.empty()) {
      if (state_ == ClientState::Lost) throw Error(Errc::ConnectionLost, last_error_);
      return std::nullopt;
    }
    Message m = std::move(queue_.front());
    queue_.pop_front();
    return m;
  }

  /// Queues `m` for the server; dropped if not connected.
  bool send(const Message& m) {
    auto b = encode(m);
    std::lock_guard lk(mu_);
    if (state_ != ClientState::Connected) return false;
    outbox_.insert(outbox_.end(), b.begin(), b.end());
    return true;
  }

  ClientState state() const {
    std::lock_guard lk(mu_);
    return state_;
  }
  ClientStats stats() const {
    std::lock_guard lk(mu_);
    return stats_;
  }

 private:
  std::optional<detail::Fd> try_connect() {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(opt_.host.c_str(), std::to_string(opt_.port).c_str(), &hints, &res) != 0 || !res) {
      last_error_ = "cannot resolve " + opt_.host;
      return std::nullopt;
    }
    detail::Fd fd(::socket(res->ai_family, SOCK_STREAM | SOCK_CLOEXEC, 0));
    const int rc = fd ? ::connect(fd.get(), res->ai_addr, res->ai_addrlen) : -1;
    ::freeaddrinfo(res);
    if (rc != 0) {
      last_error_ = opt_.host + ":" + std::to_string(opt_.port) + ": " + std::strerror(errno);
      return std::nullopt;
    }
    detail::set_socket_options(fd.get());
    return fd;
  }

  void run(std::stop_token st) {
    auto backoff = opt_.backoff_initial;
    int failures = 0;
    while (!st.stop_requested()) {
      auto fd = try_connect();
      if (!fd) {
        std::unique_lock lk(mu_);
        ++stats_.failed_attempts;
        if (opt_.max_attempts && ++failures >= *opt_.max_attempts) {
          state_ = ClientState::Lost;
          cv_.notify_all();
          return;
        }
        cv_.wait_for(lk, backoff, [&] { return st.stop_requested(); });
        backoff = std::min(backoff * 2, opt_.backoff_max);
        continue;
      }
      failures = 0;
      backoff = opt_.backoff_initial;
      std::string subs;
      for (const auto& s : opt_.subscriptions) subs += (subs.empty() ? "" : ",") + s;
      {
        std::lock_guard lk(mu_);
        ++stats_.connects;
        state_ = ClientState::Connected;
        const auto b = encode(status_message("client", 0, StatusCode::Subscribe, subs));
        outbox_.assign(b.begin(), b.end());
      }
      cv_.notify_all();
      session(fd->get(), st);
      std::lock_guard lk(mu_);
      if (!st.stop_requested()) {
        state_ = ClientState::Connecting;
        last_error_ = "connection lost";
      }
    }
  }

  void session(int fd, std::stop_token st) {
    StreamDecoder dec;
    std::uint8_t buf[65536];
    std::vector<std::uint8_t> out;
    while (!st.stop_requested()) {
      {
        std::lock_guard lk(mu_);
        out.insert(out.end(), outbox_.begin(), outbox_.end());
        outbox_.clear();
      }
      pollfd p{fd, static_cast<short>(POLLIN | (out.empty() ? 0 : POLLOUT)), 0};
      const int ready = ::poll(&p, 1, 20);
      if (ready < 0 && errno != EINTR) return;
      if (ready <= 0) continue;
      if (p.revents & POLLIN) {
        const ssize_t n = ::recv(fd, buf, sizeof buf, 0);
        if (n <= 0 && !(n < 0 && (errno == EAGAIN || errno == EINTR))) return;
        if (n > 0) {
          dec.feed({buf, static_cast<std::size_t>(n)});
          std::lock_guard lk(mu_);
          while (auto m = dec.next()) deliver(std::move(*m));
          stats_.decode_errors = dec.errors();
          cv_.notify_all();
        }
      } else if (p.revents & (POLLERR | POLLHUP | POLLNVAL)) {
        return;
      }
      if ((p.revents & POLLOUT) && !out.empty()) {
        const ssize_t n = ::send(fd, out.data(), out.size(), MSG_NOSIGNAL | MSG_DONTWAIT);
        if (n < 0 && errno != EAGAIN && errno != EINTR) return;
        if (n > 0) out.erase(out.begin(), out.begin() + n);
      }
    }
  }

  // Caller holds mu_.
  void deliver(Message m) {
    if (const auto* s = std::get_if<StatusBody>(&m.body); s && s->code == static_cast<std::uint16_t>(StatusCode::Keepalive)) {
      ++stats_.keepalives;
      if (s->text.starts_with("drops=")) stats_.server_drops = std::strtoull(s->text.c_str() + 6, nullptr, 10);
      return;
    }
    ++stats_.received;
    queue_.push_back(std::move(m));
    while (queue_.size() > opt_.queue_limit) {
      queue_.pop_front();
      ++stats_.discarded;
    }
  }

  ClientOptions opt_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  ClientState state_ = ClientState::Connecting;
  std::string last_error_;
  std::deque<Message> queue_;
  std::vector<std::uint8_t> outbox_;
  ClientStats stats_;
  std::jthread thread_;
};

}  // namespace vfg::wire
