#pragma once

// Serve-mode session: a wall-clock servo fed by the tracker simulator, steered
// by a manual goal, publishing to the wire server at navigation rate.

#include <atomic>
#include <mutex>
#include <optional>
#include <thread>

#include "vfguide/scenario.hpp"
#include "vfguide/wire_net.hpp"

namespace vfg {

struct LiveOptions {
  double nav_rate_hz = 30.0;
  double mesh_period_s = 1.0;  // hull re-broadcast so late subscribers get it
  bool vf_enabled = true;
};

struct LiveStats {
  ServoStats servo;
  NavStats nav;
  std::optional<double> min_margin_mm;  // over cutting samples so far
  std::uint64_t cutting_samples = 0;
  bool vf_enabled = true;
  bool cutting = false;
};

class LiveSession {
 public:
  /// `wire` may be null (no protocol server).
  LiveSession(Scenario sc, LiveOptions opt, wire::WireServer* wire = nullptr)
      : sc_(std::move(sc)), opt_(opt), wire_(wire) {
    const auto& c = sc_.config;
    vf_ = c.vf;
    vf_.enabled = opt.vf_enabled;
    vf_enabled_ = opt.vf_enabled;
    goal_ = Vec3(0, 0, sc_.tumor.semi_axes.z() + c.controller.approach_height);
    fixture_box_.publish(sc_.fixture, 0);
    config_box_.publish(vf_, 0);
    t0_ = monotonic_ns();

    NoiseModel noise = c.noise;
    noise.seed = derive_seed(c.noise.seed, 200);
    tracker_ = std::make_unique<TrackerSim>(noise, c.tracker_rate_hz, t0_);
    tracker_->add_frame(FrameId::NeedleSensor, [this](std::int64_t t) { return sc_.needle_at(scenario_time(t)); });
    tracker_->add_frame(FrameId::StylusSensor, [this](std::int64_t t) {
      const Mat3 rot = stylus_orientation();
      const Vec3 tip = sc_.needle_at(scenario_time(t)).apply(goal());
      return RigidTransform(rot, tip - rot * sc_.config.tip_offset);
    });

    servo_opt_.rate_hz = c.servo_rate_hz;
    servo_opt_.clock = ClockMode::Wall;
    servo_opt_.staleness_ns = static_cast<std::int64_t>(c.staleness_ms * 1e6);
    servo_opt_.setup.tip_to_stylus = RigidTransform::from_translation(sc_.pivot.tip_offset);
    record_every_ = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(c.servo_rate_hz / c.record_hz)));
    servo_opt_.before_tick = [this](std::uint64_t tick, std::int64_t now) { before_tick(tick, now); };
    servo_opt_.after_tick = [this](const ProxyState&) { after_tick(); };

    servo_ = std::jthread([this](std::stop_token st) {
      final_servo_ = run_servo({tracker_box_, fixture_box_, config_box_}, {state_box_, &graph_box_}, servo_opt_, st);
    });
    nav_ = std::jthread([this](std::stop_token st) {
      final_nav_ = run_navigation(state_box_, &graph_box_, [this](const NavSample& s) { on_nav(s); }, st, opt_.nav_rate_hz);
    });
  }

  ~LiveSession() { stop(); }
  LiveSession(const LiveSession&) = delete;
  LiveSession& operator=(const LiveSession&) = delete;

  void stop() {
    nav_.request_stop();
    servo_.request_stop();
    if (nav_.joinable()) nav_.join();
    if (servo_.joinable()) servo_.join();
  }

  /// Manual steering target, tumor frame, mm.
  void set_goal(const Vec3& p) {
    if (!p.allFinite()) throw Error(Errc::InvalidArgument, "goal is not finite");
    std::lock_guard lk(mu_);
    goal_ = p;
  }
  Vec3 goal() const {
    std::lock_guard lk(mu_);
    return goal_;
  }

  void set_vf_enabled(bool on) {
    {
      std::lock_guard lk(mu_);
      vf_.enabled = on;
      config_box_.publish(vf_, monotonic_ns());
    }
    vf_enabled_ = on;
  }
  void set_cutting(bool on) { cutting_ = on; }

  const Scenario& scenario() const { return sc_; }
  const Mailbox<ProxyState>& states() const { return state_box_; }
  const Mailbox<FrameGraph>& graphs() const { return graph_box_; }

  LiveStats stats() const {
    LiveStats s;
    if (auto snap = servo_stats_.latest()) s.servo = *snap;
    {
      std::lock_guard lk(mu_);
      s.min_margin_mm = min_margin_;
      s.cutting_samples = cutting_samples_;
      s.nav = nav_stats_;
    }
    s.vf_enabled = vf_enabled_;
    s.cutting = cutting_;
    return s;
  }

  /// Final figures; only meaningful after stop().
  ServoStats final_servo() const { return final_servo_; }
  NavStats final_nav() const { return final_nav_; }

  /// Cutting samples recorded so far, CauteryTip in the tumor frame.
  std::vector<TrackerSample> trajectory() const {
    std::lock_guard lk(mu_);
    return trajectory_;
  }

 private:
  std::int64_t scenario_time(std::int64_t wall_ns) const { return sc_.resection_start_ns + (wall_ns - t0_); }

  void before_tick(std::uint64_t tick, std::int64_t now) {
    tick_start_ = monotonic_ns();
    auto samples = tracker_->poll(now);
    if (!samples.empty()) {
      for (const auto& s : samples) poses_.upsert(s);
      tracker_box_.publish(poses_, now);
      if (wire_)
        for (const auto& s : samples)
          if (s.valid) wire_->publish(wire::transform_message(std::string(to_string(s.frame)), static_cast<std::uint64_t>(s.timestamp_ns), s.pose));
    }
    if (cutting_ && tick % record_every_ == 0) {
      const Vec3 g = goal();
      const double margin = sc_.tumor.signed_distance(g);
      std::lock_guard lk(mu_);
      trajectory_.push_back({FrameId::CauteryTip, RigidTransform::from_translation(g), now, true});
      ++cutting_samples_;
      min_margin_ = min_margin_ ? std::min(*min_margin_, margin) : margin;
    }
  }

  void after_tick() {
    const std::int64_t now = monotonic_ns();
    const auto period = last_tick_ < 0 ? 0 : tick_start_ - last_tick_;
    last_tick_ = tick_start_;
    const auto st = state_box_.latest();
    acc_.add(period, now - tick_start_, st && st->status == ProxyStatus::Stale);
    if (++ticks_ % 500 == 0) servo_stats_.publish(acc_.finish(), now);
  }

  void on_nav(const NavSample& s) {
    {
      std::lock_guard lk(mu_);
      nav_stats_.emitted++;
      if (s.stale) nav_stats_.stale_emits++;
      if (last_nav_seq_ > 0 && s.servo_seq > last_nav_seq_ + 1) nav_stats_.dropped += s.servo_seq - last_nav_seq_ - 1;
      last_nav_seq_ = s.servo_seq;
    }
    if (!wire_) return;
    const auto stamp = static_cast<std::uint64_t>(s.emit_ns);
    wire_->publish(wire::force_message("Force", stamp, s.state->force));
    wire_->publish(wire::transform_message("Proxy", stamp, RigidTransform::from_translation(s.state->proxy)));
    if (s.emit_ns - last_mesh_ns_ >= static_cast<std::int64_t>(opt_.mesh_period_s * 1e9)) {
      last_mesh_ns_ = s.emit_ns;
      wire_->publish(wire::mesh_message("TumorHull", stamp, sc_.fixture));
    }
  }

  Scenario sc_;
  LiveOptions opt_;
  wire::WireServer* wire_;
  std::int64_t t0_ = 0;

  mutable std::mutex mu_;
  Vec3 goal_;
  VfConfig vf_;
  std::vector<TrackerSample> trajectory_;
  std::optional<double> min_margin_;
  std::uint64_t cutting_samples_ = 0;
  NavStats nav_stats_;
  std::uint64_t last_nav_seq_ = 0;
  std::atomic<bool> vf_enabled_{true}, cutting_{false};

  Mailbox<PoseSet> tracker_box_;
  Mailbox<FixtureMesh> fixture_box_;
  Mailbox<VfConfig> config_box_;
  Mailbox<ProxyState> state_box_;
  Mailbox<FrameGraph> graph_box_;
  Mailbox<ServoStats> servo_stats_;

  // Servo-thread only.
  std::unique_ptr<TrackerSim> tracker_;
  PoseSet poses_;
  detail::StatsAccumulator acc_;
  std::int64_t tick_start_ = 0, last_tick_ = -1;
  std::uint64_t ticks_ = 0, record_every_ = 10;
  std::int64_t last_mesh_ns_ = -1'000'000'000'000;

  ServoOptions servo_opt_;
  ServoStats final_servo_;
  NavStats final_nav_;
  std::jthread servo_, nav_;
};

}  // namespace vfg
