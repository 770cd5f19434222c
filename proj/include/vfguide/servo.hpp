#pragma once

// The 1 kHz haptic loop and the down-sampled navigation feed. Inputs and
// outputs are latest-value mailboxes, so a slow reader never stalls the servo.

#include <sys/prctl.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <optional>
#include <sstream>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "vfguide/error.hpp"
#include "vfguide/frames.hpp"
#include "vfguide/geometry.hpp"
#include "vfguide/mailbox.hpp"
#include "vfguide/tracking.hpp"
#include "vfguide/vf_engine.hpp"

namespace vfg {

struct ServoStats {
  std::uint64_t tick_count = 0;
  std::int64_t mean_period_ns = 0;
  std::int64_t p99_period_ns = 0;
  std::int64_t max_period_ns = 0;
  std::int64_t mean_compute_ns = 0;
  std::int64_t max_compute_ns = 0;
  std::uint64_t overrun_count = 0;  // compute > period
  std::uint64_t stale_ticks = 0;

  /// One `key=value` per line.
  std::string to_kv() const {
    std::ostringstream o;
    o << "tick_count=" << tick_count << "\nmean_period_ns=" << mean_period_ns << "\np99_period_ns=" << p99_period_ns
      << "\nmax_period_ns=" << max_period_ns << "\nmean_compute_ns=" << mean_compute_ns
      << "\nmax_compute_ns=" << max_compute_ns << "\noverrun_count=" << overrun_count << "\nstale_ticks=" << stale_ticks
      << "\n";
    return o.str();
  }
};

namespace detail {

// Fixed 1 us bins up to 50 ms; longer periods land in the last bin.
class PeriodHistogram {
 public:
  void add(std::int64_t ns) {
    const auto bin = static_cast<std::size_t>(std::clamp<std::int64_t>(ns / 1000, 0, kBins - 1));
    ++bins_[bin];
    ++count_;
  }

  std::int64_t quantile(double q) const {
    if (count_ == 0) return 0;
    const auto target = static_cast<std::uint64_t>(std::ceil(q * static_cast<double>(count_)));
    std::uint64_t acc = 0;
    for (std::size_t i = 0; i < bins_.size(); ++i) {
      acc += bins_[i];
      if (acc >= target) return static_cast<std::int64_t>(i + 1) * 1000;
    }
    return kBins * 1000;
  }

 private:
  static constexpr std::int64_t kBins = 50'000;
  std::vector<std::uint64_t> bins_ = std::vector<std::uint64_t>(kBins, 0);
  std::uint64_t count_ = 0;
};

class StatsAccumulator {
 public:
  void add(std::int64_t period_ns, std::int64_t compute_ns, bool stale) {
    ++stats_.tick_count;
    if (period_ns > 0) {
      hist_.add(period_ns);
      period_sum_ += period_ns;
      ++periods_;
      stats_.max_period_ns = std::max(stats_.max_period_ns, period_ns);
    }
    compute_sum_ += compute_ns;
    stats_.max_compute_ns = std::max(stats_.max_compute_ns, compute_ns);
    if (compute_ns > nominal_) ++stats_.overrun_count;
    if (stale) ++stats_.stale_ticks;
  }

  void set_nominal(std::int64_t ns) { nominal_ = ns; }

  ServoStats finish() const {
    ServoStats s = stats_;
    if (periods_ > 0) {
      s.mean_period_ns = period_sum_ / static_cast<std::int64_t>(periods_);
      s.p99_period_ns = std::max(hist_.quantile(0.99), s.mean_period_ns);
    }
    if (s.tick_count > 0) s.mean_compute_ns = compute_sum_ / static_cast<std::int64_t>(s.tick_count);
    return s;
  }

 private:
  ServoStats stats_;
  PeriodHistogram hist_;
  std::int64_t period_sum_ = 0, compute_sum_ = 0, nominal_ = 1'000'000;
  std::uint64_t periods_ = 0;
};

// Coarse sleeps while far from the deadline, then spin: plain sleep_until
// overshoots by hundreds of microseconds on a loaded or virtualised host.
inline void wait_until(std::chrono::steady_clock::time_point deadline) {
  using namespace std::chrono;
  constexpr auto kSpinWindow = microseconds(150);
  for (;;) {
    const auto now = steady_clock::now();
    if (now >= deadline) return;
    if (deadline - now > kSpinWindow)
      std::this_thread::sleep_for(microseconds(50));
    else
      std::this_thread::yield();
  }
}

}  // namespace detail

enum class ClockMode : std::uint8_t { Virtual, Wall };

/// Static part of the transform tree the servo rebuilds each tick.
struct ServoSetup {
  RigidTransform tracker_to_reference;
  RigidTransform tip_to_stylus;      // CauteryTip -> StylusSensor (pivot calibration)
  RigidTransform tumor_to_needle;    // TumorModel -> NeedleSensor
  std::optional<RigidTransform> base_to_reference;  // RobotBase -> Reference, absent without a device
};

struct ServoInputs {
  const Mailbox<PoseSet>& tracker;
  const Mailbox<FixtureMesh>& fixture;  // un-inflated hull, TumorModel frame
  const Mailbox<VfConfig>& config;
};

struct ServoOutputs {
  Mailbox<ProxyState>& state;
  Mailbox<FrameGraph>* graph = nullptr;
};

struct ServoOptions {
  double rate_hz = 1000.0;
  ClockMode clock = ClockMode::Virtual;
  std::int64_t start_ns = 0;               // virtual clock origin
  std::optional<std::uint64_t> max_ticks;  // stop after this many ticks
  std::int64_t staleness_ns = 50'000'000;
  ServoSetup setup;
  std::function<void(std::uint64_t tick, std::int64_t now_ns)> before_tick;
  std::function<void(const ProxyState&)> after_tick;
};

namespace detail {

class ServoCore {
 public:
  ServoCore(const ServoInputs& in, const ServoOptions& opt) : in_(in), opt_(opt) {
    const auto fx = in.fixture.latest();
    if (!fx) throw Error(Errc::InvalidArgument, "fixture mailbox must be populated before start");
    // Inflate before the first deadline so tick 0 costs the same as any other.
    const auto cfg = in.config.latest();
    margin_ = cfg ? cfg->margin : VfConfig{}.margin;
    inflated_ = inflate(*fx, margin_);
    fixture_seq_ = fx.seq;
    generation_ = 1;
  }

  ProxyState tick(std::int64_t now_ns, bool& stale) {
    const auto poses = in_.tracker.latest();
    const auto fixture = in_.fixture.latest();
    const auto cfg_snap = in_.config.latest();
    const VfConfig cfg = cfg_snap ? *cfg_snap : VfConfig{};
    refresh_fixture(fixture, cfg);

    const auto& s = opt_.setup;
    graph_.set(FrameId::Reference, FrameId::Tracker, s.tracker_to_reference, now_ns);
    if (s.base_to_reference) graph_.set(FrameId::Reference, FrameId::RobotBase, *s.base_to_reference, now_ns);

    const TrackerSample* stylus = poses ? poses->find(FrameId::StylusSensor) : nullptr;
    const TrackerSample* needle = poses ? poses->find(FrameId::NeedleSensor) : nullptr;
    if (poses)
      for (const auto& smp : poses->samples)
        if (smp.valid) graph_.set(FrameId::Tracker, smp.frame, smp.pose, smp.timestamp_ns);
    if (stylus && stylus->valid) graph_.set(FrameId::StylusSensor, FrameId::CauteryTip, s.tip_to_stylus, stylus->timestamp_ns);
    if (needle && needle->valid) graph_.set(FrameId::NeedleSensor, FrameId::TumorModel, s.tumor_to_needle, needle->timestamp_ns);

    stale = !fresh(stylus, now_ns) || !fresh(needle, now_ns);
    if (stale) {
      // Never extrapolate: hold the last goal, drop the force.
      ProxyState st;
      st.goal = st.proxy = prev_.initialized ? prev_.goal : Vec3::Zero();
      st.prev_proxy = prev_.proxy;
      st.timestamp_ns = now_ns;
      st.status = ProxyStatus::Stale;
      st.fixture_generation = generation_;
      st.tick = prev_.tick + 1;
      st.initialized = true;
      prev_ = st;
      return st;
    }

    const Vec3 goal = graph_.resolve(FrameId::CauteryTip, FrameId::TumorModel).translation();
    ProxyState st = step_proxy(inflated_, prev_, goal, cfg, now_ns, generation_);
    st.force_base = graph_.contains(FrameId::RobotBase) ? transform_force_to_base(st.force, graph_) : st.force;
    prev_ = st;
    return st;
  }

  const FrameGraph& graph() const { return graph_; }

 private:
  bool fresh(const TrackerSample* smp, std::int64_t now_ns) const {
    return smp && smp->valid && now_ns - smp->timestamp_ns <= opt_.staleness_ns;
  }

  // A new hull or margin is inflated off the servo thread in wall mode; the
  // previous fixture stays active until the replacement is ready.
  void refresh_fixture(const Mailbox<FixtureMesh>::Snapshot& fx, const VfConfig& cfg) {
    if (pending_.valid()) {
      if (pending_.wait_for(std::chrono::seconds(0)) != std::future_status::ready) return;
      inflated_ = pending_.get();
      ++generation_;
    }
    if (fx.seq == fixture_seq_ && cfg.margin == margin_) return;
    fixture_seq_ = fx.seq;
    margin_ = cfg.margin;
    if (opt_.clock == ClockMode::Wall) {
      pending_ = std::async(std::launch::async, [mesh = fx.value, m = cfg.margin] { return inflate(*mesh, m); });
      return;
    }
    inflated_ = inflate(*fx, cfg.margin);
    ++generation_;
  }

  const ServoInputs& in_;
  const ServoOptions& opt_;
  FrameGraph graph_;
  FixtureMesh inflated_;
  std::future<FixtureMesh> pending_;
  std::uint64_t fixture_seq_ = 0, generation_ = 0;
  double margin_ = -1.0;
  ProxyState prev_;
};

}  // namespace detail

/// Runs until `stop` is requested or `max_ticks` is reached. In virtual mode
/// time advances exactly one period per tick and never sleeps.
inline ServoStats run_servo(const ServoInputs& in, const ServoOutputs& out, const ServoOptions& opt,
                            std::stop_token stop = {}) {
  if (!(opt.rate_hz > 0)) throw Error(Errc::InvalidArgument, "rate_hz must be > 0");
  const auto period_ns = static_cast<std::int64_t>(std::llround(1e9 / opt.rate_hz));
  detail::ServoCore core(in, opt);
  detail::StatsAccumulator acc;
  acc.set_nominal(period_ns);

  if (opt.clock == ClockMode::Wall) prctl(PR_SET_TIMERSLACK, 1UL, 0, 0, 0);
  using clock = std::chrono::steady_clock;
  auto deadline = clock::now();
  std::int64_t last_start = -1;

  for (std::uint64_t tick = 0; !stop.stop_requested() && (!opt.max_ticks || tick < *opt.max_ticks); ++tick) {
    const bool wall = opt.clock == ClockMode::Wall;
    const std::int64_t now_ns = wall ? monotonic_ns() : opt.start_ns + static_cast<std::int64_t>(tick) * period_ns;
    const auto t0 = clock::now();
    if (opt.before_tick) opt.before_tick(tick, now_ns);

    bool stale = false;
    const ProxyState st = core.tick(now_ns, stale);
    out.state.publish(st, now_ns);
    if (out.graph) out.graph->publish(core.graph(), now_ns);
    if (opt.after_tick) opt.after_tick(st);

    const auto compute = std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - t0).count();
    const std::int64_t period = last_start < 0 ? 0 : (wall ? now_ns - last_start : period_ns);
    last_start = now_ns;
    acc.add(period, compute, stale);

    if (wall) {
      deadline += std::chrono::nanoseconds(period_ns);
      // After a long stall, resume from now instead of bursting to catch up.
      if (clock::now() - deadline > std::chrono::nanoseconds(period_ns)) deadline = clock::now();
      detail::wait_until(deadline);
    }
  }
  return acc.finish();
}

struct NavSample {
  std::shared_ptr<const ProxyState> state;
  std::shared_ptr<const FrameGraph> graph;  // may be null
  std::uint64_t servo_seq = 0;
  bool stale = false;  // servo produced nothing new since the previous emit
  std::int64_t emit_ns = 0;
};

struct NavStats {
  std::uint64_t emitted = 0;
  std::uint64_t dropped = 0;  // servo states never forwarded
  std::uint64_t stale_emits = 0;
};

/// Forwards the latest servo state to `sink` at `rate_hz`. A sink that blocks
/// only delays this loop; missed states are counted, not queued.
inline NavStats run_navigation(const Mailbox<ProxyState>& in, const Mailbox<FrameGraph>* graph,
                               const std::function<void(const NavSample&)>& sink, std::stop_token stop,
                               double rate_hz = 30.0) {
  if (!(rate_hz > 0)) throw Error(Errc::InvalidArgument, "rate_hz must be > 0");
  using clock = std::chrono::steady_clock;
  const auto period = std::chrono::nanoseconds(static_cast<std::int64_t>(std::llround(1e9 / rate_hz)));
  NavStats stats;
  std::uint64_t last_seq = 0;
  auto next = clock::now();
  while (!stop.stop_requested()) {
    const auto snap = in.latest();
    if (snap) {
      NavSample s;
      s.state = snap.value;
      s.servo_seq = snap.seq;
      s.stale = snap.seq == last_seq;
      s.emit_ns = monotonic_ns();
      if (graph) s.graph = graph->latest().value;
      if (snap.seq > last_seq + 1 && last_seq > 0) stats.dropped += snap.seq - last_seq - 1;
      last_seq = snap.seq;
      ++stats.emitted;
      if (s.stale) ++stats.stale_emits;
      sink(s);
    }
    next += period;
    if (clock::now() > next) next = clock::now();
    std::this_thread::sleep_until(next);
  }
  return stats;
}

}  // namespace vfg
