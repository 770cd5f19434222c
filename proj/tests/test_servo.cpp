#include <gtest/gtest.h>

#include <atomic>
#include <cstring>
#include <numbers>
#include <random>
#include <thread>

#include "test_util.hpp"
#include "vfguide/servo.hpp"

using namespace vfg;
using namespace vfg::testing;
using namespace std::chrono_literals;

namespace {

struct Rig {
  Mailbox<PoseSet> tracker;
  Mailbox<FixtureMesh> fixture;
  Mailbox<VfConfig> config;
  Mailbox<ProxyState> state;
  Mailbox<FrameGraph> graph;

  Rig() {
    fixture.publish(convex_hull(sphere_points(400, 10.0)), 0);
    config.publish(VfConfig{}, 0);
  }

  ServoInputs inputs() const { return {tracker, fixture, config}; }
  ServoOutputs outputs() { return {state, &graph}; }

  // Needle at the tracker origin, stylus placing the tip at `tip` (tumor frame).
  void publish_tip(const Vec3& tip, std::int64_t stamp) {
    PoseSet ps;
    ps.upsert({FrameId::NeedleSensor, RigidTransform::identity(), stamp, true});
    ps.upsert({FrameId::StylusSensor, RigidTransform::from_translation(tip), stamp, true});
    tracker.publish(ps, stamp);
  }
};

std::vector<ProxyState> record(Rig& rig, ServoOptions opt) {
  std::vector<ProxyState> out;
  opt.after_tick = [&](const ProxyState& s) { out.push_back(s); };
  run_servo(rig.inputs(), rig.outputs(), opt);
  return out;
}

void append_bytes(std::vector<unsigned char>& b, const void* p, std::size_t n) {
  const auto* c = static_cast<const unsigned char*>(p);
  b.insert(b.end(), c, c + n);
}

std::vector<unsigned char> serialize(const std::vector<ProxyState>& states) {
  std::vector<unsigned char> b;
  for (const auto& s : states) {
    for (const Vec3* v : {&s.proxy, &s.goal, &s.force, &s.force_base, &s.prev_proxy}) append_bytes(b, v->data(), 24);
    append_bytes(b, &s.in_contact, 1);
    append_bytes(b, &s.timestamp_ns, 8);
    append_bytes(b, &s.status, 1);
    append_bytes(b, &s.penetration, 8);
    append_bytes(b, &s.face, sizeof s.face);
  }
  return b;
}

}  // namespace

TEST(Mailbox, SequenceAndLatest) {
  Mailbox<int> m;
  EXPECT_FALSE(m.latest());
  EXPECT_EQ(m.publish(7, 100), 1u);
  EXPECT_EQ(m.publish(8, 200), 2u);
  const auto s = m.latest();
  EXPECT_EQ(*s, 8);
  EXPECT_EQ(s.seq, 2u);
  EXPECT_EQ(s.stamp_ns, 200);
  EXPECT_EQ(m.wait_newer(1, 1ms).seq, 2u);
  EXPECT_EQ(m.wait_newer(2, 1ms).seq, 2u);
}

TEST(Mailbox, NoTornReadsAndMonotoneSequence) {
  struct Big {
    std::array<std::uint64_t, 64> v;
  };
  Mailbox<Big> m;
  std::atomic<bool> done{false};
  std::jthread writer([&] {
    for (std::uint64_t i = 1; i <= 20000; ++i) {
      Big b;
      b.v.fill(i);
      m.publish(b, static_cast<std::int64_t>(i));
    }
    done = true;
  });
  std::uint64_t last_seq = 0, reads = 0;
  while (!done || reads < 10) {
    const auto s = m.latest();
    if (!s) continue;
    ++reads;
    ASSERT_GE(s.seq, last_seq);
    last_seq = s.seq;
    for (auto x : s->v) ASSERT_EQ(x, s->v[0]);
    ASSERT_EQ(s->v[0], s.seq);
  }
}

TEST(Servo, EmptyFixtureMailboxIsRejected) {
  Mailbox<PoseSet> t;
  Mailbox<FixtureMesh> f;
  Mailbox<VfConfig> c;
  Mailbox<ProxyState> s;
  ServoOptions opt;
  opt.max_ticks = 1;
  EXPECT_THROW(run_servo({t, f, c}, {s}, opt), Error);
}

TEST(Servo, StaticGoalOutsideGivesZeroForce) {
  Rig rig;
  rig.publish_tip(Vec3(0, 0, 30), 0);
  ServoOptions opt;
  opt.max_ticks = 1000;
  opt.before_tick = [&](std::uint64_t, std::int64_t now) { rig.publish_tip(Vec3(0, 0, 30), now); };
  const auto states = record(rig, opt);
  ASSERT_EQ(states.size(), 1000u);
  for (const auto& s : states) {
    EXPECT_EQ(s.status, ProxyStatus::Free);
    EXPECT_EQ(s.force, Vec3::Zero());
  }
  EXPECT_EQ(rig.state.seq(), 1000u);
  EXPECT_EQ(states.back().timestamp_ns, 999'000'000);
}

TEST(Servo, SteppedGoalEntersContactExactlyOnce) {
  Rig rig;
  ServoOptions opt;
  opt.max_ticks = 1000;
  opt.before_tick = [&](std::uint64_t tick, std::int64_t now) {
    rig.publish_tip(tick < 500 ? Vec3(0, 0, 30) : Vec3(0, 0, 12), now);
  };
  const auto states = record(rig, opt);
  int transitions = 0;
  for (std::size_t i = 1; i < states.size(); ++i) transitions += states[i].in_contact != states[i - 1].in_contact;
  EXPECT_EQ(transitions, 1);
  for (std::size_t i = 0; i < states.size(); ++i) {
    EXPECT_EQ(states[i].in_contact, i >= 500) << i;
    if (i >= 500) {
      EXPECT_GT(states[i].force.norm(), 0.0);
      EXPECT_GT(states[i].force.z(), 0.0);
    }
  }
}

TEST(Servo, StaleTrackerZeroesForceWithoutExtrapolating) {
  Rig rig;
  rig.publish_tip(Vec3(0, 0, 12), 0);  // inside, never refreshed
  ServoOptions opt;
  opt.max_ticks = 100;
  const auto states = record(rig, opt);
  for (std::size_t i = 0; i < states.size(); ++i) {
    const bool fresh = static_cast<std::int64_t>(i) * 1'000'000 <= opt.staleness_ns;
    EXPECT_EQ(states[i].status == ProxyStatus::Stale, !fresh) << i;
    if (!fresh) {
      EXPECT_EQ(states[i].force, Vec3::Zero());
      EXPECT_EQ(states[i].goal, Vec3(0, 0, 12));
    }
  }
}

TEST(Servo, InvalidOrMissingSamplesAreStale) {
  Rig rig;
  PoseSet ps;
  ps.upsert({FrameId::StylusSensor, RigidTransform::identity(), 0, true});
  rig.tracker.publish(ps, 0);  // no needle
  ServoOptions opt;
  opt.max_ticks = 3;
  for (const auto& s : record(rig, opt)) EXPECT_EQ(s.status, ProxyStatus::Stale);
  ps.upsert({FrameId::NeedleSensor, RigidTransform::identity(), 0, false});
  rig.tracker.publish(ps, 0);
  for (const auto& s : record(rig, opt)) EXPECT_EQ(s.status, ProxyStatus::Stale);
}

TEST(Servo, RecoveryFromStaleInsideRampsTheForce) {
  Rig rig;
  ServoOptions opt;
  opt.max_ticks = 1000;
  opt.before_tick = [&](std::uint64_t tick, std::int64_t now) {
    if (tick < 100 || tick >= 200) rig.publish_tip(Vec3(0, 0, 12), now);
  };
  const auto states = record(rig, opt);
  EXPECT_EQ(states[160].status, ProxyStatus::Stale);
  const auto& back = states[200];
  EXPECT_EQ(back.status, ProxyStatus::Contact);
  EXPECT_LT(back.force.norm(), 0.05);
  EXPECT_NEAR(states[450].force.norm(), 0.5 * states[999].force.norm(), 0.05);
}

TEST(Servo, TipOffsetAndNeedlePoseRouteTheGoal) {
  Rig rig;
  std::mt19937_64 rng(30);
  ServoOptions opt;
  opt.max_ticks = 1;
  opt.setup.tip_to_stylus = RigidTransform::from_translation(Vec3(0, 0, 100));
  const RigidTransform needle = random_transform(rng), stylus = random_transform(rng);
  PoseSet ps;
  ps.upsert({FrameId::NeedleSensor, needle, 0, true});
  ps.upsert({FrameId::StylusSensor, stylus, 0, true});
  rig.tracker.publish(ps, 0);
  const auto s = record(rig, opt).at(0);
  const Vec3 expected = needle.inverse().apply(stylus.apply(Vec3(0, 0, 100)));
  EXPECT_LT((s.goal - expected).norm(), 1e-9);
}

TEST(Servo, ForceIsRotatedIntoTheDeviceBase) {
  Rig rig;
  ServoOptions opt;
  opt.max_ticks = 2;
  opt.setup.base_to_reference = RigidTransform::from_axis_angle(Vec3::UnitX(), std::numbers::pi / 2);
  opt.before_tick = [&](std::uint64_t tick, std::int64_t now) {
    rig.publish_tip(tick == 0 ? Vec3(0, 0, 30) : Vec3(0, 0, 12), now);
  };
  const auto s = record(rig, opt).back();
  ASSERT_TRUE(s.in_contact);
  // Base rotated +90 deg about x: reference +z is base +y.
  EXPECT_LT((s.force_base - Vec3(s.force.x(), s.force.z(), -s.force.y())).norm(), 1e-12);
}

TEST(Servo, MarginChangeReanchorsTheFixture) {
  Rig rig;
  ServoOptions opt;
  opt.max_ticks = 600;
  opt.before_tick = [&](std::uint64_t tick, std::int64_t now) {
    rig.publish_tip(Vec3(0, 0, 15), now);
    if (tick == 100) {
      VfConfig c;
      c.margin = 8.0;
      rig.config.publish(c, now);
    }
  };
  const auto states = record(rig, opt);
  EXPECT_EQ(states[99].status, ProxyStatus::Free);
  EXPECT_EQ(states[100].status, ProxyStatus::Contact);
  EXPECT_GT(states[100].fixture_generation, states[99].fixture_generation);
  EXPECT_LT(states[100].force.norm(), 1e-9);  // ramp restarts on re-anchoring
  EXPECT_NEAR(states[599].force.norm(), 3.0, 0.15);
}

TEST(Servo, VirtualClockRunsAreByteIdentical) {
  auto run = [] {
    Rig rig;
    std::mt19937_64 rng(31);
    std::normal_distribution<double> n(0.0, 0.7);
    ServoOptions opt;
    opt.max_ticks = 3000;
    opt.before_tick = [&](std::uint64_t tick, std::int64_t now) {
      if (tick % 16 != 0) return;
      const double t = 1e-9 * static_cast<double>(now);
      rig.publish_tip(Vec3(3 * std::sin(t), n(rng), 20 - 10 * t + n(rng)), now);
    };
    return serialize(record(rig, opt));
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size()), 0);
}

TEST(Servo, WallClockHoldsTheRate) {
  Rig rig;
  rig.publish_tip(Vec3(0, 0, 12), monotonic_ns());
  ServoOptions opt;
  opt.clock = ClockMode::Wall;
  opt.max_ticks = 1000;
  opt.staleness_ns = INT64_MAX;
  const auto t0 = std::chrono::steady_clock::now();
  const auto stats = run_servo(rig.inputs(), rig.outputs(), opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(stats.tick_count, 1000u);
  EXPECT_NEAR(secs, 1.0, 0.05);
  EXPECT_NEAR(static_cast<double>(stats.mean_period_ns), 1e6, 5e4);
  EXPECT_GE(stats.p99_period_ns, stats.mean_period_ns);
  EXPECT_EQ(stats.stale_ticks, 0u);
}

TEST(Servo, WallClockSwapsANewHullInWithoutStalling) {
  Rig rig;
  rig.publish_tip(Vec3(0, 0, 15), monotonic_ns());
  ServoOptions opt;
  opt.clock = ClockMode::Wall;
  opt.max_ticks = 500;
  opt.staleness_ns = INT64_MAX;
  std::uint64_t first = 0, last = 0;
  auto bigger = std::make_shared<const FixtureMesh>(convex_hull(sphere_points(2000, 12.0)));
  opt.before_tick = [&](std::uint64_t tick, std::int64_t now) {
    if (tick == 100) rig.fixture.publish(bigger, now);
  };
  opt.after_tick = [&](const ProxyState& s) {
    if (!first) first = s.fixture_generation;
    last = s.fixture_generation;
  };
  const auto stats = run_servo(rig.inputs(), rig.outputs(), opt);
  EXPECT_EQ(first, 1u);
  EXPECT_EQ(last, 2u);
  EXPECT_EQ(rig.state.latest()->status, ProxyStatus::Contact);  // 15 mm is inside the larger hull's margin
  EXPECT_LT(stats.max_compute_ns, 1'000'000);
}

TEST(ServoStats, KeyValueReport) {
  ServoStats s;
  s.tick_count = 3;
  s.p99_period_ns = 1000;
  const auto kv = s.to_kv();
  EXPECT_NE(kv.find("tick_count=3\n"), std::string::npos);
  EXPECT_NE(kv.find("p99_period_ns=1000\n"), std::string::npos);
  EXPECT_NE(kv.find("overrun_count=0\n"), std::string::npos);
}

TEST(Navigation, DownsamplesAndFlagsStaleState) {
  Rig rig;
  rig.publish_tip(Vec3(0, 0, 30), monotonic_ns());
  std::vector<NavSample> got;
  std::mutex mu;
  std::jthread nav([&](std::stop_token st) {
    run_navigation(rig.state, &rig.graph,
                   [&](const NavSample& s) {
                     std::lock_guard l(mu);
                     got.push_back(s);
                   },
                   st, 30.0);
  });
  ServoOptions opt;
  opt.clock = ClockMode::Wall;
  opt.max_ticks = 2000;
  opt.staleness_ns = INT64_MAX;
  run_servo(rig.inputs(), rig.outputs(), opt);
  std::this_thread::sleep_for(300ms);
  nav.request_stop();
  nav.join();

  std::lock_guard l(mu);
  std::size_t live = 0;
  for (const auto& s : got) live += !s.stale;
  EXPECT_NEAR(static_cast<double>(live) / 2.0, 30.0, 2.0);
  ASSERT_FALSE(got.empty());
  EXPECT_TRUE(got.back().stale);
  EXPECT_EQ(got.back().servo_seq, 2000u);
  EXPECT_NE(got.back().graph, nullptr);
}
