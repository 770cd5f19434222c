#pragma once

// Finger-proxy forbidden-region fixture. The proxy is the goal while the goal
// is outside the (inflated) hull and the nearest surface point once it enters;
// the rendered force is the clamped spring between them.

#include <algorithm>
#include <cstdint>
#include <string_view>

#include "vfguide/error.hpp"
#include "vfguide/frames.hpp"
#include "vfguide/geometry.hpp"

namespace vfg {

struct VfConfig {
  double stiffness_k = 1.0;  // N/mm
  double force_cap = 3.3;    // N
  double margin = 4.0;       // mm, hull inflation
  bool enabled = true;
  std::int64_t ramp_ns = 500'000'000;  // soft start when contact begins inside the fixture

  void validate() const {
    if (!(stiffness_k > 0)) throw Error(Errc::InvalidArgument, "stiffness_k must be > 0");
    if (!(force_cap > 0)) throw Error(Errc::InvalidArgument, "force_cap must be > 0");
    if (!(margin >= 0)) throw Error(Errc::InvalidArgument, "margin must be >= 0");
    if (ramp_ns < 0) throw Error(Errc::InvalidArgument, "ramp_ns must be >= 0");
  }

  bool operator==(const VfConfig&) const = default;
};

enum class ProxyStatus : std::uint8_t { Free, Contact, Disabled, Stale };

constexpr std::string_view to_string(ProxyStatus s) {
  switch (s) {
    case ProxyStatus::Free: return "free";
    case ProxyStatus::Contact: return "contact";
    case ProxyStatus::Disabled: return "disabled";
    case ProxyStatus::Stale: return "stale";
  }
  return "?";
}

struct ProxyState {
  Vec3 proxy = Vec3::Zero();  // tumor frame, mm
  Vec3 goal = Vec3::Zero();
  bool in_contact = false;
  Vec3 force = Vec3::Zero();       // tumor frame, N
  Vec3 force_base = Vec3::Zero();  // device base frame, N (filled by the servo)
  std::int64_t timestamp_ns = 0;
  ProxyStatus status = ProxyStatus::Free;

  Vec3 prev_proxy = Vec3::Zero();
  double penetration = 0.0;  // mm below the fixture surface, 0 when free
  std::size_t face = 0;
  std::uint64_t fixture_generation = 0;
  std::int64_t ramp_start_ns = -1;
  std::uint64_t tick = 0;
  bool initialized = false;
};

/// f = k (proxy - goal), rescaled to the cap when longer.
inline Vec3 compute_force(const Vec3& proxy, const Vec3& goal, const VfConfig& cfg) {
  Vec3 f = cfg.stiffness_k * (proxy - goal);
  const double mag = f.norm();
  if (mag > cfg.force_cap) f *= cfg.force_cap / mag;
  return f;
}

/// One servo update. `fixture` must already be inflated by cfg.margin.
inline ProxyState step_proxy(const FixtureMesh& fixture, const ProxyState& prev, const Vec3& goal, const VfConfig& cfg,
                             std::int64_t now_ns, std::uint64_t fixture_generation = 0) {
  if (!goal.allFinite()) throw Error(Errc::InvalidArgument, "goal is not finite");
  ProxyState s;
  s.goal = goal;
  s.proxy = goal;
  s.timestamp_ns = now_ns;
  s.prev_proxy = prev.proxy;
  s.fixture_generation = fixture_generation;
  s.tick = prev.tick + 1;
  s.initialized = true;

  if (!cfg.enabled) {
    s.status = ProxyStatus::Disabled;
    return s;
  }
  // Free unless strictly inside; the full triangle query only runs on contact.
  if (fixture.empty() || max_plane_distance(fixture, goal) >= 0.0) {
    s.status = ProxyStatus::Free;
    return s;
  }
  const SurfacePoint sp = closest_surface_point(fixture, goal);
  s.status = ProxyStatus::Contact;
  s.in_contact = true;
  s.proxy = sp.point;
  s.face = sp.face;
  s.penetration = -sp.signed_distance;

  const bool same_fixture = prev.initialized && prev.fixture_generation == fixture_generation;
  if (same_fixture && prev.status == ProxyStatus::Contact)
    s.ramp_start_ns = prev.ramp_start_ns;
  else if (same_fixture && prev.status == ProxyStatus::Free)
    s.ramp_start_ns = -1;  // entered through the surface
  else
    s.ramp_start_ns = now_ns;  // first state, re-anchored fixture, or re-enabled while inside

  double scale = 1.0;
  if (s.ramp_start_ns >= 0) {
    scale = cfg.ramp_ns == 0 ? 1.0
                             : std::clamp(static_cast<double>(now_ns - s.ramp_start_ns) / static_cast<double>(cfg.ramp_ns),
                                          0.0, 1.0);
    if (scale >= 1.0) s.ramp_start_ns = -1;
  }
  s.force = scale * compute_force(s.proxy, goal, cfg);
  return s;
}

/// Forces are free vectors: only the rotation of TumorModel -> RobotBase applies.
inline Vec3 transform_force_to_base(const Vec3& f, const FrameGraph& g, FrameId from = FrameId::TumorModel) {
  return g.resolve(from, FrameId::RobotBase).rotation() * f;
}

}  // namespace vfg
