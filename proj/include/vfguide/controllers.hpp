#pragma once

// Scripted stand-ins for the operator. All goals are cautery-tip positions in
// the tumor frame.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <vector>

#include "vfguide/error.hpp"
#include "vfguide/geometry.hpp"
#include "vfguide/tracking.hpp"
#include "vfguide/vf_engine.hpp"

namespace vfg {

struct ControllerCommand {
  Vec3 goal = Vec3::Zero();
  bool cutting = false;
  bool done = false;
};

class Controller {
 public:
  virtual ~Controller() = default;
  /// `latest` is the most recent servo output (null before the first tick).
  virtual ControllerCommand step(const ProxyState* latest, std::int64_t now_ns, double dt_s) = 0;
};

/// Spiral over a convex surface from its +z pole to its -z pole, as seen from
/// the centroid, pushed `radial_offset` outward along each ray. Adjacent turns
/// are at most `line_spacing` apart on the bounding sphere.
class SweepPath {
 public:
  SweepPath(const FixtureMesh& surface, double radial_offset, double line_spacing, double step = 0.5) {
    if (surface.empty()) throw Error(Errc::InvalidArgument, "sweep surface is empty");
    if (!(line_spacing > 0) || !(step > 0)) throw Error(Errc::InvalidArgument, "line spacing and step must be > 0");
    center_ = surface.centroid();
    double r_max = 0;
    for (const auto& v : surface.vertices) r_max = std::max(r_max, (v - center_).norm());
    const double turns = std::ceil(std::numbers::pi * r_max / line_spacing);
    const double k = 2.0 * turns;
    for (double theta = 0.0;; ) {
      const Vec3 u(std::sin(theta) * std::cos(k * theta), std::sin(theta) * std::sin(k * theta), std::cos(theta));
      const double rho = ray_exit_distance(surface, center_, u) + radial_offset;
      const Vec3 p = center_ + rho * u;
      cumulative_.push_back(points_.empty() ? 0.0 : cumulative_.back() + (p - points_.back()).norm());
      points_.push_back(p);
      if (theta >= std::numbers::pi) break;
      theta = std::min(std::numbers::pi, theta + step / (r_max * std::sqrt(1.0 + std::pow(k * std::sin(theta), 2))));
    }
  }

  double length() const { return cumulative_.back(); }
  const Vec3& center() const { return center_; }
  const std::vector<Vec3>& points() const { return points_; }

  Vec3 at(double s) const {
    if (s <= 0) return points_.front();
    if (s >= length()) return points_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    const auto i = static_cast<std::size_t>(it - cumulative_.begin());
    const double seg = cumulative_[i] - cumulative_[i - 1];
    const double f = seg > 0 ? (s - cumulative_[i - 1]) / seg : 0.0;
    return points_[i - 1] + f * (points_[i] - points_[i - 1]);
  }

 private:
  Vec3 center_;
  std::vector<Vec3> points_;
  std::vector<double> cumulative_;
};

namespace detail {

inline Vec3 move_toward(const Vec3& from, const Vec3& to, double max_step) {
  const Vec3 d = to - from;
  const double n = d.norm();
  return n <= max_step ? to : Vec3(from + d * (max_step / n));
}

}  // namespace detail

struct CompliantParams {
  double speed = 20.0;          // mm/s along the sweep
  double retreat_speed = 10.0;  // mm/s along the rendered force
  double press_depth = 0.5;     // mm the sweep aims inside the fixture surface
  double line_spacing = 3.5;    // mm between spiral turns
  double approach_height = 15.0;
  double margin = 4.0;  // fixture inflation; goals stay within margin/2 of the first-contact depth
};

/// Follows a sweep just inside the fixture, backs off along the force while in
/// contact, and resumes once released. With the fixture disabled it never sees
/// contact and reduces to plain path following.
class CompliantController final : public Controller {
 public:
  CompliantController(FixtureMesh fixture, CompliantParams p)
      : fixture_(std::move(fixture)), p_(p), path_(fixture_, -p.press_depth, p.line_spacing) {
    tip_ = path_.at(0) + p_.approach_height * (path_.at(0) - path_.center()).normalized();
  }

  ControllerCommand step(const ProxyState* latest, std::int64_t, double dt) override {
    if (phase_ == Phase::Done) return {tip_, false, true};
    const bool stale = latest && latest->status == ProxyStatus::Stale;
    const bool contact = latest && latest->in_contact;
    if (contact) {
      if (!had_contact_) {
        had_contact_ = true;
        first_contact_depth_ = depth(tip_);
      }
      const Vec3 away = latest->force.norm() > 0 ? Vec3(latest->force.normalized())
                                                : closest_surface_point(fixture_, tip_).normal;
      tip_ += p_.retreat_speed * dt * away;
      ++contact_ticks_;
      if (phase_ == Phase::Approach) phase_ = Phase::Sweep;  // touched the boundary: start cutting
    } else if (!stale) {
      if (phase_ == Phase::Approach) {
        tip_ = detail::move_toward(tip_, path_.at(0), p_.speed * dt);
        if (tip_ == path_.at(0)) phase_ = Phase::Sweep;
      } else {
        s_ = std::min(path_.length(), s_ + p_.speed * dt);
        tip_ = detail::move_toward(tip_, path_.at(s_), 2.0 * p_.speed * dt);
        if (s_ >= path_.length()) phase_ = Phase::Done;
      }
    }
    clamp_depth();
    return {tip_, phase_ != Phase::Approach, phase_ == Phase::Done};
  }

  const SweepPath& path() const { return path_; }
  bool had_contact() const { return had_contact_; }
  double first_contact_depth() const { return first_contact_depth_; }
  std::uint64_t contact_ticks() const { return contact_ticks_; }
  double progress() const { return s_ / path_.length(); }

  /// Depth below the fixture surface, negative outside.
  double depth(const Vec3& p) const { return -signed_distance(fixture_, p); }

 private:
  enum class Phase : std::uint8_t { Approach, Sweep, Done };

  void clamp_depth() {
    if (!had_contact_) return;
    const double floor = first_contact_depth_ + 0.5 * p_.margin;
    if (depth(tip_) <= floor) return;
    const SurfacePoint sp = closest_surface_point(fixture_, tip_);
    tip_ = sp.point - floor * sp.normal;
  }

  FixtureMesh fixture_;
  CompliantParams p_;
  SweepPath path_;
  Vec3 tip_;
  Phase phase_ = Phase::Approach;
  double s_ = 0.0;
  bool had_contact_ = false;
  double first_contact_depth_ = 0.0;
  std::uint64_t contact_ticks_ = 0;
};

struct AggressiveParams {
  double speed = 20.0;
  double line_spacing = 3.5;
  double approach_height = 15.0;
  double plan_offset = 4.0;  // intended margin around the planned outline
  Vec3 bias = Vec3::Zero();  // constant localization error for the whole run
};

/// Cuts along the planned outline (offset by the intended margin) shifted by a
/// constant bias, ignoring any force.
class AggressiveController final : public Controller {
 public:
  AggressiveController(const FixtureMesh& plan, AggressiveParams p)
      : p_(p), path_(inflate(plan, p.plan_offset), 0.0, p.line_spacing) {
    tip_ = path_.at(0) + p_.approach_height * (path_.at(0) - path_.center()).normalized() + p_.bias;
  }

  ControllerCommand step(const ProxyState*, std::int64_t, double dt) override {
    if (phase_ == Phase::Approach) {
      tip_ = detail::move_toward(tip_, path_.at(0) + p_.bias, p_.speed * dt);
      if (tip_ == path_.at(0) + p_.bias) phase_ = Phase::Sweep;
      return {tip_, false, false};
    }
    s_ = std::min(path_.length(), s_ + p_.speed * dt);
    tip_ = path_.at(s_) + p_.bias;
    const bool done = s_ >= path_.length();
    return {tip_, true, done};
  }

  const SweepPath& path() const { return path_; }

 private:
  enum class Phase : std::uint8_t { Approach, Sweep };

  AggressiveParams p_;
  SweepPath path_;
  Vec3 tip_;
  Phase phase_ = Phase::Approach;
  double s_ = 0.0;
};

/// Plays back recorded tip samples (tumor frame; `valid` = cutting),
/// holding each until the next one is due.
class ReplayController final : public Controller {
 public:
  ReplayController(std::vector<TrackerSample> samples, std::int64_t start_ns)
      : samples_(std::move(samples)), start_ns_(start_ns) {
    if (samples_.empty()) throw Error(Errc::EmptyTrajectory, "nothing to replay");
    t0_ = samples_.front().timestamp_ns;
  }

  ControllerCommand step(const ProxyState*, std::int64_t now_ns, double) override {
    const std::int64_t t = now_ns - start_ns_ + t0_;
    while (next_ + 1 < samples_.size() && samples_[next_ + 1].timestamp_ns <= t) ++next_;
    const auto& s = samples_[next_];
    return {s.pose.translation(), s.valid, t >= samples_.back().timestamp_ns};
  }

 private:
  std::vector<TrackerSample> samples_;
  std::int64_t start_ns_, t0_ = 0;
  std::size_t next_ = 0;
};

}  // namespace vfg
