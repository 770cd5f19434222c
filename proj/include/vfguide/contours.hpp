#pragma once

// Tracked ultrasound contours and their lift into the tumor frame.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

#include "vfguide/error.hpp"
#include "vfguide/frames.hpp"

namespace vfg {

using Vec2 = Eigen::Vector2d;

struct Contour {
  std::vector<Vec2> points;   // image plane, mm
  RigidTransform image_pose;  // Image -> Reference at capture
  std::int64_t stamp_ns = 0;
};

struct ContourStack {
  std::vector<Contour> contours;
  FrameId tumor_frame = FrameId::NeedleSensor;
};

namespace detail {

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  const double d1 = cross2(q2 - q1, p1 - q1), d2 = cross2(q2 - q1, p2 - q1);
  const double d3 = cross2(p2 - p1, q1 - p1), d4 = cross2(p2 - p1, q2 - p1);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 && d3 != 0 && d4 != 0;
}

}  // namespace detail

/// >= 3 points and no two non-adjacent edges cross.
inline bool is_simple_polygon(std::span<const Vec2> pts) {
  const std::size_t n = pts.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      if (detail::segments_intersect(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n])) return false;
    }
  return true;
}

inline void validate(const Contour& c) {
  if (!is_simple_polygon(c.points)) throw Error(Errc::InvalidArgument, "contour must be a simple polygon with >= 3 points");
}

namespace detail {

inline std::vector<Vec3> lift(const ContourStack& stack, auto&& reference_to_tumor_for) {
  if (stack.contours.empty()) throw Error(Errc::EmptyStack, "contour stack is empty");
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < stack.contours.size(); ++i) {
    const Contour& c = stack.contours[i];
    validate(c);
    const RigidTransform image_to_tumor = reference_to_tumor_for(i) * c.image_pose;
    for (const auto& p : c.points) out.push_back(image_to_tumor.apply(Vec3(p.x(), p.y(), 0.0)));
  }
  return out;
}

}  // namespace detail

/// Lifts every contour point to 3D and expresses it in the stack's tumor frame,
/// using one graph for all contours (stationary tumor).
inline std::vector<Vec3> contours_to_points(const ContourStack& stack, const FrameGraph& g) {
  const RigidTransform ref_to_tumor = g.resolve(FrameId::Reference, stack.tumor_frame);
  return detail::lift(stack, [&](std::size_t) { return ref_to_tumor; });
}

/// Same, with the graph snapshot captured alongside each contour.
inline std::vector<Vec3> contours_to_points(const ContourStack& stack, std::span<const FrameGraph> per_contour) {
  if (per_contour.size() != stack.contours.size())
    throw Error(Errc::InvalidArgument, "need one frame graph snapshot per contour");
  return detail::lift(stack, [&](std::size_t i) { return per_contour[i].resolve(FrameId::Reference, stack.tumor_frame); });
}

}  // namespace vfg
