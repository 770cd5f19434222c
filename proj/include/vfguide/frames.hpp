#pragma once

// Rigid transforms, the tracked-sensor frame tree, and pivot calibration.
//
// Conventions: column-vector points, pre-multiplication, lengths in mm and
// timestamps in integer nanoseconds. A transform named "A->B" maps points
// expressed in frame A into frame B.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vfguide/error.hpp"

namespace vfg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  if (!r.allFinite()) return false;
  const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

class RigidTransform {
 public:
  RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

  /// Throws InvalidArgument unless `rotation` is in SO(3) within 1e-9.
  RigidTransform(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {
    if (!is_rotation(rotation_)) throw Error(Errc::InvalidArgument, "rotation is not orthonormal with det +1");
    if (!translation_.allFinite()) throw Error(Errc::InvalidArgument, "translation is not finite");
  }

  static RigidTransform identity() { return {}; }

  static RigidTransform from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }

  static RigidTransform from_axis_angle(const Vec3& axis, double angle_rad, const Vec3& t = Vec3::Zero()) {
    return {Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix(), t};
  }

  /// Rotation vector (axis * angle, radians) plus translation.
  static RigidTransform from_rotation_vector(const Vec3& rv, const Vec3& t = Vec3::Zero()) {
    const double angle = rv.norm();
    if (angle < 1e-15) return from_translation(t);
    return from_axis_angle(rv / angle, angle, t);
  }

  /// Stores the matrix as given after checking it against a looser tolerance.
  static RigidTransform with_tolerance(const Mat3& r, const Vec3& t, double tol) {
    if (!is_rotation(r, tol)) throw Error(Errc::InvalidArgument, "rotation is not orthonormal with det +1");
    if (!t.allFinite()) throw Error(Errc::InvalidArgument, "translation is not finite");
    return RigidTransform(Unchecked{}, r, t);
  }

  /// Projects a nearly-orthonormal matrix onto SO(3) (polar decomposition).
  static RigidTransform orthonormalized(const Mat3& m, const Vec3& t) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
    return RigidTransform(Unchecked{}, svd.matrixU() * d * svd.matrixV().transpose(), t);
  }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  Vec3 rotate(const Vec3& v) const { return rotation_ * v; }

  RigidTransform inverse() const {
    const Mat3 rt = rotation_.transpose();
    return RigidTransform(Unchecked{}, rt, -(rt * translation_));
  }

  /// a * b applies b first, then a.
  friend RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
    return RigidTransform(Unchecked{}, a.rotation_ * b.rotation_, a.rotation_ * b.translation_ + a.translation_);
  }

  /// Max absolute deviation of rotation entries and translation components.
  double distance_to(const RigidTransform& o) const {
    return std::max((rotation_ - o.rotation_).cwiseAbs().maxCoeff(),
                    (translation_ - o.translation_).cwiseAbs().maxCoeff());
  }

  bool operator==(const RigidTransform& o) const {
    return rotation_ == o.rotation_ && translation_ == o.translation_;
  }

 private:
  struct Unchecked {};
  RigidTransform(Unchecked, const Mat3& r, const Vec3& t) : rotation_(r), translation_(t) {}

  Mat3 rotation_;
  Vec3 translation_;
};

inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) { return a * b; }
inline RigidTransform invert(const RigidTransform& t) { return t.inverse(); }

enum class FrameId : std::uint8_t {
  Reference,
  Tracker,
  StylusSensor,
  CauteryTip,
  NeedleSensor,
  TumorModel,
  Image,
  RobotBase,
  Probe,
};

inline constexpr std::array<FrameId, 9> kAllFrames = {
    FrameId::Reference, FrameId::Tracker,  FrameId::StylusSensor, FrameId::CauteryTip, FrameId::NeedleSensor,
    FrameId::TumorModel, FrameId::Image,   FrameId::RobotBase,    FrameId::Probe};

constexpr std::string_view to_string(FrameId f) {
  switch (f) {
    case FrameId::Reference: return "Reference";
    case FrameId::Tracker: return "Tracker";
    case FrameId::StylusSensor: return "StylusSensor";
    case FrameId::CauteryTip: return "CauteryTip";
    case FrameId::NeedleSensor: return "NeedleSensor";
    case FrameId::TumorModel: return "TumorModel";
    case FrameId::Image: return "Image";
    case FrameId::RobotBase: return "RobotBase";
    case FrameId::Probe: return "Probe";
  }
  return "?";
}

inline std::optional<FrameId> frame_from_string(std::string_view s) {
  for (FrameId f : kAllFrames)
    if (to_string(f) == s) return f;
  return std::nullopt;
}

/// Tree of timestamped transforms rooted at Reference. Only the latest edge
/// per child is kept; consumers decide what counts as stale.
class FrameGraph {
 public:
  struct Edge {
    FrameId parent;
    RigidTransform child_to_parent;
    std::int64_t stamp_ns = 0;
  };

  /// Inserts or replaces the edge for `child`. Rejects edges into Reference
  /// and any edge that would close a cycle.
  void set(FrameId parent, FrameId child, const RigidTransform& child_to_parent, std::int64_t stamp_ns) {
    if (child == FrameId::Reference) throw Error(Errc::CyclicFrameGraph, "Reference is the root and has no parent");
    for (std::optional<FrameId> f = parent; f; f = parent_of(*f)) {
      if (*f == child)
        throw Error(Errc::CyclicFrameGraph, std::string(to_string(child)) + " is an ancestor of " +
                                                std::string(to_string(parent)));
    }
    edges_.insert_or_assign(child, Edge{parent, child_to_parent, stamp_ns});
  }

  void erase(FrameId child) { edges_.erase(child); }

  bool contains(FrameId f) const { return f == FrameId::Reference || edges_.contains(f); }

  const Edge* edge(FrameId child) const {
    auto it = edges_.find(child);
    return it == edges_.end() ? nullptr : &it->second;
  }

  /// Maps points in `from` into `to`.
  RigidTransform resolve(FrameId from, FrameId to) const {
    if (from == to) {
      if (!contains(from)) throw Error(Errc::UnknownFrame, std::string(to_string(from)));
      return {};
    }
    return to_root(to).inverse() * to_root(from);
  }

  /// Oldest edge timestamp on the path between two frames (INT64_MAX when empty).
  std::int64_t oldest_stamp(FrameId from, FrameId to) const {
    std::int64_t oldest = INT64_MAX;
    for (FrameId f : {from, to}) {
      for (FrameId cur = f; cur != FrameId::Reference;) {
        const Edge* e = edge(cur);
        if (!e) throw Error(Errc::UnknownFrame, std::string(to_string(cur)));
        oldest = std::min(oldest, e->stamp_ns);
        cur = e->parent;
      }
    }
    return oldest;
  }

  std::size_t size() const { return edges_.size(); }

 private:
  std::optional<FrameId> parent_of(FrameId f) const {
    auto it = edges_.find(f);
    if (it == edges_.end()) return std::nullopt;
    return it->second.parent;
  }

  RigidTransform to_root(FrameId f) const {
    RigidTransform acc;
    std::size_t hops = 0;
    for (FrameId cur = f; cur != FrameId::Reference; ++hops) {
      auto it = edges_.find(cur);
      if (it == edges_.end() || hops > edges_.size())
        throw Error(Errc::UnknownFrame, std::string(to_string(f)) + " is not connected to Reference");
      acc = it->second.child_to_parent * acc;
      cur = it->second.parent;
    }
    return acc;
  }

  std::map<FrameId, Edge> edges_;
};

struct PivotResult {
  Vec3 tip_offset = Vec3::Zero();   // sensor frame
  Vec3 pivot_point = Vec3::Zero();  // tracker frame
  double rms_residual = 0.0;
  double min_singular_value = 0.0;

  /// Residual level above which the calibration should be repeated.
  static constexpr double kWarnRms = 1.5;
  bool needs_recalibration() const { return rms_residual > kWarnRms; }
};

/// Algebraic pivot calibration: least-squares solution of
/// R_i * tip + p_i = pivot over all sensor->tracker samples.
inline PivotResult pivot_calibrate(std::span<const RigidTransform> samples, std::size_t min_samples = 10) {
  if (samples.size() < std::max<std::size_t>(min_samples, 3))
    throw Error(Errc::InvalidArgument, "pivot calibration needs at least " +
                                           std::to_string(std::max<std::size_t>(min_samples, 3)) + " samples, got " +
                                           std::to_string(samples.size()));
  const auto n = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd a(3 * n, 6);
  Eigen::VectorXd b(3 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    a.block<3, 3>(3 * i, 0) = s.rotation();
    a.block<3, 3>(3 * i, 3) = -Mat3::Identity();
    b.segment<3>(3 * i) = -s.translation();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smin = svd.singularValues()(5);
  if (!(smin > 1e-6))
    throw Error(Errc::DegenerateMotion, "pivot samples lack rotational diversity (smallest singular value " +
                                            std::to_string(smin) + ")");
  const Eigen::Matrix<double, 6, 1> x = svd.solve(b);

  PivotResult r;
  r.tip_offset = x.head<3>();
  r.pivot_point = x.tail<3>();
  r.min_singular_value = smin;
  double sq = 0.0;
  for (const auto& s : samples) sq += (s.apply(r.tip_offset) - r.pivot_point).squaredNorm();
  r.rms_residual = std::sqrt(sq / static_cast<double>(samples.size()));
  return r;
}

}  // namespace vfg
