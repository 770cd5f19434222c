#pragma once

// Analytic ellipsoid with exact point-to-surface distance (bisection on the
// Lagrange-multiplier equation, after D. Eberly's formulation).

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include "vfguide/error.hpp"
#include "vfguide/frames.hpp"
#include "vfguide/geometry.hpp"

namespace vfg {

namespace detail {

inline double robust_length(double a, double b) {
  const double m = std::max(std::abs(a), std::abs(b));
  if (m == 0) return 0;
  return m * std::hypot(a / m, b / m);
}

inline double robust_length(double a, double b, double c) {
  const double m = std::max({std::abs(a), std::abs(b), std::abs(c)});
  if (m == 0) return 0;
  const double x = a / m, y = b / m, z = c / m;
  return m * std::sqrt(x * x + y * y + z * z);
}

// Root of (r0 z0/(s+r0))^2 + (z1/(s+1))^2 - 1 = 0.
inline double root2(double r0, double z0, double z1, double g) {
  const double n0 = r0 * z0;
  double s0 = z1 - 1, s1 = g < 0 ? 0 : robust_length(n0, z1) - 1, s = 0;
  for (int i = 0; i < 1100; ++i) {
    s = 0.5 * (s0 + s1);
    if (s == s0 || s == s1) break;
    const double a = n0 / (s + r0), b = z1 / (s + 1);
    g = a * a + b * b - 1;
    if (g > 0)
      s0 = s;
    else if (g < 0)
      s1 = s;
    else
      break;
  }
  return s;
}

inline double root3(double r0, double r1, double z0, double z1, double z2, double g) {
  const double n0 = r0 * z0, n1 = r1 * z1;
  double s0 = z2 - 1, s1 = g < 0 ? 0 : robust_length(n0, n1, z2) - 1, s = 0;
  for (int i = 0; i < 1100; ++i) {
    s = 0.5 * (s0 + s1);
    if (s == s0 || s == s1) break;
    const double a = n0 / (s + r0), b = n1 / (s + r1), c = z2 / (s + 1);
    g = a * a + b * b + c * c - 1;
    if (g > 0)
      s0 = s;
    else if (g < 0)
      s1 = s;
    else
      break;
  }
  return s;
}

// e0 >= e1 > 0, y0, y1 >= 0. Writes the closest point, returns the distance.
inline double closest_on_ellipse(double e0, double e1, double y0, double y1, double& x0, double& x1) {
  if (y1 > 0) {
    if (y0 > 0) {
      const double z0 = y0 / e0, z1 = y1 / e1, g = z0 * z0 + z1 * z1 - 1;
      if (g != 0) {
        const double r0 = (e0 / e1) * (e0 / e1), s = root2(r0, z0, z1, g);
        x0 = r0 * y0 / (s + r0);
        x1 = y1 / (s + 1);
        return std::hypot(x0 - y0, x1 - y1);
      }
      x0 = y0;
      x1 = y1;
      return 0;
    }
    x0 = 0;
    x1 = e1;
    return std::abs(y1 - e1);
  }
  const double numer0 = e0 * y0, denom0 = e0 * e0 - e1 * e1;
  if (numer0 < denom0) {
    const double xde0 = numer0 / denom0;
    x0 = e0 * xde0;
    x1 = e1 * std::sqrt(1 - xde0 * xde0);
    return std::hypot(x0 - y0, x1);
  }
  x0 = e0;
  x1 = 0;
  return std::abs(y0 - e0);
}

// e0 >= e1 >= e2 > 0, y >= 0 componentwise.
inline double closest_on_ellipsoid(const std::array<double, 3>& e, const std::array<double, 3>& y,
                                   std::array<double, 3>& x) {
  if (y[2] > 0) {
    if (y[1] > 0) {
      if (y[0] > 0) {
        const double z0 = y[0] / e[0], z1 = y[1] / e[1], z2 = y[2] / e[2];
        const double g = z0 * z0 + z1 * z1 + z2 * z2 - 1;
        if (g != 0) {
          const double r0 = (e[0] / e[2]) * (e[0] / e[2]), r1 = (e[1] / e[2]) * (e[1] / e[2]);
          const double s = root3(r0, r1, z0, z1, z2, g);
          x = {r0 * y[0] / (s + r0), r1 * y[1] / (s + r1), y[2] / (s + 1)};
          return robust_length(x[0] - y[0], x[1] - y[1], x[2] - y[2]);
        }
        x = y;
        return 0;
      }
      x[0] = 0;
      return closest_on_ellipse(e[1], e[2], y[1], y[2], x[1], x[2]);
    }
    x[1] = 0;
    if (y[0] > 0) return closest_on_ellipse(e[0], e[2], y[0], y[2], x[0], x[2]);
    x[0] = 0;
    x[2] = e[2];
    return std::abs(y[2] - e[2]);
  }
  const double d0 = e[0] * e[0] - e[2] * e[2], d1 = e[1] * e[1] - e[2] * e[2];
  const double n0 = e[0] * y[0], n1 = e[1] * y[1];
  if (n0 < d0 && n1 < d1) {
    const double a = n0 / d0, b = n1 / d1, discr = 1 - a * a - b * b;
    if (discr > 0) {
      x = {e[0] * a, e[1] * b, e[2] * std::sqrt(discr)};
      return robust_length(x[0] - y[0], x[1] - y[1], x[2]);
    }
  }
  x[2] = 0;
  return closest_on_ellipse(e[0], e[1], y[0], y[1], x[0], x[1]);
}

}  // namespace detail

struct Ellipsoid {
  Vec3 center = Vec3::Zero();
  Vec3 semi_axes = Vec3::Constant(17.5);  // mm, along the columns of `rotation`
  Mat3 rotation = Mat3::Identity();

  void validate() const {
    if (!(semi_axes.minCoeff() > 0) || !semi_axes.allFinite())
      throw Error(Errc::InvalidArgument, "ellipsoid semi-axes must be positive");
    if (!is_rotation(rotation)) throw Error(Errc::InvalidArgument, "ellipsoid rotation is not a rotation");
  }

  bool contains(const Vec3& p) const {
    const Vec3 q = rotation.transpose() * (p - center);
    return q.cwiseQuotient(semi_axes).squaredNorm() <= 1.0;
  }

  /// Exact Euclidean closest point on the surface.
  Vec3 closest_point(const Vec3& p) const {
    const Vec3 q = rotation.transpose() * (p - center);
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return semi_axes[a] > semi_axes[b]; });
    std::array<double, 3> e, y, x;
    for (int i = 0; i < 3; ++i) {
      e[i] = semi_axes[order[i]];
      y[i] = std::abs(q[order[i]]);
    }
    detail::closest_on_ellipsoid(e, y, x);
    Vec3 local;
    for (int i = 0; i < 3; ++i) local[order[i]] = std::copysign(x[i], q[order[i]]);
    return center + rotation * local;
  }

  /// Negative inside.
  double signed_distance(const Vec3& p) const {
    const double d = (closest_point(p) - p).norm();
    return contains(p) ? -d : d;
  }

  double volume() const { return 4.0 / 3.0 * std::numbers::pi * semi_axes.prod(); }

  Vec3 surface_point(double polar, double azimuth) const {
    const Vec3 u(std::sin(polar) * std::cos(azimuth), std::sin(polar) * std::sin(azimuth), std::cos(polar));
    return center + rotation * semi_axes.cwiseProduct(u);
  }

  /// Inscribed hull of `n` surface points (Fibonacci lattice).
  FixtureMesh mesh(std::size_t n = 2000) const {
    std::vector<Vec3> pts;
    pts.reserve(n);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (std::size_t i = 0; i < n; ++i) {
      const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      pts.push_back(surface_point(std::acos(z), golden * static_cast<double>(i)));
    }
    return convex_hull(pts);
  }
};

}  // namespace vfg
