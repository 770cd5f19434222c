#pragma once

// Convex forbidden-region geometry: quickhull, halfspace intersection,
// face-offset inflation, and distance / projection queries.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "vfguide/bytes.hpp"
#include "vfguide/error.hpp"
#include "vfguide/frames.hpp"

namespace vfg {

struct Plane {
  Vec3 normal = Vec3::UnitZ();  // outward, unit length
  double offset = 0.0;          // normal . x = offset on the plane

  double distance(const Vec3& p) const { return normal.dot(p) - offset; }
};

using Triangle = std::array<std::uint32_t, 3>;

struct FixtureMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<Plane> face_planes;  // one per triangle

  std::size_t face_count() const { return triangles.size(); }
  bool empty() const { return triangles.empty(); }

  /// Vertex average; strictly interior for any non-degenerate convex mesh.
  Vec3 centroid() const {
    Vec3 c = Vec3::Zero();
    for (const auto& v : vertices) c += v;
    return vertices.empty() ? c : Vec3(c / static_cast<double>(vertices.size()));
  }

  double volume() const {
    double six_v = 0.0;
    for (const auto& t : triangles) six_v += vertices[t[0]].dot(vertices[t[1]].cross(vertices[t[2]]));
    return six_v / 6.0;
  }

  double surface_area() const {
    double a = 0.0;
    for (const auto& t : triangles)
      a += 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
    return a;
  }
};

inline Plane plane_through(const Vec3& a, const Vec3& b, const Vec3& c) {
  Vec3 n = (b - a).cross(c - a);
  const double len = n.norm();
  if (len > 0.0) n /= len;
  return {n, n.dot((a + b + c) / 3.0)};
}

/// Builds a mesh from vertices and outward-wound triangles, computing face planes.
inline FixtureMesh make_mesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles) {
  FixtureMesh m;
  m.vertices = std::move(vertices);
  m.triangles = std::move(triangles);
  m.face_planes.reserve(m.triangles.size());
  for (const auto& t : m.triangles) {
    for (auto i : t)
      if (i >= m.vertices.size()) throw Error(Errc::InvalidArgument, "triangle index out of range");
    m.face_planes.push_back(plane_through(m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]));
  }
  return m;
}

struct MeshCheck {
  bool convex = true;         // every vertex below every face plane (+tol)
  bool outward = true;        // centroid strictly inside
  bool euler = true;          // V - E + F == 2
  bool watertight = true;     // every directed edge has exactly one opposite
  double max_violation = 0.0;

  bool ok() const { return convex && outward && euler && watertight; }
};

inline MeshCheck check_mesh(const FixtureMesh& m, double tol = 1e-6) {
  MeshCheck r;
  for (const auto& pl : m.face_planes)
    for (const auto& v : m.vertices) r.max_violation = std::max(r.max_violation, pl.distance(v));
  r.convex = r.max_violation <= tol;
  const Vec3 c = m.centroid();
  for (const auto& pl : m.face_planes)
    if (!(pl.distance(c) < 0.0)) r.outward = false;

  std::unordered_map<std::uint64_t, int> directed;
  for (const auto& t : m.triangles)
    for (int k = 0; k < 3; ++k) ++directed[(std::uint64_t(t[k]) << 32) | t[(k + 1) % 3]];
  for (const auto& [key, count] : directed) {
    const std::uint64_t rev = (key << 32) | (key >> 32);
    auto it = directed.find(rev);
    if (count != 1 || it == directed.end() || it->second != 1) r.watertight = false;
  }
  const auto v = static_cast<long>(m.vertices.size());
  const auto e = static_cast<long>(directed.size() / 2);
  const auto f = static_cast<long>(m.triangles.size());
  r.euler = (v - e + f) == 2;
  return r;
}

namespace detail {

inline std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) { return (std::uint64_t(a) << 32) | b; }

inline bool lex_less(const Vec3& a, const Vec3& b) {
  return std::tie(a.x(), a.y(), a.z()) < std::tie(b.x(), b.y(), b.z());
}

/// Reorders vertices lexicographically and faces by (normal, offset), dropping unused vertices.
inline FixtureMesh canonicalize(std::span<const Vec3> pts, const std::vector<Triangle>& tris) {
  std::vector<std::uint32_t> used;
  for (const auto& t : tris) used.insert(used.end(), t.begin(), t.end());
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  std::sort(used.begin(), used.end(), [&](auto a, auto b) { return lex_less(pts[a], pts[b]); });

  std::unordered_map<std::uint32_t, std::uint32_t> remap;
  std::vector<Vec3> verts;
  verts.reserve(used.size());
  for (auto i : used) {
    remap[i] = static_cast<std::uint32_t>(verts.size());
    verts.push_back(pts[i]);
  }
  std::vector<Triangle> out;
  out.reserve(tris.size());
  for (const auto& t : tris) {
    Triangle r{remap[t[0]], remap[t[1]], remap[t[2]]};
    // Rotate so the smallest index leads; winding is preserved.
    while (r[0] > r[1] || r[0] > r[2]) r = {r[1], r[2], r[0]};
    out.push_back(r);
  }
  FixtureMesh m = make_mesh(std::move(verts), std::move(out));

  std::vector<std::size_t> order(m.triangles.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = m.face_planes[a];
    const auto& pb = m.face_planes[b];
    return std::tie(pa.normal.x(), pa.normal.y(), pa.normal.z(), pa.offset, m.triangles[a]) <
           std::tie(pb.normal.x(), pb.normal.y(), pb.normal.z(), pb.offset, m.triangles[b]);
  });
  FixtureMesh sorted;
  sorted.vertices = std::move(m.vertices);
  for (auto i : order) {
    sorted.triangles.push_back(m.triangles[i]);
    sorted.face_planes.push_back(m.face_planes[i]);
  }
  return sorted;
}

class QuickHull {
 public:
  explicit QuickHull(std::span<const Vec3> pts) : pts_(pts) {
    Vec3 max_abs = Vec3::Zero();
    for (const auto& p : pts_) max_abs = max_abs.cwiseMax(p.cwiseAbs());
    eps_ = 1e-11 * (1.0 + max_abs.sum());
  }

  FixtureMesh build() {
    init_simplex();
    for (std::size_t fi = 0; fi < faces_.size(); ++fi) {
      while (faces_[fi].alive && !faces_[fi].outside.empty()) add_point(fi);
    }
    std::vector<Triangle> tris;
    for (const auto& f : faces_)
      if (f.alive) tris.push_back(f.v);
    return canonicalize(pts_, tris);
  }

 private:
  struct Face {
    Triangle v;
    Plane plane;
    std::vector<std::uint32_t> outside;
    bool alive = true;
  };

  double dist(const Face& f, std::uint32_t p) const { return f.plane.distance(pts_[p]); }

  std::uint32_t add_face(std::uint32_t a, std::uint32_t b, std::uint32_t c, const Vec3& fallback_normal) {
    Face f;
    f.v = {a, b, c};
    f.plane = plane_through(pts_[a], pts_[b], pts_[c]);
    if (f.plane.normal.squaredNorm() < 0.5) f.plane = {fallback_normal, fallback_normal.dot(pts_[a])};
    const auto idx = static_cast<std::uint32_t>(faces_.size());
    for (int k = 0; k < 3; ++k) {
      auto [it, inserted] = edge_face_.emplace(edge_key(f.v[k], f.v[(k + 1) % 3]), idx);
      if (!inserted) throw Error(Errc::DegenerateInput, "convex hull lost manifold topology (near-degenerate input)");
    }
    faces_.push_back(std::move(f));
    visible_mark_.push_back(0);
    hidden_mark_.push_back(0);
    return idx;
  }

  void init_simplex() {
    const auto n = static_cast<std::uint32_t>(pts_.size());
    std::array<std::uint32_t, 6> ext{};
    for (std::uint32_t i = 0; i < n; ++i)
      for (int ax = 0; ax < 3; ++ax) {
        if (pts_[i][ax] < pts_[ext[2 * ax]][ax]) ext[2 * ax] = i;
        if (pts_[i][ax] > pts_[ext[2 * ax + 1]][ax]) ext[2 * ax + 1] = i;
      }
    std::uint32_t i0 = 0, i1 = 0;
    double best = -1.0;
    for (int ax = 0; ax < 3; ++ax) {
      const double d = (pts_[ext[2 * ax + 1]] - pts_[ext[2 * ax]]).squaredNorm();
      if (d > best) best = d, i0 = ext[2 * ax], i1 = ext[2 * ax + 1];
    }
    const Vec3 dir = (pts_[i1] - pts_[i0]).normalized();
    std::uint32_t i2 = i0;
    best = -1.0;
    for (std::uint32_t i = 0; i < n; ++i) {
      const Vec3 d = pts_[i] - pts_[i0];
      const double off = (d - d.dot(dir) * dir).squaredNorm();
      if (off > best) best = off, i2 = i;
    }
    const Plane base = plane_through(pts_[i0], pts_[i1], pts_[i2]);
    std::uint32_t i3 = i0;
    best = -1.0;
    for (std::uint32_t i = 0; i < n; ++i) {
      const double d = std::abs(base.distance(pts_[i]));
      if (d > best) best = d, i3 = i;
    }
    if (best <= eps_ || i2 == i0 || i1 == i0)
      throw Error(Errc::DegenerateInput, "points are coplanar or collinear");

    const Vec3 centre = (pts_[i0] + pts_[i1] + pts_[i2] + pts_[i3]) / 4.0;
    const std::array<Triangle, 4> simplex{{{i0, i1, i2}, {i0, i3, i1}, {i1, i3, i2}, {i2, i3, i0}}};
    for (auto t : simplex) {
      if (plane_through(pts_[t[0]], pts_[t[1]], pts_[t[2]]).distance(centre) > 0) std::swap(t[1], t[2]);
      add_face(t[0], t[1], t[2], Vec3::UnitZ());
    }
    std::vector<std::uint32_t> rest;
    for (std::uint32_t i = 0; i < n; ++i)
      if (i != i0 && i != i1 && i != i2 && i != i3) rest.push_back(i);
    assign(rest, 0);
  }

  void assign(const std::vector<std::uint32_t>& candidates, std::size_t first_face) {
    for (auto p : candidates) {
      double best = eps_;
      std::size_t target = faces_.size();
      for (std::size_t f = first_face; f < faces_.size(); ++f) {
        if (!faces_[f].alive) continue;
        const double d = dist(faces_[f], p);
        if (d > best) best = d, target = f;
      }
      if (target < faces_.size()) faces_[target].outside.push_back(p);
    }
  }

  void add_point(std::size_t start) {
    ++iteration_;
    const Face& sf = faces_[start];
    std::uint32_t eye = sf.outside.front();
    double far = dist(sf, eye);
    for (auto p : sf.outside)
      if (dist(sf, p) > far) far = dist(sf, p), eye = p;

    std::vector<std::uint32_t> visible{static_cast<std::uint32_t>(start)};
    std::vector<std::pair<std::uint32_t, std::uint32_t>> horizon;
    std::vector<Vec3> horizon_normals;
    visible_mark_[start] = iteration_;
    for (std::size_t k = 0; k < visible.size(); ++k) {
      const Triangle t = faces_[visible[k]].v;
      for (int e = 0; e < 3; ++e) {
        const std::uint32_t a = t[e], b = t[(e + 1) % 3];
        const std::uint32_t g = edge_face_.at(edge_key(b, a));
        if (visible_mark_[g] == iteration_) continue;
        if (hidden_mark_[g] != iteration_ && dist(faces_[g], eye) > eps_) {
          visible_mark_[g] = iteration_;
          visible.push_back(g);
          continue;
        }
        hidden_mark_[g] = iteration_;
        horizon.emplace_back(a, b);
        horizon_normals.push_back(faces_[visible[k]].plane.normal);
      }
    }

    std::vector<std::uint32_t> orphans;
    for (auto f : visible) {
      Face& face = faces_[f];
      for (auto p : face.outside)
        if (p != eye) orphans.push_back(p);
      face.outside.clear();
      face.alive = false;
      for (int e = 0; e < 3; ++e) edge_face_.erase(edge_key(face.v[e], face.v[(e + 1) % 3]));
    }
    const std::size_t first_new = faces_.size();
    for (std::size_t h = 0; h < horizon.size(); ++h)
      add_face(horizon[h].first, horizon[h].second, eye, horizon_normals[h]);
    assign(orphans, first_new);
  }

  std::span<const Vec3> pts_;
  double eps_ = 0.0;
  std::vector<Face> faces_;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_face_;
  std::vector<std::uint64_t> visible_mark_, hidden_mark_;
  std::uint64_t iteration_ = 0;
};

}  // namespace detail

/// Smallest eigenvalue of the point covariance (mm^2); the coplanarity measure.
inline double min_covariance_eigenvalue(std::span<const Vec3> points) {
  if (points.empty()) return 0.0;
  Vec3 mean = Vec3::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) cov += (p - mean) * (p - mean).transpose();
  cov /= static_cast<double>(points.size());
  return Eigen::SelfAdjointEigenSolver<Mat3>(cov, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

/// Minimal convex polytope containing `points`. Throws DegenerateInput on fewer
/// than 4 points or a (near-)coplanar cloud.
inline FixtureMesh convex_hull(std::span<const Vec3> points, double min_variance = 1e-9) {
  if (points.size() < 4) throw Error(Errc::DegenerateInput, "convex hull needs at least 4 points");
  for (const auto& p : points)
    if (!p.allFinite()) throw Error(Errc::DegenerateInput, "non-finite point");
  if (!(min_covariance_eigenvalue(points) > min_variance))
    throw Error(Errc::DegenerateInput, "point cloud is coplanar");
  return detail::QuickHull(points).build();
}

/// Intersection of halfspaces normal . x <= offset, bounded and containing
/// `interior` strictly. Computed through the polar dual.
inline FixtureMesh intersect_halfspaces(std::span<const Plane> planes, const Vec3& interior) {
  std::vector<Vec3> dual;
  dual.reserve(planes.size());
  for (const auto& pl : planes) {
    const double e = -pl.distance(interior);
    if (!(e > 0.0)) throw Error(Errc::DegenerateInput, "interior point is not strictly inside every halfspace");
    dual.push_back(pl.normal / e);
  }
  std::sort(dual.begin(), dual.end(), detail::lex_less);
  dual.erase(std::unique(dual.begin(), dual.end(), [](const Vec3& a, const Vec3& b) {
               return (a - b).cwiseAbs().maxCoeff() <= 1e-13 * (1.0 + a.cwiseAbs().maxCoeff());
             }),
             dual.end());
  FixtureMesh dual_hull = convex_hull(dual, 0.0);
  std::vector<Vec3> primal;
  primal.reserve(dual_hull.face_planes.size());
  for (const auto& pl : dual_hull.face_planes) {
    if (!(pl.offset > 1e-15)) throw Error(Errc::DegenerateInput, "halfspace intersection is unbounded");
    primal.push_back(pl.normal / pl.offset + interior);
  }
  return convex_hull(primal, 0.0);
}

/// Moves every face plane outward by `margin` and re-extracts the polytope.
/// A safe-side superset of the rounded Minkowski offset.
inline FixtureMesh inflate(const FixtureMesh& mesh, double margin) {
  if (!(margin >= 0.0)) throw Error(Errc::InvalidArgument, "margin must be >= 0");
  if (margin == 0.0) return mesh;
  std::vector<Plane> planes = mesh.face_planes;
  for (auto& pl : planes) pl.offset += margin;
  return intersect_halfspaces(planes, mesh.centroid());
}

/// Clips a convex mesh to the axis-aligned box [lo, hi].
inline FixtureMesh clip_to_box(const FixtureMesh& mesh, const Vec3& lo, const Vec3& hi) {
  std::vector<Vec3> pts = mesh.vertices;
  std::vector<Triangle> tris = mesh.triangles;
  for (int ax = 0; ax < 3; ++ax) {
    for (int side = 0; side < 2; ++side) {
      const double bound = side == 0 ? lo[ax] : hi[ax];
      auto outside = [&](const Vec3& p) { return side == 0 ? p[ax] < bound : p[ax] > bound; };
      bool any_out = false;
      for (const auto& p : pts) any_out |= outside(p);
      if (!any_out) continue;
      std::vector<Vec3> kept;
      for (const auto& p : pts)
        if (!outside(p)) kept.push_back(p);
      for (const auto& t : tris)
        for (int k = 0; k < 3; ++k) {
          const Vec3& a = pts[t[k]];
          const Vec3& b = pts[t[(k + 1) % 3]];
          if (outside(a) != outside(b)) {
            const double s = (bound - a[ax]) / (b[ax] - a[ax]);
            Vec3 q = a + s * (b - a);
            q[ax] = bound;
            kept.push_back(q);
          }
        }
      if (kept.size() < 4 || !(min_covariance_eigenvalue(kept) > 1e-9))
        throw Error(Errc::DegenerateSpecimen, "mesh does not intersect the box in a solid");
      FixtureMesh h = convex_hull(kept);
      pts = h.vertices;
      tris = h.triangles;
    }
  }
  return detail::canonicalize(pts, tris);
}

/// Distance along `dir` (unit) from an interior `origin` to the boundary.
inline double ray_exit_distance(const FixtureMesh& mesh, const Vec3& origin, const Vec3& dir) {
  double t = std::numeric_limits<double>::infinity();
  for (const auto& pl : mesh.face_planes) {
    const double nd = pl.normal.dot(dir);
    if (nd > 1e-15) t = std::min(t, -pl.distance(origin) / nd);
  }
  return t;
}

/// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection 5.1.5).
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

struct SurfacePoint {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();  // outward normal of the supporting face
  std::size_t face = 0;
  double signed_distance = 0.0;  // of the query point
};

/// Nearest boundary point. Inside: foot on the nearest face plane. Outside:
/// Euclidean projection onto the polytope. Ties go to the lowest face index.
inline SurfacePoint closest_surface_point(const FixtureMesh& mesh, const Vec3& p) {
  constexpr double kTie = 1e-12;
  std::size_t best_face = 0;
  double best_plane = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mesh.face_planes.size(); ++i) {
    const double d = mesh.face_planes[i].distance(p);
    if (d > best_plane + kTie) best_plane = d, best_face = i;
  }
  SurfacePoint r;
  if (best_plane <= 0.0) {
    r.face = best_face;
    r.normal = mesh.face_planes[best_face].normal;
    r.point = p - best_plane * r.normal;
    r.signed_distance = best_plane;
    return r;
  }
  // Only faces whose plane separates p can carry the nearest point. The slack
  // keeps coplanar neighbours of the separating triangle in play.
  double best_sq = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    if (mesh.face_planes[i].distance(p) < -1e-9) continue;
    const auto& t = mesh.triangles[i];
    const Vec3 q = closest_point_on_triangle(p, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    const double sq = (p - q).squaredNorm();
    if (sq < best_sq - kTie) best_sq = sq, r.point = q, r.face = i;
  }
  r.normal = mesh.face_planes[r.face].normal;
  r.signed_distance = std::sqrt(best_sq);
  return r;
}

/// Negative inside (minus distance to the nearest face plane), positive outside
/// (Euclidean distance to the surface).
inline double signed_distance(const FixtureMesh& mesh, const Vec3& p) {
  double best_plane = -std::numeric_limits<double>::infinity();
  for (const auto& pl : mesh.face_planes) best_plane = std::max(best_plane, pl.distance(p));
  if (best_plane <= 0.0) return best_plane;
  return closest_surface_point(mesh, p).signed_distance;
}

/// Largest face-plane distance; negative iff strictly inside. O(F) without triangle tests.
inline double max_plane_distance(const FixtureMesh& mesh, const Vec3& p) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& pl : mesh.face_planes) best = std::max(best, pl.distance(p));
  return best;
}

// Mesh block: u32 vertex count, u32 triangle count, vertices 3 x f64, triangles 3 x u32.

inline void append_mesh_block(std::vector<std::uint8_t>& out, const FixtureMesh& mesh, bytes::Order order) {
  bytes::Writer w(order, out);
  w.u32(static_cast<std::uint32_t>(mesh.vertices.size()));
  w.u32(static_cast<std::uint32_t>(mesh.triangles.size()));
  for (const auto& v : mesh.vertices)
    for (int k = 0; k < 3; ++k) w.f64(v[k]);
  for (const auto& t : mesh.triangles)
    for (auto i : t) w.u32(i);
}

/// Parses a mesh block; returns false on truncation, trailing bytes, bad indices or non-finite data.
inline bool parse_mesh_block(std::span<const std::uint8_t> in, bytes::Order order, FixtureMesh& out) {
  bytes::Reader r(order, in);
  std::uint32_t nv = 0, nt = 0;
  if (!r.u32(nv) || !r.u32(nt)) return false;
  if (std::uint64_t(nv) * 24 + std::uint64_t(nt) * 12 != r.remaining()) return false;
  std::vector<Vec3> verts(nv);
  for (auto& v : verts)
    for (int k = 0; k < 3; ++k) {
      if (!r.f64(v[k]) || !std::isfinite(v[k])) return false;
    }
  std::vector<Triangle> tris(nt);
  for (auto& t : tris)
    for (auto& i : t)
      if (!r.u32(i) || i >= nv) return false;
  out = make_mesh(std::move(verts), std::move(tris));
  return true;
}

inline void write_mesh(std::ostream& os, const FixtureMesh& mesh) {
  std::vector<std::uint8_t> buf;
  append_mesh_block(buf, mesh, bytes::Order::Little);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline FixtureMesh read_mesh(std::istream& is) {
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  FixtureMesh m;
  if (!parse_mesh_block(buf, bytes::Order::Little, m)) throw Error(Errc::InvalidArgument, "malformed mesh file");
  return m;
}

}  // namespace vfg
