#pragma once

// Simulated EM tracker: true sensor poses perturbed by i.i.d. Gaussian noise,
// rigid tissue motion scripts, and the trajectory CSV format.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "vfguide/error.hpp"
#include "vfguide/frames.hpp"
#include "vfguide/tracking.hpp"

namespace vfg {

/// Deterministic 64-bit seed for an independent stream derived from `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x76667567u};
  std::array<std::uint32_t, 2> out;
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

struct NoiseModel {
  double pos_sigma = 0.7;      // mm per axis
  double rot_sigma_deg = 0.2;  // degrees per axis
  double dropout = 0.0;        // probability a sample is flagged invalid
  std::uint64_t seed = 0;

  void validate() const {
    if (!(pos_sigma >= 0) || !(rot_sigma_deg >= 0)) throw Error(Errc::InvalidArgument, "noise sigmas must be >= 0");
    if (!(dropout >= 0 && dropout < 1)) throw Error(Errc::InvalidArgument, "dropout must be in [0, 1)");
  }

  /// Position noise in the tracker frame, rotation noise about the sensor axes.
  RigidTransform perturb(const RigidTransform& truth, std::mt19937_64& rng) const {
    std::normal_distribution<double> n(0.0, 1.0);
    const Vec3 dp(n(rng) * pos_sigma, n(rng) * pos_sigma, n(rng) * pos_sigma);
    const double s = rot_sigma_deg * std::numbers::pi / 180.0;
    const Vec3 w(n(rng) * s, n(rng) * s, n(rng) * s);
    return RigidTransform::from_translation(dp) * truth * RigidTransform::from_rotation_vector(w);
  }
};

/// Rigid translation of the tissue over time.
class MotionScript {
 public:
  enum class Kind : std::uint8_t { Static, Drift, Sinusoid, Waypoints };

  struct Waypoint {
    double t_s;
    Vec3 offset;
  };

  Kind kind = Kind::Sinusoid;
  double amplitude = 5.0;  // mm
  double period_s = 20.0;
  Vec3 axis = Vec3::UnitX();
  double drift_sigma = 1.0;   // mm/s, velocity redrawn every drift_step_s
  double drift_step_s = 0.1;
  double bound = 10.0;  // mm, max displacement
  std::vector<Waypoint> waypoints;
  std::uint64_t seed = 0;

  static MotionScript still() {
    MotionScript m;
    m.kind = Kind::Static;
    return m;
  }

  void validate() const {
    if (!(bound >= 0)) throw Error(Errc::InvalidArgument, "motion bound must be >= 0");
    switch (kind) {
      case Kind::Static: break;
      case Kind::Sinusoid:
        if (!(period_s > 0) || !(amplitude >= 0) || amplitude > bound || axis.norm() < 1e-12)
          throw Error(Errc::InvalidArgument, "sinusoid needs period > 0, 0 <= amplitude <= bound, nonzero axis");
        break;
      case Kind::Drift:
        if (!(drift_sigma >= 0) || !(drift_step_s > 0))
          throw Error(Errc::InvalidArgument, "drift needs sigma >= 0 and step > 0");
        break;
      case Kind::Waypoints:
        if (waypoints.empty()) throw Error(Errc::InvalidArgument, "waypoint motion needs at least one waypoint");
        for (std::size_t i = 1; i < waypoints.size(); ++i)
          if (!(waypoints[i].t_s > waypoints[i - 1].t_s))
            throw Error(Errc::InvalidArgument, "waypoint times must be strictly increasing");
        break;
    }
  }

  /// Displacement at time t (t < 0 is treated as 0). Never longer than `bound`.
  Vec3 displacement(std::int64_t t_ns) const {
    const double t = std::max(0.0, 1e-9 * static_cast<double>(t_ns));
    Vec3 d = Vec3::Zero();
    switch (kind) {
      case Kind::Static: break;
      case Kind::Sinusoid: d = amplitude * std::sin(2 * std::numbers::pi * t / period_s) * axis.normalized(); break;
      case Kind::Drift: d = drift_at(t); break;
      case Kind::Waypoints: d = waypoint_at(t); break;
    }
    return clamp(d);
  }

  RigidTransform transform(std::int64_t t_ns) const { return RigidTransform::from_translation(displacement(t_ns)); }

 private:
  Vec3 clamp(const Vec3& d) const {
    const double n = d.norm();
    return n > bound ? Vec3(d * (bound / n)) : d;
  }

  Vec3 waypoint_at(double t) const {
    if (t <= waypoints.front().t_s) return waypoints.front().offset;
    for (std::size_t i = 1; i < waypoints.size(); ++i)
      if (t <= waypoints[i].t_s) {
        const auto& a = waypoints[i - 1];
        const auto& b = waypoints[i];
        return a.offset + (t - a.t_s) / (b.t_s - a.t_s) * (b.offset - a.offset);
      }
    return waypoints.back().offset;
  }

  // Piecewise-constant random velocity, integrated and kept inside the bound.
  // Steps are generated lazily and cached; a script must not be shared across threads.
  Vec3 drift_at(double t) const {
    const auto step = static_cast<std::size_t>(t / drift_step_s);
    while (drift_.size() <= step + 1) {
      if (drift_.empty()) {
        drift_rng_.seed(derive_seed(seed, 0xd41f7));
        drift_.push_back(Vec3::Zero());
      }
      std::normal_distribution<double> n(0.0, drift_sigma);
      const Vec3 v(n(drift_rng_), n(drift_rng_), n(drift_rng_));
      drift_.push_back(clamp(drift_.back() + v * drift_step_s));
    }
    const double frac = t / drift_step_s - static_cast<double>(step);
    return drift_[step] + frac * (drift_[step + 1] - drift_[step]);
  }

  mutable std::vector<Vec3> drift_;
  mutable std::mt19937_64 drift_rng_;
};

/// Samples configured frames at a fixed rate. Each frame owns a noise stream
/// seeded from (seed, frame), so adding a frame never changes another's noise.
class TrackerSim {
 public:
  using Truth = std::function<RigidTransform(std::int64_t t_ns)>;

  explicit TrackerSim(NoiseModel noise, double rate_hz = 60.0, std::int64_t start_ns = 0)
      : noise_(noise), start_ns_(start_ns) {
    noise_.validate();
    if (!(rate_hz > 0)) throw Error(Errc::InvalidArgument, "tracker rate must be > 0");
    period_ns_ = static_cast<std::int64_t>(std::llround(1e9 / rate_hz));
  }

  void add_frame(FrameId frame, Truth truth) {
    Stream s;
    s.frame = frame;
    s.truth = std::move(truth);
    s.rng.seed(derive_seed(noise_.seed, static_cast<std::uint64_t>(frame) + 1));
    s.next_ns = start_ns_;
    streams_.push_back(std::move(s));
  }

  std::int64_t period_ns() const { return period_ns_; }

  /// Every sample scheduled at or before `now_ns` that has not been emitted.
  std::vector<TrackerSample> poll(std::int64_t now_ns) {
    std::vector<TrackerSample> out;
    for (auto& s : streams_) {
      while (s.next_ns <= now_ns) {
        out.push_back(sample(s, s.next_ns));
        s.next_ns += period_ns_;
      }
    }
    return out;
  }

  /// All samples in [start, end), frames interleaved in time order.
  std::vector<TrackerSample> stream(std::int64_t end_ns) {
    std::vector<TrackerSample> out;
    for (std::int64_t t = next_due(); t < end_ns; t = next_due()) {
      auto batch = poll(t);
      out.insert(out.end(), batch.begin(), batch.end());
    }
    return out;
  }

  /// One noisy reading of `frame` at an arbitrary time, outside the schedule
  /// (e.g. a tracked capture). Uses the frame's noise stream.
  TrackerSample read(FrameId frame, std::int64_t t_ns) {
    for (auto& s : streams_)
      if (s.frame == frame) return sample(s, t_ns);
    throw Error(Errc::UnknownFrame, std::string(to_string(frame)) + " is not tracked");
  }

 private:
  struct Stream {
    FrameId frame;
    Truth truth;
    std::mt19937_64 rng;
    std::int64_t next_ns = 0;
  };

  std::int64_t next_due() const {
    std::int64_t t = INT64_MAX;
    for (const auto& s : streams_) t = std::min(t, s.next_ns);
    return t;
  }

  TrackerSample sample(Stream& s, std::int64_t t_ns) {
    TrackerSample out;
    out.frame = s.frame;
    out.timestamp_ns = t_ns;
    out.pose = noise_.perturb(s.truth(t_ns), s.rng);
    if (noise_.dropout > 0) out.valid = std::uniform_real_distribution<double>(0, 1)(s.rng) >= noise_.dropout;
    return out;
  }

  NoiseModel noise_;
  std::int64_t period_ns_ = 0;
  std::int64_t start_ns_ = 0;
  std::vector<Stream> streams_;
};

// Trajectory CSV: one sample per row, shortest round-trip decimal doubles.

inline constexpr std::string_view kTrajectoryHeader = "t_ns,frame,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz,valid";

namespace detail {

inline void put_double(std::string& line, double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  line.append(buf, p);
}

}  // namespace detail

inline void write_trajectory_csv(std::ostream& os, const std::vector<TrackerSample>& samples) {
  os << kTrajectoryHeader << '\n';
  std::string line;
  for (const auto& s : samples) {
    line.clear();
    line += std::to_string(s.timestamp_ns);
    line += ',';
    line += to_string(s.frame);
    const Mat3& r = s.pose.rotation();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        line += ',';
        detail::put_double(line, r(i, j));
      }
    for (int i = 0; i < 3; ++i) {
      line += ',';
      detail::put_double(line, s.pose.translation()[i]);
    }
    line += s.valid ? ",1\n" : ",0\n";
    os << line;
  }
}

/// Throws InvalidArgument naming the offending line.
inline std::vector<TrackerSample> read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kTrajectoryHeader)
    throw Error(Errc::InvalidArgument, "trajectory line 1: expected header '" + std::string(kTrajectoryHeader) + "'");
  std::vector<TrackerSample> out;
  for (std::size_t lineno = 2; std::getline(is, line); ++lineno) {
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) {
      return Error(Errc::InvalidArgument, "trajectory line " + std::to_string(lineno) + ": " + why);
    };
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos; rest.remove_prefix(pos + 1))
      f.push_back(rest.substr(0, pos));
    f.push_back(rest);
    if (f.size() != 15) throw fail("expected 15 fields, got " + std::to_string(f.size()));

    TrackerSample s;
    if (std::from_chars(f[0].data(), f[0].data() + f[0].size(), s.timestamp_ns).ec != std::errc{})
      throw fail("bad timestamp");
    const auto frame = frame_from_string(f[1]);
    if (!frame) throw fail("unknown frame '" + std::string(f[1]) + "'");
    s.frame = *frame;
    double v[12];
    for (int i = 0; i < 12; ++i) {
      const auto& x = f[2 + i];
      if (std::from_chars(x.data(), x.data() + x.size(), v[i]).ec != std::errc{}) throw fail("bad number '" + std::string(x) + "'");
    }
    Mat3 r;
    r << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
    if (!is_rotation(r, 1e-6)) throw fail("rotation is not orthonormal");
    const Vec3 t(v[9], v[10], v[11]);
    s.pose = is_rotation(r) ? RigidTransform(r, t) : RigidTransform::orthonormalized(r, t);
    if (f[14] != "0" && f[14] != "1") throw fail("valid must be 0 or 1");
    s.valid = f[14] == "1";
    out.push_back(s);
  }
  return out;
}

}  // namespace vfg
