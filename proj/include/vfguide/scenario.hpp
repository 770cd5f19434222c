#pragma once

// Synthetic phantoms, scripted resections through the servo, and the
// resection report (margins, specimen volume, duration).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <stop_token>
#include <string>
#include <vector>

#include "vfguide/contours.hpp"
#include "vfguide/controllers.hpp"
#include "vfguide/ellipsoid.hpp"
#include "vfguide/error.hpp"
#include "vfguide/frames.hpp"
#include "vfguide/geometry.hpp"
#include "vfguide/mailbox.hpp"
#include "vfguide/servo.hpp"
#include "vfguide/tracker_sim.hpp"
#include "vfguide/vf_engine.hpp"

namespace vfg {

struct ControllerConfig {
  double speed = 20.0;  // mm/s
  double line_spacing = 3.5;
  double approach_height = 15.0;
  double press_depth = 0.5;
  double retreat_speed = 10.0;
  double bias_mm = 3.0;      // per-axis sigma of the unguided localization bias
  double plan_offset = 4.0;  // unguided intended margin around the contour outline
  double max_duration_s = 600.0;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  Vec3 phantom_size = Vec3(120, 120, 50);
  Vec3 tumor_semi_axes = Vec3::Constant(17.5);
  Vec3 tumor_offset = Vec3::Zero();  // from the phantom center
  double tumor_position_jitter = 5.0;  // uniform per axis, clipped to keep clearance
  int slices = 15;
  int points_per_slice = 24;
  double radial_jitter = 0.5;
  double contour_margin = 1.0;
  bool capture_noise = true;  // lift contours with noisy tracker readings
  NoiseModel noise;
  MotionScript motion;
  VfConfig vf;
  ControllerConfig controller;
  double tracker_rate_hz = 60.0;
  Vec3 tip_offset = Vec3(0, 0, 150);  // cautery tip in the stylus sensor frame
  int pivot_samples = 60;
  double servo_rate_hz = 1000.0;
  double staleness_ms = 50.0;
  double record_hz = 100.0;
  double margin_threshold = 2.0;

  static constexpr double kClearance = 5.0;
  static constexpr double kMinDiameter = 20.0, kMaxDiameter = 50.0;

  struct Issue {
    std::string path;  // JSON pointer into the config document
    std::string message;
    Errc code = Errc::ConfigError;
  };

  std::vector<Issue> check() const {
    std::vector<Issue> out;
    auto bad = [&](std::string path, std::string msg, Errc c = Errc::ConfigError) {
      out.push_back({std::move(path), std::move(msg), c});
    };
    auto num = [](double v) {
      std::string s = std::to_string(v);
      s.erase(s.find_last_not_of('0') + 1);
      if (s.back() == '.') s.pop_back();
      return s;
    };
    if (!(phantom_size.minCoeff() > 0)) bad("/phantom/size_mm", "phantom dimensions must be > 0");
    for (int i = 0; i < 3; ++i) {
      const double d = 2 * tumor_semi_axes[i];
      if (!(d >= kMinDiameter && d <= kMaxDiameter))
        bad("/tumor/semi_axes_mm", "tumor diameter " + num(d) + " mm is outside the supported range [20, 50] mm");
    }
    if (out.empty()) {
      for (int i = 0; i < 3; ++i) {
        const double room = 0.5 * phantom_size[i] - tumor_semi_axes[i] - kClearance;
        if (room < std::abs(tumor_offset[i]))
          bad("/tumor/center_offset_mm",
              "tumor must stay >= 5 mm inside the phantom (axis " + std::to_string(i) + " leaves " +
                  num(room + kClearance - std::abs(tumor_offset[i])) + " mm)",
              Errc::TumorOutOfBounds);
      }
    }
    if (!(tumor_position_jitter >= 0)) bad("/tumor/position_jitter_mm", "must be >= 0");
    if (slices < 3) bad("/contouring/slices", "need at least 3 slices");
    if (points_per_slice < 3) bad("/contouring/points_per_slice", "need at least 3 points per slice");
    if (!(radial_jitter >= 0)) bad("/contouring/radial_jitter_mm", "must be >= 0");
    if (!(contour_margin >= 0)) bad("/contouring/margin_mm", "must be >= 0");
    try {
      noise.validate();
    } catch (const Error& e) {
      bad("/noise", e.what());
    }
    try {
      motion.validate();
    } catch (const Error& e) {
      bad("/motion", e.what());
    }
    try {
      vf.validate();
    } catch (const Error& e) {
      bad("/vf", e.what());
    }
    const auto& c = controller;
    if (!(c.speed > 0) || !(c.retreat_speed > 0)) bad("/controller", "speeds must be > 0");
    if (!(c.line_spacing > 0)) bad("/controller/line_spacing_mm", "must be > 0");
    if (!(c.press_depth >= 0) || !(c.bias_mm >= 0) || !(c.plan_offset >= 0) || !(c.approach_height >= 0))
      bad("/controller", "press depth, bias, plan offset and approach height must be >= 0");
    if (!(c.max_duration_s > 0)) bad("/controller/max_duration_s", "must be > 0");
    if (!(tracker_rate_hz > 0)) bad("/tracker/rate_hz", "must be > 0");
    if (pivot_samples < 10) bad("/tracker/pivot_samples", "need at least 10 pivot samples");
    if (!(servo_rate_hz > 0)) bad("/servo/rate_hz", "must be > 0");
    if (!(staleness_ms > 0)) bad("/servo/staleness_ms", "must be > 0");
    if (!(record_hz > 0) || record_hz > servo_rate_hz) bad("/report/record_hz", "must be in (0, servo rate]");
    if (!(margin_threshold >= 0)) bad("/report/margin_threshold_mm", "must be >= 0");
    return out;
  }

  void validate() const {
    const auto issues = check();
    if (!issues.empty()) throw Error(issues.front().code, issues.front().path + ": " + issues.front().message);
  }
};

/// Independent RNG streams derived from the scenario seed.
enum class SeedStream : std::uint64_t { Placement = 1, Contours, Tracker, Pivot, Bias, Motion };

inline std::uint64_t stream_seed(std::uint64_t seed, SeedStream s) {
  return derive_seed(seed, static_cast<std::uint64_t>(s));
}

struct Scenario {
  ScenarioConfig config;
  Vec3 tumor_center;  // Reference frame, at rest
  Ellipsoid tumor;    // true tumor, tumor (NeedleSensor) frame
  ContourStack contours;
  std::vector<FrameGraph> capture_graphs;  // one snapshot per contour
  FixtureMesh fixture;                     // contour hull, tumor frame, not inflated
  Vec3 phantom_lo, phantom_hi;             // phantom box, tumor frame
  PivotResult pivot;
  std::int64_t resection_start_ns = 0;

  RigidTransform needle_at(std::int64_t t_ns) const {
    return config.motion.transform(t_ns) * RigidTransform::from_translation(tumor_center);
  }
  double phantom_volume() const { return config.phantom_size.prod(); }
};

/// Stylus held with its shaft tilted 20 degrees off vertical, tip down.
inline Mat3 stylus_orientation() { return Eigen::AngleAxisd(std::numbers::pi * 160.0 / 180.0, Vec3::UnitX()).toRotationMatrix(); }

namespace detail {

// Image (u, v) -> tumor frame: u along +y, v is depth below the phantom top
// (-z), slice plane at x.
inline RigidTransform slice_pose(double x, double z_top) {
  Mat3 r;
  r << 0, 0, -1, 1, 0, 0, 0, -1, 0;
  return RigidTransform(r, Vec3(x, 0, z_top));
}

inline PivotResult simulate_pivot(const ScenarioConfig& cfg) {
  std::mt19937_64 rng(stream_seed(cfg.seed, SeedStream::Pivot));
  std::normal_distribution<double> n(0.0, 1.0);
  const Vec3 pivot(60, 60, 60);
  const Mat3 base = stylus_orientation();
  std::vector<RigidTransform> samples;
  for (int i = 0; i < cfg.pivot_samples; ++i) {
    Vec3 w(n(rng), n(rng), n(rng));
    w *= 0.6 / std::max(1.0, w.norm());
    const Mat3 r = base * Eigen::AngleAxisd(w.norm(), w.norm() > 0 ? Vec3(w.normalized()) : Vec3::UnitZ()).toRotationMatrix();
    const RigidTransform truth = RigidTransform::orthonormalized(r, pivot - r * cfg.tip_offset);
    samples.push_back(cfg.noise.perturb(truth, rng));
  }
  return pivot_calibrate(samples);
}

}  // namespace detail

/// Places the tumor, captures the contour stack with the tracked probe, and
/// calibrates the stylus. Deterministic in (config, seed).
inline Scenario generate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  Scenario sc;
  sc.config = cfg;
  sc.config.noise.seed = stream_seed(cfg.seed, SeedStream::Tracker);
  sc.config.motion.seed = stream_seed(cfg.seed, SeedStream::Motion);
  const auto& c = sc.config;

  std::mt19937_64 place(stream_seed(cfg.seed, SeedStream::Placement));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 center;
  for (int i = 0; i < 3; ++i) {
    const double room = 0.5 * c.phantom_size[i] - c.tumor_semi_axes[i] - ScenarioConfig::kClearance;
    center[i] = 0.5 * c.phantom_size[i] + std::clamp(c.tumor_offset[i] + c.tumor_position_jitter * u(place), -room, room);
  }
  sc.tumor_center = center;
  sc.tumor.semi_axes = c.tumor_semi_axes;
  sc.phantom_lo = -center;
  sc.phantom_hi = c.phantom_size - center;

  // Contours: parallel slices of the tumor grown by the contour margin, swept
  // along x with the end slices kept short of the poles.
  const Vec3 grown = c.tumor_semi_axes + Vec3::Constant(c.contour_margin);
  const double reach = std::min(grown.x() - 0.4 * c.contour_margin, 0.99 * grown.x());
  std::mt19937_64 jitter_rng(stream_seed(cfg.seed, SeedStream::Contours));
  std::normal_distribution<double> jitter(0.0, c.radial_jitter);
  TrackerSim capture(c.noise, c.tracker_rate_hz);
  capture.add_frame(FrameId::NeedleSensor, [&sc](std::int64_t t) { return sc.needle_at(t); });
  constexpr std::int64_t kCaptureStep = 500'000'000;
  const double z_top = sc.phantom_hi.z();

  for (int i = 0; i < c.slices; ++i) {
    const std::int64_t t = static_cast<std::int64_t>(i) * kCaptureStep;
    const double x = -reach + 2.0 * reach * i / (c.slices - 1);
    const double f = std::sqrt(std::max(0.0, 1.0 - (x / grown.x()) * (x / grown.x())));
    const double ry = grown.y() * f, rz = grown.z() * f;
    const RigidTransform image_to_tumor = detail::slice_pose(x, z_top);
    const RigidTransform tumor_to_image = image_to_tumor.inverse();

    Contour contour;
    contour.stamp_ns = t;
    for (int k = 0; k < c.points_per_slice; ++k) {
      const double a = 2.0 * std::numbers::pi * k / c.points_per_slice;
      Vec3 p(x, ry * std::cos(a), rz * std::sin(a));
      const Vec3 radial = Vec3(0, p.y(), p.z()).normalized();
      p += jitter(jitter_rng) * radial;
      const Vec3 img = tumor_to_image.apply(p);
      contour.points.emplace_back(img.x(), img.y());
    }

    // Probe truth follows the tissue; readings are noisy when configured.
    const RigidTransform needle_truth = sc.needle_at(t);
    const RigidTransform probe_truth = needle_truth * image_to_tumor;
    FrameGraph g;
    if (c.capture_noise) {
      contour.image_pose = c.noise.perturb(probe_truth, jitter_rng);
      g.set(FrameId::Reference, FrameId::NeedleSensor, capture.read(FrameId::NeedleSensor, t).pose, t);
    } else {
      contour.image_pose = probe_truth;
      g.set(FrameId::Reference, FrameId::NeedleSensor, needle_truth, t);
    }
    sc.contours.contours.push_back(std::move(contour));
    sc.capture_graphs.push_back(std::move(g));
  }
  sc.fixture = convex_hull(contours_to_points(sc.contours, sc.capture_graphs));
  sc.pivot = detail::simulate_pivot(c);
  sc.resection_start_ns = static_cast<std::int64_t>(c.slices + 2) * kCaptureStep;
  return sc;
}

struct ResectionReport {
  double min_margin_mm = 0;
  bool positive_margin = false;
  bool transected = false;
  double volume_removed_pct = 0;
  double duration_s = 0;
  std::uint64_t breach_count = 0;  // separate entries into the tumor
  double max_breach_depth_mm = 0;
  std::uint64_t cutting_samples = 0;
  double margin_threshold_mm = 2.0;

  bool operator==(const ResectionReport&) const = default;
};

/// Classifier shared by every report: strict comparisons at both thresholds.
inline void classify(ResectionReport& r) {
  r.positive_margin = r.min_margin_mm < r.margin_threshold_mm;
  r.transected = r.min_margin_mm < 0.0;
}

/// `trajectory` holds CauteryTip samples in the tumor frame; `valid` marks
/// cutting. The specimen is the convex hull of cutting samples, clipped to the
/// phantom box [lo, hi].
inline ResectionReport compute_report(const std::vector<TrackerSample>& trajectory, const Ellipsoid& tumor,
                                      const Vec3& phantom_lo, const Vec3& phantom_hi, double margin_threshold = 2.0) {
  std::vector<const TrackerSample*> cuts;
  for (const auto& s : trajectory)
    if (s.valid) cuts.push_back(&s);
  if (cuts.empty()) throw Error(Errc::EmptyTrajectory, "trajectory has no cutting samples");

  ResectionReport r;
  r.margin_threshold_mm = margin_threshold;
  r.cutting_samples = cuts.size();
  r.min_margin_mm = INFINITY;
  bool inside = false;
  std::vector<Vec3> pts;
  pts.reserve(cuts.size());
  for (const auto* s : cuts) {
    const Vec3 p = s->pose.translation();
    pts.push_back(p);
    const double d = tumor.signed_distance(p);
    r.min_margin_mm = std::min(r.min_margin_mm, d);
    if (d < 0 && !inside) ++r.breach_count;
    inside = d < 0;
  }
  r.min_margin_mm = std::round(r.min_margin_mm * 1e6) / 1e6;  // float noise must not decide the classification
  r.max_breach_depth_mm = std::max(0.0, -r.min_margin_mm);
  classify(r);
  r.duration_s = 1e-9 * static_cast<double>(cuts.back()->timestamp_ns - cuts.front()->timestamp_ns);

  const Vec3 size = phantom_hi - phantom_lo;
  FixtureMesh specimen;
  try {
    specimen = clip_to_box(convex_hull(pts), phantom_lo, phantom_hi);
  } catch (const Error& e) {
    if (e.code() == Errc::DegenerateInput || e.code() == Errc::DegenerateSpecimen)
      throw Error(Errc::DegenerateSpecimen, std::string("specimen volume undefined: ") + e.what());
    throw;
  }
  r.volume_removed_pct = std::clamp(100.0 * specimen.volume() / size.prod(), 0.0, 100.0);
  return r;
}

struct RunResult {
  bool guided = true;
  std::vector<TrackerSample> trajectory;  // CauteryTip -> TumorModel, valid = cutting
  ResectionReport report;
  ServoStats servo;
  std::uint64_t contact_ticks = 0;
  Vec3 bias = Vec3::Zero();
  bool completed = false;  // controller finished before max_duration_s
};

/// The unguided arm's constant localization error for this seed.
inline Vec3 unguided_bias(const ScenarioConfig& cfg) {
  std::mt19937_64 rng(stream_seed(cfg.seed, SeedStream::Bias));
  std::normal_distribution<double> n(0.0, cfg.controller.bias_mm);
  const double x = n(rng), y = n(rng), z = n(rng);
  return {x, y, z};
}

/// Guided: compliant controller against the active fixture. Unguided: the
/// aggressive controller with the fixture disabled. Both run through the servo
/// on a virtual clock and are scored against the true tumor.
inline RunResult run_resection(const Scenario& sc, bool guided, Controller* controller = nullptr) {
  const auto& c = sc.config;
  RunResult res;
  res.guided = guided;

  Mailbox<PoseSet> tracker_box;
  Mailbox<FixtureMesh> fixture_box;
  Mailbox<VfConfig> config_box;
  Mailbox<ProxyState> state_box;
  fixture_box.publish(sc.fixture, sc.resection_start_ns);
  VfConfig vf = c.vf;
  vf.enabled = guided;
  config_box.publish(vf, sc.resection_start_ns);

  std::unique_ptr<Controller> owned;
  Controller* ctrl = controller;
  if (!ctrl) {
    if (guided) {
      CompliantParams p;
      p.speed = c.controller.speed;
      p.retreat_speed = c.controller.retreat_speed;
      p.press_depth = c.controller.press_depth;
      p.line_spacing = c.controller.line_spacing;
      p.approach_height = c.controller.approach_height;
      p.margin = c.vf.margin;
      owned = std::make_unique<CompliantController>(inflate(sc.fixture, c.vf.margin), p);
    } else {
      AggressiveParams p;
      p.speed = c.controller.speed;
      p.line_spacing = c.controller.line_spacing;
      p.approach_height = c.controller.approach_height;
      p.plan_offset = c.controller.plan_offset;
      p.bias = res.bias = unguided_bias(c);
      owned = std::make_unique<AggressiveController>(sc.fixture, p);
    }
    ctrl = owned.get();
  }

  const Mat3 stylus_rot = stylus_orientation();
  Vec3 tip_world = sc.needle_at(sc.resection_start_ns).translation();
  NoiseModel run_noise = c.noise;
  run_noise.seed = derive_seed(c.noise.seed, 100);
  TrackerSim tracker(run_noise, c.tracker_rate_hz, sc.resection_start_ns);
  tracker.add_frame(FrameId::NeedleSensor, [&sc](std::int64_t t) { return sc.needle_at(t); });
  tracker.add_frame(FrameId::StylusSensor, [&](std::int64_t) {
    return RigidTransform(stylus_rot, tip_world - stylus_rot * c.tip_offset);
  });

  ServoOptions opt;
  opt.rate_hz = c.servo_rate_hz;
  opt.clock = ClockMode::Virtual;
  opt.start_ns = sc.resection_start_ns;
  opt.max_ticks = static_cast<std::uint64_t>(std::ceil(c.controller.max_duration_s * c.servo_rate_hz));
  opt.staleness_ns = static_cast<std::int64_t>(c.staleness_ms * 1e6);
  opt.setup.tip_to_stylus = RigidTransform::from_translation(sc.pivot.tip_offset);

  const double dt = 1.0 / c.servo_rate_hz;
  const auto record_every = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(c.servo_rate_hz / c.record_hz)));
  std::optional<ProxyState> latest;
  std::stop_source stop;
  PoseSet poses;
  opt.before_tick = [&](std::uint64_t tick, std::int64_t now) {
    const ControllerCommand cmd = ctrl->step(latest ? &*latest : nullptr, now, dt);
    const RigidTransform needle = sc.needle_at(now);
    tip_world = needle.apply(cmd.goal);
    auto samples = tracker.poll(now);
    if (!samples.empty()) {
      for (const auto& s : samples) poses.upsert(s);
      tracker_box.publish(poses, now);
    }
    if (tick % record_every == 0 || cmd.done)
      res.trajectory.push_back({FrameId::CauteryTip, RigidTransform(needle.rotation().transpose() * stylus_rot, cmd.goal), now, cmd.cutting});
    if (cmd.done) {
      res.completed = true;
      stop.request_stop();
    }
  };
  opt.after_tick = [&](const ProxyState& s) {
    latest = s;
    if (s.in_contact) ++res.contact_ticks;
  };
  res.servo = run_servo({tracker_box, fixture_box, config_box}, {state_box}, opt, stop.get_token());
  res.report = compute_report(res.trajectory, sc.tumor, sc.phantom_lo, sc.phantom_hi, c.margin_threshold);
  return res;
}

}  // namespace vfg
