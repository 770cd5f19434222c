#pragma once

// Scenario configs as JSON (schema 1), scenario and report files, and the
// parallel batch runner.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "vfguide/error.hpp"
#include "vfguide/scenario.hpp"

namespace vfg::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kSchema = 1;

namespace detail {

inline std::string pointer_token(std::string_view key) {
  std::string out;
  for (char c : key) {
    if (c == '~')
      out += "~0";
    else if (c == '/')
      out += "~1";
    else
      out += c;
  }
  return out;
}

inline std::string parent_pointer(const std::string& p) {
  const auto slash = p.rfind('/');
  return slash == std::string::npos ? std::string() : p.substr(0, slash);
}

// Maps JSON pointers to 1-based source lines. Assumes the text already parsed.
class LineIndex {
 public:
  explicit LineIndex(std::string_view text) : text_(text) {
    skip_ws();
    value("");
  }

  int line_of(std::string ptr) const {
    while (true) {
      if (auto it = lines_.find(ptr); it != lines_.end()) return it->second;
      if (ptr.empty()) return 1;
      ptr = parent_pointer(ptr);
    }
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }

  std::string string_token() {
    std::string out;
    ++pos_;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) {
        out += text_[pos_ + 1];
        pos_ += 2;
      } else {
        out += text_[pos_++];
      }
    }
    ++pos_;
    return out;
  }

  void value(const std::string& ptr) {
    lines_.emplace(ptr, line_);
    if (pos_ >= text_.size()) return;
    const char c = text_[pos_];
    if (c == '{') {
      ++pos_;
      skip_ws();
      while (pos_ < text_.size() && text_[pos_] != '}') {
        const int key_line = line_;
        const std::string child = ptr + "/" + pointer_token(string_token());
        skip_ws();
        ++pos_;  // ':'
        skip_ws();
        value(child);
        lines_[child] = key_line;  // report members at their key, not their value
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ',') ++pos_;
        skip_ws();
      }
      ++pos_;
    } else if (c == '[') {
      ++pos_;
      skip_ws();
      for (int i = 0; pos_ < text_.size() && text_[pos_] != ']'; ++i) {
        value(ptr + "/" + std::to_string(i));
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ',') ++pos_;
        skip_ws();
      }
      ++pos_;
    } else if (c == '"') {
      string_token();
    } else {
      while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) && text_[pos_] != ',' &&
             text_[pos_] != ']' && text_[pos_] != '}')
        ++pos_;
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;
};

struct Problem {
  std::string ptr, message;
  Errc code = Errc::ConfigError;
};

// Strict field reader: unknown keys and wrong types become problems.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string ptr, std::vector<Problem>& problems, std::vector<std::string> allowed)
      : j_(j), ptr_(std::move(ptr)), problems_(problems) {
    if (!j_.is_object()) {
      problems_.push_back({ptr_, "expected an object"});
      ok_ = false;
      return;
    }
    for (const auto& [k, v] : j_.items())
      if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
        problems_.push_back({ptr_ + "/" + pointer_token(k), "unknown key '" + k + "'"});
  }

  bool has(const char* key) const { return ok_ && j_.contains(key); }
  std::string at(const char* key) const { return ptr_ + "/" + pointer_token(key); }
  const json& raw(const char* key) const { return j_.at(key); }

  void number(const char* key, double& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number()) return bad(key, "expected a number");
    out = v.get<double>();
  }

  template <class I>
  void integer(const char* key, I& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer() || (std::is_unsigned_v<I> && v.get<std::int64_t>() < 0 && !v.is_number_unsigned()))
      return bad(key, "expected an integer");
    out = v.get<I>();
  }

  void boolean(const char* key, bool& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) return bad(key, "expected true or false");
    out = v.get<bool>();
  }

  void vec3(const char* key, Vec3& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_array() || v.size() != 3 || !std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); }))
      return bad(key, "expected an array of 3 numbers");
    for (int i = 0; i < 3; ++i) out[i] = v[static_cast<std::size_t>(i)].get<double>();
  }

  void bad(const char* key, std::string msg) { problems_.push_back({at(key), std::move(msg)}); }

 private:
  const json& j_;
  std::string ptr_;
  std::vector<Problem>& problems_;
  bool ok_ = true;
};

inline std::string motion_kind_name(MotionScript::Kind k) {
  switch (k) {
    case MotionScript::Kind::Static: return "static";
    case MotionScript::Kind::Drift: return "drift";
    case MotionScript::Kind::Sinusoid: return "sinusoid";
    case MotionScript::Kind::Waypoints: return "waypoints";
  }
  return "static";
}

inline json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace detail

/// Parses a schema-1 config. Every problem is reported as
/// "<source>:<line>: <json pointer>: <message>", one per line, in the thrown
/// ConfigError (TumorOutOfBounds when that is the only kind of problem).
inline ScenarioConfig config_from_json(std::string_view text, const std::string& source = "<config>") {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t byte = std::min<std::size_t>(e.byte, text.size());
    const auto before = text.substr(0, byte > 0 ? byte - 1 : 0);
    const auto line = 1 + std::count(before.begin(), before.end(), '\n');
    const auto nl = before.rfind('\n');
    const auto col = before.size() - (nl == std::string_view::npos ? 0 : nl + 1) + 1;
    std::string what = e.what();
    if (auto p = what.find("syntax error"); p != std::string::npos) what = what.substr(p);
    throw Error(Errc::ConfigError, source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + what);
  }

  std::vector<detail::Problem> problems;
  ScenarioConfig c;
  detail::ObjectReader top(j, "", problems,
                           {"schema", "seed", "phantom", "tumor", "contouring", "noise", "motion", "vf", "controller", "tracker",
                            "servo", "report"});
  if (!j.is_object()) {
    throw Error(Errc::ConfigError, source + ":1: config must be a JSON object");
  }
  if (!j.contains("schema"))
    problems.push_back({"", "missing \"schema\": 1"});
  else if (!j["schema"].is_number_integer() || j["schema"].get<std::int64_t>() != kSchema)
    problems.push_back({"/schema", "unsupported schema (expected 1)"});
  top.integer("seed", c.seed);

  auto section = [&](const char* key, std::vector<std::string> allowed, auto&& fn) {
    if (!top.has(key)) return;
    detail::ObjectReader r(top.raw(key), top.at(key), problems, std::move(allowed));
    fn(r);
  };
  section("phantom", {"size_mm"}, [&](detail::ObjectReader& r) { r.vec3("size_mm", c.phantom_size); });
  section("tumor", {"diameter_mm", "semi_axes_mm", "center_offset_mm", "position_jitter_mm"}, [&](detail::ObjectReader& r) {
    if (r.has("diameter_mm") && r.has("semi_axes_mm")) r.bad("diameter_mm", "give either diameter_mm or semi_axes_mm, not both");
    double d = NAN;
    r.number("diameter_mm", d);
    if (!std::isnan(d)) c.tumor_semi_axes = Vec3::Constant(0.5 * d);
    r.vec3("semi_axes_mm", c.tumor_semi_axes);
    r.vec3("center_offset_mm", c.tumor_offset);
    r.number("position_jitter_mm", c.tumor_position_jitter);
  });
  section("contouring", {"slices", "points_per_slice", "radial_jitter_mm", "margin_mm", "capture_noise"}, [&](detail::ObjectReader& r) {
    r.integer("slices", c.slices);
    r.integer("points_per_slice", c.points_per_slice);
    r.number("radial_jitter_mm", c.radial_jitter);
    r.number("margin_mm", c.contour_margin);
    r.boolean("capture_noise", c.capture_noise);
  });
  section("noise", {"pos_sigma_mm", "rot_sigma_deg", "dropout"}, [&](detail::ObjectReader& r) {
    r.number("pos_sigma_mm", c.noise.pos_sigma);
    r.number("rot_sigma_deg", c.noise.rot_sigma_deg);
    r.number("dropout", c.noise.dropout);
  });
  section("motion",
          {"kind", "amplitude_mm", "period_s", "axis", "drift_sigma_mm_s", "drift_step_s", "bound_mm", "waypoints"},
          [&](detail::ObjectReader& r) {
            if (r.has("kind")) {
              const auto& k = r.raw("kind");
              const std::map<std::string, MotionScript::Kind> kinds = {{"static", MotionScript::Kind::Static},
                                                                       {"drift", MotionScript::Kind::Drift},
                                                                       {"sinusoid", MotionScript::Kind::Sinusoid},
                                                                       {"waypoints", MotionScript::Kind::Waypoints}};
              if (!k.is_string() || !kinds.contains(k.get<std::string>()))
                r.bad("kind", "expected one of static, drift, sinusoid, waypoints");
              else
                c.motion.kind = kinds.at(k.get<std::string>());
            }
            r.number("amplitude_mm", c.motion.amplitude);
            r.number("period_s", c.motion.period_s);
            r.vec3("axis", c.motion.axis);
            r.number("drift_sigma_mm_s", c.motion.drift_sigma);
            r.number("drift_step_s", c.motion.drift_step_s);
            r.number("bound_mm", c.motion.bound);
            if (r.has("waypoints")) {
              const auto& w = r.raw("waypoints");
              if (!w.is_array()) return r.bad("waypoints", "expected an array");
              for (std::size_t i = 0; i < w.size(); ++i) {
                detail::ObjectReader wr(w[i], r.at("waypoints") + "/" + std::to_string(i), problems, {"t_s", "offset_mm"});
                MotionScript::Waypoint wp{0.0, Vec3::Zero()};
                wr.number("t_s", wp.t_s);
                wr.vec3("offset_mm", wp.offset);
                c.motion.waypoints.push_back(wp);
              }
            }
          });
  section("vf", {"enabled", "stiffness_n_per_mm", "force_cap_n", "margin_mm", "ramp_ms"}, [&](detail::ObjectReader& r) {
    r.boolean("enabled", c.vf.enabled);
    r.number("stiffness_n_per_mm", c.vf.stiffness_k);
    r.number("force_cap_n", c.vf.force_cap);
    r.number("margin_mm", c.vf.margin);
    double ramp_ms = static_cast<double>(c.vf.ramp_ns) * 1e-6;
    r.number("ramp_ms", ramp_ms);
    c.vf.ramp_ns = static_cast<std::int64_t>(std::llround(ramp_ms * 1e6));
  });
  section("controller",
          {"speed_mm_s", "line_spacing_mm", "approach_height_mm", "press_depth_mm", "retreat_speed_mm_s", "bias_mm",
           "plan_offset_mm", "max_duration_s"},
          [&](detail::ObjectReader& r) {
            auto& k = c.controller;
            r.number("speed_mm_s", k.speed);
            r.number("line_spacing_mm", k.line_spacing);
            r.number("approach_height_mm", k.approach_height);
            r.number("press_depth_mm", k.press_depth);
            r.number("retreat_speed_mm_s", k.retreat_speed);
            r.number("bias_mm", k.bias_mm);
            r.number("plan_offset_mm", k.plan_offset);
            r.number("max_duration_s", k.max_duration_s);
          });
  section("tracker", {"rate_hz", "tip_offset_mm", "pivot_samples"}, [&](detail::ObjectReader& r) {
    r.number("rate_hz", c.tracker_rate_hz);
    r.vec3("tip_offset_mm", c.tip_offset);
    r.integer("pivot_samples", c.pivot_samples);
  });
  section("servo", {"rate_hz", "staleness_ms"}, [&](detail::ObjectReader& r) {
    r.number("rate_hz", c.servo_rate_hz);
    r.number("staleness_ms", c.staleness_ms);
  });
  section("report", {"record_hz", "margin_threshold_mm"}, [&](detail::ObjectReader& r) {
    r.number("record_hz", c.record_hz);
    r.number("margin_threshold_mm", c.margin_threshold);
  });

  if (problems.empty())
    for (auto& issue : c.check()) {
      std::string ptr = issue.path;
      if (ptr == "/tumor/semi_axes_mm" && j.contains("tumor") && j["tumor"].contains("diameter_mm")) ptr = "/tumor/diameter_mm";
      const bool dup = std::any_of(problems.begin(), problems.end(),
                                   [&](const auto& p) { return p.ptr == ptr && p.message == issue.message; });
      if (!dup) problems.push_back({ptr, issue.message, issue.code});
    }
  if (problems.empty()) return c;

  const detail::LineIndex index(text);
  std::string msg;
  bool all_bounds = true;
  for (const auto& p : problems) {
    if (!msg.empty()) msg += "\n";
    msg += source + ":" + std::to_string(index.line_of(p.ptr)) + ": " + (p.ptr.empty() ? "/" : p.ptr) + ": " + p.message;
    all_bounds = all_bounds && p.code == Errc::TumorOutOfBounds;
  }
  throw Error(all_bounds ? Errc::TumorOutOfBounds : Errc::ConfigError, msg);
}

inline ScenarioConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::ConfigError, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), path.string());
}

inline json config_to_json(const ScenarioConfig& c) {
  using detail::vec_json;
  json j;
  j["schema"] = kSchema;
  j["seed"] = c.seed;
  j["phantom"] = {{"size_mm", vec_json(c.phantom_size)}};
  j["tumor"] = {{"semi_axes_mm", vec_json(c.tumor_semi_axes)},
                {"center_offset_mm", vec_json(c.tumor_offset)},
                {"position_jitter_mm", c.tumor_position_jitter}};
  j["contouring"] = {{"slices", c.slices},
                     {"points_per_slice", c.points_per_slice},
                     {"radial_jitter_mm", c.radial_jitter},
                     {"margin_mm", c.contour_margin},
                     {"capture_noise", c.capture_noise}};
  j["noise"] = {{"pos_sigma_mm", c.noise.pos_sigma}, {"rot_sigma_deg", c.noise.rot_sigma_deg}, {"dropout", c.noise.dropout}};
  json wps = json::array();
  for (const auto& w : c.motion.waypoints) wps.push_back({{"t_s", w.t_s}, {"offset_mm", vec_json(w.offset)}});
  j["motion"] = {{"kind", detail::motion_kind_name(c.motion.kind)},
                 {"amplitude_mm", c.motion.amplitude},
                 {"period_s", c.motion.period_s},
                 {"axis", vec_json(c.motion.axis)},
                 {"drift_sigma_mm_s", c.motion.drift_sigma},
                 {"drift_step_s", c.motion.drift_step_s},
                 {"bound_mm", c.motion.bound},
                 {"waypoints", wps}};
  j["vf"] = {{"enabled", c.vf.enabled},
             {"stiffness_n_per_mm", c.vf.stiffness_k},
             {"force_cap_n", c.vf.force_cap},
             {"margin_mm", c.vf.margin},
             {"ramp_ms", static_cast<double>(c.vf.ramp_ns) * 1e-6}};
  const auto& k = c.controller;
  j["controller"] = {{"speed_mm_s", k.speed},          {"line_spacing_mm", k.line_spacing},
                     {"approach_height_mm", k.approach_height}, {"press_depth_mm", k.press_depth},
                     {"retreat_speed_mm_s", k.retreat_speed},   {"bias_mm", k.bias_mm},
                     {"plan_offset_mm", k.plan_offset},         {"max_duration_s", k.max_duration_s}};
  j["tracker"] = {{"rate_hz", c.tracker_rate_hz}, {"tip_offset_mm", vec_json(c.tip_offset)}, {"pivot_samples", c.pivot_samples}};
  j["servo"] = {{"rate_hz", c.servo_rate_hz}, {"staleness_ms", c.staleness_ms}};
  j["report"] = {{"record_hz", c.record_hz}, {"margin_threshold_mm", c.margin_threshold}};
  return j;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::RuntimeError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::RuntimeError, "write failed for " + path.string());
}

inline json transform_json(const RigidTransform& t) {
  json a = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a.push_back(t.rotation()(r, c));
    a.push_back(t.translation()[r]);
  }
  return a;
}

inline json contours_json(const ContourStack& stack) {
  json cs = json::array();
  for (const auto& c : stack.contours) {
    json pts = json::array();
    for (const auto& p : c.points) pts.push_back({p.x(), p.y()});
    cs.push_back({{"stamp_ns", c.stamp_ns}, {"image_to_reference", transform_json(c.image_pose)}, {"points_mm", pts}});
  }
  return {{"tumor_frame", "NeedleSensor"}, {"layout", "row-major 3x4 [R | t]"}, {"contours", cs}};
}

/// Writes scenario.json, contours.json, tumor_mesh.bin and fixture_mesh.bin.
inline void write_scenario(const fs::path& dir, const Scenario& sc) {
  fs::create_directories(dir);
  json s;
  s["schema"] = kSchema;
  s["config"] = config_to_json(sc.config);
  s["tumor"] = {{"center_reference_mm", detail::vec_json(sc.tumor_center)}, {"semi_axes_mm", detail::vec_json(sc.tumor.semi_axes)}};
  s["phantom"] = {{"lo_tumor_mm", detail::vec_json(sc.phantom_lo)},
                  {"hi_tumor_mm", detail::vec_json(sc.phantom_hi)},
                  {"volume_mm3", sc.phantom_volume()}};
  s["pivot"] = {{"tip_offset_mm", detail::vec_json(sc.pivot.tip_offset)},
                {"pivot_point_mm", detail::vec_json(sc.pivot.pivot_point)},
                {"rms_residual_mm", sc.pivot.rms_residual}};
  s["fixture"] = {{"faces", sc.fixture.face_count()}, {"vertices", sc.fixture.vertices.size()}, {"volume_mm3", sc.fixture.volume()}};
  s["resection_start_ns"] = sc.resection_start_ns;
  write_text(dir / "scenario.json", s.dump(2) + "\n");
  write_text(dir / "contours.json", contours_json(sc.contours).dump(2) + "\n");
  for (const auto& [name, mesh] : {std::pair{"tumor_mesh.bin", sc.tumor.mesh()}, std::pair{"fixture_mesh.bin", sc.fixture}}) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::RuntimeError, "cannot write " + (dir / name).string());
    write_mesh(out, mesh);
  }
}

/// Rebuilds the scenario from scenario.json and checks it against the stored
/// contours and fixture.
inline Scenario load_scenario(const fs::path& dir) {
  const auto path = dir / "scenario.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::ConfigError, "no scenario at " + dir.string() + " (missing scenario.json)");
  std::stringstream ss;
  ss << in.rdbuf();
  json s;
  try {
    s = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw Error(Errc::ConfigError, path.string() + ": " + e.what());
  }
  if (!s.contains("config")) throw Error(Errc::ConfigError, path.string() + ": missing \"config\"");
  const ScenarioConfig cfg = config_from_json(s["config"].dump(2), path.string() + "#/config");
  Scenario sc = generate_scenario(cfg);

  std::ifstream cin(dir / "contours.json", std::ios::binary);
  std::stringstream cs;
  cs << cin.rdbuf();
  if (!cin || cs.str() != contours_json(sc.contours).dump(2) + "\n")
    throw Error(Errc::RuntimeError, "contours.json in " + dir.string() + " does not match its config");
  std::ifstream fin(dir / "fixture_mesh.bin", std::ios::binary);
  if (!fin) throw Error(Errc::RuntimeError, "missing fixture_mesh.bin in " + dir.string());
  const FixtureMesh stored = read_mesh(fin);
  if (stored.vertices != sc.fixture.vertices || stored.triangles != sc.fixture.triangles)
    throw Error(Errc::RuntimeError, "fixture_mesh.bin in " + dir.string() + " does not match its config");
  return sc;
}

inline json report_json(const ResectionReport& r) {
  return {{"min_margin_mm", r.min_margin_mm},
          {"positive_margin", r.positive_margin},
          {"transected", r.transected},
          {"volume_removed_pct", r.volume_removed_pct},
          {"duration_s", r.duration_s},
          {"breach_count", r.breach_count},
          {"max_breach_depth_mm", r.max_breach_depth_mm},
          {"cutting_samples", r.cutting_samples},
          {"margin_threshold_mm", r.margin_threshold_mm}};
}

inline const char* arm_name(bool guided) { return guided ? "vf" : "no_vf"; }

/// Deterministic per-run document: no wall-clock quantities.
inline json run_json(std::uint64_t seed, const RunResult& r) {
  return {{"schema", kSchema},
          {"seed", seed},
          {"arm", arm_name(r.guided)},
          {"completed", r.completed},
          {"report", report_json(r.report)},
          {"contact_ticks", r.contact_ticks},
          {"servo_ticks", r.servo.tick_count},
          {"stale_ticks", r.servo.stale_ticks},
          {"bias_mm", detail::vec_json(r.bias)}};
}

inline std::string num(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline constexpr std::string_view kReportCsvHeader =
    "seed,arm,completed,min_margin_mm,positive_margin,transected,volume_removed_pct,duration_s,breach_count,"
    "max_breach_depth_mm,cutting_samples,contact_ticks";

inline std::string report_csv_row(std::uint64_t seed, const RunResult& r) {
  const auto& p = r.report;
  return std::to_string(seed) + "," + arm_name(r.guided) + "," + (r.completed ? "1" : "0") + "," + num(p.min_margin_mm) + "," +
         (p.positive_margin ? "1" : "0") + "," + (p.transected ? "1" : "0") + "," + num(p.volume_removed_pct) + "," +
         num(p.duration_s) + "," + std::to_string(p.breach_count) + "," + num(p.max_breach_depth_mm) + "," +
         std::to_string(p.cutting_samples) + "," + std::to_string(r.contact_ticks);
}

struct BatchEntry {
  std::uint64_t seed = 0;
  RunResult result;
};

/// Runs every (seed, arm) pair on `threads` workers; results come back in
/// (seed, guided-first) order regardless of scheduling.
inline std::vector<BatchEntry> run_batch(const ScenarioConfig& base, const std::vector<std::uint64_t>& seeds,
                                         const std::vector<bool>& arms, unsigned threads = 0) {
  if (seeds.empty()) throw Error(Errc::InvalidArgument, "no seeds to run");
  if (arms.empty()) throw Error(Errc::InvalidArgument, "no arms to run");
  std::vector<BatchEntry> out(seeds.size() * arms.size());
  std::vector<std::exception_ptr> errors(out.size());
  std::atomic<std::size_t> next{0};
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(out.size()));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < out.size();) {
          try {
            ScenarioConfig c = base;
            c.seed = seeds[i / arms.size()];
            out[i].seed = c.seed;
            out[i].result = run_resection(generate_scenario(c), arms[i % arms.size()]);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

struct ArmSummary {
  std::size_t runs = 0, positive = 0, transected = 0, completed = 0;
  double duration_min_mean = 0, duration_min_sd = 0, volume_pct_mean = 0, volume_pct_sd = 0;
  double min_margin_mean = 0, min_margin_worst = 0;
};

inline ArmSummary summarize(const std::vector<BatchEntry>& entries, bool guided) {
  ArmSummary s;
  std::vector<double> dur, vol;
  s.min_margin_worst = INFINITY;
  for (const auto& e : entries) {
    if (e.result.guided != guided) continue;
    const auto& r = e.result.report;
    ++s.runs;
    s.positive += r.positive_margin;
    s.transected += r.transected;
    s.completed += e.result.completed;
    dur.push_back(r.duration_s / 60.0);
    vol.push_back(r.volume_removed_pct);
    s.min_margin_mean += r.min_margin_mm;
    s.min_margin_worst = std::min(s.min_margin_worst, r.min_margin_mm);
  }
  if (s.runs == 0) return s;
  auto mean_sd = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    sd = 0;
    for (double x : v) sd += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(sd / static_cast<double>(v.size() - 1)) : 0.0;
  };
  mean_sd(dur, s.duration_min_mean, s.duration_min_sd);
  mean_sd(vol, s.volume_pct_mean, s.volume_pct_sd);
  s.min_margin_mean /= static_cast<double>(s.runs);
  return s;
}

// Human-subject figures printed for context only (training / evaluation rounds).
struct ContextRow {
  const char* label;
  double minutes, minutes_sd, volume_pct, volume_pct_sd;
};
inline constexpr ContextRow kPublishedContext[] = {
    {"training, VF guidance", 13.8, 6.7, 16.3, 3.9},
    {"training, No VF guidance", 9.5, 3.1, 14.4, 5.4},
    {"evaluation, VF guidance", 13.9, 5.4, 17.5, 3.5},
    {"evaluation, No VF guidance", 9.8, 4.0, 15.2, 1.4},
};

inline constexpr std::string_view kSummaryCsvHeader =
    "arm,runs,completed,positive_margins,transected,duration_min_mean,duration_min_sd,volume_pct_mean,volume_pct_sd,"
    "min_margin_mean_mm,min_margin_worst_mm";

inline std::string summary_csv(const std::vector<BatchEntry>& entries) {
  std::string out(kSummaryCsvHeader);
  out += "\n";
  for (bool guided : {true, false}) {
    const auto s = summarize(entries, guided);
    if (s.runs == 0) continue;
    out += std::string(arm_name(guided)) + "," + std::to_string(s.runs) + "," + std::to_string(s.completed) + "," +
           std::to_string(s.positive) + "," + std::to_string(s.transected) + "," + num(s.duration_min_mean) + "," +
           num(s.duration_min_sd) + "," + num(s.volume_pct_mean) + "," + num(s.volume_pct_sd) + "," + num(s.min_margin_mean) +
           "," + num(s.min_margin_worst) + "\n";
  }
  return out;
}

/// Plain-text table in the "VF guidance / No VF guidance" layout, with the
/// published human numbers alongside.
inline std::string summary_table(const std::vector<BatchEntry>& entries) {
  std::ostringstream os;
  auto pm = [](double m, double sd) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(1);
    s << m << " +/- " << sd;
    return s.str();
  };
  os << "                      VF guidance         No VF guidance\n";
  const auto g = summarize(entries, true), u = summarize(entries, false);
  auto row = [&](const char* label, const std::string& a, const std::string& b) {
    os << label;
    for (std::size_t i = std::char_traits<char>::length(label); i < 22; ++i) os << ' ';
    os << a;
    for (std::size_t i = a.size(); i < 20; ++i) os << ' ';
    os << b << "\n";
  };
  auto or_dash = [](std::size_t runs, std::string s) { return runs ? s : std::string("-"); };
  row("simulated runs", std::to_string(g.runs), std::to_string(u.runs));
  row("time (min)", or_dash(g.runs, pm(g.duration_min_mean, g.duration_min_sd)), or_dash(u.runs, pm(u.duration_min_mean, u.duration_min_sd)));
  row("volume removed (%)", or_dash(g.runs, pm(g.volume_pct_mean, g.volume_pct_sd)), or_dash(u.runs, pm(u.volume_pct_mean, u.volume_pct_sd)));
  row("positive margins", or_dash(g.runs, std::to_string(g.positive) + "/" + std::to_string(g.runs)),
      or_dash(u.runs, std::to_string(u.positive) + "/" + std::to_string(u.runs)));
  row("transected", or_dash(g.runs, std::to_string(g.transected)), or_dash(u.runs, std::to_string(u.transected)));
  os << "published human results (context only, not targets):\n";
  for (const auto& c : kPublishedContext)
    os << "  " << c.label << ": " << pm(c.minutes, c.minutes_sd) << " min, " << pm(c.volume_pct, c.volume_pct_sd) << " %\n";
  return os.str();
}

}  // namespace vfg::io
