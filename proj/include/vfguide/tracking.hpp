#pragma once

// Tracker samples as they cross thread and process boundaries.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <vector>

#include "vfguide/frames.hpp"

namespace vfg {

struct TrackerSample {
  FrameId frame = FrameId::StylusSensor;
  RigidTransform pose;  // sensor -> Tracker
  std::int64_t timestamp_ns = 0;
  bool valid = true;

  bool operator==(const TrackerSample&) const = default;
};

/// Latest sample per tracked sensor; what the servo snapshots each tick.
struct PoseSet {
  std::vector<TrackerSample> samples;

  const TrackerSample* find(FrameId f) const {
    auto it = std::find_if(samples.begin(), samples.end(), [f](const TrackerSample& s) { return s.frame == f; });
    return it == samples.end() ? nullptr : &*it;
  }

  void upsert(const TrackerSample& s) {
    auto it = std::find_if(samples.begin(), samples.end(), [&](const TrackerSample& x) { return x.frame == s.frame; });
    if (it == samples.end())
      samples.push_back(s);
    else
      *it = s;
  }
};

/// CLOCK_MONOTONIC in ns; the time base for wall-clock runs.
inline std::int64_t monotonic_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace vfg
