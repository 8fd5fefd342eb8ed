// Copyright 2026 The koopnav Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "koopnav/common.hpp"

namespace koopnav::world {

enum class MotionKind { kCircular, kFigureEight, kLinear, kStationary };

[[nodiscard]] inline MotionKind motion_kind_from_string(std::string_view name) {
  if (name == "circular") return MotionKind::kCircular;
  if (name == "figure_eight") return MotionKind::kFigureEight;
  if (name == "linear") return MotionKind::kLinear;
  if (name == "stationary") return MotionKind::kStationary;
  throw ParameterError("unknown motion kind '" + std::string(name) + "'");
}

[[nodiscard]] inline std::string_view to_string(MotionKind kind) {
  switch (kind) {
    case MotionKind::kCircular:
      return "circular";
    case MotionKind::kFigureEight:
      return "figure_eight";
    case MotionKind::kLinear:
      return "linear";
    case MotionKind::kStationary:
      return "stationary";
  }
  return "unknown";
}

/// Obstacle trajectory family. The effective center is `center` raised by
/// `altitude`; the periodic families move in the horizontal plane.
struct MotionSpec {
  MotionKind kind = MotionKind::kStationary;
  Vec3 center = Vec3::Zero();
  double amplitude = 0.0;  // [m]
  double rate = 0.0;       // [rad/s]
  Vec3 velocity = Vec3::Zero();
  double phase = 0.0;     // [rad]
  double altitude = 0.0;  // [m]
};

struct ObstacleTruth {
  int id = 0;
  double radius = 1.0;
  MotionSpec motion;
};

struct ObstaclePose {
  int id = 0;
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

inline void validate(const MotionSpec& spec) {
  if (!(spec.amplitude >= 0.0) || !std::isfinite(spec.amplitude)) {
    throw ParameterError("motion amplitude must be finite and non-negative");
  }
  if (!std::isfinite(spec.rate) || !std::isfinite(spec.phase) ||
      !std::isfinite(spec.altitude) || !spec.center.allFinite() ||
      !spec.velocity.allFinite()) {
    throw ParameterError("motion parameters must be finite");
  }
}

[[nodiscard]] inline Vec3 obstacle_position(const MotionSpec& spec, double t) {
  if (t < 0.0) throw ParameterError("obstacle_position: negative time");
  const Vec3 c = spec.center + Vec3(0.0, 0.0, spec.altitude);
  const double angle = spec.rate * t + spec.phase;
  switch (spec.kind) {
    case MotionKind::kCircular:
      return c + Vec3(spec.amplitude * std::cos(angle),
                      spec.amplitude * std::sin(angle), 0.0);
    case MotionKind::kFigureEight:
      // Lemniscate of Gerono.
      return c + Vec3(spec.amplitude * std::sin(angle),
                      spec.amplitude * std::sin(angle) * std::cos(angle), 0.0);
    case MotionKind::kLinear:
      return c + spec.velocity * t;
    case MotionKind::kStationary:
      return c;
  }
  throw ParameterError("obstacle_position: unknown motion kind");
}

[[nodiscard]] inline std::vector<ObstaclePose> advance_world(
    const std::vector<ObstacleTruth>& obstacles, double t) {
  std::vector<ObstaclePose> poses;
  poses.reserve(obstacles.size());
  for (const auto& obstacle : obstacles) {
    poses.push_back({obstacle.id, obstacle_position(obstacle.motion, t),
                     obstacle.radius});
  }
  return poses;
}

}  // namespace koopnav::world
