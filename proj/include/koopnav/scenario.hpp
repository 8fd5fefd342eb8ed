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

// Declarative scenario description and its JSON reader. The document schema
// is described in docs/scenario_format.md; all quantities are SI.

#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "koopnav/common.hpp"
#include "koopnav/koopman.hpp"
#include "koopnav/lin_dynamics.hpp"
#include "koopnav/mpc.hpp"
#include "koopnav/sensing.hpp"
#include "koopnav/tracking.hpp"
#include "koopnav/world.hpp"

namespace koopnav::world {

struct Scenario {
  std::string name = "scenario";
  dynamics::UavState start;
  Vec3 kvel = Vec3::Constant(1.8);
  Vec3 goal = Vec3::Zero();
  double goal_tolerance = 0.2;
  std::vector<ObstacleTruth> obstacles;
  sensing::SensorSpec sensor;
  mpc::MpcConfig controller;
  tracking::TrackerConfig tracker;
  koopman::LiftingKind lifting = koopman::LiftingKind::kPositionVelocityAcceleration;
  int history_length = 10;
  double fit_pinv_cutoff = koopman::kFitPinvCutoff;
  double ts = 0.2;
  double duration = 60.0;
  std::uint64_t seed = 1;

  [[nodiscard]] int num_steps() const {
    return static_cast<int>(std::floor(duration / ts + 1e-9));
  }
};

/// Throws ScenarioError describing the first violated constraint.
inline void validate(const Scenario& s) {
  auto fail = [](const std::string& what) { throw ScenarioError("invalid scenario: " + what); };
  if (!(s.ts > 0.0)) fail("sim.ts must be > 0");
  if (!(s.duration > 0.0)) fail("sim.duration must be > 0");
  if (!s.start.finite()) fail("uav start state must be finite");
  if (!s.goal.allFinite()) fail("goal must be finite");
  if (!(s.goal_tolerance > 0.0)) fail("goal.tolerance must be > 0");
  if (!(s.kvel.array() > 0.0).all()) fail("uav.kvel entries must be > 0");
  if (s.history_length < tracking::kMinFitHistory || s.history_length > tracking::kHistoryCapacity) {
    fail("controller.history must lie in [5, 25]");
  }
  if (!(s.fit_pinv_cutoff >= 0.0 && s.fit_pinv_cutoff < 1.0)) {
    fail("controller.pinv_cutoff must lie in [0, 1)");
  }
  std::set<int> ids;
  for (const auto& o : s.obstacles) {
    if (!(o.radius > 0.0)) fail("obstacle radius must be > 0");
    if (!ids.insert(o.id).second) fail("duplicate obstacle id " + std::to_string(o.id));
    try {
      validate(o.motion);
    } catch (const ParameterError& e) {
      fail(e.what());
    }
  }
  try {
    sensing::validate(s.sensor);
    mpc::validate(s.controller);
    tracking::validate(s.tracker);
  } catch (const ParameterError& e) {
    fail(e.what());
  }
  if (std::abs(s.tracker.ts - s.ts) > 1e-12) fail("tracker ts must equal sim.ts");
}

namespace detail {

using nlohmann::json;

inline Vec3 read_vec3(const json& j, const char* key, const Vec3& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_number()) return Vec3::Constant(v.get<double>());
  if (!v.is_array() || v.size() != 3) {
    throw ScenarioError(std::string("field '") + key + "' must be a 3-vector");
  }
  return Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
}

template <typename T>
T read(const json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

inline const json& section(const json& root, const char* key) {
  static const json empty = json::object();
  if (!root.contains(key)) return empty;
  const auto& s = root.at(key);
  if (!s.is_object()) throw ScenarioError(std::string("section '") + key + "' must be an object");
  return s;
}

}  // namespace detail

[[nodiscard]] inline Scenario scenario_from_json(const nlohmann::json& root) {
  using detail::read;
  using detail::read_vec3;
  using detail::section;
  Scenario s;
  try {
    if (!root.is_object()) throw ScenarioError("scenario document must be an object");
    s.name = read<std::string>(root, "name", s.name);

    const auto& uav = section(root, "uav");
    s.start.p = read_vec3(uav, "position", s.start.p);
    s.start.v = read_vec3(uav, "velocity", s.start.v);
    s.kvel = read_vec3(uav, "kvel", s.kvel);

    if (!root.contains("goal")) throw ScenarioError("missing 'goal' section");
    const auto& goal = section(root, "goal");
    if (!goal.contains("position")) throw ScenarioError("missing goal.position");
    s.goal = read_vec3(goal, "position", s.goal);
    s.goal_tolerance = read<double>(goal, "tolerance", s.goal_tolerance);

    if (root.contains("obstacles")) {
      const auto& list = root.at("obstacles");
      if (!list.is_array()) throw ScenarioError("'obstacles' must be an array");
      int next_id = 1;
      for (const auto& item : list) {
        ObstacleTruth o;
        o.id = read<int>(item, "id", next_id);
        next_id = o.id + 1;
        o.radius = read<double>(item, "radius", o.radius);
        const auto& m = section(item, "motion");
        try {
          o.motion.kind = motion_kind_from_string(read<std::string>(m, "kind", "stationary"));
        } catch (const ParameterError& e) {
          throw ScenarioError(e.what());
        }
        o.motion.center = read_vec3(m, "center", o.motion.center);
        o.motion.amplitude = read<double>(m, "amplitude", o.motion.amplitude);
        o.motion.rate = read<double>(m, "rate", o.motion.rate);
        o.motion.velocity = read_vec3(m, "velocity", o.motion.velocity);
        o.motion.phase = read<double>(m, "phase", o.motion.phase);
        o.motion.altitude = read<double>(m, "altitude", o.motion.altitude);
        s.obstacles.push_back(o);
      }
    }

    const auto& sensor = section(root, "sensor");
    s.sensor.range = read<double>(sensor, "range", s.sensor.range);
    s.sensor.noise_sigma = read<double>(sensor, "noise_sigma", s.sensor.noise_sigma);
    s.sensor.rays_per_obstacle = read<int>(sensor, "rays_per_obstacle", s.sensor.rays_per_obstacle);
    s.sensor.ground_z_cut = read<double>(sensor, "ground_z_cut", s.sensor.ground_z_cut);
    s.sensor.self_radius_cut = read<double>(sensor, "self_radius_cut", s.sensor.self_radius_cut);
    s.sensor.link_dist = read<double>(sensor, "link_dist", s.sensor.link_dist);
    s.sensor.min_cluster_size = read<int>(sensor, "min_cluster_size", s.sensor.min_cluster_size);

    const auto& sim = section(root, "sim");
    s.ts = read<double>(sim, "ts", s.ts);
    s.duration = read<double>(sim, "duration", s.duration);
    s.seed = read<std::uint64_t>(sim, "seed", s.seed);

    const auto& ctl = section(root, "controller");
    auto& mpc = s.controller;
    mpc.horizon = read<int>(ctl, "horizon", mpc.horizon);
    mpc.Q = read_vec3(ctl, "q", Vec3::Ones()).asDiagonal();
    mpc.v_max = read_vec3(ctl, "v_max", mpc.v_max);
    mpc.u_max = read_vec3(ctl, "u_max", mpc.u_max);
    mpc.uav_radius = read<double>(ctl, "uav_radius", mpc.uav_radius);
    mpc.margin = read<double>(ctl, "margin", mpc.margin);
    mpc.slack_weight = read<double>(ctl, "slack_weight", mpc.slack_weight);
    mpc.slack_linear_weight = read<double>(ctl, "slack_linear_weight", mpc.slack_linear_weight);
    mpc.ground_avoidance = read<bool>(ctl, "ground_avoidance", mpc.ground_avoidance);
    mpc.ground_z_min = read<double>(ctl, "ground_z_min", mpc.ground_z_min);
    mpc.warm_start = read<bool>(ctl, "warm_start", mpc.warm_start);
    mpc.qp.eps_abs = read<double>(ctl, "qp_eps_abs", mpc.qp.eps_abs);
    mpc.qp.eps_rel = read<double>(ctl, "qp_eps_rel", mpc.qp.eps_rel);
    mpc.qp.max_iter = read<int>(ctl, "qp_max_iter", mpc.qp.max_iter);
    try {
      s.lifting = koopman::lifting_from_string(read<std::string>(ctl, "lifting", "pva"));
    } catch (const ParameterError& e) {
      throw ScenarioError(e.what());
    }
    s.history_length = read<int>(ctl, "history", s.history_length);
    s.fit_pinv_cutoff = read<double>(ctl, "pinv_cutoff", s.fit_pinv_cutoff);

    auto& trk = s.tracker;
    trk.ts = s.ts;
    trk.t_theta = read<double>(ctl, "t_theta", 3.0 * s.ts);
    trk.t_kappa = read<double>(ctl, "t_kappa", trk.t_kappa);
    trk.gate_dist = read<double>(ctl, "gate_dist", trk.gate_dist);
    trk.max_misses = read<int>(ctl, "max_misses", trk.max_misses);
    trk.sg_window = read<int>(ctl, "sg_window", trk.sg_window);
    trk.sg_order = read<int>(ctl, "sg_order", trk.sg_order);
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("scenario field has the wrong type: ") + e.what());
  }
  validate(s);
  return s;
}

[[nodiscard]] inline Scenario parse_scenario(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
  }
  return scenario_from_json(root);
}

[[nodiscard]] inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario(buffer.str());
}

}  // namespace koopnav::world
