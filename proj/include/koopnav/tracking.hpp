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

// Obstacle tracking: cluster-to-track association, delay-embedded states and
// the Tκ-spaced history buffers the Koopman fit consumes.
//
// Time is measured in integer control ticks of length Ts. The delay lag Tθ
// and the history spacing Tκ must both be integer multiples of Ts.

#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <tuple>
#include <vector>

#include "koopnav/common.hpp"
#include "koopnav/savitzky_golay.hpp"
#include "koopnav/sensing.hpp"

namespace koopnav::tracking {

using Tick = long;
using Vec9 = Eigen::Matrix<double, 9, 1>;

inline constexpr int kHistoryCapacity = 25;
inline constexpr int kMinFitHistory = 5;

struct TrackerConfig {
  double gate_dist = 3.5;  // 1.0 m + Tκ · 2.5 m/s obstacle speed allowance
  int max_misses = 3;
  double ts = 0.2;
  double t_theta = 0.6;
  double t_kappa = 1.0;
  int sg_window = 5;
  int sg_order = 2;
  double radius_decay = 0.99;
  int raw_log_capacity = 64;

  [[nodiscard]] int lag_ticks() const { return static_cast<int>(std::lround(t_theta / ts)); }
  [[nodiscard]] int spacing_ticks() const { return static_cast<int>(std::lround(t_kappa / ts)); }
};

inline void validate(const TrackerConfig& cfg) {
  if (!(cfg.ts > 0.0)) throw ParameterError("tracker: ts must be > 0");
  if (!(cfg.t_theta > 0.0) || !(cfg.t_kappa > 0.0)) {
    throw ParameterError("tracker: t_theta and t_kappa must be > 0");
  }
  auto is_multiple = [&](double t) {
    const double ratio = t / cfg.ts;
    return std::abs(ratio - std::round(ratio)) < 1e-9 * std::max(1.0, ratio) && ratio >= 1.0 - 1e-9;
  };
  if (!is_multiple(cfg.t_theta)) throw ParameterError("tracker: t_theta must be a multiple of ts");
  if (!is_multiple(cfg.t_kappa)) throw ParameterError("tracker: t_kappa must be a multiple of ts");
  if (cfg.sg_window < 1 || cfg.sg_window % 2 == 0 || cfg.sg_order < 0 ||
      cfg.sg_order >= cfg.sg_window) {
    throw ParameterError("tracker: smoother needs an odd window larger than the order");
  }
  if (!(cfg.gate_dist > 0.0)) throw ParameterError("tracker: gate_dist must be > 0");
  if (cfg.max_misses < 0) throw ParameterError("tracker: max_misses must be >= 0");
  if (cfg.raw_log_capacity < 2 * cfg.lag_ticks() + 1) {
    throw ParameterError("tracker: raw log too short for the delay embedding");
  }
}

/// [p(k), p(k - lag), p(k - 2 lag)], newest block first.
struct EmbeddedState {
  Vec9 stacked = Vec9::Zero();
  Tick tick = 0;

  [[nodiscard]] Vec3 block(int i) const { return stacked.segment<3>(3 * i); }
  [[nodiscard]] Vec3 newest() const { return block(0); }
};

struct PositionSample {
  Tick tick = 0;
  Vec3 position = Vec3::Zero();
};

struct ObstacleTrack {
  int id = 0;
  Vec3 last_centroid = Vec3::Zero();
  double radius_estimate = 0.0;
  int misses = 0;
  Tick last_seen = 0;
  std::deque<PositionSample> raw_log;
  std::deque<EmbeddedState> history;
};

/// Owns the live tracks and the id counter; ids are never reused.
struct TrackSet {
  std::vector<ObstacleTrack> tracks;
  int next_id = 1;
};

/// Greedy nearest-neighbour association in ascending centroid distance.
/// Matches farther than the gate are rejected; leftover observations start
/// new tracks and leftover tracks accumulate misses until they are dropped.
inline void associate(TrackSet& set, const std::vector<sensing::ClusterObservation>& obs,
                      const TrackerConfig& cfg, Tick tick) {
  struct Candidate {
    double dist;
    std::size_t track;
    std::size_t obs;
  };
  std::vector<Candidate> candidates;
  for (std::size_t t = 0; t < set.tracks.size(); ++t) {
    for (std::size_t o = 0; o < obs.size(); ++o) {
      const double dist = (set.tracks[t].last_centroid - obs[o].centroid).norm();
      if (dist <= cfg.gate_dist) candidates.push_back({dist, t, o});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.dist, a.track, a.obs) < std::tie(b.dist, b.track, b.obs);
  });

  std::vector<bool> track_used(set.tracks.size(), false);
  std::vector<bool> obs_used(obs.size(), false);
  auto log_position = [&](ObstacleTrack& track, const Vec3& position) {
    track.raw_log.push_back({tick, position});
    while (static_cast<int>(track.raw_log.size()) > cfg.raw_log_capacity) track.raw_log.pop_front();
  };

  for (const auto& c : candidates) {
    if (track_used[c.track] || obs_used[c.obs]) continue;
    track_used[c.track] = true;
    obs_used[c.obs] = true;
    auto& track = set.tracks[c.track];
    const auto& o = obs[c.obs];
    track.last_centroid = o.centroid;
    track.radius_estimate = std::max(track.radius_estimate * cfg.radius_decay, o.radius);
    track.misses = 0;
    track.last_seen = tick;
    log_position(track, o.centroid);
  }

  std::vector<ObstacleTrack> kept;
  kept.reserve(set.tracks.size() + obs.size());
  for (std::size_t t = 0; t < set.tracks.size(); ++t) {
    auto& track = set.tracks[t];
    if (!track_used[t]) ++track.misses;
    if (track.misses <= cfg.max_misses) kept.push_back(std::move(track));
  }
  for (std::size_t o = 0; o < obs.size(); ++o) {
    if (obs_used[o]) continue;
    ObstacleTrack track;
    track.id = set.next_id++;
    track.last_centroid = obs[o].centroid;
    track.radius_estimate = obs[o].radius;
    track.last_seen = tick;
    log_position(track, obs[o].centroid);
    kept.push_back(std::move(track));
  }
  set.tracks = std::move(kept);
}

/// Delay-embedded state at `tick`; absent unless the raw log holds samples at
/// exactly tick, tick - lag and tick - 2 lag.
[[nodiscard]] inline std::optional<EmbeddedState> embed(const ObstacleTrack& track,
                                                        const TrackerConfig& cfg, Tick tick) {
  const int lag = cfg.lag_ticks();
  EmbeddedState state;
  state.tick = tick;
  for (int i = 0; i < 3; ++i) {
    const Tick want = tick - static_cast<Tick>(i * lag);
    const auto it = std::find_if(track.raw_log.rbegin(), track.raw_log.rend(),
                                 [want](const PositionSample& s) { return s.tick == want; });
    if (it == track.raw_log.rend()) return std::nullopt;
    state.stacked.segment<3>(3 * i) = it->position;
  }
  return state;
}

/// Latest-tick overload.
[[nodiscard]] inline std::optional<EmbeddedState> embed(const ObstacleTrack& track,
                                                        const TrackerConfig& cfg) {
  if (track.raw_log.empty()) return std::nullopt;
  return embed(track, cfg, track.raw_log.back().tick);
}

/// Delay-embedded state at `tick` built from the Savitzky–Golay fit of the
/// contiguous raw log ending at `tick`. Delayed blocks get centred fits; the
/// newest block is the end-point evaluation of the trailing window. Falls
/// back to the raw embedding when the contiguous run is shorter than the
/// smoother window.
[[nodiscard]] inline std::optional<EmbeddedState> embed_smoothed(const ObstacleTrack& track,
                                                                 const TrackerConfig& cfg,
                                                                 Tick tick) {
  auto state = embed(track, cfg, tick);
  if (!state || cfg.sg_window == 1) return state;
  const int lag = cfg.lag_ticks();
  const std::size_t want = static_cast<std::size_t>(2 * lag + cfg.sg_window);
  std::vector<Vec3> run;  // newest first
  for (auto it = track.raw_log.rbegin(); it != track.raw_log.rend() && run.size() < want; ++it) {
    if (it->tick > tick) continue;
    if (it->tick != tick - static_cast<Tick>(run.size())) break;
    run.push_back(it->position);
  }
  if (static_cast<int>(run.size()) < cfg.sg_window) return state;
  std::reverse(run.begin(), run.end());
  std::vector<double> series(run.size());
  const auto newest = static_cast<Eigen::Index>(run.size()) - 1;
  for (int c = 0; c < 3; ++c) {
    for (std::size_t j = 0; j < run.size(); ++j) series[j] = run[j][c];
    const auto smoothed = filters::savgol_smooth(series, cfg.sg_window, cfg.sg_order);
    for (int i = 0; i < 3; ++i) {
      const Eigen::Index idx = newest - i * lag;
      if (idx >= 0) state->stacked[3 * i + c] = smoothed[static_cast<std::size_t>(idx)];
    }
  }
  return state;
}

/// Appends a history entry. Entries must be exactly Tκ apart; a longer gap
/// restarts the buffer, a shorter one is a caller error.
inline void push_history(ObstacleTrack& track, const EmbeddedState& state,
                         const TrackerConfig& cfg) {
  if (!state.stacked.allFinite()) throw DataError("push_history: non-finite state");
  if (!track.history.empty()) {
    const Tick gap = state.tick - track.history.back().tick;
    if (gap < cfg.spacing_ticks()) {
      throw ParameterError("push_history: called before Tκ elapsed");
    }
    if (gap > cfg.spacing_ticks()) track.history.clear();
  }
  track.history.push_back(state);
  while (static_cast<int>(track.history.size()) > kHistoryCapacity) track.history.pop_front();
}

/// Number of entries used for a fit with requested length `history_length`,
/// clamped to [5, 25]; zero when the buffer is too short to fit.
[[nodiscard]] inline int fit_length(const ObstacleTrack& track, int history_length) {
  const int want = std::clamp(history_length, kMinFitHistory, kHistoryCapacity);
  const int have = static_cast<int>(track.history.size());
  if (have < kMinFitHistory) return 0;
  return std::min(want, have);
}

/// Savitzky–Golay smoothing of each of the nine coordinate sequences.
[[nodiscard]] inline std::vector<EmbeddedState> smooth_history(
    const std::vector<EmbeddedState>& history, const TrackerConfig& cfg) {
  std::vector<EmbeddedState> out = history;
  if (static_cast<int>(history.size()) < cfg.sg_window) return out;
  std::vector<double> series(history.size());
  for (int coord = 0; coord < 9; ++coord) {
    for (std::size_t j = 0; j < history.size(); ++j) series[j] = history[j].stacked[coord];
    const auto smoothed = filters::savgol_smooth(series, cfg.sg_window, cfg.sg_order);
    for (std::size_t j = 0; j < history.size(); ++j) out[j].stacked[coord] = smoothed[j];
  }
  return out;
}

/// The most recent `count` history entries, oldest first.
[[nodiscard]] inline std::vector<EmbeddedState> recent_history(const ObstacleTrack& track,
                                                               int count) {
  const int have = static_cast<int>(track.history.size());
  const int take = std::clamp(count, 0, have);
  return {track.history.end() - take, track.history.end()};
}

[[nodiscard]] inline std::vector<EmbeddedState> smooth_history(const ObstacleTrack& track,
                                                               const TrackerConfig& cfg) {
  return smooth_history(recent_history(track, static_cast<int>(track.history.size())), cfg);
}

}  // namespace koopnav::tracking
