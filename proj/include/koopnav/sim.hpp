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

// Closed-loop runner, open-loop prediction study and timing benchmark.
//
// Every control tick (period Ts) the runner advances the world, senses and
// clusters, updates the tracks, refits the per-track Koopman operators on
// ticks that are multiples of Tκ/Ts, predicts H steps ahead and applies the
// first MPC input to the plant.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "koopnav/common.hpp"
#include "koopnav/koopman.hpp"
#include "koopnav/lin_dynamics.hpp"
#include "koopnav/mpc.hpp"
#include "koopnav/scenario.hpp"
#include "koopnav/sensing.hpp"
#include "koopnav/tracking.hpp"
#include "koopnav/world.hpp"

namespace koopnav::sim {

using tracking::Tick;
using world::Scenario;

struct FitRecord {
  Tick tick = 0;
  int track_id = 0;
  int history_length = 0;
  koopman::PowerDiagnostics power;
  double rescaling_error = 0.0;  // ‖K_fine^(Tκ/Ts) − K_coarse‖_F / ‖K_coarse‖_F
};

struct TrackPredictionRecord {
  int track_id = 0;
  Vec3 centroid = Vec3::Zero();
  double radius = 0.0;
  bool from_model = false;
  std::vector<Vec3> positions;  // μ = 1..H
};

/// Relative rescaling residual of a fitted model.
[[nodiscard]] inline double rescaling_error(const koopman::KoopmanModel& model, int ratio) {
  MatX power = MatX::Identity(model.fine.rows(), model.fine.cols());
  for (int i = 0; i < ratio; ++i) power = power * model.fine;
  return relative_frobenius(power, model.coarse);
}

/// Perception, tracking and per-track Koopman models behind one interface.
class ObstaclePredictor {
 public:
  ObstaclePredictor(const sensing::SensorSpec& sensor, const tracking::TrackerConfig& tracker,
                    koopman::LiftingKind lifting, int history_length,
                    double pinv_cutoff = koopman::kFitPinvCutoff)
      : sensor_(sensor),
        tracker_(tracker),
        lifting_(lifting),
        history_length_(history_length),
        pinv_cutoff_(pinv_cutoff) {}

  /// Senses at `tick` from `uav_pos`, updates tracks and refits models when
  /// the tick falls on the Tκ grid. Returns the filtered cloud and clusters.
  template <typename Rng>
  std::pair<sensing::PointCloud, std::vector<sensing::ClusterObservation>> observe(
      const Vec3& uav_pos, const std::vector<world::ObstaclePose>& truth, Rng& rng, Tick tick) {
    const auto raw = sensing::sample_cloud(uav_pos, truth, sensor_, rng,
                                           static_cast<double>(tick) * tracker_.ts);
    auto cloud = sensing::filter_cloud(raw, uav_pos, sensor_);
    auto clusters = sensing::cluster(cloud, sensor_.link_dist, sensor_.min_cluster_size);
    tracking::associate(tracks_, clusters, tracker_, tick);

    // Forget models of dropped tracks.
    for (auto it = models_.begin(); it != models_.end();) {
      const bool alive = std::any_of(tracks_.tracks.begin(), tracks_.tracks.end(),
                                     [&](const auto& t) { return t.id == it->first; });
      it = alive ? std::next(it) : models_.erase(it);
    }
    if (tick % tracker_.spacing_ticks() == 0) refit(tick);
    return {std::move(cloud), std::move(clusters)};
  }

  /// H-step predictions per live track. Tracks without a model, or without a
  /// complete embedding at `tick`, hold their last centroid.
  [[nodiscard]] std::vector<TrackPredictionRecord> predict(Tick tick, int horizon) const {
    std::vector<TrackPredictionRecord> out;
    for (const auto& track : tracks_.tracks) {
      TrackPredictionRecord rec;
      rec.track_id = track.id;
      rec.centroid = track.last_centroid;
      rec.radius = track.radius_estimate;
      const auto model = models_.find(track.id);
      const auto state = tracking::embed_smoothed(track, tracker_, tick);
      if (model != models_.end() && state) {
        rec.positions = koopman::predict(model->second, *state, horizon);
        rec.from_model = true;
      } else {
        rec.positions.assign(static_cast<std::size_t>(horizon), track.last_centroid);
      }
      out.push_back(std::move(rec));
    }
    return out;
  }

  [[nodiscard]] const tracking::TrackSet& tracks() const { return tracks_; }
  [[nodiscard]] const std::map<int, koopman::KoopmanModel>& models() const { return models_; }
  [[nodiscard]] const std::vector<FitRecord>& fits() const { return fits_; }
  [[nodiscard]] koopman::LiftingKind lifting() const { return lifting_; }

 private:
  void refit(Tick tick) {
    const koopman::FitConfig fit_cfg{lifting_, tracker_.t_theta, tracker_.ts, tracker_.t_kappa,
                                     pinv_cutoff_};
    for (auto& track : tracks_.tracks) {
      const auto state = tracking::embed_smoothed(track, tracker_, tick);
      if (!state) continue;
      tracking::push_history(track, *state, tracker_);
      const int count = tracking::fit_length(track, history_length_);
      if (count == 0) continue;
      auto model = koopman::fit_operator(tracking::recent_history(track, count), fit_cfg, static_cast<double>(tick) * tracker_.ts);
      FitRecord rec;
      rec.tick = tick;
      rec.track_id = track.id;
      rec.history_length = count;
      rec.power = model.power;
      rec.rescaling_error = rescaling_error(model, tracker_.spacing_ticks());
      fits_.push_back(rec);
      models_[track.id] = std::move(model);
    }
  }

  sensing::SensorSpec sensor_;
  tracking::TrackerConfig tracker_;
  koopman::LiftingKind lifting_;
  int history_length_;
  double pinv_cutoff_;
  tracking::TrackSet tracks_;
  std::map<int, koopman::KoopmanModel> models_;
  std::vector<FitRecord> fits_;
};

struct ObstacleClearance {
  int id = 0;
  double distance = 0.0;  // UAV position to true obstacle center
  double required = 0.0;  // R_uav + R_true + margin
};

struct StepRecord {
  int step = 0;
  double t = 0.0;
  dynamics::UavState state;  // at the start of the step
  Vec3 command = Vec3::Zero();
  mpc::MpcDiagnostics diagnostics;
  std::vector<world::ObstaclePose> truth;
  std::vector<ObstacleClearance> clearances;
  std::vector<TrackPredictionRecord> predictions;
  sensing::PointCloud cloud;
  std::vector<int> cloud_labels;
};

struct RunLog {
  std::vector<StepRecord> steps;
  std::vector<FitRecord> fits;
  dynamics::UavState final_state;
  bool goal_reached = false;
  double goal_time = 0.0;
  double ts = 0.2;
  double margin = 0.0;
  double uav_radius = 0.0;
  Vec3 goal = Vec3::Zero();
  bool keep_clouds = false;

  /// Smallest realized distance − required separation over all steps.
  [[nodiscard]] double min_clearance_margin() const {
    double best = kInf;
    for (const auto& s : steps) {
      for (const auto& c : s.clearances) best = std::min(best, c.distance - c.required);
    }
    return best;
  }
};

struct RunOptions {
  bool keep_clouds = false;
};

[[nodiscard]] inline std::vector<ObstacleClearance> clearances(
    const Vec3& uav, const std::vector<world::ObstaclePose>& truth, const mpc::MpcConfig& cfg) {
  std::vector<ObstacleClearance> out;
  for (const auto& o : truth) {
    out.push_back({o.id, (uav - o.center).norm(), mpc::separation(cfg, o.radius)});
  }
  return out;
}

[[nodiscard]] inline RunLog run_closed_loop(const Scenario& scenario, const RunOptions& opts = {}) {
  world::validate(scenario);
  const auto model = dynamics::discretize(scenario.kvel, scenario.ts);
  std::mt19937_64 rng(scenario.seed);
  ObstaclePredictor predictor(scenario.sensor, scenario.tracker, scenario.lifting,
                              scenario.history_length, scenario.fit_pinv_cutoff);
  mpc::MpcController controller(scenario.controller);
  const int horizon = scenario.controller.horizon;

  RunLog log;
  log.ts = scenario.ts;
  log.margin = scenario.controller.margin;
  log.uav_radius = scenario.controller.uav_radius;
  log.goal = scenario.goal;
  log.keep_clouds = opts.keep_clouds;

  dynamics::UavState x = scenario.start;
  const int steps = scenario.num_steps();
  for (int k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * scenario.ts;
    StepRecord rec;
    rec.step = k;
    rec.t = t;
    rec.state = x;
    rec.truth = world::advance_world(scenario.obstacles, t);
    rec.clearances = clearances(x.p, rec.truth, scenario.controller);

    auto [cloud, clusters] = predictor.observe(x.p, rec.truth, rng, k);
    rec.predictions = predictor.predict(k, horizon);

    std::vector<mpc::TrackPrediction> tracks;
    tracks.reserve(rec.predictions.size());
    for (const auto& p : rec.predictions) tracks.push_back({p.track_id, p.positions, p.radius});
    const auto out = controller.control_step(model, x, scenario.goal, tracks);
    rec.command = out.command.u;
    rec.diagnostics = out.diagnostics;
    if (opts.keep_clouds) {
      rec.cloud_labels.assign(cloud.points.size(), -1);
      for (std::size_t c = 0; c < clusters.size(); ++c) {
        for (int idx : clusters[c].members) {
          rec.cloud_labels[static_cast<std::size_t>(idx)] = static_cast<int>(c);
        }
      }
      rec.cloud = std::move(cloud);
    }
    log.steps.push_back(std::move(rec));

    x = dynamics::step(model, x, out.command);
    if ((x.p - scenario.goal).norm() <= scenario.goal_tolerance) {
      log.goal_reached = true;
      log.goal_time = t + scenario.ts;
      break;
    }
  }
  log.final_state = x;
  log.fits = predictor.fits();
  return log;
}

struct PredictionMetrics {
  double rmse = 0.0;
  double mae = 0.0;
  double max_err = 0.0;
  int samples = 0;
};

[[nodiscard]] inline PredictionMetrics compute_metrics(const std::vector<double>& errors) {
  PredictionMetrics m;
  m.samples = static_cast<int>(errors.size());
  if (errors.empty()) return m;
  double sq = 0.0;
  double abs_sum = 0.0;
  for (double e : errors) {
    sq += e * e;
    abs_sum += std::abs(e);
    m.max_err = std::max(m.max_err, std::abs(e));
  }
  m.rmse = std::sqrt(sq / static_cast<double>(errors.size()));
  m.mae = abs_sum / static_cast<double>(errors.size());
  return m;
}

struct PredictionSample {
  double t = 0.0;
  int track_id = 0;
  int mu = 0;
  Vec3 predicted = Vec3::Zero();
  Vec3 truth = Vec3::Zero();
};

struct PredictionReport {
  PredictionMetrics metrics;
  bool insufficient_history = false;
  int evaluations = 0;  // refits that contributed
  std::vector<PredictionSample> samples;
  std::vector<FitRecord> fits;
};

/// Open-loop prediction study: the vehicle hovers at the scenario start and
/// only the perception / tracking / Koopman chain runs. At each refit whose
/// buffer holds the requested history length, predictions μ = 1..L
/// (L = lookahead / Ts) are scored against the true center of the obstacle
/// nearest to the track.
[[nodiscard]] inline PredictionReport evaluate_prediction(const Scenario& scenario,
                                                          koopman::LiftingKind lifting,
                                                          int history_length, double lookahead) {
  world::validate(scenario);
  if (scenario.obstacles.empty()) throw ParameterError("evaluate_prediction: no obstacles");
  if (!(lookahead > 0.0)) throw ParameterError("evaluate_prediction: lookahead must be > 0");
  const int steps_ahead = std::max(1, static_cast<int>(std::lround(lookahead / scenario.ts)));
  const int want = std::clamp(history_length, tracking::kMinFitHistory, tracking::kHistoryCapacity);

  std::mt19937_64 rng(scenario.seed);
  ObstaclePredictor predictor(scenario.sensor, scenario.tracker, lifting, want,
                              scenario.fit_pinv_cutoff);
  const Vec3 uav = scenario.start.p;
  const int steps = scenario.num_steps();
  const int spacing = scenario.tracker.spacing_ticks();

  PredictionReport report;
  std::vector<double> errors;
  for (int k = 0; k + steps_ahead < steps; ++k) {
    const double t = static_cast<double>(k) * scenario.ts;
    const auto truth = world::advance_world(scenario.obstacles, t);
    predictor.observe(uav, truth, rng, k);
    if (k % spacing != 0) continue;
    for (const auto& track : predictor.tracks().tracks) {
      if (static_cast<int>(track.history.size()) < want) continue;
      if (!predictor.models().contains(track.id)) continue;
      const auto state = tracking::embed_smoothed(track, scenario.tracker, k);
      if (!state) continue;
      const auto& model = predictor.models().at(track.id);
      const auto predicted = koopman::predict(model, *state, steps_ahead);
      // Nearest true obstacle at the time of prediction.
      std::size_t nearest = 0;
      double best = kInf;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        const double dist = (truth[i].center - track.last_centroid).norm();
        if (dist < best) {
          best = dist;
          nearest = i;
        }
      }
      const auto& motion = scenario.obstacles[nearest].motion;
      for (int mu = 1; mu <= steps_ahead; ++mu) {
        const Vec3 actual = world::obstacle_position(motion, t + mu * scenario.ts);
        const Vec3& guess = predicted[static_cast<std::size_t>(mu - 1)];
        errors.push_back((guess - actual).norm());
        report.samples.push_back({t, track.id, mu, guess, actual});
      }
      ++report.evaluations;
    }
  }
  report.metrics = compute_metrics(errors);
  report.insufficient_history = report.evaluations == 0;
  report.fits = predictor.fits();
  return report;
}

struct TimingStats {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double max_ms = 0.0;
  int repetitions = 0;
};

[[nodiscard]] inline TimingStats timing_stats(std::vector<double> samples_ms) {
  TimingStats s;
  s.repetitions = static_cast<int>(samples_ms.size());
  if (samples_ms.empty()) return s;
  std::sort(samples_ms.begin(), samples_ms.end());
  double sum = 0.0;
  for (double v : samples_ms) sum += v;
  s.mean_ms = sum / static_cast<double>(samples_ms.size());
  auto pct = [&](double p) {
    const auto idx = static_cast<std::size_t>(
        std::ceil(p * static_cast<double>(samples_ms.size())) - 1.0);
    return samples_ms[std::min(idx, samples_ms.size() - 1)];
  };
  s.p50_ms = pct(0.5);
  s.p95_ms = pct(0.95);
  s.max_ms = samples_ms.back();
  return s;
}

struct BenchReport {
  TimingStats koopman;  // fit + H-step prediction for one track
  TimingStats mpc;      // build + solve with all scenario obstacles
  int obstacles = 0;
  int horizon = 0;
  int history_length = 0;
};

/// Noise-free delay-embedded history of one obstacle sampled every Tκ,
/// ending at time `t_end`.
[[nodiscard]] inline std::vector<tracking::EmbeddedState> truth_history(
    const world::MotionSpec& motion, const tracking::TrackerConfig& cfg, int count, double t_end) {
  std::vector<tracking::EmbeddedState> history;
  for (int j = count - 1; j >= 0; --j) {
    const double t = t_end - j * cfg.t_kappa;
    tracking::EmbeddedState s;
    s.tick = static_cast<Tick>(std::lround(t / cfg.ts));
    for (int b = 0; b < 3; ++b) {
      s.stacked.segment<3>(3 * b) = world::obstacle_position(motion, std::max(0.0, t - b * cfg.t_theta));
    }
    history.push_back(s);
  }
  return history;
}

inline constexpr int kBenchWarmup = 3;

[[nodiscard]] inline BenchReport bench(const Scenario& scenario, int repetitions) {
  world::validate(scenario);
  if (repetitions < 10) throw ParameterError("bench: repetitions must be >= 10");
  BenchReport report;
  report.horizon = scenario.controller.horizon;
  report.history_length = scenario.history_length;
  report.obstacles = static_cast<int>(scenario.obstacles.size());

  // Koopman fit + predict on a sensed-quality history of the first obstacle
  // (or a default circular mover when the scenario has none).
  world::MotionSpec motion;
  motion.kind = world::MotionKind::kCircular;
  motion.amplitude = 5.0;
  motion.rate = 0.5;
  motion.altitude = 2.0;
  if (!scenario.obstacles.empty()) motion = scenario.obstacles.front().motion;
  const double t_end = scenario.tracker.t_kappa * (scenario.history_length + 2);
  auto history = truth_history(motion, scenario.tracker, scenario.history_length, t_end);
  std::mt19937_64 rng(scenario.seed);
  std::normal_distribution<double> noise(0.0, std::max(scenario.sensor.noise_sigma, 1e-6));
  for (auto& h : history) {
    for (int i = 0; i < 9; ++i) h.stacked[i] += noise(rng);
  }
  const koopman::FitConfig fit_cfg{scenario.lifting, scenario.tracker.t_theta, scenario.ts,
                                   scenario.tracker.t_kappa, scenario.fit_pinv_cutoff};
  std::vector<double> koop_ms;
  double sink = 0.0;
  // A few untimed passes first so allocation and cache warm-up stay out of
  // the statistics.
  for (int r = -kBenchWarmup; r < repetitions; ++r) {
    const auto start = std::chrono::steady_clock::now();
    const auto model = koopman::fit_operator(history, fit_cfg);
    const auto pred = koopman::predict(model, history.back(), scenario.controller.horizon);
    const auto stop = std::chrono::steady_clock::now();
    sink += pred.back().x();
    if (r < 0) continue;
    koop_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  report.koopman = timing_stats(koop_ms);

  // MPC build + solve against truth-propagated predictions at t = 0.
  const auto lti = dynamics::discretize(scenario.kvel, scenario.ts);
  std::vector<mpc::TrackPrediction> tracks;
  for (const auto& o : scenario.obstacles) {
    mpc::TrackPrediction tp;
    tp.id = o.id;
    tp.radius = o.radius;
    for (int mu = 1; mu <= scenario.controller.horizon; ++mu) {
      tp.positions.push_back(world::obstacle_position(o.motion, mu * scenario.ts));
    }
    tracks.push_back(std::move(tp));
  }
  std::vector<double> mpc_ms;
  for (int r = -kBenchWarmup; r < repetitions; ++r) {
    mpc::MpcController controller(scenario.controller);
    const auto start = std::chrono::steady_clock::now();
    const auto out = controller.control_step(lti, scenario.start, scenario.goal, tracks);
    const auto stop = std::chrono::steady_clock::now();
    sink += out.command.u.x();
    if (r < 0) continue;
    mpc_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  report.mpc = timing_stats(mpc_ms);
  if (!std::isfinite(sink)) throw DataError("bench: non-finite result");
  return report;
}

}  // namespace koopnav::sim
