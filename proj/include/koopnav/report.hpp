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

// CSV and SVG artifacts for runs, prediction studies and benchmarks.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "koopnav/common.hpp"
#include "koopnav/sim.hpp"

namespace koopnav::report {

namespace fs = std::filesystem;

inline std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << std::setprecision(10);
  return out;
}

inline void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
}

// ---------------------------------------------------------------------------
// CSV

/// One row per control step.
inline void write_run_csv(const sim::RunLog& log, const fs::path& path) {
  auto out = open_output(path);
  out << "t,x,y,z,vx,vy,vz,ux,uy,uz,goal_dist\n";
  for (const auto& s : log.steps) {
    const auto& p = s.state.p;
    const auto& v = s.state.v;
    out << s.t << ',' << p.x() << ',' << p.y() << ',' << p.z() << ',' << v.x() << ',' << v.y()
        << ',' << v.z() << ',' << s.command.x() << ',' << s.command.y() << ',' << s.command.z()
        << ',' << (p - log.goal).norm() << '\n';
  }
}

inline void write_diagnostics_csv(const sim::RunLog& log, const fs::path& path) {
  auto out = open_output(path);
  out << "t,solve_ms,status,iterations,max_slack,min_clearance,u0x,u0y,u0z,braking\n";
  for (const auto& s : log.steps) {
    const auto& d = s.diagnostics;
    const double clearance = std::isfinite(d.min_clearance) ? d.min_clearance : -1.0;
    out << s.t << ',' << d.solve_ms << ',' << qp::to_string(d.status) << ',' << d.iterations << ','
        << d.max_slack << ',' << clearance << ',' << s.command.x() << ',' << s.command.y() << ','
        << s.command.z() << ',' << (d.braking ? 1 : 0) << '\n';
  }
}

/// True obstacle poses with realized and required separation.
inline void write_obstacles_csv(const sim::RunLog& log, const fs::path& path) {
  auto out = open_output(path);
  out << "t,id,x,y,z,radius,distance,required\n";
  for (const auto& s : log.steps) {
    for (std::size_t i = 0; i < s.truth.size(); ++i) {
      const auto& o = s.truth[i];
      const auto& c = s.clearances[i];
      out << s.t << ',' << o.id << ',' << o.center.x() << ',' << o.center.y() << ','
          << o.center.z() << ',' << o.radius << ',' << c.distance << ',' << c.required << '\n';
    }
  }
}

inline void write_tracks_csv(const sim::RunLog& log, const fs::path& path) {
  auto out = open_output(path);
  out << "t,id,x,y,z,radius,from_model\n";
  for (const auto& s : log.steps) {
    for (const auto& p : s.predictions) {
      out << s.t << ',' << p.track_id << ',' << p.centroid.x() << ',' << p.centroid.y() << ','
          << p.centroid.z() << ',' << p.radius << ',' << (p.from_model ? 1 : 0) << '\n';
    }
  }
}

inline void write_predictions_csv(const sim::RunLog& log, const fs::path& path) {
  auto out = open_output(path);
  out << "t,track_id,mu,x,y,z\n";
  for (const auto& s : log.steps) {
    for (const auto& p : s.predictions) {
      for (std::size_t mu = 0; mu < p.positions.size(); ++mu) {
        const auto& q = p.positions[mu];
        out << s.t << ',' << p.track_id << ',' << mu + 1 << ',' << q.x() << ',' << q.y() << ','
            << q.z() << '\n';
      }
    }
  }
}

inline void write_fits_csv(const std::vector<sim::FitRecord>& fits, double ts,
                           const fs::path& path) {
  auto out = open_output(path);
  out << "t,track_id,history,power_path,eigvec_condition,reconstruction_error,rescaling_error\n";
  for (const auto& f : fits) {
    out << static_cast<double>(f.tick) * ts << ',' << f.track_id << ',' << f.history_length << ','
        << (f.power.path == koopman::PowerPath::kEigen ? "eigen" : "blend") << ','
        << f.power.eigvec_condition << ',' << f.power.reconstruction_error << ','
        << f.rescaling_error << '\n';
  }
}

/// Filtered point clouds with cluster labels (-1 for unclustered points).
inline void write_clouds_csv(const sim::RunLog& log, const fs::path& path) {
  auto out = open_output(path);
  out << "t,x,y,z,cluster_id\n";
  for (const auto& s : log.steps) {
    for (std::size_t i = 0; i < s.cloud.points.size(); ++i) {
      const auto& q = s.cloud.points[i];
      const int label = i < s.cloud_labels.size() ? s.cloud_labels[i] : -1;
      out << s.t << ',' << q.x() << ',' << q.y() << ',' << q.z() << ',' << label << '\n';
    }
  }
}

inline void write_prediction_samples_csv(const sim::PredictionReport& rep, const fs::path& path) {
  auto out = open_output(path);
  out << "t,track_id,mu,x,y,z,true_x,true_y,true_z,error\n";
  for (const auto& s : rep.samples) {
    out << s.t << ',' << s.track_id << ',' << s.mu << ',' << s.predicted.x() << ','
        << s.predicted.y() << ',' << s.predicted.z() << ',' << s.truth.x() << ','
        << s.truth.y() << ',' << s.truth.z() << ',' << (s.predicted - s.truth).norm() << '\n';
  }
}

inline void write_metrics_csv(const sim::PredictionReport& rep, std::string_view lifting,
                              int history, double lookahead, const fs::path& path) {
  auto out = open_output(path);
  out << "lifting,history,lookahead,rmse,mae,max_err,samples,evaluations,insufficient_history\n";
  out << lifting << ',' << history << ',' << lookahead << ',' << rep.metrics.rmse << ','
      << rep.metrics.mae << ',' << rep.metrics.max_err << ',' << rep.metrics.samples << ','
      << rep.evaluations << ',' << (rep.insufficient_history ? 1 : 0) << '\n';
}

inline void write_bench_csv(const sim::BenchReport& rep, const fs::path& path) {
  auto out = open_output(path);
  out << "stage,repetitions,mean_ms,p50_ms,p95_ms,max_ms\n";
  auto row = [&](const char* name, const sim::TimingStats& s) {
    out << name << ',' << s.repetitions << ',' << s.mean_ms << ',' << s.p50_ms << ',' << s.p95_ms
        << ',' << s.max_ms << '\n';
  };
  row("koopman_fit_predict", rep.koopman);
  row("mpc_build_solve", rep.mpc);
}

// ---------------------------------------------------------------------------
// SVG

/// Minimal line-chart canvas mapping data coordinates onto a fixed-size
/// image with a margin for axis labels.
class SvgCanvas {
 public:
  SvgCanvas(double x_min, double x_max, double y_min, double y_max, bool equal_aspect = false)
      : x0_(x_min), x1_(x_max), y0_(y_min), y1_(y_max) {
    if (!(x1_ > x0_)) x1_ = x0_ + 1.0;
    if (!(y1_ > y0_)) y1_ = y0_ + 1.0;
    if (equal_aspect) {
      const double sx = (x1_ - x0_) / kPlotW;
      const double sy = (y1_ - y0_) / kPlotH;
      const double s = std::max(sx, sy);
      const double cx = 0.5 * (x0_ + x1_);
      const double cy = 0.5 * (y0_ + y1_);
      x0_ = cx - 0.5 * s * kPlotW;
      x1_ = cx + 0.5 * s * kPlotW;
      y0_ = cy - 0.5 * s * kPlotH;
      y1_ = cy + 0.5 * s * kPlotH;
    }
  }

  [[nodiscard]] double px(double x) const { return kMargin + (x - x0_) / (x1_ - x0_) * kPlotW; }
  [[nodiscard]] double py(double y) const { return kMargin + (y1_ - y) / (y1_ - y0_) * kPlotH; }

  void polyline(const std::vector<std::array<double, 2>>& pts, const std::string& color,
                double width = 1.5, const std::string& dash = "") {
    if (pts.size() < 2) return;
    body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width << '"';
    if (!dash.empty()) body_ << " stroke-dasharray=\"" << dash << '"';
    body_ << " points=\"";
    for (const auto& p : pts) body_ << px(p[0]) << ',' << py(p[1]) << ' ';
    body_ << "\"/>\n";
  }

  void circle(double x, double y, double r_px, const std::string& color, double opacity = 1.0) {
    body_ << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"" << r_px
          << "\" fill=\"" << color << "\" fill-opacity=\"" << opacity << "\"/>\n";
  }

  void text(double x_px, double y_px, const std::string& s, int size = 12,
            const std::string& anchor = "start") {
    body_ << "<text x=\"" << x_px << "\" y=\"" << y_px << "\" font-size=\"" << size
          << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << s << "</text>\n";
  }

  void legend(const std::string& label, const std::string& color) {
    const double y = kMargin + 14.0 * static_cast<double>(legend_rows_++) + 10.0;
    const double x = kMargin + kPlotW - 150.0;
    body_ << "<line x1=\"" << x << "\" y1=\"" << y - 4 << "\" x2=\"" << x + 18 << "\" y2=\""
          << y - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    text(x + 24, y, label, 11);
  }

  void write(const fs::path& path, const std::string& title, const std::string& x_label,
             const std::string& y_label) const {
    auto out = open_output(path);
    out << std::setprecision(6);
    const double w = kPlotW + 2 * kMargin;
    const double h = kPlotH + 2 * kMargin;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kPlotW
        << "\" height=\"" << kPlotH << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double fx = x0_ + (x1_ - x0_) * i / 4.0;
      const double fy = y0_ + (y1_ - y0_) * i / 4.0;
      out << "<text x=\"" << px(fx) << "\" y=\"" << kMargin + kPlotH + 16
          << "\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"middle\">"
          << tick_label(fx) << "</text>\n";
      out << "<text x=\"" << kMargin - 6 << "\" y=\"" << py(fy) + 4
          << "\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"end\">"
          << tick_label(fy) << "</text>\n";
    }
    out << "<text x=\"" << w / 2 << "\" y=\"" << kMargin - 20
        << "\" font-size=\"15\" font-family=\"sans-serif\" text-anchor=\"middle\">" << title
        << "</text>\n";
    out << "<text x=\"" << w / 2 << "\" y=\"" << h - 14
        << "\" font-size=\"12\" font-family=\"sans-serif\" text-anchor=\"middle\">" << x_label
        << "</text>\n";
    out << "<text x=\"16\" y=\"" << h / 2 << "\" font-size=\"12\" font-family=\"sans-serif\" "
        << "text-anchor=\"middle\" transform=\"rotate(-90 16 " << h / 2 << ")\">" << y_label
        << "</text>\n";
    out << body_.str() << "</svg>\n";
  }

 private:
  static constexpr double kPlotW = 640.0;
  static constexpr double kPlotH = 420.0;
  static constexpr double kMargin = 60.0;

  static std::string tick_label(double v) {
    std::ostringstream os;
    os << std::setprecision(3) << (std::abs(v) < 1e-12 ? 0.0 : v);
    return os.str();
  }

  double x0_, x1_, y0_, y1_;
  std::ostringstream body_;
  int legend_rows_ = 0;
};

inline const std::string& palette(std::size_t i) {
  static const std::vector<std::string> colors = {"#d62728", "#2ca02c", "#9467bd",
                                                  "#ff7f0e", "#8c564b", "#e377c2"};
  return colors[i % colors.size()];
}

/// Top view (x-y) of the UAV path and the true obstacle paths.
inline void plot_trajectory(const sim::RunLog& log, const fs::path& path) {
  std::vector<std::array<double, 2>> uav;
  std::map<int, std::vector<std::array<double, 2>>> obstacles;
  double x0 = log.goal.x(), x1 = log.goal.x(), y0 = log.goal.y(), y1 = log.goal.y();
  auto grow = [&](double x, double y) {
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  };
  for (const auto& s : log.steps) {
    uav.push_back({s.state.p.x(), s.state.p.y()});
    grow(s.state.p.x(), s.state.p.y());
    for (const auto& o : s.truth) {
      obstacles[o.id].push_back({o.center.x(), o.center.y()});
      grow(o.center.x(), o.center.y());
    }
  }
  uav.push_back({log.final_state.p.x(), log.final_state.p.y()});
  const double pad = 0.05 * std::max(x1 - x0, y1 - y0) + 0.5;
  SvgCanvas canvas(x0 - pad, x1 + pad, y0 - pad, y1 + pad, true);
  std::size_t k = 0;
  for (const auto& [id, pts] : obstacles) {
    canvas.polyline(pts, palette(k), 1.0, "4 3");
    canvas.legend("obstacle " + std::to_string(id), palette(k));
    ++k;
  }
  canvas.polyline(uav, "#1f77b4", 2.0);
  canvas.legend("UAV", "#1f77b4");
  if (!uav.empty()) canvas.circle(uav.front()[0], uav.front()[1], 4, "#1f77b4");
  canvas.circle(log.goal.x(), log.goal.y(), 5, "black");
  canvas.write(path, "Trajectory (top view)", "x [m]", "y [m]");
}

/// Realized distance to each obstacle against the required separation.
inline void plot_clearance(const sim::RunLog& log, const fs::path& path) {
  std::map<int, std::vector<std::array<double, 2>>> dist;
  std::map<int, double> required;
  double t1 = 0.0, y1 = 0.0;
  for (const auto& s : log.steps) {
    for (const auto& c : s.clearances) {
      dist[c.id].push_back({s.t, c.distance});
      required[c.id] = c.required;
      y1 = std::max({y1, c.distance, c.required});
    }
    t1 = std::max(t1, s.t);
  }
  if (dist.empty()) return;
  y1 = std::min(y1, 4.0 * std::max_element(required.begin(), required.end(),
                                            [](const auto& a, const auto& b) {
                                              return a.second < b.second;
                                            })->second);
  SvgCanvas canvas(0.0, std::max(t1, log.ts), 0.0, y1 * 1.05);
  std::size_t k = 0;
  for (const auto& [id, pts] : dist) {
    std::vector<std::array<double, 2>> clipped;
    for (const auto& p : pts) clipped.push_back({p[0], std::min(p[1], y1 * 1.05)});
    canvas.polyline(clipped, palette(k), 1.5);
    canvas.legend("obstacle " + std::to_string(id), palette(k));
    canvas.polyline({{0.0, required[id]}, {std::max(t1, log.ts), required[id]}}, palette(k), 1.0,
                    "6 4");
    ++k;
  }
  canvas.write(path, "Distance to obstacles", "t [s]", "distance [m]");
}

/// Predicted paths at refit instants over the true obstacle paths (top view).
inline void plot_prediction_overlay(const std::vector<sim::PredictionSample>& samples,
                                    const fs::path& path, const std::string& title) {
  if (samples.empty()) return;
  double x0 = kInf, x1 = -kInf, y0 = kInf, y1 = -kInf;
  for (const auto& s : samples) {
    for (const Vec3* q : {&s.predicted, &s.truth}) {
      x0 = std::min(x0, q->x());
      x1 = std::max(x1, q->x());
      y0 = std::min(y0, q->y());
      y1 = std::max(y1, q->y());
    }
  }
  const double pad = 0.05 * std::max(x1 - x0, y1 - y0) + 0.2;
  SvgCanvas canvas(x0 - pad, x1 + pad, y0 - pad, y1 + pad, true);
  std::map<std::pair<int, double>, std::vector<const sim::PredictionSample*>> runs;
  for (const auto& s : samples) runs[{s.track_id, s.t}].push_back(&s);
  std::vector<std::array<double, 2>> truth;
  for (const auto& [key, run] : runs) {
    std::vector<std::array<double, 2>> pred;
    for (const auto* s : run) {
      pred.push_back({s->predicted.x(), s->predicted.y()});
      truth.push_back({s->truth.x(), s->truth.y()});
    }
    canvas.polyline(pred, "#d62728", 1.5);
    if (!run.empty()) canvas.circle(run.front()->predicted.x(), run.front()->predicted.y(), 2, "#d62728");
  }
  for (const auto& p : truth) canvas.circle(p[0], p[1], 1.2, "#1f77b4", 0.6);
  canvas.legend("prediction", "#d62728");
  canvas.legend("truth", "#1f77b4");
  canvas.write(path, title, "x [m]", "y [m]");
}

/// Plot set for a closed-loop run: trajectory, clearance (when obstacles
/// exist) and the prediction overlay of the live tracks.
inline std::vector<fs::path> emit_plots(const sim::RunLog& log, const fs::path& dir) {
  if (log.steps.empty()) throw DataError("emit_plots: empty log");
  ensure_directory(dir);
  std::vector<fs::path> written;
  plot_trajectory(log, dir / "trajectory.svg");
  written.push_back(dir / "trajectory.svg");
  const bool has_obstacles =
      std::any_of(log.steps.begin(), log.steps.end(), [](const auto& s) { return !s.truth.empty(); });
  if (has_obstacles) {
    plot_clearance(log, dir / "clearance.svg");
    written.push_back(dir / "clearance.svg");
  }
  // Overlay: model predictions issued on refit ticks against later truth.
  std::vector<sim::PredictionSample> samples;
  const int spacing = std::max(1, static_cast<int>(std::lround(1.0 / log.ts)));
  for (std::size_t k = 0; k < log.steps.size(); k += static_cast<std::size_t>(spacing)) {
    const auto& s = log.steps[k];
    for (const auto& p : s.predictions) {
      if (!p.from_model) continue;
      // Nearest true obstacle at issue time.
      const world::ObstaclePose* nearest = nullptr;
      double best = kInf;
      for (const auto& o : s.truth) {
        const double d = (o.center - p.centroid).norm();
        if (d < best) {
          best = d;
          nearest = &o;
        }
      }
      if (nearest == nullptr) continue;
      for (std::size_t mu = 0; mu < p.positions.size(); ++mu) {
        const std::size_t later = k + mu + 1;
        if (later >= log.steps.size()) break;
        for (const auto& o : log.steps[later].truth) {
          if (o.id == nearest->id) {
            samples.push_back({s.t, p.track_id, static_cast<int>(mu + 1), p.positions[mu], o.center});
          }
        }
      }
    }
  }
  if (!samples.empty()) {
    plot_prediction_overlay(samples, dir / "predictions.svg", "Obstacle predictions");
    written.push_back(dir / "predictions.svg");
  }
  return written;
}

/// Raw CSVs plus plots for a closed-loop run.
inline std::vector<fs::path> write_run(const sim::RunLog& log, const fs::path& dir) {
  ensure_directory(dir);
  std::vector<fs::path> written = {dir / "run.csv", dir / "diagnostics.csv",
                                   dir / "obstacles.csv", dir / "tracks.csv",
                                   dir / "predictions.csv", dir / "fits.csv"};
  write_run_csv(log, written[0]);
  write_diagnostics_csv(log, written[1]);
  write_obstacles_csv(log, written[2]);
  write_tracks_csv(log, written[3]);
  write_predictions_csv(log, written[4]);
  write_fits_csv(log.fits, log.ts, written[5]);
  if (log.keep_clouds) {
    write_clouds_csv(log, dir / "clouds.csv");
    written.push_back(dir / "clouds.csv");
  }
  if (!log.steps.empty()) {
    for (auto& p : emit_plots(log, dir)) written.push_back(std::move(p));
  }
  return written;
}

}  // namespace koopnav::report
