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

// koopnav command-line front end.
//
//   koopnav run <scenario> [--out DIR] [--seed N] [--clouds]
//   koopnav predict <scenario> --lifting {p|pv|pva} --history N --lookahead S
//   koopnav bench <scenario> --reps N
//
// Exit status: 0 success, 2 invalid scenario, 3 runtime failure.

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "koopnav/report.hpp"
#include "koopnav/scenario.hpp"
#include "koopnav/sim.hpp"

namespace {

constexpr int kExitScenario = 2;
constexpr int kExitRuntime = 3;

namespace fs = std::filesystem;
using namespace koopnav;

world::Scenario load(const std::string& path, std::optional<std::uint64_t> seed) {
  auto scenario = world::load_scenario(path);
  if (seed) scenario.seed = *seed;
  return scenario;
}

int cmd_run(const std::string& path, const std::string& out_dir,
            std::optional<std::uint64_t> seed, bool clouds) {
  const auto scenario = load(path, seed);
  sim::RunOptions opts;
  opts.keep_clouds = clouds;
  const auto log = sim::run_closed_loop(scenario, opts);
  const auto files = report::write_run(log, out_dir);

  int braking = 0;
  double solve_ms = 0.0;
  for (const auto& s : log.steps) {
    braking += s.diagnostics.braking ? 1 : 0;
    solve_ms += s.diagnostics.solve_ms;
  }
  std::cout << std::setprecision(4);
  std::cout << "scenario      " << scenario.name << " (seed " << scenario.seed << ")\n";
  std::cout << "steps         " << log.steps.size() << '\n';
  std::cout << "goal reached  " << (log.goal_reached ? "yes" : "no");
  if (log.goal_reached) std::cout << " at t = " << log.goal_time << " s";
  std::cout << '\n';
  if (!scenario.obstacles.empty()) {
    std::cout << "min clearance " << log.min_clearance_margin() << " m above required\n";
  }
  std::cout << "mean solve    "
            << (log.steps.empty() ? 0.0 : solve_ms / static_cast<double>(log.steps.size()))
            << " ms, braking steps " << braking << '\n';
  for (const auto& f : files) std::cout << "wrote         " << f.string() << '\n';
  return 0;
}

int cmd_predict(const std::string& path, const std::string& lifting_name, int history,
                double lookahead, const std::string& out_dir, std::optional<std::uint64_t> seed) {
  const auto scenario = load(path, seed);
  koopman::LiftingKind lifting;
  try {
    lifting = koopman::lifting_from_string(lifting_name);
  } catch (const ParameterError& e) {
    throw ScenarioError(e.what());
  }
  if (history < tracking::kMinFitHistory || history > tracking::kHistoryCapacity) {
    throw ScenarioError("--history must lie in [5, 25]");
  }
  const auto rep = sim::evaluate_prediction(scenario, lifting, history, lookahead);
  report::ensure_directory(out_dir);
  const fs::path dir(out_dir);
  const auto tag = std::string(koopman::to_string(lifting));
  report::write_metrics_csv(rep, tag, history, lookahead, dir / "metrics.csv");
  report::write_prediction_samples_csv(rep, dir / "prediction_samples.csv");
  report::write_fits_csv(rep.fits, scenario.ts, dir / "fits.csv");
  report::plot_prediction_overlay(rep.samples, dir / "predictions.svg",
                                  "Prediction " + tag + ", O = " + std::to_string(history));

  std::cout << "lifting,history,lookahead,rmse,mae,max_err,samples,insufficient_history\n"
            << std::setprecision(6) << tag << ',' << history << ',' << lookahead << ','
            << rep.metrics.rmse << ',' << rep.metrics.mae << ',' << rep.metrics.max_err << ','
            << rep.metrics.samples << ',' << (rep.insufficient_history ? 1 : 0) << '\n';
  return 0;
}

int cmd_bench(const std::string& path, int reps, const std::string& out_dir,
              std::optional<std::uint64_t> seed) {
  const auto scenario = load(path, seed);
  const auto rep = sim::bench(scenario, reps);
  report::ensure_directory(out_dir);
  report::write_bench_csv(rep, fs::path(out_dir) / "bench.csv");
  std::cout << "stage,repetitions,mean_ms,p50_ms,p95_ms,max_ms\n" << std::setprecision(5);
  auto row = [](const char* name, const sim::TimingStats& s) {
    std::cout << name << ',' << s.repetitions << ',' << s.mean_ms << ',' << s.p50_ms << ','
              << s.p95_ms << ',' << s.max_ms << '\n';
  };
  row("koopman_fit_predict", rep.koopman);
  row("mpc_build_solve", rep.mpc);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman obstacle prediction with MPC navigation"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_dir = "koopnav_out";
  std::optional<std::uint64_t> seed;
  bool clouds = false;
  std::string lifting = "pva";
  int history = 10;
  double lookahead = 1.0;
  int reps = 100;

  auto* run = app.add_subcommand("run", "Closed-loop simulation with CSV and SVG output");
  run->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_flag("--clouds", clouds, "Also write the filtered point clouds");

  auto* predict = app.add_subcommand("predict", "Open-loop obstacle prediction study");
  predict->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  predict->add_option("--lifting", lifting, "Observable set: p, pv or pva")
      ->required()
      ->check(CLI::IsMember({"p", "pv", "pva"}));
  predict->add_option("--history", history, "History length O")->required();
  predict->add_option("--lookahead", lookahead, "Lookahead in seconds")->required();
  predict->add_option("--out", out_dir, "Output directory")->capture_default_str();
  predict->add_option("--seed", seed, "Override the scenario seed");

  auto* bench = app.add_subcommand("bench", "Koopman and MPC timing");
  bench->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  bench->add_option("--reps", reps, "Repetitions (>= 10)")->required();
  bench->add_option("--out", out_dir, "Output directory")->capture_default_str();
  bench->add_option("--seed", seed, "Override the scenario seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(scenario_path, out_dir, seed, clouds);
    if (predict->parsed()) {
      return cmd_predict(scenario_path, lifting, history, lookahead, out_dir, seed);
    }
    if (bench->parsed()) return cmd_bench(scenario_path, reps, out_dir, seed);
  } catch (const ScenarioError& e) {
    std::cerr << "koopnav: " << e.what() << '\n';
    return kExitScenario;
  } catch (const std::exception& e) {
    std::cerr << "koopnav: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
