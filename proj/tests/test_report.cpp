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


#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "koopnav/report.hpp"
#include "koopnav/scenario.hpp"
#include "test_support.hpp"

namespace koopnav::report {
namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("koopnav_report_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int line_count(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

world::Scenario short_circular() {
  auto s = world::load_scenario(testing::scenario_path("circular.json"));
  s.goal = Vec3(3.0, 0.0, 2.0);
  s.duration = 8.0;
  return s;
}

TEST(WriteRun, OneRowPerStep) {
  const auto log = sim::run_closed_loop(short_circular());
  const auto dir = scratch_dir("rows");
  (void)write_run(log, dir);
  EXPECT_EQ(line_count(dir / "run.csv"), static_cast<int>(log.steps.size()) + 1);
  EXPECT_EQ(line_count(dir / "diagnostics.csv"), static_cast<int>(log.steps.size()) + 1);
  EXPECT_TRUE(fs::exists(dir / "trajectory.svg"));
  EXPECT_TRUE(fs::exists(dir / "clearance.svg"));
  fs::remove_all(dir);
}

TEST(WriteRun, NoClearancePlotWithoutObstacles) {
  world::Scenario s;
  s.start.p = Vec3(0.0, 0.0, 2.0);
  s.goal = Vec3(2.0, 0.0, 2.0);
  s.duration = 10.0;
  const auto dir = scratch_dir("empty");
  (void)write_run(sim::run_closed_loop(s), dir);
  EXPECT_TRUE(fs::exists(dir / "trajectory.svg"));
  EXPECT_FALSE(fs::exists(dir / "clearance.svg"));
  fs::remove_all(dir);
}

TEST(WriteRun, BitIdenticalAcrossRuns) {
  const auto a = scratch_dir("a");
  const auto b = scratch_dir("b");
  sim::RunOptions opts;
  opts.keep_clouds = true;
  (void)write_run(sim::run_closed_loop(short_circular(), opts), a);
  (void)write_run(sim::run_closed_loop(short_circular(), opts), b);
  for (const char* name : {"run.csv", "obstacles.csv", "tracks.csv", "predictions.csv", "fits.csv",
                           "clouds.csv"}) {
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(WriteRun, UnwritableDirectoryIsIoError) {
  const auto log = sim::run_closed_loop(short_circular());
  EXPECT_THROW((void)write_run(log, "/dev/null/koopnav"), IoError);
}

TEST(EmitPlots, EmptyLogRejected) {
  EXPECT_THROW((void)emit_plots(sim::RunLog{}, scratch_dir("none")), DataError);
}

TEST(Metrics, CsvHasHeaderAndRow) {
  const auto rep = sim::evaluate_prediction(world::load_scenario(testing::scenario_path("circular.json")),
                                            koopman::LiftingKind::kPositionVelocity, 10, 1.0);
  const auto dir = scratch_dir("metrics");
  ensure_directory(dir);
  write_metrics_csv(rep, "psi_pv", 10, 1.0, dir / "metrics.csv");
  EXPECT_EQ(line_count(dir / "metrics.csv"), 2);
  write_prediction_samples_csv(rep, dir / "samples.csv");
  EXPECT_EQ(line_count(dir / "samples.csv"), rep.metrics.samples + 1);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace koopnav::report
