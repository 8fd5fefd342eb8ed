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

#include <random>

#include "koopnav/mpc.hpp"

namespace koopnav::mpc {
namespace {

const LtiModel kModel = dynamics::discretize(1.8, 0.2);

UavState at(const Vec3& p) { return UavState{p, Vec3::Zero()}; }

TrackPrediction stationary(int id, const Vec3& p, double radius, int horizon) {
  return TrackPrediction{id, std::vector<Vec3>(static_cast<std::size_t>(horizon), p), radius};
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  Vec3 v(gauss(rng), gauss(rng), gauss(rng));
  return v.normalized();
}

TEST(PredictionMatrices, MatchIteratedStep) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> gauss;
  const int horizon = 12;
  const auto pm = prediction_matrices(kModel, horizon);
  for (int trial = 0; trial < 20; ++trial) {
    UavState x{Vec3(gauss(rng), gauss(rng), gauss(rng)), Vec3(gauss(rng), gauss(rng), gauss(rng))};
    VecX inputs(3 * horizon);
    for (int i = 0; i < inputs.size(); ++i) inputs[i] = gauss(rng);
    const VecX stacked = pm.phi * x.vector() + pm.gamma * inputs;
    for (int mu = 1; mu <= horizon; ++mu) {
      x = dynamics::step(kModel, x, VelocityCommand{inputs.segment<3>(3 * (mu - 1))});
      ASSERT_LE((stacked.segment<6>(6 * (mu - 1)) - x.vector()).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
  EXPECT_THROW((void)prediction_matrices(kModel, 0), ParameterError);
}

TEST(Polytope, UnitNormalsInOppositePairs) {
  const auto poly = Polytope::dodecahedron();
  for (int j = 0; j < 12; ++j) {
    EXPECT_NEAR(poly.normals[static_cast<std::size_t>(j)].norm(), 1.0, 1e-15);
  }
  for (int j = 0; j < 12; j += 2) {
    EXPECT_LE((poly.normals[static_cast<std::size_t>(j)] + poly.normals[static_cast<std::size_t>(j + 1)]).norm(), 1e-15);
  }
}

TEST(Polytope, ContainsSampledSphere) {
  std::mt19937_64 rng(10);
  const auto poly = Polytope::dodecahedron();
  const Vec3 p(1.0, -2.0, 3.0);
  const double radius = 0.7;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 y = p + radius * random_unit(rng);
    for (const auto& n : poly.normals) ASSERT_GE(radius - n.dot(y - p), -1e-9);
  }
}

TEST(SelectFace, AlignedDirection) {
  const auto poly = Polytope::dodecahedron();
  for (int j = 0; j < 12; ++j) {
    const Vec3 p(1.0, 1.0, 1.0);
    const auto f = select_face(poly, p + 5.0 * poly.normals[static_cast<std::size_t>(j)], p, 1.0);
    EXPECT_EQ(f.index, j);
    EXPECT_NEAR(f.signed_distance, 4.0, 1e-12);
    EXPECT_FALSE(f.degenerate);
  }
}

TEST(SelectFace, ExhaustiveArgmax) {
  std::mt19937_64 rng(1000);
  const auto poly = Polytope::dodecahedron();
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec3 p(0.3, -0.2, 2.0);
    const Vec3 uav = p + 3.0 * random_unit(rng);
    const auto f = select_face(poly, uav, p, 0.5);
    double best = -kInf;
    int arg = -1;
    for (int j = 0; j < 12; ++j) {
      const double rho = poly.normals[static_cast<std::size_t>(j)].dot(uav - p) - 0.5;
      if (rho > best) {
        best = rho;
        arg = j;
      }
    }
    ASSERT_EQ(f.index, arg);
    ASSERT_DOUBLE_EQ(f.signed_distance, best);
  }
}

TEST(SelectFace, CoincidentIsDegenerate) {
  const auto poly = Polytope::dodecahedron();
  const auto f = select_face(poly, Vec3(1, 2, 3), Vec3(1, 2, 3), 0.5);
  EXPECT_EQ(f.index, 0);
  EXPECT_TRUE(f.degenerate);
}

TEST(BuildQp, AtGoalCommandsNothing) {
  MpcConfig cfg;
  const Vec3 goal(1.0, 2.0, 3.0);
  const auto built = build_qp(kModel, at(goal), goal, {}, cfg);
  EXPECT_TRUE(built.avoidance.empty());
  const auto sol = qp::solve(built.problem, cfg.qp);
  EXPECT_EQ(sol.status, qp::QpStatus::kOptimal);
  EXPECT_LE(sol.z.cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_LE(built.problem.objective(sol.z), 1e-8);
}

TEST(BuildQp, OneStepAnalytic) {
  MpcConfig cfg;
  cfg.horizon = 1;
  const UavState x0{Vec3(0.0, 0.0, 2.0), Vec3(0.1, -0.05, 0.0)};
  const Vec3 free = (kModel.A * x0.vector()).head<3>();
  const Vec3 goal = free + Vec3(0.01, -0.005, 0.008);
  const auto built = build_qp(kModel, x0, goal, {}, cfg);
  const auto sol = qp::solve(built.problem, cfg.qp);
  ASSERT_EQ(sol.status, qp::QpStatus::kOptimal);
  // Unconstrained least squares on the position row: u = (r − A x0) / B_pos.
  const Vec3 analytic = (goal - free).cwiseQuotient(kModel.B.topRows<3>().diagonal());
  EXPECT_LE((built.first_input(sol.z) - analytic).cwiseAbs().maxCoeff(), 1e-6);
}

// Obstacle on the straight line to the goal, separation 1.0. Returns Σs.
double audit_blocking_obstacle(const MpcConfig& cfg) {
  const double radius = 0.3;
  const Vec3 obstacle(5.0, 0.0, 2.0);
  const auto x0 = at(Vec3(0.0, 0.0, 2.0));
  const auto built = build_qp(kModel, x0, Vec3(10.0, 0.0, 2.0),
                              {stationary(1, obstacle, radius, cfg.horizon)}, cfg);
  EXPECT_EQ(built.avoidance.size(), static_cast<std::size_t>(cfg.horizon));
  const auto sol = qp::solve(built.problem, cfg.qp);
  EXPECT_EQ(sol.status, qp::QpStatus::kOptimal);
  const auto ns = static_cast<Eigen::Index>(built.avoidance.size());
  const VecX slack = sol.z.tail(ns);
  for (std::size_t s = 0; s < built.avoidance.size(); ++s) {
    const auto& c = built.avoidance[s];
    EXPECT_DOUBLE_EQ(c.separation, 1.0);
    const Vec3 pos = built.predicted_state(sol.z, c.step).head<3>();
    EXPECT_GE(c.normal.dot(pos - c.obstacle), c.separation - slack[static_cast<Eigen::Index>(s)] - 1e-5);
    EXPECT_GE(slack[static_cast<Eigen::Index>(s)], -1e-6);
  }
  return slack.sum();
}

TEST(BuildQp, StationaryObstacleAudit) {
  MpcConfig cfg;
  cfg.margin = 0.3;
  cfg.uav_radius = 0.4;
  // The quadratic price alone leaves slack of order multiplier / (2 w_s).
  EXPECT_LE(audit_blocking_obstacle(cfg), 0.05);
  // A linear price above the multipliers makes the soft rows exact.
  cfg.slack_linear_weight = 1e3;
  EXPECT_LE(audit_blocking_obstacle(cfg), 1e-4);
}

TEST(BuildQp, CurrentSideIsFeasible) {
  std::mt19937_64 rng(3);
  MpcConfig cfg;
  const auto poly = Polytope::dodecahedron();
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 p(0.0, 0.0, 3.0);
    const double radius = 0.4;
    const auto x0 = at(p + (1.5 + 3.0 * std::uniform_real_distribution<double>()(rng)) * random_unit(rng));
    const auto built = build_qp(kModel, x0, Vec3(0.0, 0.0, 3.0), {stationary(1, p, radius, cfg.horizon)}, cfg, poly);
    for (const auto& c : built.avoidance) {
      const double rho = c.normal.dot(x0.p - c.obstacle) - radius;
      if (rho >= c.separation - radius) {
        EXPECT_GE(c.normal.dot(x0.p), c.offset - 1e-12);
      }
    }
  }
}

TEST(BuildQp, SlackInactiveWhenObstacleFarFromPath) {
  MpcConfig cfg;
  MpcController controller(cfg);
  const auto x0 = at(Vec3(0.0, 0.0, 2.0));
  const auto built = build_qp(kModel, x0, Vec3(6.0, 0.0, 2.0),
                              {stationary(1, Vec3(3.0, 8.0, 2.0), 0.5, cfg.horizon)}, cfg);
  const auto sol = qp::solve(built.problem, cfg.qp);
  ASSERT_EQ(sol.status, qp::QpStatus::kOptimal);
  const auto ns = static_cast<Eigen::Index>(built.avoidance.size());
  EXPECT_LE(sol.z.tail(ns).squaredNorm(), 1e-8);
}

TEST(BuildQp, RejectsBadInput) {
  MpcConfig cfg;
  EXPECT_THROW((void)build_qp(kModel, at(Vec3::Zero()), Vec3::Zero(), {TrackPrediction{1, {}, 0.5}}, cfg),
               ParameterError);
  cfg.horizon = 0;
  EXPECT_THROW((void)build_qp(kModel, at(Vec3::Zero()), Vec3::Zero(), {}, cfg), ParameterError);
  EXPECT_THROW(MpcController{cfg}, ParameterError);
}

TEST(ControlStep, RepeatedAtGoal) {
  MpcController controller;
  const Vec3 goal(2.0, 2.0, 2.0);
  for (int i = 0; i < 5; ++i) {
    const auto out = controller.control_step(kModel, at(goal), goal, {});
    EXPECT_LE(out.command.u.norm(), 1e-3);
    EXPECT_FALSE(out.diagnostics.braking);
  }
}

TEST(ControlStep, SpeedSaturatesOnLongLeg) {
  MpcController controller;
  UavState x = at(Vec3(0.0, 0.0, 2.0));
  const Vec3 goal(10.0, 0.0, 2.0);
  double peak = 0.0;
  for (int k = 0; k < 40; ++k) {
    const auto out = controller.control_step(kModel, x, goal, {});
    x = dynamics::step(kModel, x, out.command);
    peak = std::max(peak, x.v.norm());
  }
  EXPECT_GE(peak, 1.8);
  EXPECT_LE(peak, 2.0 + 1e-3);
  EXPECT_LE((x.p - goal).norm(), 0.2);
}

TEST(ControlStep, DiagnosticsReportClearance) {
  MpcController controller;
  const auto out = controller.control_step(kModel, at(Vec3(0.0, 0.0, 2.0)), Vec3(10.0, 0.0, 2.0),
                                           {stationary(4, Vec3(5.0, 0.0, 2.0), 0.3, 20)});
  EXPECT_EQ(out.diagnostics.status, qp::QpStatus::kOptimal);
  EXPECT_GE(out.diagnostics.min_clearance, -1e-4);
  EXPECT_GE(out.diagnostics.solve_ms, 0.0);
}

}  // namespace
}  // namespace koopnav::mpc
