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

// Receding-horizon position controller with linearized keep-out constraints.
//
// States are eliminated through the prediction matrices, leaving the input
// sequence u_0..u_{H-1} and one non-negative slack per avoidance row as
// decision variables:
//
//   z = [u_0, ..., u_{H-1}, s_1, ..., s_S]
//
// Each predicted obstacle position is wrapped in a regular dodecahedron
// whose faces are tangent to the obstacle sphere. For every obstacle and
// step, the face whose plane is farthest from the vehicle's current position
// is chosen and the predicted vehicle position is kept on its outer side,
// inflated to the separation distance d = R_uav + R_obs + margin. Slack is
// priced quadratically, with an optional linear term.

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <optional>
#include <vector>

#include "koopnav/common.hpp"
#include "koopnav/lin_dynamics.hpp"
#include "koopnav/qp_solver.hpp"

namespace koopnav::mpc {

using dynamics::LtiModel;
using dynamics::UavState;
using dynamics::VelocityCommand;

struct MpcConfig {
  int horizon = 20;
  Mat3 Q = Mat3::Identity();
  Vec3 v_max = Vec3::Constant(2.0);
  Vec3 u_max = Vec3::Constant(3.0);
  double uav_radius = 0.4;
  double margin = 0.3;
  double slack_weight = 1e4;
  // Optional linear slack price. Above the largest avoidance multiplier it
  // makes the soft constraint exact, at the cost of slower ADMM convergence
  // on the degenerate s = 0 bounds.
  double slack_linear_weight = 0.0;
  bool ground_avoidance = true;
  double ground_z_min = 0.5;
  bool warm_start = true;
  qp::QpSettings qp;
};

inline void validate(const MpcConfig& cfg) {
  if (cfg.horizon < 1) throw ParameterError("mpc: horizon must be >= 1");
  if ((cfg.Q - cfg.Q.transpose()).norm() > 1e-12 * std::max(1.0, cfg.Q.norm())) {
    throw ParameterError("mpc: Q must be symmetric");
  }
  if (Eigen::LLT<Mat3>(cfg.Q).info() != Eigen::Success) {
    throw ParameterError("mpc: Q must be positive definite");
  }
  if (!(cfg.v_max.array() > 0.0).all() || !(cfg.u_max.array() > 0.0).all()) {
    throw ParameterError("mpc: velocity and input bounds must be positive");
  }
  if (!(cfg.slack_weight > 0.0)) throw ParameterError("mpc: slack weight must be > 0");
  if (!(cfg.slack_linear_weight >= 0.0)) {
    throw ParameterError("mpc: linear slack weight must be >= 0");
  }
  if (!(cfg.uav_radius >= 0.0) || !(cfg.margin >= 0.0)) {
    throw ParameterError("mpc: radius and margin must be non-negative");
  }
}

/// Face normals of a regular dodecahedron: normalized (0, ±1, ±φ) and its
/// cyclic permutations. Opposite faces sit at indices 2k and 2k + 1.
struct Polytope {
  std::array<Vec3, 12> normals;

  [[nodiscard]] static Polytope dodecahedron() {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    Polytope poly;
    int idx = 0;
    for (int perm = 0; perm < 3; ++perm) {
      for (const double a : {1.0, -1.0}) {
        for (const double b : {phi, -phi}) {
          Vec3 base(0.0, a, b);
          // (0, a, b) -> (a, b, 0) -> (b, 0, a)
          Vec3 n;
          n[perm % 3] = base[0];
          n[(perm + 1) % 3] = base[1];
          n[(perm + 2) % 3] = base[2];
          poly.normals[static_cast<std::size_t>(idx++)] = n.normalized();
        }
      }
    }
    // Reorder so that each face is followed by its opposite.
    std::array<Vec3, 12> paired;
    std::array<bool, 12> used{};
    int out = 0;
    for (int i = 0; i < 12; ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      for (int j = i + 1; j < 12; ++j) {
        if (!used[static_cast<std::size_t>(j)] &&
            (poly.normals[static_cast<std::size_t>(i)] + poly.normals[static_cast<std::size_t>(j)])
                    .norm() < 1e-12) {
          paired[static_cast<std::size_t>(out++)] = poly.normals[static_cast<std::size_t>(i)];
          paired[static_cast<std::size_t>(out++)] = poly.normals[static_cast<std::size_t>(j)];
          used[static_cast<std::size_t>(i)] = used[static_cast<std::size_t>(j)] = true;
          break;
        }
      }
    }
    poly.normals = paired;
    return poly;
  }
};

struct FaceSelection {
  int index = 0;
  Vec3 normal = Vec3::UnitX();
  double signed_distance = 0.0;
  bool degenerate = false;
};

/// Face with the largest signed distance ηᵀ(uav_now − p) − R_obs; ties go to
/// the lowest index. Coincident positions select face 0 and are flagged.
[[nodiscard]] inline FaceSelection select_face(const Polytope& poly, const Vec3& uav_now,
                                               const Vec3& obstacle, double obstacle_radius) {
  const Vec3 offset = uav_now - obstacle;
  FaceSelection best;
  if (offset.norm() <= 1e-12) {
    best.index = 0;
    best.normal = poly.normals[0];
    best.signed_distance = -obstacle_radius;
    best.degenerate = true;
    return best;
  }
  best.signed_distance = -kInf;
  for (int j = 0; j < 12; ++j) {
    const Vec3& n = poly.normals[static_cast<std::size_t>(j)];
    const double rho = n.dot(offset) - obstacle_radius;
    if (rho > best.signed_distance) {
      best.index = j;
      best.normal = n;
      best.signed_distance = rho;
    }
  }
  return best;
}

/// Stacked free and forced responses for μ = 1..H:
/// x_μ = Φ_μ x_0 + Σ_{ν<μ} A^{μ-1-ν} B u_ν.
struct PredictionMatrices {
  MatX phi;    // (6H) x 6
  MatX gamma;  // (6H) x (3H)
};

[[nodiscard]] inline PredictionMatrices prediction_matrices(const LtiModel& model, int horizon) {
  if (horizon < 1) throw ParameterError("prediction_matrices: horizon must be >= 1");
  PredictionMatrices pm;
  pm.phi = MatX::Zero(6 * horizon, 6);
  pm.gamma = MatX::Zero(6 * horizon, 3 * horizon);
  dynamics::StateMatrix a_pow = model.A;
  for (int mu = 1; mu <= horizon; ++mu) {
    pm.phi.block<6, 6>(6 * (mu - 1), 0) = a_pow;
    a_pow = model.A * a_pow;
  }
  // Column block ν of row block μ is A^{μ-1-ν} B; build it by shifting.
  std::vector<Eigen::Matrix<double, 6, 3>> powers_b(static_cast<std::size_t>(horizon));
  powers_b[0] = model.B;
  for (int k = 1; k < horizon; ++k) {
    powers_b[static_cast<std::size_t>(k)] = model.A * powers_b[static_cast<std::size_t>(k - 1)];
  }
  for (int mu = 1; mu <= horizon; ++mu) {
    for (int nu = 0; nu < mu; ++nu) {
      pm.gamma.block<6, 3>(6 * (mu - 1), 3 * nu) =
          powers_b[static_cast<std::size_t>(mu - 1 - nu)];
    }
  }
  return pm;
}

/// Predicted obstacle positions p_1..p_H and its radius estimate.
struct TrackPrediction {
  int id = 0;
  std::vector<Vec3> positions;
  double radius = 0.0;
};

struct AvoidanceConstraint {
  int step = 0;  // μ in [1, H]
  int track_id = 0;
  int face = 0;
  Vec3 normal = Vec3::UnitX();
  double offset = 0.0;      // ηᵀ p_μ + d
  double separation = 0.0;  // d
  Vec3 obstacle = Vec3::Zero();  // p_μ
  bool degenerate = false;
};

struct MpcQp {
  qp::QpProblem problem;
  int num_inputs = 0;  // 3H
  std::vector<AvoidanceConstraint> avoidance;
  PredictionMatrices prediction;
  dynamics::StateVector x0 = dynamics::StateVector::Zero();

  [[nodiscard]] Vec3 first_input(const VecX& z) const { return z.head<3>(); }

  [[nodiscard]] dynamics::StateVector predicted_state(const VecX& z, int mu) const {
    return prediction.phi.block<6, 6>(6 * (mu - 1), 0) * x0 +
           prediction.gamma.block(6 * (mu - 1), 0, 6, num_inputs) * z.head(num_inputs);
  }
};

/// Separation the controller enforces between vehicle and obstacle centers.
[[nodiscard]] inline double separation(const MpcConfig& cfg, double obstacle_radius) {
  return cfg.uav_radius + obstacle_radius + cfg.margin;
}

[[nodiscard]] inline MpcQp build_qp(const LtiModel& model, const UavState& x0, const Vec3& goal,
                                    const std::vector<TrackPrediction>& tracks,
                                    const MpcConfig& cfg,
                                    const Polytope& poly = Polytope::dodecahedron()) {
  validate(cfg);
  if (!x0.finite() || !goal.allFinite()) throw ParameterError("build_qp: non-finite state or goal");
  const int horizon = cfg.horizon;
  const int nu = 3 * horizon;

  MpcQp out;
  out.num_inputs = nu;
  out.x0 = x0.vector();
  out.prediction = prediction_matrices(model, horizon);
  const auto& pm = out.prediction;

  // Avoidance rows first, so the slack count is known.
  for (const auto& track : tracks) {
    if (static_cast<int>(track.positions.size()) < 1) {
      throw ParameterError("build_qp: empty obstacle prediction");
    }
    const double d = separation(cfg, track.radius);
    for (int mu = 1; mu <= horizon; ++mu) {
      const auto idx = static_cast<std::size_t>(
          std::min<int>(mu, static_cast<int>(track.positions.size())) - 1);
      const Vec3& p_mu = track.positions[idx];
      const FaceSelection face = select_face(poly, x0.p, p_mu, track.radius);
      AvoidanceConstraint row;
      row.step = mu;
      row.track_id = track.id;
      row.face = face.index;
      row.normal = face.normal;
      row.separation = d;
      row.offset = face.normal.dot(p_mu) + d;
      row.obstacle = p_mu;
      row.degenerate = face.degenerate;
      out.avoidance.push_back(row);
    }
  }
  const int ns = static_cast<int>(out.avoidance.size());
  const int n = nu + ns;
  const int rows_velocity = 3 * horizon;
  const int rows_input = 3 * horizon;
  const int rows_ground = cfg.ground_avoidance ? horizon : 0;
  const int m = rows_velocity + rows_input + rows_ground + 2 * ns;

  auto& prob = out.problem;
  prob.P = MatX::Zero(n, n);
  prob.q = VecX::Zero(n);
  prob.G = MatX::Zero(m, n);
  prob.l = VecX::Constant(m, -kInf);
  prob.u = VecX::Constant(m, kInf);

  const dynamics::StateVector xv = x0.vector();
  // Tracking cost Σ_{μ=1..H} ‖p_μ − r‖²_Q; the μ = 0 term is constant.
  for (int mu = 1; mu <= horizon; ++mu) {
    const auto gp = pm.gamma.block(6 * (mu - 1), 0, 3, nu);
    const Vec3 free_pos = pm.phi.block<3, 6>(6 * (mu - 1), 0) * xv;
    prob.P.topLeftCorner(nu, nu).noalias() += 2.0 * gp.transpose() * cfg.Q * gp;
    prob.q.head(nu).noalias() += 2.0 * gp.transpose() * cfg.Q * (free_pos - goal);
  }
  for (int s = 0; s < ns; ++s) {
    prob.P(nu + s, nu + s) = 2.0 * cfg.slack_weight;
    prob.q[nu + s] = cfg.slack_linear_weight;
  }
  prob.P = 0.5 * (prob.P + prob.P.transpose()).eval();

  int row = 0;
  // Velocity bounds, μ = 1..H (μ = 0 is the measured state).
  for (int mu = 1; mu <= horizon; ++mu) {
    const auto gv = pm.gamma.block(6 * (mu - 1) + 3, 0, 3, nu);
    const Vec3 free_vel = pm.phi.block<3, 6>(6 * (mu - 1) + 3, 0) * xv;
    prob.G.block(row, 0, 3, nu) = gv;
    prob.l.segment<3>(row) = -cfg.v_max - free_vel;
    prob.u.segment<3>(row) = cfg.v_max - free_vel;
    row += 3;
  }
  // Input bounds −ū <= Kvel (u_μ − v_μ) <= ū, μ = 0..H−1.
  const Mat3 kvel = model.kvel.asDiagonal();
  for (int mu = 0; mu < horizon; ++mu) {
    MatX block = MatX::Zero(3, nu);
    block.block<3, 3>(0, 3 * mu) = kvel;
    Vec3 free_vel = x0.v;
    if (mu >= 1) {
      block -= kvel * pm.gamma.block(6 * (mu - 1) + 3, 0, 3, nu);
      free_vel = pm.phi.block<3, 6>(6 * (mu - 1) + 3, 0) * xv;
    }
    prob.G.block(row, 0, 3, nu) = block;
    prob.l.segment<3>(row) = -cfg.u_max + kvel * free_vel;
    prob.u.segment<3>(row) = cfg.u_max + kvel * free_vel;
    row += 3;
  }
  if (cfg.ground_avoidance) {
    for (int mu = 1; mu <= horizon; ++mu) {
      prob.G.block(row, 0, 1, nu) = pm.gamma.block(6 * (mu - 1) + 2, 0, 1, nu);
      prob.l[row] = cfg.ground_z_min - pm.phi.row(6 * (mu - 1) + 2).dot(xv);
      ++row;
    }
  }
  for (int s = 0; s < ns; ++s) {
    const auto& c = out.avoidance[static_cast<std::size_t>(s)];
    const auto gp = pm.gamma.block(6 * (c.step - 1), 0, 3, nu);
    const Vec3 free_pos = pm.phi.block<3, 6>(6 * (c.step - 1), 0) * xv;
    prob.G.block(row, 0, 1, nu) = c.normal.transpose() * gp;
    prob.G(row, nu + s) = 1.0;
    prob.l[row] = c.offset - c.normal.dot(free_pos);
    ++row;
  }
  for (int s = 0; s < ns; ++s) {
    prob.G(row, nu + s) = 1.0;
    prob.l[row] = 0.0;
    ++row;
  }
  return out;
}

struct MpcDiagnostics {
  double solve_ms = 0.0;
  qp::QpStatus status = qp::QpStatus::kOptimal;
  int iterations = 0;
  double max_slack = 0.0;
  double min_clearance = kInf;  // min over rows of ‖x_μ − p_μ‖ − d
  bool braking = false;
  int degenerate_faces = 0;
};

struct ControlOutput {
  VelocityCommand command;
  MpcDiagnostics diagnostics;
  VecX solution;
};

/// Builds and solves one receding-horizon problem and decodes u_0.
class MpcController {
 public:
  explicit MpcController(MpcConfig cfg = {}) : cfg_(std::move(cfg)) { validate(cfg_); }

  [[nodiscard]] const MpcConfig& config() const { return cfg_; }

  void reset() { previous_.reset(); }

  [[nodiscard]] ControlOutput control_step(const LtiModel& model, const UavState& x0,
                                           const Vec3& goal,
                                           const std::vector<TrackPrediction>& tracks) {
    const auto start = std::chrono::steady_clock::now();
    const MpcQp built = build_qp(model, x0, goal, tracks, cfg_, poly_);
    const int nu = built.num_inputs;
    const auto n = built.problem.num_vars();

    qp::WarmStart warm;
    const qp::WarmStart* warm_ptr = nullptr;
    if (cfg_.warm_start && previous_) {
      warm.z = VecX::Zero(n);
      // Shift the input sequence by one step and repeat the last input.
      warm.z.head(nu - 3) = previous_->segment(3, nu - 3);
      warm.z.segment<3>(nu - 3) = previous_->segment<3>(nu - 3);
      warm_ptr = &warm;
    }
    const qp::QpSolution sol = qp::solve(built.problem, cfg_.qp, warm_ptr);
    const auto stop = std::chrono::steady_clock::now();

    ControlOutput out;
    out.solution = sol.z;
    auto& diag = out.diagnostics;
    diag.solve_ms = std::chrono::duration<double, std::milli>(stop - start).count();
    diag.status = sol.status;
    diag.iterations = sol.iterations;
    for (const auto& c : built.avoidance) diag.degenerate_faces += c.degenerate ? 1 : 0;

    bool usable = sol.status == qp::QpStatus::kOptimal;
    if (sol.status == qp::QpStatus::kMaxIter) {
      usable = sol.primal_residual <= 1e-3 && sol.dual_residual <= 1e-3;
    }
    if (usable && sol.z.allFinite()) {
      out.command.u = built.first_input(sol.z);
      previous_ = sol.z.head(nu);
      const auto ns = static_cast<Eigen::Index>(built.avoidance.size());
      if (ns > 0) diag.max_slack = sol.z.tail(ns).maxCoeff();
      for (const auto& c : built.avoidance) {
        const Vec3 pos = built.predicted_state(sol.z, c.step).head<3>();
        diag.min_clearance = std::min(diag.min_clearance, (pos - c.obstacle).norm() - c.separation);
      }
    } else {
      out.command.u = Vec3::Zero();
      diag.braking = true;
      previous_.reset();
    }
    return out;
  }

 private:
  MpcConfig cfg_;
  Polytope poly_ = Polytope::dodecahedron();
  std::optional<VecX> previous_;
};

/// Stateless convenience wrapper around MpcController.
[[nodiscard]] inline ControlOutput control_step(const LtiModel& model, const UavState& x0,
                                                const Vec3& goal,
                                                const std::vector<TrackPrediction>& tracks,
                                                const MpcConfig& cfg) {
  MpcController controller(cfg);
  return controller.control_step(model, x0, goal, tracks);
}

}  // namespace koopnav::mpc
