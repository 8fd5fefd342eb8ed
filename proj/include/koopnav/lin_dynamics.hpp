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

// Translational UAV model with the velocity loop closed:
//
//   d/dt [p; v] = [0 I; 0 -Kvel] [p; v] + [0; Kvel] u
//
// and its exact zero-order-hold discretization x(k+1) = A x(k) + B u(k).
// State ordering is [px py pz vx vy vz].

#pragma once

#include <cmath>

#include "koopnav/common.hpp"

namespace koopnav::dynamics {

using StateVector = Eigen::Matrix<double, 6, 1>;
using StateMatrix = Eigen::Matrix<double, 6, 6>;
using InputMatrix = Eigen::Matrix<double, 6, 3>;

struct UavState {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();

  [[nodiscard]] StateVector vector() const {
    StateVector x;
    x << p, v;
    return x;
  }

  [[nodiscard]] static UavState from_vector(const StateVector& x) {
    return UavState{x.head<3>(), x.tail<3>()};
  }

  [[nodiscard]] bool finite() const { return p.allFinite() && v.allFinite(); }
};

/// Velocity reference handed to the inner loop.
struct VelocityCommand {
  Vec3 u = Vec3::Zero();
};

struct LtiModel {
  StateMatrix A = StateMatrix::Identity();
  InputMatrix B = InputMatrix::Zero();
  double ts = 0.0;
  Vec3 kvel = Vec3::Zero();  // diagonal of Kvel [1/s]
};

/// Exact ZOH discretization; throws ParameterError for non-positive ts or gains.
[[nodiscard]] inline LtiModel discretize(const Vec3& kvel, double ts) {
  if (!(ts > 0.0) || !std::isfinite(ts)) {
    throw ParameterError("discretize: sampling period must be positive");
  }
  if (!(kvel.array() > 0.0).all() || !kvel.allFinite()) {
    throw ParameterError("discretize: Kvel diagonal entries must be positive");
  }
  LtiModel model;
  model.ts = ts;
  model.kvel = kvel;
  model.A.setIdentity();
  model.B.setZero();
  for (int axis = 0; axis < 3; ++axis) {
    const double k = kvel[axis];
    const double decay = std::exp(-k * ts);
    // (1 - e^{-k ts}) / k, written with expm1 to stay accurate as k ts -> 0.
    const double integral = -std::expm1(-k * ts) / k;
    model.A(axis, 3 + axis) = integral;
    model.A(3 + axis, 3 + axis) = decay;
    model.B(axis, axis) = ts - integral;
    model.B(3 + axis, axis) = -std::expm1(-k * ts);
  }
  return model;
}

/// Convenience overload for the scalar-gain case Kvel = k I.
[[nodiscard]] inline LtiModel discretize(double kvel, double ts) {
  return discretize(Vec3::Constant(kvel), ts);
}

[[nodiscard]] inline UavState step(const LtiModel& model, const UavState& x,
                                   const VelocityCommand& u) {
  if (!x.finite() || !u.u.allFinite()) {
    throw DataError("step: non-finite state or command");
  }
  return UavState::from_vector(model.A * x.vector() + model.B * u.u);
}

/// Continuous-time system matrices, used by oracles and by the fine-step tests.
[[nodiscard]] inline StateMatrix continuous_a(const Vec3& kvel) {
  StateMatrix a = StateMatrix::Zero();
  a.block<3, 3>(0, 3).setIdentity();
  a.block<3, 3>(3, 3) = (-kvel).asDiagonal();
  return a;
}

[[nodiscard]] inline InputMatrix continuous_b(const Vec3& kvel) {
  InputMatrix b = InputMatrix::Zero();
  b.block<3, 3>(3, 0) = kvel.asDiagonal();
  return b;
}

}  // namespace koopnav::dynamics
