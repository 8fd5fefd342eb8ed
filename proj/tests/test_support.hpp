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

// Independent oracles shared by the unit and acceptance suites.

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <random>
#include <string>
#include <unsupported/Eigen/MatrixFunctions>
#include <vector>

#include "koopnav/common.hpp"
#include "koopnav/lin_dynamics.hpp"
#include "koopnav/qp_solver.hpp"

namespace koopnav::testing {

inline std::string scenario_path(const std::string& name) {
  return std::string(KOOPNAV_SCENARIO_DIR) + "/" + name;
}

/// ZOH pair from the exponential of the augmented block matrix
/// [[A_c, B_c], [0, 0]] · ts (Padé with scaling and squaring).
inline std::pair<dynamics::StateMatrix, dynamics::InputMatrix> expm_discretize(
    const Vec3& kvel, double ts) {
  Eigen::Matrix<double, 9, 9> aug = Eigen::Matrix<double, 9, 9>::Zero();
  aug.topLeftCorner<6, 6>() = dynamics::continuous_a(kvel);
  aug.topRightCorner<6, 3>() = dynamics::continuous_b(kvel);
  const Eigen::Matrix<double, 9, 9> e = (aug * ts).exp();
  return {e.topLeftCorner<6, 6>(), e.topRightCorner<6, 3>()};
}

/// Classical Runge-Kutta with `substeps` steps per period.
inline dynamics::StateVector rk4_step(const Vec3& kvel, double ts, const dynamics::StateVector& x,
                                      const Vec3& u, int substeps) {
  const auto a = dynamics::continuous_a(kvel);
  const dynamics::StateVector bu = dynamics::continuous_b(kvel) * u;
  auto f = [&](const dynamics::StateVector& s) -> dynamics::StateVector { return a * s + bu; };
  const double h = ts / substeps;
  dynamics::StateVector s = x;
  for (int i = 0; i < substeps; ++i) {
    const dynamics::StateVector k1 = f(s);
    const dynamics::StateVector k2 = f(s + 0.5 * h * k1);
    const dynamics::StateVector k3 = f(s + 0.5 * h * k2);
    const dynamics::StateVector k4 = f(s + h * k3);
    s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return s;
}

/// Random strictly convex QP with a known feasible point. Rows are a mix of
/// two-sided, one-sided and equality constraints.
inline qp::QpProblem random_qp(std::mt19937_64& rng, int n, int m) {
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  qp::QpProblem prob;
  const MatX factor = MatX::NullaryExpr(n, n, [&] { return gauss(rng); });
  prob.P = factor.transpose() * factor + 0.1 * MatX::Identity(n, n);
  prob.q = VecX::NullaryExpr(n, [&] { return 2.0 * gauss(rng); });
  prob.G = MatX::NullaryExpr(m, n, [&] { return gauss(rng); });
  const VecX feasible = VecX::NullaryExpr(n, [&] { return 0.5 * gauss(rng); });
  const VecX gz = prob.G * feasible;
  prob.l.resize(m);
  prob.u.resize(m);
  for (int i = 0; i < m; ++i) {
    const double kind = unit(rng);
    const double lo = gz[i] - 0.05 - unit(rng);
    const double hi = gz[i] + 0.05 + unit(rng);
    if (kind < 0.1) {
      prob.l[i] = prob.u[i] = gz[i];
    } else if (kind < 0.3) {
      prob.l[i] = -kInf;
      prob.u[i] = hi;
    } else if (kind < 0.5) {
      prob.l[i] = lo;
      prob.u[i] = kInf;
    } else {
      prob.l[i] = lo;
      prob.u[i] = hi;
    }
  }
  return prob;
}

struct OracleSolution {
  VecX z;
  VecX duals;
};

/// Active-set enumeration: every row is inactive, at its lower bound or at
/// its upper bound. Equality rows are either in the working set or merely
/// checked for feasibility, so redundant equalities do not hide the optimum.
/// The first assignment whose KKT point is primal feasible with correctly
/// signed multipliers is the unique optimum of a strictly convex problem.
inline std::optional<OracleSolution> enumerate_active_sets(const qp::QpProblem& prob,
                                                           double tol = 1e-8) {
  const int n = static_cast<int>(prob.num_vars());
  const int m = static_cast<int>(prob.num_constraints());
  std::vector<int> state(static_cast<std::size_t>(m), 0);  // 0 free, 1 lower, 2 upper
  long combos = 1;
  for (int i = 0; i < m; ++i) combos *= 3;
  for (long code = 0; code < combos; ++code) {
    long rest = code;
    bool valid = true;
    std::vector<int> active;
    for (int i = 0; i < m; ++i) {
      state[static_cast<std::size_t>(i)] = static_cast<int>(rest % 3);
      rest /= 3;
      const int s = state[static_cast<std::size_t>(i)];
      const bool equality = prob.l[i] == prob.u[i];
      if (equality && s == 2) valid = false;
      if (s == 1 && prob.l[i] == -kInf) valid = false;
      if (s == 2 && prob.u[i] == kInf) valid = false;
      if (s != 0) active.push_back(i);
    }
    if (!valid || static_cast<int>(active.size()) > n) continue;
    const int k = static_cast<int>(active.size());
    MatX kkt = MatX::Zero(n + k, n + k);
    VecX rhs = VecX::Zero(n + k);
    kkt.topLeftCorner(n, n) = prob.P;
    rhs.head(n) = -prob.q;
    for (int a = 0; a < k; ++a) {
      const int row = active[static_cast<std::size_t>(a)];
      kkt.block(n + a, 0, 1, n) = prob.G.row(row);
      kkt.block(0, n + a, n, 1) = prob.G.row(row).transpose();
      rhs[n + a] = state[static_cast<std::size_t>(row)] == 1 ? prob.l[row] : prob.u[row];
    }
    const Eigen::FullPivLU<MatX> lu(kkt);
    if (lu.rank() < n + k) continue;
    const VecX sol = lu.solve(rhs);
    const VecX z = sol.head(n);
    const VecX gz = prob.G * z;
    bool ok = true;
    for (int i = 0; i < m && ok; ++i) {
      if (gz[i] < prob.l[i] - tol || gz[i] > prob.u[i] + tol) ok = false;
    }
    VecX duals = VecX::Zero(m);
    for (int a = 0; a < k && ok; ++a) {
      const int row = active[static_cast<std::size_t>(a)];
      const double y = sol[n + a];
      duals[row] = y;
      if (prob.l[row] == prob.u[row]) continue;
      if (state[static_cast<std::size_t>(row)] == 1 && y > tol) ok = false;
      if (state[static_cast<std::size_t>(row)] == 2 && y < -tol) ok = false;
    }
    if (ok) return OracleSolution{z, duals};
  }
  return std::nullopt;
}

}  // namespace koopnav::testing
