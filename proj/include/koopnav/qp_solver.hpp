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

// Dense ADMM solver for convex quadratic programs
//
//   minimize    ½ zᵀ P z + qᵀ z
//   subject to  l <= G z <= u
//
// The iteration follows the operator-splitting scheme popularised by OSQP:
// a factorization of the regularized KKT matrix, a box projection,
// over-relaxation and scaled dual updates. The problem is Ruiz-equilibrated
// first and the penalty is rebalanced from the residual ratio, refactoring
// only when it moves by more than a factor of five. A converged iterate is
// optionally polished by solving the equality-constrained problem on its
// estimated active set.
//
// Dual sign convention: P z + q + Gᵀ y = 0 at the optimum, with y_i >= 0 on
// rows at their upper bound and y_i <= 0 on rows at their lower bound.

#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "koopnav/common.hpp"

namespace koopnav::qp {

struct QpProblem {
  MatX P;
  VecX q;
  MatX G;
  VecX l;
  VecX u;

  [[nodiscard]] Eigen::Index num_vars() const { return q.size(); }
  [[nodiscard]] Eigen::Index num_constraints() const { return G.rows(); }

  [[nodiscard]] double objective(const VecX& z) const { return 0.5 * z.dot(P * z) + q.dot(z); }
};

enum class QpStatus { kOptimal, kMaxIter, kPrimalInfeasible };

[[nodiscard]] inline std::string_view to_string(QpStatus status) {
  switch (status) {
    case QpStatus::kOptimal:
      return "optimal";
    case QpStatus::kMaxIter:
      return "max_iter";
    case QpStatus::kPrimalInfeasible:
      return "primal_infeasible";
  }
  return "unknown";
}

struct QpSettings {
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  double eps_prim_inf = 1e-6;
  int max_iter = 4000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;  // over-relaxation
  int check_interval = 5;
  bool polish = true;
  // Polishing is also attempted mid-run once both relative residuals fall
  // below polish_trigger; the first attempt comes after polish_interval
  // iterations and the spacing doubles after each failure.
  int polish_interval = 25;
  double polish_trigger = 1e-3;
};

struct QpSolution {
  VecX z;
  VecX duals;
  QpStatus status = QpStatus::kMaxIter;
  int iterations = 0;
  double primal_residual = kInf;
  double dual_residual = kInf;
  bool polished = false;
};

struct WarmStart {
  VecX z;
  VecX duals;  // ignored unless its size matches the constraint count
};

struct KktResiduals {
  double primal = 0.0;  // max violation of l <= G z <= u
  double dual = 0.0;    // ‖P z + q + Gᵀ y‖∞
};

[[nodiscard]] inline KktResiduals kkt_residuals(const QpProblem& prob, const VecX& z,
                                                const VecX& duals) {
  if (z.size() != prob.num_vars() || duals.size() != prob.num_constraints()) {
    throw ParameterError("kkt_residuals: dimension mismatch");
  }
  KktResiduals res;
  if (prob.num_constraints() > 0) {
    const VecX gz = prob.G * z;
    const VecX violation = (prob.l - gz).cwiseMax(gz - prob.u).cwiseMax(0.0);
    res.primal = violation.maxCoeff();
  }
  const VecX stationarity = prob.P * z + prob.q + prob.G.transpose() * duals;
  res.dual = stationarity.size() > 0 ? stationarity.cwiseAbs().maxCoeff() : 0.0;
  return res;
}

/// Throws ParameterError on inconsistent dimensions, asymmetric or non-PSD P,
/// non-finite data or crossed bounds.
inline void validate(const QpProblem& prob, double sigma = 1e-6) {
  const Eigen::Index n = prob.q.size();
  const Eigen::Index m = prob.G.rows();
  if (prob.P.rows() != n || prob.P.cols() != n) throw ParameterError("qp: P must be n x n");
  if (prob.G.cols() != n && m > 0) throw ParameterError("qp: G must have n columns");
  if (prob.l.size() != m || prob.u.size() != m) throw ParameterError("qp: bounds must have m rows");
  if (!prob.P.allFinite() || !prob.q.allFinite() || !prob.G.allFinite()) {
    throw ParameterError("qp: P, q and G must be finite");
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    if (std::isnan(prob.l[i]) || std::isnan(prob.u[i]) || prob.l[i] > prob.u[i] ||
        prob.l[i] == kInf || prob.u[i] == -kInf) {
      throw ParameterError("qp: require l <= u elementwise");
    }
  }
  if ((prob.P - prob.P.transpose()).norm() > 1e-10 * std::max(prob.P.norm(), 1e-300)) {
    throw ParameterError("qp: P must be symmetric");
  }
  const MatX shifted = prob.P + sigma * MatX::Identity(n, n);
  if (n > 0 && Eigen::LLT<MatX>(shifted).info() != Eigen::Success) {
    throw ParameterError("qp: P is not positive semidefinite");
  }
}

namespace detail {

inline double inf_norm(const VecX& v) { return v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0; }

/// Equality-constrained solve on an active set guessed from the ADMM
/// iterate, refined for a few rounds: violated rows join the set and rows
/// whose multiplier has the wrong sign leave it. Returns the polished
/// primal/dual pair only when it is a certified KKT point.
inline std::optional<std::pair<VecX, VecX>> polish(const QpProblem& prob, const VecX& gz,
                                                   const VecX& y_admm,
                                                   const QpSettings& settings) {
  const Eigen::Index n = prob.num_vars();
  const Eigen::Index m = prob.num_constraints();
  const double tol = settings.eps_abs;
  // side: -1 lower bound active, +1 upper, 0 equality row, 2 inactive.
  std::vector<int> side(static_cast<std::size_t>(m), 2);
  for (Eigen::Index i = 0; i < m; ++i) {
    auto& si = side[static_cast<std::size_t>(i)];
    if (prob.l[i] == prob.u[i]) {
      si = 0;
    } else if (std::isfinite(prob.l[i]) && gz[i] - prob.l[i] < -y_admm[i]) {
      si = -1;
    } else if (std::isfinite(prob.u[i]) && prob.u[i] - gz[i] < y_admm[i]) {
      si = 1;
    }
  }

  constexpr int kMaxRounds = 8;
  constexpr double kDelta = 1e-7;
  for (int round = 0; round < kMaxRounds; ++round) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (side[static_cast<std::size_t>(i)] != 2) rows.push_back(i);
    }
    const auto k = static_cast<Eigen::Index>(rows.size());
    MatX kkt = MatX::Zero(n + k, n + k);
    VecX rhs(n + k);
    kkt.topLeftCorner(n, n) = prob.P;
    rhs.head(n) = -prob.q;
    for (Eigen::Index r = 0; r < k; ++r) {
      const Eigen::Index i = rows[static_cast<std::size_t>(r)];
      kkt.block(n + r, 0, 1, n) = prob.G.row(i);
      kkt.block(0, n + r, n, 1) = prob.G.row(i).transpose();
      rhs[n + r] = side[static_cast<std::size_t>(i)] < 0 || side[static_cast<std::size_t>(i)] == 0
                       ? prob.l[i]
                       : prob.u[i];
    }
    // Quasi-definite regularization keeps the factorization well posed when
    // active rows are linearly dependent; iterative refinement against the
    // exact KKT matrix removes the regularization bias.
    MatX reg = kkt;
    reg.topLeftCorner(n, n).diagonal().array() += kDelta;
    reg.bottomRightCorner(k, k).diagonal().array() -= kDelta;
    const Eigen::PartialPivLU<MatX> lu(reg);
    VecX sol = lu.solve(rhs);
    for (int pass = 0; pass < 5 && sol.allFinite(); ++pass) sol += lu.solve(rhs - kkt * sol);
    if (!sol.allFinite()) return std::nullopt;

    VecX z = sol.head(n);
    VecX y = VecX::Zero(m);
    for (Eigen::Index r = 0; r < k; ++r) y[rows[static_cast<std::size_t>(r)]] = sol[n + r];

    bool changed = false;
    const VecX gz_new = prob.G * z;
    for (Eigen::Index i = 0; i < m; ++i) {
      auto& si = side[static_cast<std::size_t>(i)];
      if ((si == -1 && y[i] > tol) || (si == 1 && y[i] < -tol)) {
        si = 2;
        changed = true;
      } else if (si == 2 && gz_new[i] < prob.l[i] - tol) {
        si = -1;
        changed = true;
      } else if (si == 2 && gz_new[i] > prob.u[i] + tol) {
        si = 1;
        changed = true;
      }
    }
    if (changed) continue;
    const KktResiduals res = kkt_residuals(prob, z, y);
    if (res.primal > tol || res.dual > tol) return std::nullopt;
    return std::make_pair(std::move(z), std::move(y));
  }
  return std::nullopt;
}

/// Modified Ruiz equilibration of the KKT matrix [P Gᵀ; G 0] followed by a
/// cost scaling. The scaled problem is P̄ = c E P E, q̄ = c E q, Ḡ = D G E,
/// with bounds D l, D u; unscaled iterates are x = E x̄ and y = D ȳ / c.
struct Scaling {
  VecX e;  // column scaling, size n
  VecX d;  // row scaling, size m
  double c = 1.0;
};

inline Scaling equilibrate(const QpProblem& prob, int passes = 15) {
  const Eigen::Index n = prob.num_vars();
  const Eigen::Index m = prob.num_constraints();
  Scaling sc{VecX::Ones(n), VecX::Ones(m), 1.0};
  MatX p = prob.P;
  MatX g = prob.G;
  auto clip = [](double v) { return std::clamp(v, 1e-4, 1e4); };
  for (int pass = 0; pass < passes; ++pass) {
    VecX de(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      double norm = p.col(j).cwiseAbs().maxCoeff();
      if (m > 0) norm = std::max(norm, g.col(j).cwiseAbs().maxCoeff());
      de[j] = norm > 0.0 ? 1.0 / std::sqrt(clip(norm)) : 1.0;
    }
    VecX dd(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double norm = n > 0 ? g.row(i).cwiseAbs().maxCoeff() : 0.0;
      dd[i] = norm > 0.0 ? 1.0 / std::sqrt(clip(norm)) : 1.0;
    }
    p = de.asDiagonal() * p * de.asDiagonal();
    g = dd.asDiagonal() * g * de.asDiagonal();
    sc.e = sc.e.cwiseProduct(de);
    sc.d = sc.d.cwiseProduct(dd);
  }
  double p_scale = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) p_scale += p.col(j).cwiseAbs().maxCoeff();
  p_scale = n > 0 ? p_scale / static_cast<double>(n) : 0.0;
  const double q_scale = inf_norm(sc.e.cwiseProduct(prob.q));
  const double scale = std::max(p_scale, q_scale);
  sc.c = scale > 0.0 ? 1.0 / clip(scale) : 1.0;
  return sc;
}

}  // namespace detail

[[nodiscard]] inline QpSolution solve(const QpProblem& prob, const QpSettings& settings = {},
                                      const WarmStart* warm = nullptr) {
  validate(prob, settings.sigma);
  const Eigen::Index n = prob.num_vars();
  const Eigen::Index m = prob.num_constraints();

  const detail::Scaling sc = detail::equilibrate(prob);
  const VecX& e = sc.e;
  const VecX& d = sc.d;
  const double c = sc.c;
  const MatX ps = c * (e.asDiagonal() * prob.P * e.asDiagonal());
  const VecX qs = c * e.cwiseProduct(prob.q);
  const MatX gs = d.asDiagonal() * prob.G * e.asDiagonal();
  const VecX ls = d.cwiseProduct(prob.l);
  const VecX us = d.cwiseProduct(prob.u);

  // Equality rows get a stiffer penalty, free rows almost none.
  VecX rho_weight(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (ls[i] == us[i]) {
      rho_weight[i] = 1e3;
    } else if (!std::isfinite(ls[i]) && !std::isfinite(us[i])) {
      rho_weight[i] = 1e-6 / settings.rho;
    } else {
      rho_weight[i] = 1.0;
    }
  }
  double rho_base = settings.rho;
  VecX rho = rho_base * rho_weight;
  const MatX ptp = ps + settings.sigma * MatX::Identity(n, n);
  Eigen::LLT<MatX> factor;
  auto factorize = [&]() {
    factor.compute(ptp + gs.transpose() * rho.asDiagonal() * gs);
    if (factor.info() != Eigen::Success) throw ParameterError("qp: KKT factorization failed");
  };
  factorize();

  VecX x = VecX::Zero(n);
  VecX z = VecX::Zero(m);
  VecX y = VecX::Zero(m);
  if (warm != nullptr && warm->z.size() == n) {
    x = warm->z.cwiseQuotient(e);
    z = (gs * x).cwiseMax(ls).cwiseMin(us);
    if (warm->duals.size() == m) y = c * warm->duals.cwiseQuotient(d);
  }

  QpSolution sol;
  const double alpha = settings.alpha;
  VecX y_prev = y;
  VecX x_tilde(n);
  VecX z_tilde(m);
  VecX z_relaxed(m);
  const double q_norm = detail::inf_norm(prob.q);

  // Residuals of the unscaled problem, plus the normalized ratio that
  // drives the penalty update.
  struct Residuals {
    double prim, dual, eps_prim, eps_dual, prim_rel, dual_rel;
  };
  auto residuals = [&]() {
    Residuals r{};
    const VecX gx = (gs * x).cwiseQuotient(d);
    const VecX zu = z.cwiseQuotient(d);
    r.prim = detail::inf_norm(gx - zu);
    const VecX px = (ps * x).cwiseQuotient(e) / c;
    const VecX gty = (gs.transpose() * y).cwiseQuotient(e) / c;
    r.dual = detail::inf_norm(px + prob.q + gty);
    const double prim_scale = std::max(detail::inf_norm(gx), detail::inf_norm(zu));
    const double dual_scale = std::max({detail::inf_norm(px), detail::inf_norm(gty), q_norm});
    r.eps_prim = settings.eps_abs + settings.eps_rel * prim_scale;
    r.eps_dual = settings.eps_abs + settings.eps_rel * dual_scale;
    r.prim_rel = r.prim / std::max(prim_scale, 1e-12);
    r.dual_rel = r.dual / std::max(dual_scale, 1e-12);
    return r;
  };

  // Farkas-type certificate on successive dual differences.
  auto primal_infeasible = [&](const VecX& dy_scaled) {
    const VecX dy = dy_scaled.cwiseProduct(d) / c;
    const double dy_norm = detail::inf_norm(dy);
    if (dy_norm <= 1e-12) return false;
    const double eps = settings.eps_prim_inf * dy_norm;
    if (detail::inf_norm(prob.G.transpose() * dy) > eps) return false;
    double support = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (dy[i] > eps) {
        if (!std::isfinite(prob.u[i])) return false;
        support += prob.u[i] * dy[i];
      } else if (dy[i] < -eps) {
        if (!std::isfinite(prob.l[i])) return false;
        support += prob.l[i] * dy[i];
      }
    }
    return support < -eps;
  };

  int iter = 0;
  bool converged = false;
  int next_polish = settings.polish_interval;
  for (iter = 1; iter <= settings.max_iter; ++iter) {
    y_prev = y;
    const VecX rhs = settings.sigma * x - qs + gs.transpose() * (rho.cwiseProduct(z) - y);
    x_tilde = factor.solve(rhs);
    z_tilde = gs * x_tilde;
    x = alpha * x_tilde + (1.0 - alpha) * x;
    z_relaxed = alpha * z_tilde + (1.0 - alpha) * z;
    const VecX z_next = (z_relaxed + y.cwiseQuotient(rho)).cwiseMax(ls).cwiseMin(us);
    y += rho.cwiseProduct(z_relaxed - z_next);
    z = z_next;

    if (iter % settings.check_interval == 0 || iter == settings.max_iter) {
      const Residuals r = residuals();
      sol.primal_residual = r.prim;
      sol.dual_residual = r.dual;
      if (r.prim <= r.eps_prim && r.dual <= r.eps_dual) {
        converged = true;
        break;
      }
      if (primal_infeasible(y - y_prev)) {
        sol.status = QpStatus::kPrimalInfeasible;
        sol.iterations = iter;
        sol.z = x.cwiseProduct(e);
        sol.duals = y.cwiseProduct(d) / c;
        return sol;
      }
      if (settings.polish && m > 0 && iter >= next_polish &&
          r.prim_rel <= settings.polish_trigger && r.dual_rel <= settings.polish_trigger) {
        next_polish = 2 * iter;
        const VecX z_unscaled = z.cwiseQuotient(d);
        const VecX y_unscaled = y.cwiseProduct(d) / c;
        if (auto polished = detail::polish(prob, z_unscaled, y_unscaled, settings)) {
          const KktResiduals res = kkt_residuals(prob, polished->first, polished->second);
          if (res.primal <= settings.eps_abs && res.dual <= settings.eps_abs) {
            sol.z = std::move(polished->first);
            sol.duals = std::move(polished->second);
            sol.polished = true;
            sol.primal_residual = res.primal;
            sol.dual_residual = res.dual;
            sol.status = QpStatus::kOptimal;
            sol.iterations = iter;
            return sol;
          }
        }
      }
      // Rebalance the penalty when primal and dual progress drift apart.
      if (m > 0 && iter % (5 * settings.check_interval) == 0 && r.dual_rel > 0.0) {
        const double ratio = std::sqrt(r.prim_rel / r.dual_rel);
        const double next = std::clamp(rho_base * ratio, 1e-6, 1e6);
        if (next > 5.0 * rho_base || next < 0.2 * rho_base) {
          rho_base = next;
          rho = rho_base * rho_weight;
          factorize();
        }
      }
    }
  }
  sol.iterations = std::min(iter, settings.max_iter);
  sol.z = x.cwiseProduct(e);
  sol.duals = y.cwiseProduct(d) / c;
  sol.status = converged ? QpStatus::kOptimal : QpStatus::kMaxIter;

  if (settings.polish && m > 0) {
    const VecX z_unscaled = z.cwiseQuotient(d);
    if (auto polished = detail::polish(prob, z_unscaled, sol.duals, settings)) {
      sol.z = std::move(polished->first);
      sol.duals = std::move(polished->second);
      sol.polished = true;
      const KktResiduals res = kkt_residuals(prob, sol.z, sol.duals);
      sol.primal_residual = res.primal;
      sol.dual_residual = res.dual;
      if (res.primal <= settings.eps_abs && res.dual <= settings.eps_abs) {
        sol.status = QpStatus::kOptimal;
      }
    }
  }
  return sol;
}

/// Plain-text dump: a "qp n m" header line followed by P, q, G, l, u in
/// row-major order, one matrix row per line. Infinite bounds print as inf.
inline void write_problem(std::ostream& os, const QpProblem& prob) {
  const Eigen::IOFormat fmt(17, Eigen::DontAlignCols, " ", "\n");
  os << "qp " << prob.num_vars() << ' ' << prob.num_constraints() << '\n';
  auto put = [&](const MatX& mat) {
    if (mat.size() > 0) os << mat.format(fmt) << '\n';
  };
  put(prob.P);
  put(prob.q.transpose());
  put(prob.G);
  put(prob.l.transpose());
  put(prob.u.transpose());
}

[[nodiscard]] inline QpProblem read_problem(std::istream& is) {
  std::string tag;
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  if (!(is >> tag >> n >> m) || tag != "qp" || n < 0 || m < 0) {
    throw ParameterError("read_problem: malformed header");
  }
  auto read_value = [&]() {
    std::string token;
    if (!(is >> token)) throw ParameterError("read_problem: truncated data");
    if (token == "inf" || token == "+inf") return kInf;
    if (token == "-inf") return -kInf;
    try {
      return std::stod(token);
    } catch (const std::exception&) {
      throw ParameterError("read_problem: bad number '" + token + "'");
    }
  };
  auto read_matrix = [&](Eigen::Index rows, Eigen::Index cols) {
    MatX mat(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) mat(r, c) = read_value();
    }
    return mat;
  };
  QpProblem prob;
  prob.P = read_matrix(n, n);
  prob.q = read_matrix(n, 1);
  prob.G = read_matrix(m, n);
  prob.l = read_matrix(m, 1);
  prob.u = read_matrix(m, 1);
  return prob;
}

}  // namespace koopnav::qp
