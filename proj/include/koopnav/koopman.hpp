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

// Koopman prediction of obstacle motion.
//
// A history of delay-embedded states is lifted into observables, a linear
// operator advancing the observables by one history spacing Tκ is fitted by
// least squares (EDMD), and the operator is rescaled to the control period
// Ts through a fractional matrix power before being rolled out.

#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <string_view>
#include <vector>

#include "koopnav/common.hpp"
#include "koopnav/tracking.hpp"

namespace koopnav::koopman {

using tracking::EmbeddedState;

enum class LiftingKind { kPosition, kPositionVelocity, kPositionVelocityAcceleration };

[[nodiscard]] inline int lifted_dim(LiftingKind kind) {
  switch (kind) {
    case LiftingKind::kPosition:
      return 3;
    case LiftingKind::kPositionVelocity:
      return 6;
    case LiftingKind::kPositionVelocityAcceleration:
      return 9;
  }
  return 0;
}

/// Accepts "p", "pv", "pva" and the long tags "psi_p", "psi_pv", "psi_pva".
[[nodiscard]] inline LiftingKind lifting_from_string(std::string_view name) {
  if (name == "p" || name == "psi_p") return LiftingKind::kPosition;
  if (name == "pv" || name == "psi_pv") return LiftingKind::kPositionVelocity;
  if (name == "pva" || name == "psi_pva") return LiftingKind::kPositionVelocityAcceleration;
  throw ParameterError("unknown lifting '" + std::string(name) + "'");
}

[[nodiscard]] inline std::string_view to_string(LiftingKind kind) {
  switch (kind) {
    case LiftingKind::kPosition:
      return "psi_p";
    case LiftingKind::kPositionVelocity:
      return "psi_pv";
    case LiftingKind::kPositionVelocityAcceleration:
      return "psi_pva";
  }
  return "unknown";
}

[[nodiscard]] inline VecX lift(const EmbeddedState& state, LiftingKind kind, double t_theta) {
  if (!(t_theta > 0.0)) throw ParameterError("lift: t_theta must be > 0");
  const Vec3 p0 = state.block(0);
  const Vec3 p1 = state.block(1);
  const Vec3 p2 = state.block(2);
  VecX z(lifted_dim(kind));
  z.head<3>() = p0;
  if (kind != LiftingKind::kPosition) z.segment<3>(3) = (p0 - p1) / t_theta;
  if (kind == LiftingKind::kPositionVelocityAcceleration) {
    z.segment<3>(6) = (p0 - 2.0 * p1 + p2) / (t_theta * t_theta);
  }
  return z;
}

[[nodiscard]] inline Vec3 unlift(const VecX& z, LiftingKind kind) {
  if (z.size() != lifted_dim(kind)) throw ParameterError("unlift: dimension mismatch");
  return z.head<3>();
}

/// Observable matrix: column j is the lift of history entry j (oldest first).
[[nodiscard]] inline MatX observable_matrix(const std::vector<EmbeddedState>& history,
                                            LiftingKind kind, double t_theta) {
  MatX obs(lifted_dim(kind), static_cast<Eigen::Index>(history.size()));
  for (std::size_t j = 0; j < history.size(); ++j) {
    obs.col(static_cast<Eigen::Index>(j)) = lift(history[j], kind, t_theta);
  }
  return obs;
}

inline constexpr double kPinvCutoff = 1e-10;

// Relative cutoff used by the operator fit. Sensor noise puts O(1e-3)
// relative singular values into the observable matrix; keeping them lets a
// nearly square fit interpolate the noise.
inline constexpr double kFitPinvCutoff = 1e-3;

/// Moore–Penrose pseudo-inverse through the SVD, discarding singular values
/// below `rel_cutoff` times the largest.
[[nodiscard]] inline MatX pseudo_inverse(const MatX& m, double rel_cutoff = kPinvCutoff) {
  const Eigen::JacobiSVD<MatX> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VecX& s = svd.singularValues();
  VecX s_inv = VecX::Zero(s.size());
  const double cutoff = s.size() > 0 ? rel_cutoff * s[0] : 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > cutoff && s[i] > 0.0) s_inv[i] = 1.0 / s[i];
  }
  return svd.matrixV() * s_inv.asDiagonal() * svd.matrixU().transpose();
}

enum class PowerPath { kEigen, kBlend };

struct PowerDiagnostics {
  PowerPath path = PowerPath::kEigen;
  double eigvec_condition = 1.0;
  double reconstruction_error = 0.0;
  bool negative_real_eigenvalue = false;
};

struct PowerResult {
  MatX value;
  PowerDiagnostics diagnostics;
};

inline constexpr double kMaxEigvecCondition = 1e8;
inline constexpr double kMaxReconstructionError = 1e-6;

/// Principal fractional power M^alpha, alpha in (0, 1].
///
/// Computed as real(V Λ^alpha V⁻¹) from the complex eigendecomposition.
/// Eigenvalues on the negative real axis have no real principal power; when
/// 1/alpha is an odd integer they take the real root −|λ|^alpha instead.
/// When the eigenvector basis is ill-conditioned, the decomposition does not
/// reproduce M, or a negative real eigenvalue has no real root, the
/// first-order blend (1 − alpha) I + alpha M is returned and the path is
/// reported as kBlend.
[[nodiscard]] inline PowerResult fractional_power_with_diagnostics(const MatX& m, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ParameterError("fractional_power: alpha must lie in (0, 1]");
  }
  if (m.rows() != m.cols()) throw ParameterError("fractional_power: matrix must be square");
  if (!m.allFinite()) throw DataError("fractional_power: non-finite matrix");

  const Eigen::Index n = m.rows();
  PowerResult result;
  if (alpha == 1.0 || n == 0) {
    result.value = m;
    return result;
  }
  const double m_norm = m.norm();
  if (m_norm == 0.0) {
    result.value = MatX::Zero(n, n);
    return result;
  }

  using CMat = Eigen::MatrixXcd;
  const Eigen::EigenSolver<MatX> eig(m, true);
  auto& diag = result.diagnostics;
  bool ok = eig.info() == Eigen::Success;
  if (ok) {
    const CMat vecs = eig.eigenvectors();
    const Eigen::VectorXcd vals = eig.eigenvalues();
    const Eigen::JacobiSVD<CMat> svd(vecs);
    const auto& sv = svd.singularValues();
    diag.eigvec_condition = sv[sv.size() - 1] > 0.0 ? sv[0] / sv[sv.size() - 1] : kInf;
    if (diag.eigvec_condition > kMaxEigvecCondition) ok = false;

    if (ok) {
      const Eigen::PartialPivLU<CMat> lu(vecs);
      const CMat vinv = lu.inverse();
      const CMat rebuilt = vecs * vals.asDiagonal() * vinv;
      diag.reconstruction_error = (rebuilt - m.cast<std::complex<double>>()).norm() / m_norm;
      if (!(diag.reconstruction_error <= kMaxReconstructionError)) ok = false;

      const double scale = vals.cwiseAbs().maxCoeff();
      const double root = 1.0 / alpha;
      const bool odd_root = std::abs(root - std::round(root)) < 1e-9 &&
                            static_cast<long>(std::round(root)) % 2 == 1;
      Eigen::VectorXcd powered(vals.size());
      for (Eigen::Index i = 0; i < vals.size(); ++i) {
        const std::complex<double> lambda = vals[i];
        if (std::abs(lambda) <= 1e-14 * scale) {
          powered[i] = 0.0;
          continue;
        }
        if (lambda.real() < 0.0 && std::abs(lambda.imag()) <= 1e-12 * std::abs(lambda)) {
          diag.negative_real_eigenvalue = true;
          if (!odd_root) {
            ok = false;
            continue;
          }
          // Real odd root keeps the result real and exactly invertible by
          // the integer power 1/alpha.
          powered[i] = -std::pow(-lambda.real(), alpha);
          continue;
        }
        powered[i] = std::pow(lambda, alpha);
      }
      if (ok) {
        result.value = (vecs * powered.asDiagonal() * vinv).real();
        if (!result.value.allFinite()) ok = false;
      }
    }
  }
  if (!ok) {
    diag.path = PowerPath::kBlend;
    result.value = (1.0 - alpha) * MatX::Identity(n, n) + alpha * m;
  }
  return result;
}

[[nodiscard]] inline MatX fractional_power(const MatX& m, double alpha) {
  return fractional_power_with_diagnostics(m, alpha).value;
}

struct FitConfig {
  LiftingKind lifting = LiftingKind::kPositionVelocityAcceleration;
  double t_theta = 0.6;
  double ts = 0.2;
  double t_kappa = 1.0;
  double pinv_cutoff = kFitPinvCutoff;
};

struct KoopmanModel {
  MatX coarse;  // advances the observables by Tκ
  MatX fine;    // advances the observables by Ts
  LiftingKind lifting = LiftingKind::kPositionVelocityAcceleration;
  double t_theta = 0.6;
  double fit_time = 0.0;
  int history_length = 0;
  PowerDiagnostics power;
};

/// EDMD fit: K̃ = Y X† over consecutive history pairs, then K = K̃^(Ts/Tκ).
[[nodiscard]] inline KoopmanModel fit_operator(const std::vector<EmbeddedState>& history,
                                               const FitConfig& cfg, double fit_time = 0.0) {
  const int count = static_cast<int>(history.size());
  if (count < tracking::kMinFitHistory) {
    throw InsufficientDataError("fit_operator: need at least 5 history entries, got " +
                                std::to_string(count));
  }
  if (count > tracking::kHistoryCapacity) {
    throw ParameterError("fit_operator: history longer than 25 entries");
  }
  if (!(cfg.pinv_cutoff >= 0.0 && cfg.pinv_cutoff < 1.0)) {
    throw ParameterError("fit_operator: pinv_cutoff must lie in [0, 1)");
  }
  if (!(cfg.ts > 0.0) || !(cfg.t_kappa > 0.0) || cfg.ts > cfg.t_kappa) {
    throw ParameterError("fit_operator: need 0 < ts <= t_kappa");
  }
  for (const auto& entry : history) {
    if (!entry.stacked.allFinite()) throw DataError("fit_operator: non-finite history entry");
  }
  const MatX obs = observable_matrix(history, cfg.lifting, cfg.t_theta);
  const MatX x = obs.leftCols(count - 1);
  const MatX y = obs.rightCols(count - 1);

  KoopmanModel model;
  model.lifting = cfg.lifting;
  model.t_theta = cfg.t_theta;
  model.fit_time = fit_time;
  model.history_length = count;
  model.coarse = y * pseudo_inverse(x, cfg.pinv_cutoff);
  auto power = fractional_power_with_diagnostics(model.coarse, cfg.ts / cfg.t_kappa);
  model.fine = std::move(power.value);
  model.power = power.diagnostics;
  return model;
}

/// Rolls the lifted state forward `steps` times with the Ts-step operator and
/// returns the position part of each iterate (μ = 1..steps).
[[nodiscard]] inline std::vector<Vec3> predict(const KoopmanModel& model,
                                               const EmbeddedState& state, int steps) {
  if (steps < 0) throw ParameterError("predict: negative horizon");
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(steps));
  VecX z = lift(state, model.lifting, model.t_theta);
  if (z.size() != model.fine.cols()) throw ParameterError("predict: lifting mismatch");
  for (int mu = 0; mu < steps; ++mu) {
    z = model.fine * z;
    out.push_back(unlift(z, model.lifting));
  }
  return out;
}

}  // namespace koopnav::koopman
