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

#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>

namespace koopnav {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Invalid argument or configuration (bad dimensions, out-of-range parameters).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data that cannot be used (non-finite values, malformed history).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Not enough samples to perform an estimate.
class InsufficientDataError : public DataError {
 public:
  using DataError::DataError;
};

/// Scenario document failed to parse or validate.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Derived>
[[nodiscard]] bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

/// Relative Frobenius distance ‖a − b‖ / max(‖b‖, tiny).
template <typename DA, typename DB>
[[nodiscard]] double relative_frobenius(const Eigen::MatrixBase<DA>& a,
                                        const Eigen::MatrixBase<DB>& b) {
  const double denom = std::max(b.norm(), std::numeric_limits<double>::min());
  return (a - b).norm() / denom;
}

}  // namespace koopnav
