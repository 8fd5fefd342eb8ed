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

#include <span>
#include <vector>

#include "koopnav/common.hpp"

namespace koopnav::filters {

/// Least-squares polynomial smoothing weights for a window of `window`
/// uniformly spaced samples. Row r holds the weights that evaluate the fitted
/// polynomial at sample r of the window.
[[nodiscard]] inline MatX savgol_weights(int window, int order) {
  if (window < 1 || window % 2 == 0) {
    throw ParameterError("savgol: window must be a positive odd integer");
  }
  if (order < 0 || order >= window) {
    throw ParameterError("savgol: order must satisfy 0 <= order < window");
  }
  const int half = window / 2;
  MatX vander(window, order + 1);
  for (int r = 0; r < window; ++r) {
    double x = 1.0;
    for (int c = 0; c <= order; ++c) {
      vander(r, c) = x;
      x *= static_cast<double>(r - half);
    }
  }
  // Hat matrix V (V^T V)^{-1} V^T, computed through a QR for conditioning.
  const Eigen::HouseholderQR<MatX> qr(vander);
  const MatX q = qr.householderQ() * MatX::Identity(window, order + 1);
  return q * q.transpose();
}

/// Smooths one uniformly sampled sequence. Interior samples use the centred
/// window; the first and last half-window samples are evaluated on the fit of
/// the first / last full window. Sequences shorter than the window are
/// returned unchanged.
[[nodiscard]] inline std::vector<double> savgol_smooth(std::span<const double> data,
                                                       int window, int order) {
  const MatX weights = savgol_weights(window, order);
  const int n = static_cast<int>(data.size());
  std::vector<double> out(data.begin(), data.end());
  if (n < window) return out;
  const int half = window / 2;
  auto apply = [&](int row, int start) {
    double acc = 0.0;
    for (int k = 0; k < window; ++k) acc += weights(row, k) * data[static_cast<std::size_t>(start + k)];
    return acc;
  };
  for (int i = 0; i < n; ++i) {
    if (i < half) {
      out[static_cast<std::size_t>(i)] = apply(i, 0);
    } else if (i >= n - half) {
      out[static_cast<std::size_t>(i)] = apply(window - (n - i), n - window);
    } else {
      out[static_cast<std::size_t>(i)] = apply(half, i - half);
    }
  }
  return out;
}

}  // namespace koopnav::filters
