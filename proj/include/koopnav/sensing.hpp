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

// Simulated LiDAR returns and the perception chain that turns them into
// per-obstacle centroid / bounding-sphere observations.

#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "koopnav/common.hpp"
#include "koopnav/world.hpp"

namespace koopnav::sensing {

struct PointCloud {
  std::vector<Vec3> points;
  double stamp = 0.0;
};

struct ClusterObservation {
  Vec3 centroid = Vec3::Zero();
  double radius = 0.0;
  int count = 0;
  std::vector<int> members;  // indices into the clustered cloud
};

struct SensorSpec {
  double range = 20.0;
  double noise_sigma = 0.01;
  int rays_per_obstacle = 120;
  double ground_z_cut = 0.05;
  double self_radius_cut = 0.5;
  double link_dist = 0.5;
  int min_cluster_size = 3;
};

inline void validate(const SensorSpec& spec) {
  if (!(spec.range > 0.0)) throw ParameterError("sensor range must be > 0");
  if (!(spec.noise_sigma >= 0.0)) throw ParameterError("noise_sigma must be >= 0");
  if (spec.rays_per_obstacle < 0) throw ParameterError("rays_per_obstacle must be >= 0");
  if (!(spec.link_dist > 0.0)) throw ParameterError("link_dist must be > 0");
  if (spec.min_cluster_size < 1) throw ParameterError("min_cluster_size must be >= 1");
}

/// Emits points on the UAV-facing hemisphere of every obstacle whose center is
/// within range. Directions are uniform on that hemisphere.
template <typename Rng>
[[nodiscard]] PointCloud sample_cloud(const Vec3& uav_pos,
                                      const std::vector<world::ObstaclePose>& truth,
                                      const SensorSpec& spec, Rng& rng,
                                      double stamp = 0.0) {
  PointCloud cloud;
  cloud.stamp = stamp;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const auto& obstacle : truth) {
    const Vec3 to_uav = uav_pos - obstacle.center;
    if (to_uav.norm() > spec.range) continue;
    for (int ray = 0; ray < spec.rays_per_obstacle; ++ray) {
      Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
      while (dir.squaredNorm() < 1e-24) dir = Vec3(gauss(rng), gauss(rng), gauss(rng));
      dir.normalize();
      if (dir.dot(to_uav) < 0.0) dir = -dir;
      Vec3 point = obstacle.center + obstacle.radius * dir;
      if (spec.noise_sigma > 0.0) {
        point += spec.noise_sigma * Vec3(gauss(rng), gauss(rng), gauss(rng));
      }
      cloud.points.push_back(point);
    }
  }
  return cloud;
}

/// Drops ground returns (z below the cut) and self returns (within the self radius).
[[nodiscard]] inline PointCloud filter_cloud(const PointCloud& cloud, const Vec3& uav_pos,
                                             const SensorSpec& spec) {
  PointCloud out;
  out.stamp = cloud.stamp;
  out.points.reserve(cloud.points.size());
  for (const auto& point : cloud.points) {
    if (point.z() < spec.ground_z_cut) continue;
    if ((point - uav_pos).norm() <= spec.self_radius_cut) continue;
    out.points.push_back(point);
  }
  return out;
}

namespace detail {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace detail

/// Euclidean clustering: connected components of the "within link_dist"
/// graph. Each surviving cluster reports its mean point and the largest
/// member distance from that mean. Clusters are ordered by their
/// lowest-index member.
[[nodiscard]] inline std::vector<ClusterObservation> cluster(const PointCloud& cloud,
                                                             double link_dist,
                                                             int min_size) {
  if (!(link_dist > 0.0)) throw ParameterError("cluster: link_dist must be > 0");
  const auto& pts = cloud.points;
  const std::size_t n = pts.size();
  detail::DisjointSet sets(n);
  const double link2 = link_dist * link_dist;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if ((pts[i] - pts[j]).squaredNorm() <= link2) sets.unite(i, j);
    }
  }

  std::vector<std::vector<int>> groups;
  std::vector<int> root_to_group(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = sets.find(i);
    if (root_to_group[root] < 0) {
      root_to_group[root] = static_cast<int>(groups.size());
      groups.emplace_back();
    }
    groups[static_cast<std::size_t>(root_to_group[root])].push_back(static_cast<int>(i));
  }

  std::vector<ClusterObservation> out;
  for (auto& members : groups) {
    if (static_cast<int>(members.size()) < min_size) continue;
    ClusterObservation obs;
    Vec3 sum = Vec3::Zero();
    for (int idx : members) sum += pts[static_cast<std::size_t>(idx)];
    obs.centroid = sum / static_cast<double>(members.size());
    double radius = 0.0;
    for (int idx : members) {
      radius = std::max(radius, (obs.centroid - pts[static_cast<std::size_t>(idx)]).norm());
    }
    obs.radius = radius;
    obs.count = static_cast<int>(members.size());
    obs.members = std::move(members);
    out.push_back(std::move(obs));
  }
  return out;
}

}  // namespace koopnav::sensing
