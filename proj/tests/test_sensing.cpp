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

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "koopnav/sensing.hpp"

namespace koopnav::sensing {
namespace {

std::vector<world::ObstaclePose> one_obstacle(const Vec3& center, double radius) {
  return {world::ObstaclePose{1, center, radius}};
}

TEST(SampleCloud, OutOfRangeObstacleIsSilent) {
  std::mt19937_64 rng(1);
  SensorSpec spec;
  spec.range = 20.0;
  const auto cloud = sample_cloud(Vec3::Zero(), one_obstacle(Vec3(25.0, 0.0, 0.0), 1.0), spec, rng);
  EXPECT_TRUE(cloud.points.empty());
}

TEST(SampleCloud, NoiselessPointsLieOnSphere) {
  std::mt19937_64 rng(2);
  SensorSpec spec;
  spec.noise_sigma = 0.0;
  const Vec3 c(5.0, 0.0, 2.0);
  const auto cloud = sample_cloud(Vec3(0.0, 0.0, 2.0), one_obstacle(c, 1.0), spec, rng);
  ASSERT_EQ(cloud.points.size(), 120u);
  for (const auto& p : cloud.points) {
    EXPECT_NEAR((p - c).norm(), 1.0, 1e-12);
    // UAV-facing hemisphere.
    EXPECT_LE((p - c).x(), 1e-12);
  }
}

TEST(SampleCloud, RadialNoiseMatchesSigma) {
  SensorSpec spec;
  spec.noise_sigma = 0.01;
  spec.rays_per_obstacle = 200;
  const Vec3 c(5.0, 0.0, 2.0);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    const auto cloud = sample_cloud(Vec3(0.0, 0.0, 2.0), one_obstacle(c, 1.0), spec, rng);
    double mean = 0.0;
    for (const auto& p : cloud.points) mean += (p - c).norm() - 1.0;
    mean /= static_cast<double>(cloud.points.size());
    double var = 0.0;
    for (const auto& p : cloud.points) var += std::pow((p - c).norm() - 1.0 - mean, 2);
    const double sd = std::sqrt(var / static_cast<double>(cloud.points.size() - 1));
    EXPECT_GE(sd, 0.005) << "seed " << seed;
    EXPECT_LE(sd, 0.02) << "seed " << seed;
  }
}

TEST(FilterCloud, GroundReturnsRemoved) {
  SensorSpec spec;
  PointCloud cloud;
  cloud.points = {Vec3(1.0, 0.0, 0.0), Vec3(2.0, 0.0, 0.01), Vec3(3.0, 0.0, -1.0)};
  EXPECT_TRUE(filter_cloud(cloud, Vec3(0.0, 0.0, 2.0), spec).points.empty());
}

TEST(FilterCloud, SelfReturnRemoved) {
  SensorSpec spec;
  PointCloud cloud;
  cloud.points = {Vec3(0.0, 0.0, 2.0)};
  EXPECT_TRUE(filter_cloud(cloud, Vec3(0.0, 0.0, 2.0), spec).points.empty());
}

TEST(FilterCloud, CountsMatch) {
  SensorSpec spec;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> coord(-3.0, 3.0);
  PointCloud cloud;
  const Vec3 uav(0.0, 0.0, 1.0);
  int ground = 0;
  int self = 0;
  for (int i = 0; i < 500; ++i) {
    const Vec3 p(coord(rng), coord(rng), coord(rng));
    cloud.points.push_back(p);
    if (p.z() < spec.ground_z_cut) {
      ++ground;
    } else if ((p - uav).norm() <= spec.self_radius_cut) {
      ++self;
    }
  }
  EXPECT_EQ(filter_cloud(cloud, uav, spec).points.size(), cloud.points.size() - ground - self);
}

TEST(Cluster, CoincidentPair) {
  PointCloud cloud;
  cloud.points = {Vec3(1.0, 2.0, 3.0), Vec3(1.0, 2.0, 3.0)};
  const auto out = cluster(cloud, 0.5, 1);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].centroid, Vec3(1.0, 2.0, 3.0));
  EXPECT_EQ(out[0].radius, 0.0);
}

TEST(Cluster, CubeCorners) {
  PointCloud cloud;
  for (int i = 0; i < 8; ++i) {
    cloud.points.emplace_back(0.1 * (i & 1), 0.1 * ((i >> 1) & 1), 0.1 * ((i >> 2) & 1));
  }
  const auto out = cluster(cloud, 0.2, 3);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_LE((out[0].centroid - Vec3::Constant(0.05)).norm(), 1e-15);
  EXPECT_NEAR(out[0].radius, 0.1 * std::sqrt(3.0) / 2.0, 1e-15);
}

TEST(Cluster, EmptyCloud) { EXPECT_TRUE(cluster(PointCloud{}, 0.5, 3).empty()); }

TEST(Cluster, RejectsBadLinkDistance) {
  EXPECT_THROW((void)cluster(PointCloud{}, 0.0, 3), ParameterError);
}

TEST(Cluster, SmallGroupsDropped) {
  PointCloud cloud;
  cloud.points = {Vec3::Zero(), Vec3(0.1, 0.0, 0.0), Vec3(10.0, 0.0, 0.0)};
  const auto out = cluster(cloud, 0.5, 2);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].count, 2);
}

// Brute-force components by repeated relaxation of labels.
std::vector<int> brute_labels(const std::vector<Vec3>& pts, double link) {
  std::vector<int> label(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) label[i] = static_cast<int>(i);
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t j = 0; j < pts.size(); ++j) {
        if ((pts[i] - pts[j]).norm() <= link && label[j] < label[i]) {
          label[i] = label[j];
          changed = true;
        }
      }
    }
  }
  return label;
}

TEST(Cluster, SeparatedGroupsMatchBruteForce) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> gauss(0.0, 0.05);
  PointCloud cloud;
  for (int i = 0; i < 40; ++i) {
    const Vec3 base = (i % 2 == 0) ? Vec3::Zero() : Vec3(5.0, 0.0, 0.0);
    cloud.points.push_back(base + Vec3(gauss(rng), gauss(rng), gauss(rng)));
  }
  const auto out = cluster(cloud, 0.5, 3);
  ASSERT_EQ(out.size(), 2u);
  const auto labels = brute_labels(cloud.points, 0.5);
  for (const auto& obs : out) {
    Vec3 sum = Vec3::Zero();
    int n = 0;
    const int lab = labels[static_cast<std::size_t>(obs.members.front())];
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
      if (labels[i] != lab) continue;
      sum += cloud.points[i];
      ++n;
    }
    ASSERT_EQ(n, obs.count);
    const Vec3 centroid = sum / n;
    double radius = 0.0;
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
      if (labels[i] == lab) radius = std::max(radius, (cloud.points[i] - centroid).norm());
    }
    EXPECT_LE((obs.centroid - centroid).norm(), 1e-12);
    EXPECT_NEAR(obs.radius, radius, 1e-12);
  }
}

TEST(Cluster, MembersWithinRadius) {
  std::mt19937_64 rng(4);
  SensorSpec spec;
  const auto cloud = sample_cloud(Vec3(0.0, 0.0, 2.0),
                                  {world::ObstaclePose{1, Vec3(4.0, 1.0, 2.0), 0.8},
                                   world::ObstaclePose{2, Vec3(-3.0, 2.0, 2.0), 0.4}},
                                  spec, rng);
  for (const auto& obs : cluster(cloud, spec.link_dist, spec.min_cluster_size)) {
    for (int idx : obs.members) {
      EXPECT_LE((cloud.points[static_cast<std::size_t>(idx)] - obs.centroid).norm(),
                obs.radius + 1e-12);
    }
  }
}

TEST(Cluster, PermutationInvariant) {
  std::mt19937_64 rng(12);
  SensorSpec spec;
  auto cloud = sample_cloud(Vec3(0.0, 0.0, 2.0),
                            {world::ObstaclePose{1, Vec3(4.0, 1.0, 2.0), 0.8},
                             world::ObstaclePose{2, Vec3(-3.0, 2.0, 2.0), 0.4}},
                            spec, rng);
  auto summarize = [&](const PointCloud& c) {
    std::set<std::tuple<long, long, long, int>> keys;
    for (const auto& o : cluster(c, spec.link_dist, spec.min_cluster_size)) {
      keys.insert({std::lround(o.centroid.x() * 1e9), std::lround(o.centroid.y() * 1e9),
                   std::lround(o.centroid.z() * 1e9), o.count});
    }
    return keys;
  };
  const auto before = summarize(cloud);
  std::shuffle(cloud.points.begin(), cloud.points.end(), rng);
  EXPECT_EQ(summarize(cloud), before);
  EXPECT_EQ(before.size(), 2u);
}

TEST(Cluster, NoiselessRecovery) {
  std::mt19937_64 rng(6);
  SensorSpec spec;
  spec.noise_sigma = 0.0;
  const Vec3 c(6.0, -2.0, 2.5);
  const auto cloud = sample_cloud(Vec3(0.0, 0.0, 2.0), one_obstacle(c, 0.7), spec, rng);
  const auto out = cluster(filter_cloud(cloud, Vec3(0.0, 0.0, 2.0), spec), spec.link_dist,
                           spec.min_cluster_size);
  ASSERT_EQ(out.size(), 1u);
  const double bias = (out[0].centroid - c).norm();
  EXPECT_LE(bias, 0.7);
  // One-sided sampling pulls the centroid toward the sensor, so rim points
  // sit up to sqrt(R² + bias²) away; the triangle inequality bounds it.
  EXPECT_LE(out[0].radius, 0.7 + bias + 1e-9);
  EXPECT_GE(out[0].radius, 0.7 - 1e-9);
}

}  // namespace
}  // namespace koopnav::sensing
