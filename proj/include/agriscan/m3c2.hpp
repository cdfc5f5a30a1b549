#pragma once

#include "agriscan/cloud_ops.hpp"
#include "agriscan/geometry.hpp"

#include <optional>
#include <vector>

namespace agriscan {

struct M3C2Params {
  double normal_scale = 0.010;       // D, diameter of the normal neighborhood
  double projection_radius = 0.005;  // d, cylinder radius
  double max_depth = 0.020;          // cylinder half-length
  double core_point_subsample = 1.0; // ratio of reference points used as cores
  int min_normal_neighbors = 10;
  Vec3 orientation = Vec3::UnitZ();
  std::optional<Vec3> viewpoint;
  int threads = 1;

  void validate() const;
};

struct M3C2Entry {
  int core_index = 0;  // into the core point list
  Vec3 core = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
  double distance = 0.0;  // signed, along normal, compared minus reference
  int reference_count = 0;
  int compared_count = 0;
};

struct M3C2Result {
  std::vector<M3C2Entry> entries;  // ascending core_index
  std::size_t core_points = 0;
  std::size_t no_normal = 0;    // too few reference neighbors
  std::size_t no_compared = 0;  // empty compared cylinder
};

/// Deterministic core selection: indices floor(k / ratio) of the reference.
std::vector<int> m3c2_core_indices(std::size_t reference_size, double ratio);

/// Signed M3C2 distances. Cores are drawn from the reference unless given.
/// Neighborhood sums run in ascending point index order.
M3C2Result compute_m3c2(const PointCloud& reference, const PointCloud& compared, const M3C2Params& params,
                        const std::vector<Vec3>* core_points = nullptr);

}  // namespace agriscan
