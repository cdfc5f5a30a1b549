#pragma once

#include "agriscan/geometry.hpp"
#include "agriscan/kdtree.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace agriscan {

/// Centroid of each occupied voxel, ordered by voxel key (x, then y, then z).
/// Per-point attributes other than position are dropped.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size);

/// Every k-th point so that at most `max_points` remain.
PointCloud stride_subsample(const PointCloud& cloud, std::size_t max_points);

struct SurfaceSamples {
  PointCloud cloud;        // positions and face normals
  std::vector<int> triangle;  // source triangle per sample
};

/// Area-weighted random samples on the mesh, `density` points per m^2
/// (count rounded), deterministic for a given seed. Only triangles listed in
/// `subset` are used when it is non-empty.
SurfaceSamples sample_mesh_surface(const TriangleMesh& mesh, double density, std::uint64_t seed,
                                   std::span<const int> subset = {});

struct NormalEstimation {
  double radius = 0.005;
  int min_neighbors = 3;
  Vec3 orientation = Vec3::UnitZ();  // normals flipped to agree with this direction
  std::optional<Vec3> viewpoint;     // overrides `orientation` when set
};

/// PCA plane normal for one neighborhood: centroid and covariance summed in
/// the given index order, smallest-eigenvalue eigenvector. Returns nullopt
/// for fewer than three points or a degenerate spread.
std::optional<Vec3> pca_normal(std::span<const Vec3> points, std::span<const int> indices);

/// Orients n to agree with the direction / viewpoint of `opts` at point p.
Vec3 orient_normal(const Vec3& n, const Vec3& p, const NormalEstimation& opts);

/// Per-point normals; points whose neighborhood is too small get a zero
/// normal. Throws NoNormals when no point could be given one.
std::vector<Vec3> estimate_normals(std::span<const Vec3> points, const KdTree& tree, const NormalEstimation& opts,
                                   int threads = 1);

/// Median distance to the nearest other point.
double median_nn_spacing(std::span<const Vec3> points, const KdTree& tree);

}  // namespace agriscan
