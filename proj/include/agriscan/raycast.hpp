#pragma once

#include "agriscan/geometry.hpp"

#include <optional>
#include <vector>

namespace agriscan {

struct RayHit {
  double distance = 0.0;  // along the (unit or not) direction, in direction units
  int triangle = -1;
  double u = 0.0;  // barycentric weight of vertex 1
  double v = 0.0;  // barycentric weight of vertex 2
};

/// Bounding volume hierarchy over a triangle mesh (binned SAH build).
/// Immutable after construction; queries are thread-safe.
class RayCaster {
 public:
  explicit RayCaster(const TriangleMesh& mesh);

  /// Closest hit with distance in (min_distance, max_distance].
  std::optional<RayHit> intersect(const Vec3& origin, const Vec3& direction, double max_distance,
                                  double min_distance = 0.0) const;
  /// True if any triangle is hit with distance in (min_distance, max_distance).
  bool occluded(const Vec3& origin, const Vec3& direction, double max_distance, double min_distance = 0.0) const;

  const TriangleMesh& mesh() const { return mesh_; }

 private:
  struct Node {
    Eigen::Vector3f lo, hi;
    int first = 0;  // first primitive (leaf) or right child (inner)
    int count = 0;  // > 0 for leaves
  };

  int build(int begin, int end, std::vector<Vec3>& centroids, std::vector<Eigen::AlignedBox3d>& boxes);
  template <bool AnyHit>
  bool traverse(const Vec3& origin, const Vec3& direction, double tmin, double tmax, RayHit* hit) const;

  TriangleMesh mesh_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
  // Per-triangle precomputed vertex / edge data in order_ sequence.
  std::vector<Vec3> v0_, e1_, e2_;
};

}  // namespace agriscan
