#pragma once

#include "agriscan/common.hpp"

#include <span>
#include <vector>

namespace agriscan {

/// Static 3D k-d tree over a point array. The tree stores a permutation, not
/// a copy of the caller's points; those must outlive the tree.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points, int leaf_size = 16);

  std::size_t size() const { return points_.size(); }

  /// Indices of points with squared distance <= radius^2, ascending.
  std::vector<int> radius_search(const Vec3& center, double radius) const;
  /// Same, appending into `out` (cleared first) without sorting.
  void radius_search_unsorted(const Vec3& center, double radius, std::vector<int>& out) const;
  /// k nearest points, closest first (ties by index).
  std::vector<int> knn(const Vec3& center, int k) const;
  /// Nearest point index and squared distance; index -1 when empty.
  std::pair<int, double> nearest(const Vec3& center) const;

 private:
  struct Node {
    int begin = 0;
    int end = 0;
    int left = -1;
    int right = -1;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    Eigen::AlignedBox3d box;
  };

  int build(int begin, int end, int leaf_size);

  std::span<const Vec3> points_;
  std::vector<int> index_;
  std::vector<Node> nodes_;
};

}  // namespace agriscan
