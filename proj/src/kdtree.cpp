#include "agriscan/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <queue>

namespace agriscan {

KdTree::KdTree(std::span<const Vec3> points, int leaf_size) : points_(points) {
  index_.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) index_[i] = static_cast<int>(i);
  if (!points.empty()) {
    nodes_.reserve(2 * points.size() / static_cast<std::size_t>(leaf_size) + 4);
    build(0, static_cast<int>(points.size()), leaf_size);
  }
}

int KdTree::build(int begin, int end, int leaf_size) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d box;
  box.setEmpty();
  for (int i = begin; i < end; ++i) box.extend(points_[index_[i]]);
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  nodes_[id].box = box;
  if (end - begin <= leaf_size) return id;
  int axis = 0;
  box.sizes().maxCoeff(&axis);
  if (box.sizes()[axis] <= 0.0) return id;
  const int mid = begin + (end - begin) / 2;
  std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                   [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
  nodes_[id].axis = axis;
  nodes_[id].split = points_[index_[mid]][axis];
  const int l = build(begin, mid, leaf_size);
  const int r = build(mid, end, leaf_size);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

void KdTree::radius_search_unsorted(const Vec3& center, double radius, std::vector<int>& out) const {
  out.clear();
  if (nodes_.empty()) return;
  const double r2 = radius * radius;
  int stack[128];
  int sp = 0;
  stack[sp++] = 0;
  while (sp > 0) {
    const Node& node = nodes_[stack[--sp]];
    if (node.box.squaredExteriorDistance(center) > r2) continue;
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int idx = index_[i];
        if ((points_[idx] - center).squaredNorm() <= r2) out.push_back(idx);
      }
      continue;
    }
    stack[sp++] = node.left;
    stack[sp++] = node.right;
  }
}

std::vector<int> KdTree::radius_search(const Vec3& center, double radius) const {
  std::vector<int> out;
  radius_search_unsorted(center, radius, out);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> KdTree::knn(const Vec3& center, int k) const {
  using Entry = std::pair<double, int>;  // max-heap by (distance, index)
  std::priority_queue<Entry> heap;
  if (nodes_.empty() || k <= 0) return {};
  auto worst = [&]() {
    return static_cast<int>(heap.size()) < k ? std::numeric_limits<double>::infinity() : heap.top().first;
  };
  int stack[128];
  int sp = 0;
  stack[sp++] = 0;
  while (sp > 0) {
    const Node& node = nodes_[stack[--sp]];
    if (node.box.squaredExteriorDistance(center) > worst()) continue;
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int idx = index_[i];
        const Entry e{(points_[idx] - center).squaredNorm(), idx};
        if (static_cast<int>(heap.size()) < k) {
          heap.push(e);
        } else if (e < heap.top()) {
          heap.pop();
          heap.push(e);
        }
      }
      continue;
    }
    const bool go_left_first = center[node.axis] < node.split;
    const int near_child = go_left_first ? node.left : node.right;
    const int far_child = go_left_first ? node.right : node.left;
    stack[sp++] = far_child;
    stack[sp++] = near_child;
  }
  std::vector<int> out(heap.size());
  for (int i = static_cast<int>(heap.size()) - 1; i >= 0; --i) {
    out[i] = heap.top().second;
    heap.pop();
  }
  return out;
}

std::pair<int, double> KdTree::nearest(const Vec3& center) const {
  const auto r = knn(center, 1);
  if (r.empty()) return {-1, std::numeric_limits<double>::infinity()};
  return {r[0], (points_[r[0]] - center).squaredNorm()};
}

}  // namespace agriscan
