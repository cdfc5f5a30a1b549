#include "agriscan/raycast.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace agriscan {

namespace {

constexpr int kLeafSize = 4;
constexpr int kBins = 12;

double box_area(const Eigen::AlignedBox3d& b) {
  if (b.isEmpty()) return 0.0;
  const Vec3 d = b.sizes();
  return 2.0 * (d.x() * d.y() + d.y() * d.z() + d.z() * d.x());
}

// Slab test against a float box; widened slightly so rounding never culls a hit.
bool slab(const Eigen::Vector3f& lo, const Eigen::Vector3f& hi, const Vec3& origin, const Vec3& inv_dir,
          double tmin, double tmax, double& entry) {
  for (int k = 0; k < 3; ++k) {
    const double l = static_cast<double>(lo[k]);
    const double h = static_cast<double>(hi[k]);
    double t0 = (l - origin[k]) * inv_dir[k];
    double t1 = (h - origin[k]) * inv_dir[k];
    if (std::isnan(t0)) t0 = -std::numeric_limits<double>::infinity();
    if (std::isnan(t1)) t1 = std::numeric_limits<double>::infinity();
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1 * (1.0 + 4e-7) + 1e-9);
    if (tmin > tmax) return false;
  }
  entry = tmin;
  return true;
}

}  // namespace

RayCaster::RayCaster(const TriangleMesh& mesh) : mesh_(mesh) {
  const int n = static_cast<int>(mesh_.triangles.size());
  order_.resize(n);
  std::vector<Vec3> centroids(n);
  std::vector<Eigen::AlignedBox3d> boxes(n);
  for (int i = 0; i < n; ++i) {
    order_[i] = i;
    const auto& t = mesh_.triangles[i];
    boxes[i].setEmpty();
    for (int k = 0; k < 3; ++k) boxes[i].extend(mesh_.vertices[t[k]]);
    centroids[i] = boxes[i].center();
  }
  nodes_.reserve(2 * n / kLeafSize + 2);
  if (n > 0) build(0, n, centroids, boxes);
  v0_.resize(n);
  e1_.resize(n);
  e2_.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& t = mesh_.triangles[order_[i]];
    v0_[i] = mesh_.vertices[t[0]];
    e1_[i] = mesh_.vertices[t[1]] - v0_[i];
    e2_[i] = mesh_.vertices[t[2]] - v0_[i];
  }
}

int RayCaster::build(int begin, int end, std::vector<Vec3>& centroids, std::vector<Eigen::AlignedBox3d>& boxes) {
  const int index = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d bounds;
  Eigen::AlignedBox3d cbounds;
  bounds.setEmpty();
  cbounds.setEmpty();
  for (int i = begin; i < end; ++i) {
    bounds.extend(boxes[order_[i]]);
    cbounds.extend(centroids[order_[i]]);
  }
  // Round outward so the float box contains the double box.
  Eigen::Vector3f lo, hi;
  for (int k = 0; k < 3; ++k) {
    lo[k] = std::nextafter(static_cast<float>(bounds.min()[k]), -std::numeric_limits<float>::infinity());
    hi[k] = std::nextafter(static_cast<float>(bounds.max()[k]), std::numeric_limits<float>::infinity());
  }
  nodes_[index].lo = lo;
  nodes_[index].hi = hi;

  const int count = end - begin;
  int axis = 0;
  cbounds.sizes().maxCoeff(&axis);
  const double extent = cbounds.sizes()[axis];
  if (count <= kLeafSize || extent <= 0.0) {
    nodes_[index].first = begin;
    nodes_[index].count = count;
    return index;
  }

  // Binned SAH along the widest centroid axis.
  std::array<Eigen::AlignedBox3d, kBins> bin_boxes;
  std::array<int, kBins> bin_counts{};
  for (auto& b : bin_boxes) b.setEmpty();
  const double lo_c = cbounds.min()[axis];
  auto bin_of = [&](int tri) {
    int b = static_cast<int>((centroids[tri][axis] - lo_c) / extent * kBins);
    return std::clamp(b, 0, kBins - 1);
  };
  for (int i = begin; i < end; ++i) {
    const int b = bin_of(order_[i]);
    bin_counts[b]++;
    bin_boxes[b].extend(boxes[order_[i]]);
  }
  double best_cost = std::numeric_limits<double>::infinity();
  int best_split = -1;
  for (int split = 1; split < kBins; ++split) {
    Eigen::AlignedBox3d left, right;
    left.setEmpty();
    right.setEmpty();
    int nl = 0, nr = 0;
    for (int b = 0; b < split; ++b) {
      left.extend(bin_boxes[b]);
      nl += bin_counts[b];
    }
    for (int b = split; b < kBins; ++b) {
      right.extend(bin_boxes[b]);
      nr += bin_counts[b];
    }
    if (nl == 0 || nr == 0) continue;
    const double cost = box_area(left) * nl + box_area(right) * nr;
    if (cost < best_cost) {
      best_cost = cost;
      best_split = split;
    }
  }
  int mid;
  if (best_split < 0) {
    mid = begin + count / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return centroids[a][axis] < centroids[b][axis]; });
  } else {
    auto it = std::partition(order_.begin() + begin, order_.begin() + end,
                             [&](int tri) { return bin_of(tri) < best_split; });
    mid = static_cast<int>(it - order_.begin());
  }
  build(begin, mid, centroids, boxes);
  const int right = build(mid, end, centroids, boxes);
  nodes_[index].first = right;
  nodes_[index].count = 0;
  return index;
}

template <bool AnyHit>
bool RayCaster::traverse(const Vec3& origin, const Vec3& direction, double tmin, double tmax, RayHit* hit) const {
  if (nodes_.empty()) return false;
  const Vec3 inv_dir(1.0 / direction.x(), 1.0 / direction.y(), 1.0 / direction.z());
  int stack[256];
  int sp = 0;
  stack[sp++] = 0;
  bool found = false;
  double best = tmax;
  while (sp > 0) {
    const Node& node = nodes_[stack[--sp]];
    double entry;
    if (!slab(node.lo, node.hi, origin, inv_dir, tmin, best, entry)) continue;
    if (node.count > 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        // Moller-Trumbore with inclusive edges.
        const Vec3 p = direction.cross(e2_[i]);
        const double det = e1_[i].dot(p);
        if (std::abs(det) < 1e-300) continue;
        const double inv_det = 1.0 / det;
        const Vec3 s = origin - v0_[i];
        const double u = s.dot(p) * inv_det;
        if (u < -1e-12 || u > 1.0 + 1e-12) continue;
        const Vec3 q = s.cross(e1_[i]);
        const double v = direction.dot(q) * inv_det;
        if (v < -1e-12 || u + v > 1.0 + 1e-12) continue;
        const double t = e2_[i].dot(q) * inv_det;
        if (AnyHit) {
          if (t > tmin && t < tmax) return true;
          continue;
        }
        if (t > tmin && t <= best) {
          // ties between triangles resolve to the lower mesh index
          if (found && t == best && order_[i] > hit->triangle) continue;
          best = t;
          found = true;
          hit->distance = t;
          hit->triangle = order_[i];
          hit->u = u;
          hit->v = v;
        }
      }
    } else {
      const int left = static_cast<int>(&node - nodes_.data()) + 1;
      const int right = node.first;
      if (sp + 2 > 256) continue;
      // Near child last so it pops first.
      const Node& ln = nodes_[left];
      const Node& rn = nodes_[right];
      double el, er;
      const bool hl = slab(ln.lo, ln.hi, origin, inv_dir, tmin, best, el);
      const bool hr = slab(rn.lo, rn.hi, origin, inv_dir, tmin, best, er);
      if (hl && hr) {
        if (el <= er) {
          stack[sp++] = right;
          stack[sp++] = left;
        } else {
          stack[sp++] = left;
          stack[sp++] = right;
        }
      } else if (hl) {
        stack[sp++] = left;
      } else if (hr) {
        stack[sp++] = right;
      }
    }
  }
  return found;
}

std::optional<RayHit> RayCaster::intersect(const Vec3& origin, const Vec3& direction, double max_distance,
                                           double min_distance) const {
  RayHit hit;
  if (traverse<false>(origin, direction, min_distance, max_distance, &hit)) return hit;
  return std::nullopt;
}

bool RayCaster::occluded(const Vec3& origin, const Vec3& direction, double max_distance, double min_distance) const {
  return traverse<true>(origin, direction, min_distance, max_distance, nullptr);
}

}  // namespace agriscan
