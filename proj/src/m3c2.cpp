#include "agriscan/m3c2.hpp"

#include "agriscan/kdtree.hpp"
#include "agriscan/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace agriscan {

void M3C2Params::validate() const {
  auto finite_pos = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!finite_pos(normal_scale) || !finite_pos(projection_radius) || !finite_pos(max_depth)) {
    fail(ErrorCode::InvalidParams, "M3C2 scales must be positive");
  }
  if (projection_radius > normal_scale) fail(ErrorCode::InvalidParams, "projection radius exceeds normal scale");
  if (!(core_point_subsample > 0.0 && core_point_subsample <= 1.0)) {
    fail(ErrorCode::InvalidParams, "core point ratio must be in (0, 1]");
  }
  if (min_normal_neighbors < 3) fail(ErrorCode::InvalidParams, "normals need at least three neighbors");
}

std::vector<int> m3c2_core_indices(std::size_t reference_size, double ratio) {
  const auto count = static_cast<std::size_t>(std::floor(static_cast<double>(reference_size) * ratio));
  std::vector<int> idx;
  idx.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const auto i = static_cast<std::size_t>(std::floor(static_cast<double>(k) / ratio));
    if (i >= reference_size) break;
    idx.push_back(static_cast<int>(i));
  }
  return idx;
}

namespace {

// Mean of the points inside the cylinder (center c, axis n); indices must be
// ascending. Returns the count.
int cylinder_mean(const std::vector<Vec3>& pts, const std::vector<int>& candidates, const Vec3& c, const Vec3& n,
                  double radius, double half_length, Vec3& mean) {
  mean.setZero();
  int count = 0;
  const double r2 = radius * radius;
  for (int i : candidates) {
    const Vec3 v = pts[static_cast<std::size_t>(i)] - c;
    const double h = v.dot(n);
    if (std::abs(h) > half_length) continue;
    if ((v - h * n).squaredNorm() > r2) continue;
    mean += pts[static_cast<std::size_t>(i)];
    ++count;
  }
  if (count > 0) mean /= static_cast<double>(count);
  return count;
}

}  // namespace

M3C2Result compute_m3c2(const PointCloud& reference, const PointCloud& compared, const M3C2Params& params,
                        const std::vector<Vec3>* core_points) {
  params.validate();
  if (reference.empty()) fail(ErrorCode::EmptyCloud, "M3C2 reference cloud is empty");

  std::vector<Vec3> cores;
  if (core_points) {
    cores = *core_points;
  } else {
    for (int i : m3c2_core_indices(reference.size(), params.core_point_subsample)) {
      cores.push_back(reference.points[static_cast<std::size_t>(i)]);
    }
  }

  const KdTree ref_tree(reference.points);
  const KdTree cmp_tree(compared.points);
  NormalEstimation orient;
  orient.orientation = params.orientation;
  orient.viewpoint = params.viewpoint;
  const double search = std::sqrt(params.projection_radius * params.projection_radius +
                                  params.max_depth * params.max_depth);

  struct Slot {
    int state = 0;  // 0 ok, 1 no normal, 2 no compared
    M3C2Entry entry;
  };
  std::vector<Slot> slots(cores.size());
  parallel_for(cores.size(), params.threads, [&](std::size_t k) {
    Slot& s = slots[k];
    const Vec3& c = cores[k];
    const std::vector<int> nb = ref_tree.radius_search(c, 0.5 * params.normal_scale);
    std::vector<int> sorted_nb = nb;
    std::sort(sorted_nb.begin(), sorted_nb.end());
    const auto n = static_cast<int>(sorted_nb.size()) >= params.min_normal_neighbors
                       ? pca_normal(reference.points, sorted_nb)
                       : std::nullopt;
    if (!n) {
      s.state = 1;
      return;
    }
    const Vec3 normal = orient_normal(*n, c, orient);
    std::vector<int> ref_c = ref_tree.radius_search(c, search);
    std::vector<int> cmp_c;
    if (!compared.empty()) cmp_c = cmp_tree.radius_search(c, search);
    std::sort(ref_c.begin(), ref_c.end());
    std::sort(cmp_c.begin(), cmp_c.end());
    Vec3 ref_mean, cmp_mean;
    const int nr = cylinder_mean(reference.points, ref_c, c, normal, params.projection_radius, params.max_depth,
                                 ref_mean);
    const int nc = cylinder_mean(compared.points, cmp_c, c, normal, params.projection_radius, params.max_depth,
                                 cmp_mean);
    if (nr == 0 || nc == 0) {
      s.state = 2;
      return;
    }
    s.entry.core_index = static_cast<int>(k);
    s.entry.core = c;
    s.entry.normal = normal;
    s.entry.distance = (cmp_mean - ref_mean).dot(normal);
    s.entry.reference_count = nr;
    s.entry.compared_count = nc;
  });

  M3C2Result result;
  result.core_points = cores.size();
  for (const Slot& s : slots) {
    if (s.state == 0) {
      result.entries.push_back(s.entry);
    } else if (s.state == 1) {
      ++result.no_normal;
    } else {
      ++result.no_compared;
    }
  }
  return result;
}

}  // namespace agriscan
