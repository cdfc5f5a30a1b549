#include "agriscan/cloud_ops.hpp"

#include "agriscan/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <tuple>

namespace agriscan {

PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size) {
  if (!(voxel_size > 0.0)) fail(ErrorCode::InvalidParams, "voxel size must be positive");
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
  struct Acc {
    Vec3 sum = Vec3::Zero();
    std::size_t count = 0;
  };
  std::map<Key, Acc> cells;
  for (const Vec3& p : cloud.points) {
    const Key key{static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
                  static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
                  static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
    Acc& a = cells[key];
    a.sum += p;
    ++a.count;
  }
  PointCloud out;
  out.points.reserve(cells.size());
  for (const auto& [key, a] : cells) out.points.push_back(a.sum / static_cast<double>(a.count));
  return out;
}

PointCloud stride_subsample(const PointCloud& cloud, std::size_t max_points) {
  if (max_points == 0 || cloud.size() <= max_points) return cloud;
  const std::size_t stride = (cloud.size() + max_points - 1) / max_points;
  PointCloud out;
  const bool normals = cloud.has_normals();
  for (std::size_t i = 0; i < cloud.size(); i += stride) {
    out.points.push_back(cloud.points[i]);
    if (normals) out.normals.push_back(cloud.normals[i]);
  }
  return out;
}

SurfaceSamples sample_mesh_surface(const TriangleMesh& mesh, double density, std::uint64_t seed,
                                   std::span<const int> subset) {
  if (!(density > 0.0)) fail(ErrorCode::InvalidParams, "sampling density must be positive");
  std::vector<int> tris;
  if (subset.empty()) {
    tris.resize(mesh.triangles.size());
    for (std::size_t i = 0; i < tris.size(); ++i) tris[i] = static_cast<int>(i);
  } else {
    tris.assign(subset.begin(), subset.end());
  }
  std::vector<double> cumulative(tris.size());
  double total = 0.0;
  for (std::size_t i = 0; i < tris.size(); ++i) {
    total += mesh.triangle_area(static_cast<std::size_t>(tris[i]));
    cumulative[i] = total;
  }
  SurfaceSamples out;
  if (tris.empty() || total <= 0.0) return out;
  const auto count = static_cast<std::size_t>(std::llround(total * density));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  out.cloud.points.reserve(count);
  out.cloud.normals.reserve(count);
  out.triangle.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    const double pick = uni(rng) * total;
    std::size_t t = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pick) -
                                             cumulative.begin());
    t = std::min(t, tris.size() - 1);
    double a = uni(rng);
    double b = uni(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const Eigen::Vector3i& tri = mesh.triangles[static_cast<std::size_t>(tris[t])];
    const Vec3& v0 = mesh.vertices[static_cast<std::size_t>(tri[0])];
    const Vec3& v1 = mesh.vertices[static_cast<std::size_t>(tri[1])];
    const Vec3& v2 = mesh.vertices[static_cast<std::size_t>(tri[2])];
    out.cloud.points.push_back(v0 + a * (v1 - v0) + b * (v2 - v0));
    out.cloud.normals.push_back(mesh.triangle_normal(static_cast<std::size_t>(tris[t])));
    out.triangle.push_back(tris[t]);
  }
  return out;
}

std::optional<Vec3> pca_normal(std::span<const Vec3> points, std::span<const int> indices) {
  if (indices.size() < 3) return std::nullopt;
  Vec3 centroid = Vec3::Zero();
  for (int i : indices) centroid += points[static_cast<std::size_t>(i)];
  centroid /= static_cast<double>(indices.size());
  Mat3 cov = Mat3::Zero();
  for (int i : indices) {
    const Vec3 d = points[static_cast<std::size_t>(i)] - centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(indices.size());
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  if (es.info() != Eigen::Success) return std::nullopt;
  // Need a 2D spread: the middle eigenvalue must be meaningfully positive.
  if (!(es.eigenvalues()(1) > 1e-12 * std::max(es.eigenvalues()(2), 1e-300))) return std::nullopt;
  return Vec3(es.eigenvectors().col(0).normalized());
}

Vec3 orient_normal(const Vec3& n, const Vec3& p, const NormalEstimation& opts) {
  const Vec3 ref = opts.viewpoint ? Vec3(*opts.viewpoint - p) : opts.orientation;
  return n.dot(ref) < 0.0 ? Vec3(-n) : n;
}

std::vector<Vec3> estimate_normals(std::span<const Vec3> points, const KdTree& tree, const NormalEstimation& opts,
                                   int threads) {
  if (points.empty()) fail(ErrorCode::EmptyCloud, "cannot estimate normals of an empty cloud");
  std::vector<Vec3> normals(points.size(), Vec3::Zero());
  std::vector<char> ok(points.size(), 0);
  parallel_for(points.size(), threads, [&](std::size_t i) {
    const std::vector<int> nb = tree.radius_search(points[i], opts.radius);
    if (static_cast<int>(nb.size()) < std::max(opts.min_neighbors, 3)) return;
    const auto n = pca_normal(points, nb);
    if (!n) return;
    normals[i] = orient_normal(*n, points[i], opts);
    ok[i] = 1;
  });
  if (std::find(ok.begin(), ok.end(), 1) == ok.end()) {
    fail(ErrorCode::NoNormals, "no point has enough neighbors for a normal");
  }
  return normals;
}

double median_nn_spacing(std::span<const Vec3> points, const KdTree& tree) {
  if (points.size() < 2) fail(ErrorCode::DegenerateCloud, "spacing needs at least two points");
  std::vector<double> d(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::vector<int> nn = tree.knn(points[i], 2);
    int other = nn[0] == static_cast<int>(i) ? nn[1] : nn[0];
    d[i] = (points[static_cast<std::size_t>(other)] - points[i]).norm();
  }
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

}  // namespace agriscan
