#include "agriscan/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace agriscan {

Quat LeafPatch::orientation() const {
  return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ())) * Quat(Eigen::AngleAxisd(tilt, Vec3::UnitX()));
}

double LeafPatch::surface_area() const {
  const double a = semi_axis_a;
  const double b = semi_axis_b;
  if (curvature == 0.0) return kPi * a * b;
  const double k2 = curvature * curvature;
  // Radial integral in closed form; the remaining periodic integrand is
  // smooth so the trapezoid rule converges geometrically.
  constexpr int n = 4096;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double th = 2.0 * kPi * i / n;
    const double g = a * a * std::cos(th) * std::cos(th) + b * b * std::sin(th) * std::sin(th);
    sum += a * b * (std::pow(1.0 + 4.0 * k2 * g, 1.5) - 1.0) / (12.0 * k2 * g);
  }
  return sum * 2.0 * kPi / n;
}

double LeafPatch::bounding_radius() const {
  const double r = std::max(semi_axis_a, semi_axis_b);
  const double h = std::abs(curvature) * r * r;
  return std::sqrt(r * r + h * h);
}

Vec3 LeafPatch::surface_point(double u, double v) const {
  return center + orientation() * Vec3(u, v, curvature * (u * u + v * v));
}

TriangleMesh tessellate_leaf(const LeafPatch& leaf) {
  std::vector<Vec3> vertices;
  std::vector<Vec2> uvs;
  std::vector<Eigen::Vector3i> tris;
  vertices.push_back(leaf.surface_point(0.0, 0.0));
  uvs.emplace_back(0.5, 0.5);
  const int rings = std::max(1, leaf.rings);
  const int segs = std::max(3, leaf.segments);
  for (int r = 1; r <= rings; ++r) {
    const double rho = static_cast<double>(r) / rings;
    for (int s = 0; s < segs; ++s) {
      const double th = 2.0 * kPi * s / segs;
      const double c = std::cos(th), sn = std::sin(th);
      vertices.push_back(leaf.surface_point(leaf.semi_axis_a * rho * c, leaf.semi_axis_b * rho * sn));
      uvs.emplace_back(0.5 + 0.5 * rho * c, 0.5 + 0.5 * rho * sn);
    }
  }
  auto ring_vertex = [&](int r, int s) { return 1 + (r - 1) * segs + (s % segs); };
  for (int s = 0; s < segs; ++s) tris.emplace_back(0, ring_vertex(1, s), ring_vertex(1, s + 1));
  for (int r = 1; r < rings; ++r) {
    for (int s = 0; s < segs; ++s) {
      const int a = ring_vertex(r, s), b = ring_vertex(r, s + 1);
      const int c = ring_vertex(r + 1, s), d = ring_vertex(r + 1, s + 1);
      tris.emplace_back(a, c, d);
      tris.emplace_back(a, d, b);
    }
  }
  return TriangleMesh::build(std::move(vertices), std::move(tris), std::move(uvs));
}

namespace {

void validate_leaf(const LeafPatch& l, double ground) {
  const bool finite = l.center.allFinite() && std::isfinite(l.semi_axis_a) && std::isfinite(l.semi_axis_b) &&
                      std::isfinite(l.curvature) && std::isfinite(l.yaw) && std::isfinite(l.tilt);
  if (!finite) fail(ErrorCode::InvalidSpec, "leaf has non-finite parameters");
  if (!(l.semi_axis_a > 0.0 && l.semi_axis_b > 0.0)) fail(ErrorCode::InvalidSpec, "leaf axes must be positive");
  if (l.rings < 1 || l.segments < 3) fail(ErrorCode::InvalidSpec, "leaf tessellation too coarse");
  if (l.center.z() - l.bounding_radius() <= ground) {
    fail(ErrorCode::InvalidSpec, "leaf intersects the ground plane");
  }
}

bool overlaps(const LeafPatch& a, const LeafPatch& b) {
  return (a.center - b.center).norm() < a.bounding_radius() + b.bounding_radius();
}

}  // namespace

std::vector<LeafPatch> resolve_leaves(const SceneSpec& spec) {
  const GroundSpec& g = spec.ground;
  if (!(g.x_max > g.x_min && g.y_max > g.y_min && g.cell > 0.0)) {
    fail(ErrorCode::InvalidSpec, "ground extent must be non-empty with positive cell size");
  }
  std::vector<LeafPatch> leaves = spec.leaves;
  const RandomPlantSpec& rp = spec.random_plants;
  if (rp.plants > 0) {
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    for (int p = 0; p < rp.plants; ++p) {
      const double frac = rp.plants == 1 ? 0.5 : static_cast<double>(p) / (rp.plants - 1);
      const Vec3 stem(rp.x_start + frac * (rp.x_end - rp.x_start), rp.row_y, g.height);
      for (int k = 0; k < rp.leaves_per_plant; ++k) {
        // Rejection sampling: a few attempts per leaf, skip if crowded.
        for (int attempt = 0; attempt < 50; ++attempt) {
          LeafPatch leaf;
          const double length = uniform(rp.min_leaf_length, rp.max_leaf_length);
          leaf.semi_axis_a = 0.5 * length;
          leaf.semi_axis_b = 0.5 * length * uniform(0.45, 0.8);
          leaf.curvature = uniform(0.0, rp.max_curvature);
          leaf.yaw = 2.0 * kPi * (k + uniform(-0.3, 0.3)) / rp.leaves_per_plant;
          leaf.tilt = uniform(-rp.max_tilt, rp.max_tilt);
          const double reach = leaf.semi_axis_a + uniform(0.0, 0.03);
          const double h = uniform(rp.min_height, rp.max_height);
          leaf.center = stem + Vec3(reach * std::cos(leaf.yaw), reach * std::sin(leaf.yaw), h);
          if (leaf.center.z() - leaf.bounding_radius() <= g.height + 0.01) continue;
          bool clash = false;
          for (const auto& other : leaves) clash = clash || overlaps(leaf, other);
          if (clash) continue;
          leaves.push_back(leaf);
          break;
        }
      }
    }
  }
  for (const auto& l : leaves) validate_leaf(l, g.height);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    for (std::size_t j = i + 1; j < leaves.size(); ++j) {
      if (overlaps(leaves[i], leaves[j])) fail(ErrorCode::InvalidSpec, "leaf patches overlap");
    }
  }
  return leaves;
}

SceneMesh synthesize_scene(const SceneSpec& spec) {
  SceneMesh scene;
  scene.leaves = resolve_leaves(spec);
  const GroundSpec& g = spec.ground;
  const int cells = static_cast<int>(scene.leaves.size()) + 1;
  const int atlas = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cells))));
  const double cell_uv = 1.0 / atlas;
  const double margin = 0.02 * cell_uv;
  auto to_atlas = [&](int patch, const Vec2& uv) {
    const int cx = patch % atlas;
    const int cy = patch / atlas;
    return Vec2(cx * cell_uv + margin + uv.x() * (cell_uv - 2 * margin),
                cy * cell_uv + margin + uv.y() * (cell_uv - 2 * margin));
  };

  // Ground grid.
  const int nx = std::max(1, static_cast<int>(std::lround((g.x_max - g.x_min) / g.cell)));
  const int ny = std::max(1, static_cast<int>(std::lround((g.y_max - g.y_min) / g.cell)));
  std::vector<Vec3> vertices;
  std::vector<Vec2> uvs;
  std::vector<Eigen::Vector3i> tris;
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      const double fx = static_cast<double>(i) / nx;
      const double fy = static_cast<double>(j) / ny;
      vertices.emplace_back(g.x_min + fx * (g.x_max - g.x_min), g.y_min + fy * (g.y_max - g.y_min), g.height);
      uvs.push_back(to_atlas(0, Vec2(fx, fy)));
    }
  }
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int a = j * (nx + 1) + i;
      tris.emplace_back(a, a + 1, a + nx + 2);
      tris.emplace_back(a, a + nx + 2, a + nx + 1);
    }
  }
  scene.mesh = TriangleMesh::build(std::move(vertices), std::move(tris), std::move(uvs));
  scene.patch_triangles.emplace_back(0, static_cast<int>(scene.mesh.triangles.size()));

  for (std::size_t k = 0; k < scene.leaves.size(); ++k) {
    TriangleMesh leaf = tessellate_leaf(scene.leaves[k]);
    for (auto& uv : leaf.uvs) uv = to_atlas(static_cast<int>(k) + 1, uv);
    const int begin = static_cast<int>(scene.mesh.triangles.size());
    scene.mesh.append(leaf);
    scene.patch_triangles.emplace_back(begin, static_cast<int>(scene.mesh.triangles.size()));
  }
  return scene;
}

Vec3 PlanePatch::u_dir() const {
  const Vec3 n = unit_normal();
  return (u_axis - u_axis.dot(n) * n).normalized();
}

Vec3 PlanePatch::v_dir() const { return unit_normal().cross(u_dir()); }

bool PlanePatch::contains(const Vec3& p, double margin) const {
  const Vec3 d = p - center;
  return std::abs(d.dot(u_dir())) <= half_u - margin && std::abs(d.dot(v_dir())) <= half_v - margin;
}

TriangleMesh synthesize_planes(const std::vector<PlanePatch>& planes) {
  TriangleMesh out;
  for (const auto& pl : planes) {
    if (!(pl.half_u > 0 && pl.half_v > 0) || pl.normal.norm() == 0.0) {
      fail(ErrorCode::InvalidSpec, "plane patch must have positive size and a normal");
    }
    const Vec3 u = pl.u_dir() * pl.half_u;
    const Vec3 v = pl.v_dir() * pl.half_v;
    std::vector<Vec3> vs = {pl.center - u - v, pl.center + u - v, pl.center + u + v, pl.center - u + v};
    std::vector<Eigen::Vector3i> ts = {{0, 1, 2}, {0, 2, 3}};
    out.append(TriangleMesh::build(std::move(vs), std::move(ts)));
  }
  return out;
}

}  // namespace agriscan
