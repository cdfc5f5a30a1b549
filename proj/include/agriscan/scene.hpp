#pragma once

#include "agriscan/geometry.hpp"

#include <cstdint>
#include <vector>

namespace agriscan {

/// Elliptic paraboloid leaf: local surface w = curvature * (u^2 + v^2) over the
/// ellipse (u/a)^2 + (v/b)^2 <= 1, placed at `center` and rotated by yaw
/// (about z) after tilt (about the local u axis).
struct LeafPatch {
  Vec3 center = Vec3::Zero();
  double semi_axis_a = 0.05;
  double semi_axis_b = 0.05;
  double curvature = 0.0;  // 1/m
  double yaw = 0.0;
  double tilt = 0.0;
  int rings = 12;
  int segments = 48;

  Quat orientation() const;
  /// Exact area of the paraboloid patch (periodic quadrature of the
  /// closed-form radial integral).
  double surface_area() const;
  double bounding_radius() const;
  /// Maps local (u, v) on the footprint to the global surface point.
  Vec3 surface_point(double u, double v) const;
};

struct GroundSpec {
  double height = 0.0;
  double x_min = -0.5, x_max = 3.5;
  double y_min = -1.0, y_max = 1.0;
  double cell = 0.1;
};

/// Procedural plants: leaves arranged around stems spaced along x.
struct RandomPlantSpec {
  int plants = 0;
  int leaves_per_plant = 5;
  double x_start = 0.3, x_end = 2.7;
  double row_y = 0.0;
  double min_leaf_length = 0.03, max_leaf_length = 0.07;
  double min_height = 0.06, max_height = 0.25;
  double max_tilt = 0.5;
  double max_curvature = 4.0;
};

struct SceneSpec {
  GroundSpec ground;
  std::vector<LeafPatch> leaves;
  RandomPlantSpec random_plants;
  std::uint64_t seed = 1;
};

/// Resolves random plants into explicit leaves (deterministic in seed) and
/// validates the result. Throws InvalidSpec on degenerate or intersecting
/// patches.
std::vector<LeafPatch> resolve_leaves(const SceneSpec& spec);

struct SceneMesh {
  TriangleMesh mesh;
  /// Triangle range [begin, end) per patch: index 0 is the ground, then leaves.
  std::vector<std::pair<int, int>> patch_triangles;
  std::vector<LeafPatch> leaves;
};

/// Ground grid plus tessellated leaves. UVs lay every patch into its own cell
/// of a square atlas (ground first).
SceneMesh synthesize_scene(const SceneSpec& spec);

TriangleMesh tessellate_leaf(const LeafPatch& leaf);

/// Finite planar rectangle used for mounting calibration scenes.
struct PlanePatch {
  Vec3 center = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Vec3 u_axis = Vec3::UnitX();  // in-plane, orthogonalized against normal
  double half_u = 0.5;
  double half_v = 0.5;

  Vec3 unit_normal() const { return normal.normalized(); }
  double offset() const { return unit_normal().dot(center); }  // n . x = d
  Vec3 u_dir() const;
  Vec3 v_dir() const;
  bool contains(const Vec3& p, double margin) const;
};

TriangleMesh synthesize_planes(const std::vector<PlanePatch>& planes);

}  // namespace agriscan
