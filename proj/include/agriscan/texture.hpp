#pragma once

#include "agriscan/geometry.hpp"
#include "agriscan/image.hpp"
#include "agriscan/raycast.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace agriscan {

/// Pinhole camera, OpenCV convention: z forward, x right, y down.
struct CameraIntrinsics {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 319.5;
  double cy = 239.5;
  int width = 640;
  int height = 480;

  void validate() const;
};

struct CameraView {
  Pose pose;  // camera to world
  CameraIntrinsics intrinsics;
  RgbImage image;

  /// Pixel coordinates of a world point, or nullopt behind the camera.
  std::optional<Vec2> project(const Vec3& world) const;
};

struct TextureMap {
  int width = 0;
  int height = 0;
  std::vector<Vec3> rgb;               // averaged colors, 0..255
  std::vector<std::uint16_t> count;    // cameras that saw the texel
  std::vector<std::uint8_t> covered;   // texel lies inside some UV triangle

  /// Covered texels seen by nobody are magenta, uncovered ones black.
  RgbImage to_image() const;
};

inline const Vec3 kUnseenColor(255.0, 0.0, 255.0);

struct BakeOptions {
  int threads = 1;
  double epsilon_scale = 1e-4;  // self-occlusion offset, fraction of the bbox diagonal
};

/// Averages bilinear samples of every camera with an unobstructed view of the
/// texel. Texel row 0 is v = 1. Views are processed in a canonical order so
/// the result does not depend on the order of `views`.
TextureMap bake_texture(const TriangleMesh& mesh, const std::vector<CameraView>& views, int width, int height,
                        const BakeOptions& options = {});

/// Camera-to-world pose at `eye` looking at `target`.
Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

/// `count` cameras spread on the upper hemisphere of radius `radius` around
/// `target` (elevations from `min_elevation` up), all looking at the target.
std::vector<Pose> camera_dome(const Vec3& target, double radius, int count, double min_elevation = 0.35);

/// Shades a surface point from its triangle, barycentrics and UV.
using SurfaceShader = std::function<Vec3(int triangle, const Vec2& uv)>;

/// Ray-cast rendering of the mesh; background pixels get `background`.
RgbImage render_view(const RayCaster& caster, const Pose& pose, const CameraIntrinsics& intrinsics,
                     const SurfaceShader& shader, const Vec3& background = Vec3::Zero(), int threads = 1);

}  // namespace agriscan
