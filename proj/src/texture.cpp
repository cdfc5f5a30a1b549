#include "agriscan/texture.hpp"

#include "agriscan/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace agriscan {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || width <= 0 || height <= 0) {
    fail(ErrorCode::InvalidParams, "camera intrinsics must be positive");
  }
}

std::optional<Vec2> CameraView::project(const Vec3& world) const {
  const Vec3 c = pose.rotation.conjugate() * (world - pose.position);
  if (c.z() <= 0.0) return std::nullopt;
  return Vec2(intrinsics.fx * c.x() / c.z() + intrinsics.cx, intrinsics.fy * c.y() / c.z() + intrinsics.cy);
}

RgbImage TextureMap::to_image() const {
  RgbImage img(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
      if (!covered[i]) continue;
      img.set(x, y, count[i] > 0 ? rgb[i] : kUnseenColor);
    }
  }
  return img;
}

namespace {

// Canonical view order: pose, intrinsics, then image bytes.
bool view_less(const CameraView& a, const CameraView& b) {
  auto key = [](const CameraView& v) {
    const Quat& q = v.pose.rotation;
    const CameraIntrinsics& k = v.intrinsics;
    return std::make_tuple(v.pose.position.x(), v.pose.position.y(), v.pose.position.z(), q.w(), q.x(), q.y(),
                           q.z(), k.fx, k.fy, k.cx, k.cy, k.width, k.height, v.image.width, v.image.height);
  };
  const auto ka = key(a);
  const auto kb = key(b);
  if (ka != kb) return ka < kb;
  return std::lexicographical_compare(a.image.data.begin(), a.image.data.end(), b.image.data.begin(),
                                      b.image.data.end());
}

}  // namespace

TextureMap bake_texture(const TriangleMesh& mesh, const std::vector<CameraView>& views_in, int width, int height,
                        const BakeOptions& options) {
  if (!mesh.has_uvs()) fail(ErrorCode::NoUVs, "mesh has no UV coordinates");
  if (views_in.empty()) fail(ErrorCode::NoViews, "no camera views");
  if (width <= 0 || height <= 0) fail(ErrorCode::InvalidParams, "texture size must be positive");
  for (const CameraView& v : views_in) {
    v.intrinsics.validate();
    if (v.image.empty()) fail(ErrorCode::InvalidArgument, "camera view without an image");
  }
  std::vector<std::size_t> order(views_in.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return view_less(views_in[a], views_in[b]); });

  const RayCaster caster(mesh);
  Eigen::AlignedBox3d box;
  for (const Vec3& v : mesh.vertices) box.extend(v);
  const double eps = options.epsilon_scale * box.diagonal().norm();

  const std::size_t texels = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  TextureMap tex;
  tex.width = width;
  tex.height = height;
  tex.rgb.assign(texels, Vec3::Zero());
  tex.count.assign(texels, 0);
  tex.covered.assign(texels, 0);

  // Owning triangle per texel: lowest index wins on shared edges.
  std::vector<int> owner(texels, -1);
  std::vector<Vec3> bary(texels, Vec3::Zero());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Eigen::Vector3i& tri = mesh.triangles[t];
    Vec2 uv[3];
    for (int c = 0; c < 3; ++c) {
      const Vec2& q = mesh.uvs[static_cast<std::size_t>(tri[c])];
      uv[c] = Vec2(q.x() * width - 0.5, (1.0 - q.y()) * height - 0.5);  // texel-center coordinates
    }
    const double area = (uv[1] - uv[0]).x() * (uv[2] - uv[0]).y() - (uv[1] - uv[0]).y() * (uv[2] - uv[0]).x();
    if (std::abs(area) < 1e-14) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({uv[0].x(), uv[1].x(), uv[2].x()}))));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max({uv[0].x(), uv[1].x(), uv[2].x()}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({uv[0].y(), uv[1].y(), uv[2].y()}))));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max({uv[0].y(), uv[1].y(), uv[2].y()}))));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
        if (owner[i] >= 0) continue;
        const Vec2 p(x, y);
        auto edge = [&](const Vec2& a, const Vec2& b) {
          return ((b - a).x() * (p - a).y() - (b - a).y() * (p - a).x()) / area;
        };
        const double w0 = edge(uv[1], uv[2]);
        const double w1 = edge(uv[2], uv[0]);
        const double w2 = edge(uv[0], uv[1]);
        const double tol = -1e-9;
        if (w0 < tol || w1 < tol || w2 < tol) continue;
        owner[i] = static_cast<int>(t);
        bary[i] = Vec3(w0, w1, w2);
      }
    }
  }

  parallel_for(static_cast<std::size_t>(height), options.threads, [&](std::size_t row) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = row * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
      const int t = owner[i];
      if (t < 0) continue;
      tex.covered[i] = 1;
      const Eigen::Vector3i& tri = mesh.triangles[static_cast<std::size_t>(t)];
      const Vec3 pos = bary[i][0] * mesh.vertices[static_cast<std::size_t>(tri[0])] +
                       bary[i][1] * mesh.vertices[static_cast<std::size_t>(tri[1])] +
                       bary[i][2] * mesh.vertices[static_cast<std::size_t>(tri[2])];
      const Vec3 normal = mesh.triangle_normal(static_cast<std::size_t>(t));
      Vec3 sum = Vec3::Zero();
      std::uint16_t seen = 0;
      for (std::size_t k : order) {
        const CameraView& view = views_in[k];
        const auto px = view.project(pos);
        if (!px) continue;
        if (px->x() < 0.0 || px->y() < 0.0 || px->x() > view.image.width - 1 || px->y() > view.image.height - 1) {
          continue;
        }
        // Offset toward the camera's side of the surface.
        const Vec3 to_cam = view.pose.position - pos;
        const Vec3 origin = pos + (normal.dot(to_cam) >= 0.0 ? eps : -eps) * normal;
        const Vec3 dir = view.pose.position - origin;
        if (caster.occluded(origin, dir, 1.0, 0.0)) continue;
        sum += view.image.bilinear(px->x(), px->y());
        ++seen;
      }
      tex.count[i] = seen;
      tex.rgb[i] = seen > 0 ? Vec3(sum / static_cast<double>(seen)) : kUnseenColor;
    }
  });
  return tex;
}

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 down = -up + up.dot(z) * z;
  if (down.norm() < 1e-9) {
    const Vec3 alt = std::abs(z.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    down = -alt + alt.dot(z) * z;
  }
  const Vec3 y = down.normalized();
  const Vec3 x = y.cross(z);
  Mat3 R;
  R.col(0) = x;
  R.col(1) = y;
  R.col(2) = z;
  return Pose(eye, Quat(R).normalized());
}

std::vector<Pose> camera_dome(const Vec3& target, double radius, int count, double min_elevation) {
  if (count <= 0 || !(radius > 0.0)) fail(ErrorCode::InvalidParams, "camera dome needs cameras and a radius");
  std::vector<Pose> poses;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  const double zmin = std::sin(min_elevation);
  for (int k = 0; k < count; ++k) {
    const double z = zmin + (1.0 - zmin) * (k + 0.5) / count;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Vec3 dir(rho * std::cos(golden * k), rho * std::sin(golden * k), z);
    poses.push_back(look_at(target + radius * dir, target));
  }
  return poses;
}

RgbImage render_view(const RayCaster& caster, const Pose& pose, const CameraIntrinsics& K, const SurfaceShader& shader,
                     const Vec3& background, int threads) {
  K.validate();
  RgbImage img(K.width, K.height, background);
  const TriangleMesh& mesh = caster.mesh();
  const Mat3 R = pose.rotation_matrix();
  parallel_for(static_cast<std::size_t>(K.height), threads, [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < K.width; ++x) {
      const Vec3 dir_cam((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      const Vec3 dir = R * dir_cam.normalized();
      const auto hit = caster.intersect(pose.position, dir, 1e6);
      if (!hit) continue;
      const Eigen::Vector3i& tri = mesh.triangles[static_cast<std::size_t>(hit->triangle)];
      Vec2 uv = Vec2::Zero();
      if (mesh.has_uvs()) {
        const double w0 = 1.0 - hit->u - hit->v;
        uv = w0 * mesh.uvs[static_cast<std::size_t>(tri[0])] + hit->u * mesh.uvs[static_cast<std::size_t>(tri[1])] +
             hit->v * mesh.uvs[static_cast<std::size_t>(tri[2])];
      }
      img.set(x, y, shader(hit->triangle, uv));
    }
  });
  return img;
}

}  // namespace agriscan
