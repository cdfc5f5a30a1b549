#pragma once

#include "agriscan/common.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace agriscan {

namespace so3 {

Mat3 skew(const Vec3& v);
Quat exp_quat(const Vec3& phi);
Mat3 exp(const Vec3& phi);
/// Rotation vector of q, shortest arc (angle in [0, pi]).
Vec3 log(const Quat& q);
Vec3 log(const Mat3& rotation);
Mat3 right_jacobian(const Vec3& phi);
Mat3 right_jacobian_inverse(const Vec3& phi);

}  // namespace so3

/// Rigid body-to-frame transform. Rotation is kept at unit norm.
struct Pose {
  Vec3 position = Vec3::Zero();
  Quat rotation = Quat::Identity();

  Pose() = default;
  Pose(const Vec3& p, const Quat& q);

  static Pose identity() { return {}; }

  Pose inverse() const;
  Mat4 matrix() const;
  Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
};

/// Applies b first, then a.
Pose compose(const Pose& a, const Pose& b);
Vec3 transform_point(const Pose& pose, const Vec3& p);

/// Renormalizes q only when its norm has drifted measurably; leaves
/// already-unit quaternions bit-identical.
Quat renormalized(const Quat& q);

class PoseTrack {
 public:
  PoseTrack() = default;
  PoseTrack(std::vector<double> times, std::vector<Pose> poses, std::string frame = "global");

  std::size_t size() const { return times_.size(); }
  bool empty() const { return times_.empty(); }
  const std::vector<double>& times() const { return times_; }
  const std::vector<Pose>& poses() const { return poses_; }
  const std::string& frame() const { return frame_; }
  double start_time() const { return times_.front(); }
  double end_time() const { return times_.back(); }
  bool covers(double t) const { return !empty() && t >= times_.front() && t <= times_.back(); }

  /// Returns a copy with every pose left-multiplied by `transform`.
  PoseTrack transformed(const Pose& transform) const;

 private:
  std::vector<double> times_;
  std::vector<Pose> poses_;
  std::string frame_ = "global";
};

/// Cubic pose interpolation.
///
/// Position: cubic Hermite per segment with knot tangents taken from the
/// derivative of the Lagrange polynomial through the (up to) five nearest
/// knots, so cubic trajectories are reproduced exactly and the curve is C1.
/// Rotation: spherical cubic (squad) with time-weighted tangents on
/// sign-corrected knots. The first and last segments, and tracks with fewer
/// than four knots, fall back to linear / spherical-linear.
Pose interpolate_pose(const PoseTrack& track, double t);

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;          // empty or one per point, unit
  std::vector<float> intensities;     // empty or one per point
  std::vector<std::uint8_t> scanner_ids;  // empty or one per point
  std::vector<double> times;          // empty or one per point

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !points.empty() && normals.size() == points.size(); }
};

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Eigen::Vector3i> triangles;
  std::vector<Vec2> uvs;  // empty or one per vertex, in [0,1]^2

  /// Validates indices and drops triangles with area below 1e-12 m^2.
  static TriangleMesh build(std::vector<Vec3> vertices, std::vector<Eigen::Vector3i> triangles,
                            std::vector<Vec2> uvs = {});

  bool has_uvs() const { return !vertices.empty() && uvs.size() == vertices.size(); }
  double triangle_area(std::size_t i) const;
  Vec3 triangle_normal(std::size_t i) const;
  double area() const;
  /// Appends another mesh, offsetting its indices.
  void append(const TriangleMesh& other);
};

}  // namespace agriscan
