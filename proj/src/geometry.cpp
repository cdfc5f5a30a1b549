#include "agriscan/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace agriscan {

namespace so3 {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Quat exp_quat(const Vec3& phi) {
  const double theta = phi.norm();
  if (theta < 1e-10) {
    Quat q(1.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
    q.normalize();
    return q;
  }
  const double half = 0.5 * theta;
  const Vec3 v = std::sin(half) / theta * phi;
  return Quat(std::cos(half), v.x(), v.y(), v.z());
}

Mat3 exp(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const Mat3 k = skew(phi);
  if (theta2 < 1e-16) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() + std::sin(theta) / theta * k + (1.0 - std::cos(theta)) / theta2 * k * k;
}

Vec3 log(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double n = v.norm();
  if (n < 1e-10) {
    // 2 atan(n / w) / n ~ 2 / w for small n
    return (2.0 / q.w()) * v;
  }
  const double angle = 2.0 * std::atan2(n, q.w());
  return (angle / n) * v;
}

Vec3 log(const Mat3& rotation) { return log(Quat(rotation)); }

Mat3 right_jacobian(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const Mat3 k = skew(phi);
  if (theta2 < 1e-12) {
    return Mat3::Identity() - 0.5 * k + k * k / 6.0;
  }
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() - (1.0 - std::cos(theta)) / theta2 * k +
         (theta - std::sin(theta)) / (theta2 * theta) * k * k;
}

Mat3 right_jacobian_inverse(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const Mat3 k = skew(phi);
  if (theta2 < 1e-12) {
    return Mat3::Identity() + 0.5 * k + k * k / 12.0;
  }
  const double theta = std::sqrt(theta2);
  const double coeff = 1.0 / theta2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * k + coeff * k * k;
}

}  // namespace so3

Quat renormalized(const Quat& q) {
  const double n2 = q.squaredNorm();
  if (std::abs(n2 - 1.0) <= 1e-14) return q;
  return q.normalized();
}

Pose::Pose(const Vec3& p, const Quat& q) : position(p), rotation(q.normalized()) {}

Pose Pose::inverse() const {
  Pose out;
  out.rotation = rotation.conjugate();
  out.position = -(out.rotation * position);
  return out;
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation.toRotationMatrix();
  m.topRightCorner<3, 1>() = position;
  return m;
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation = renormalized(a.rotation * b.rotation);
  out.position = a.rotation * b.position + a.position;
  return out;
}

Vec3 transform_point(const Pose& pose, const Vec3& p) { return pose.rotation * p + pose.position; }

PoseTrack::PoseTrack(std::vector<double> times, std::vector<Pose> poses, std::string frame)
    : times_(std::move(times)), poses_(std::move(poses)), frame_(std::move(frame)) {
  if (times_.size() != poses_.size()) {
    fail(ErrorCode::InvalidArgument, "pose track: times and poses differ in length");
  }
  for (std::size_t i = 1; i < times_.size(); ++i) {
    if (!(times_[i] > times_[i - 1])) {
      fail(ErrorCode::InvalidArgument, "pose track: timestamps must be strictly increasing");
    }
  }
  for (auto& p : poses_) p.rotation = renormalized(p.rotation);
}

PoseTrack PoseTrack::transformed(const Pose& transform) const {
  std::vector<Pose> out;
  out.reserve(poses_.size());
  for (const auto& p : poses_) out.push_back(compose(transform, p));
  return PoseTrack(times_, std::move(out), frame_);
}

namespace {

// d/dt of the Lagrange basis through `nodes`, evaluated at nodes[k], applied to values.
Vec3 lagrange_derivative_at_node(const double* t, const Vec3* values, int count, int k) {
  Vec3 d = Vec3::Zero();
  double self = 0.0;
  for (int m = 0; m < count; ++m) {
    if (m != k) self += 1.0 / (t[k] - t[m]);
  }
  d += self * values[k];
  for (int j = 0; j < count; ++j) {
    if (j == k) continue;
    double w = 1.0 / (t[j] - t[k]);
    for (int m = 0; m < count; ++m) {
      if (m == j || m == k) continue;
      w *= (t[k] - t[m]) / (t[j] - t[m]);
    }
    d += w * values[j];
  }
  return d;
}

Vec3 position_tangent(const PoseTrack& track, std::size_t k) {
  const int n = static_cast<int>(track.size());
  const int width = std::min(5, n);
  int lo = static_cast<int>(k) - width / 2;
  lo = std::clamp(lo, 0, n - width);
  double ts[5];
  Vec3 ps[5];
  for (int i = 0; i < width; ++i) {
    ts[i] = track.times()[lo + i];
    ps[i] = track.poses()[lo + i].position;
  }
  return lagrange_derivative_at_node(ts, ps, width, static_cast<int>(k) - lo);
}

Quat aligned(const Quat& q, const Quat& reference) {
  if (q.dot(reference) < 0.0) return Quat(-q.w(), -q.x(), -q.y(), -q.z());
  return q;
}

}  // namespace

Pose interpolate_pose(const PoseTrack& track, double t) {
  if (track.size() < 2) fail(ErrorCode::InsufficientKnots, "interpolation needs at least 2 poses");
  if (!track.covers(t)) fail(ErrorCode::OutOfRange, "query time outside pose track span");

  const auto& times = track.times();
  const auto& poses = track.poses();
  auto it = std::upper_bound(times.begin(), times.end(), t);
  std::size_t i = static_cast<std::size_t>(it - times.begin());
  if (i > 0 && times[i - 1] == t) return poses[i - 1];
  // t lies strictly inside segment [i-1, i]
  i -= 1;
  const std::size_t n = track.size();
  const double h = times[i + 1] - times[i];
  const double s = (t - times[i]) / h;

  const Quat q0 = poses[i].rotation;
  const Quat q1 = aligned(poses[i + 1].rotation, q0);

  const bool linear = n < 4 || i == 0 || i + 2 >= n;
  if (linear) {
    Pose out;
    out.position = (1.0 - s) * poses[i].position + s * poses[i + 1].position;
    out.rotation = renormalized(q0.slerp(s, q1));
    return out;
  }

  const Vec3 m0 = position_tangent(track, i);
  const Vec3 m1 = position_tangent(track, i + 1);
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1;
  const double h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2;
  const double h11 = s3 - s2;
  Pose out;
  out.position = h00 * poses[i].position + h10 * h * m0 + h01 * poses[i + 1].position + h11 * h * m1;

  const Quat qm = aligned(poses[i - 1].rotation, q0);
  const Quat q2 = aligned(poses[i + 2].rotation, q1);
  const double h_prev = times[i] - times[i - 1];
  const double h_next = times[i + 2] - times[i + 1];

  // Local-frame angular velocity estimates at the two inner knots.
  const Vec3 l0_next = so3::log(q0.conjugate() * q1);
  const Vec3 l0_prev = so3::log(q0.conjugate() * qm);
  const Vec3 l1_next = so3::log(q1.conjugate() * q2);
  const Vec3 l1_prev = so3::log(q1.conjugate() * q0);
  const Vec3 w0 = (h_prev / (h_prev + h)) * (l0_next / h) - (h / (h_prev + h)) * (l0_prev / h_prev);
  const Vec3 w1 = (h / (h + h_next)) * (l1_next / h_next) - (h_next / (h + h_next)) * (l1_prev / h);

  const Quat a0 = q0 * so3::exp_quat(0.5 * (w0 * h - l0_next));
  const Quat a1 = q1 * so3::exp_quat(-0.5 * (w1 * h + l1_prev));
  const Quat outer = q0.slerp(s, q1);
  const Quat inner = a0.slerp(s, aligned(a1, a0));
  out.rotation = renormalized(outer.slerp(2.0 * s * (1.0 - s), aligned(inner, outer)));
  return out;
}

TriangleMesh TriangleMesh::build(std::vector<Vec3> vertices, std::vector<Eigen::Vector3i> triangles,
                                 std::vector<Vec2> uvs) {
  if (!uvs.empty() && uvs.size() != vertices.size()) {
    fail(ErrorCode::InvalidArgument, "mesh: uv count must match vertex count");
  }
  TriangleMesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.uvs = std::move(uvs);
  const int nv = static_cast<int>(mesh.vertices.size());
  mesh.triangles.reserve(triangles.size());
  for (const auto& tri : triangles) {
    for (int k = 0; k < 3; ++k) {
      if (tri[k] < 0 || tri[k] >= nv) fail(ErrorCode::InvalidArgument, "mesh: triangle index out of range");
    }
    const Vec3& a = mesh.vertices[tri[0]];
    const double area = 0.5 * (mesh.vertices[tri[1]] - a).cross(mesh.vertices[tri[2]] - a).norm();
    if (area > 1e-12) mesh.triangles.push_back(tri);
  }
  return mesh;
}

double TriangleMesh::triangle_area(std::size_t i) const {
  const auto& t = triangles[i];
  const Vec3& a = vertices[t[0]];
  return 0.5 * (vertices[t[1]] - a).cross(vertices[t[2]] - a).norm();
}

Vec3 TriangleMesh::triangle_normal(std::size_t i) const {
  const auto& t = triangles[i];
  const Vec3& a = vertices[t[0]];
  return (vertices[t[1]] - a).cross(vertices[t[2]] - a).normalized();
}

double TriangleMesh::area() const {
  double sum = 0.0;
  for (std::size_t i = 0; i < triangles.size(); ++i) sum += triangle_area(i);
  return sum;
}

void TriangleMesh::append(const TriangleMesh& other) {
  const int offset = static_cast<int>(vertices.size());
  const bool keep_uvs = (vertices.empty() || has_uvs()) && other.has_uvs();
  vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
  if (keep_uvs) {
    uvs.insert(uvs.end(), other.uvs.begin(), other.uvs.end());
  } else {
    uvs.clear();
  }
  for (const auto& t : other.triangles) triangles.push_back(t + Eigen::Vector3i::Constant(offset));
}

}  // namespace agriscan
