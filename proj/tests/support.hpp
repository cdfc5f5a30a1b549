#pragma once

// Fixtures and oracles shared by the unit tests and the acceptance binary.

#include "agriscan/bpa.hpp"
#include "agriscan/cloud_ops.hpp"
#include "agriscan/exposure.hpp"
#include "agriscan/factor_graph.hpp"
#include "agriscan/georef.hpp"
#include "agriscan/m3c2.hpp"
#include "agriscan/pipeline.hpp"
#include "agriscan/sensor_sim.hpp"
#include "agriscan/smoother.hpp"
#include "agriscan/texture.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace agriscan::testing {

inline Vec3 random_vec(std::mt19937& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Vec3(u(rng), u(rng), u(rng));
}

inline Quat random_rotation(std::mt19937& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Quat q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized();
}

inline double angle_between(const Quat& a, const Quat& b) { return so3::log(a.conjugate() * b).norm(); }

// Homogeneous-matrix chain T_g_b * T_b_s * [x 0 z 1], built with Eigen's
// affine types only.
inline Vec3 georef_oracle(const Pose& body, const MountingCalibration& calib, double x, double z) {
  Eigen::Affine3d Tgb = Eigen::Translation3d(body.position) * body.rotation.normalized();
  Eigen::Affine3d Tbs = Eigen::Translation3d(calib.lever_arm) * calib.boresight.normalized();
  const Eigen::Vector4d p = (Tgb.matrix() * Tbs.matrix()) * Eigen::Vector4d(x, 0.0, z, 1.0);
  return p.head<3>();
}

// ---------------------------------------------------------------- smoother

inline NavState random_state(std::mt19937& rng) {
  NavState s;
  s.rotation = random_rotation(rng);
  s.position = random_vec(rng, 10.0);
  s.velocity = random_vec(rng, 2.0);
  s.bias.accel = random_vec(rng, 0.05);
  s.bias.gyro = random_vec(rng, 0.005);
  return s;
}

inline std::vector<ImuSample> random_imu(std::mt19937& rng, double t0, double t1, double rate) {
  std::vector<ImuSample> out;
  const Vec3 w0 = random_vec(rng, 0.3);
  const Vec3 a0 = random_vec(rng, 1.0) + Vec3(0.0, 0.0, kGravity);
  const int n = static_cast<int>(std::ceil((t1 - t0) * rate));
  for (int k = 0; k <= n; ++k) {
    ImuSample s;
    s.t = t0 + k / rate;
    s.gyro = w0 + random_vec(rng, 0.05);
    s.accel = a0 + random_vec(rng, 0.2);
    out.push_back(s);
  }
  return out;
}

// One factor of each kind at random states.
struct RandomFactorCase {
  std::vector<StateNode> nodes;
  std::vector<Factor> factors;
};

inline RandomFactorCase random_factor_case(std::mt19937& rng) {
  RandomFactorCase c;
  const double dt = std::uniform_real_distribution<double>(0.1, 0.5)(rng);
  c.nodes = {StateNode{0.0, random_state(rng)}, StateNode{dt, random_state(rng)}};
  // Keep the second bias near the first so the walk residual stays moderate.
  c.nodes[1].state.bias.accel = c.nodes[0].state.bias.accel + random_vec(rng, 0.01);
  c.nodes[1].state.bias.gyro = c.nodes[0].state.bias.gyro + random_vec(rng, 0.001);

  const auto imu = random_imu(rng, 0.0, dt, 100.0);
  ImuBias lin;
  lin.accel = c.nodes[0].state.bias.accel + random_vec(rng, 0.02);
  lin.gyro = c.nodes[0].state.bias.gyro + random_vec(rng, 0.002);
  ImuFactor imu_f;
  imu_f.i = 0;
  imu_f.j = 1;
  imu_f.delta = preintegrate_imu(imu, lin, 0.0, dt);
  c.factors.push_back(imu_f);

  GnssFactor g;
  g.i = 1;
  g.fix.position = c.nodes[1].state.position + random_vec(rng, 0.5);
  g.fix.sigma = Vec3(0.01, 0.012, 0.02);
  g.lever_arm = random_vec(rng, 1.0);
  c.factors.push_back(g);

  HeadingPitchFactor h;
  h.i = 0;
  h.observed_yaw = std::uniform_real_distribution<double>(-kPi, kPi)(rng);
  h.obs.pitch = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  c.factors.push_back(h);

  PriorFactor p;
  p.i = 1;
  p.mean = random_state(rng);
  for (int k = 0; k < kStateDim; ++k) p.sigma[k] = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
  c.factors.push_back(p);
  return c;
}

// Relative Frobenius error of the analytic Jacobians against central
// differences of the whitened residual along the node retractions.
inline double jacobian_error(const Factor& f, const std::vector<StateNode>& nodes, double h = 1e-6) {
  const FactorLinearization lin = linearize(f, nodes);
  double err2 = 0.0;
  double norm2 = 0.0;
  for (std::size_t b = 0; b < lin.nodes.size(); ++b) {
    const auto node = static_cast<std::size_t>(lin.nodes[b]);
    Eigen::MatrixXd fd(lin.residual.size(), kStateDim);
    for (int k = 0; k < kStateDim; ++k) {
      StateVector d = StateVector::Zero();
      d[k] = h;
      std::vector<StateNode> plus = nodes;
      std::vector<StateNode> minus = nodes;
      plus[node].state = retract(nodes[node].state, d);
      minus[node].state = retract(nodes[node].state, -d);
      fd.col(k) = (whitened_residual(f, plus) - whitened_residual(f, minus)) / (2.0 * h);
    }
    err2 += (lin.jacobians[b] - fd).squaredNorm();
    norm2 += lin.jacobians[b].squaredNorm();
  }
  return std::sqrt(err2) / std::max(std::sqrt(norm2), 1e-12);
}

// Measurements generated from states propagated through the preintegrated
// deltas, so a zero-cost solution exists.
struct NoiselessCase {
  std::vector<ImuSample> imu;
  std::vector<GnssFix> gnss;
  std::vector<HeadingPitchObs> heading;
  std::vector<NavState> truth;  // one per GNSS epoch
  GraphConfig config;
};

inline NoiselessCase noiseless_case(double duration, std::uint64_t seed) {
  NoiselessCase c;
  TrajectorySpec ts;
  ts.length = duration * ts.speed;
  ts.wobble_amplitude = 0.05;
  ts.wobble_frequency = 0.1;
  const PoseTrack track = generate_trajectory(ts, seed);
  ImuNoise quiet;
  quiet.gyro_density = 0.0;
  quiet.accel_density = 0.0;
  GnssSimConfig g;
  const InertialData d = simulate_inertial_and_gnss(track, quiet, g, seed);
  c.imu = d.imu;
  c.config.antenna_lever_arm = g.antenna_lever_arm;
  c.config.heading_convention = g.convention;

  const std::vector<Vec3> vel = track_velocities(track);
  NavState s;
  s.rotation = track.poses().front().rotation;
  s.position = track.poses().front().position;
  s.velocity = vel.front();
  std::vector<double> times;
  for (const GnssFix& f : d.gnss) {
    if (f.t >= c.imu.front().t && f.t <= c.imu.back().t) times.push_back(f.t);
  }
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (k > 0) {
      s = predict(s, preintegrate_imu(c.imu, ImuBias{}, times[k - 1], times[k], c.config.imu_noise));
      s.rotation.normalize();
    }
    c.truth.push_back(s);
    const Mat3 R = s.rotation.toRotationMatrix();
    GnssFix fix;
    fix.t = times[k];
    fix.position = s.position + R * c.config.antenna_lever_arm;
    c.gnss.push_back(fix);
    const Vec3 fwd = R.col(0);
    HeadingPitchObs h;
    h.t = times[k];
    h.heading = yaw_to_heading(std::atan2(fwd.y(), fwd.x()), c.config.heading_convention);
    h.pitch = std::atan2(fwd.z(), std::hypot(fwd.x(), fwd.y()));
    c.heading.push_back(h);
  }
  return c;
}

// ---------------------------------------------------------- calibration

struct CalibrationCase {
  PoseTrack track;
  std::vector<PlanePatch> planes;
  MountingCalibration truth;
  MountingCalibration init;
  std::vector<LaserProfile> profiles;
};

// Noise-free scans of the plane scene with the initial mounting perturbed by
// `angle` rad and `offset` m along random directions.
inline CalibrationCase calibration_case(bool left, int points_per_profile, double scan_rate, double angle,
                                        double offset, std::uint64_t seed) {
  CalibrationCase c;
  c.planes = calibration_planes(0.0);
  TrajectorySpec ts;
  c.track = generate_trajectory(ts, seed);
  c.truth = nominal_mounting(left);
  ScannerModel m;
  m.points_per_profile = points_per_profile;
  m.scan_rate = scan_rate;
  m.range_noise_sigma = 0.0;
  const RayCaster caster(synthesize_planes(c.planes));
  c.profiles = simulate_laser_profiles(caster, c.track, c.truth, m, seed + 1);
  std::mt19937 rng(static_cast<std::uint32_t>(seed));
  c.init = c.truth;
  c.init.boresight = (c.truth.boresight * so3::exp_quat(angle * random_vec(rng, 1.0).normalized())).normalized();
  c.init.lever_arm += offset * random_vec(rng, 1.0).normalized();
  return c;
}

// --------------------------------------------------------------- M3C2

// Brute-force M3C2: linear scans instead of the k-d tree, same arithmetic
// order (ascending point index).
inline M3C2Result m3c2_oracle(const PointCloud& ref, const PointCloud& cmp, const M3C2Params& p,
                              const std::vector<Vec3>& cores) {
  M3C2Result out;
  out.core_points = cores.size();
  const double rn = 0.5 * p.normal_scale;
  const double rn2 = rn * rn;
  for (std::size_t k = 0; k < cores.size(); ++k) {
    const Vec3& c = cores[k];
    std::vector<int> nb;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if ((ref.points[i] - c).squaredNorm() <= rn2) nb.push_back(static_cast<int>(i));
    }
    std::optional<Vec3> n;
    if (static_cast<int>(nb.size()) >= p.min_normal_neighbors) {
      Vec3 centroid = Vec3::Zero();
      for (int i : nb) centroid += ref.points[static_cast<std::size_t>(i)];
      centroid /= static_cast<double>(nb.size());
      Mat3 cov = Mat3::Zero();
      for (int i : nb) {
        const Vec3 d = ref.points[static_cast<std::size_t>(i)] - centroid;
        cov += d * d.transpose();
      }
      cov /= static_cast<double>(nb.size());
      Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
      if (es.eigenvalues()(1) > 1e-12 * std::max(es.eigenvalues()(2), 1e-300)) {
        n = Vec3(es.eigenvectors().col(0).normalized());
      }
    }
    if (!n) {
      ++out.no_normal;
      continue;
    }
    const Vec3 ref_dir = p.viewpoint ? Vec3(*p.viewpoint - c) : p.orientation;
    const Vec3 normal = n->dot(ref_dir) < 0.0 ? Vec3(-*n) : *n;
    auto mean_in = [&](const PointCloud& cloud, Vec3& mean) {
      mean.setZero();
      int count = 0;
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3 v = cloud.points[i] - c;
        const double h = v.dot(normal);
        if (std::abs(h) > p.max_depth) continue;
        if ((v - h * normal).squaredNorm() > p.projection_radius * p.projection_radius) continue;
        mean += cloud.points[i];
        ++count;
      }
      if (count > 0) mean /= static_cast<double>(count);
      return count;
    };
    Vec3 mr, mc;
    const int nr = mean_in(ref, mr);
    const int nc = mean_in(cmp, mc);
    if (nr == 0 || nc == 0) {
      ++out.no_compared;
      continue;
    }
    M3C2Entry e;
    e.core_index = static_cast<int>(k);
    e.core = c;
    e.normal = normal;
    e.distance = (mc - mr).dot(normal);
    e.reference_count = nr;
    e.compared_count = nc;
    out.entries.push_back(e);
  }
  return out;
}

// Jittered planar patch, z = 0 plus optional noise.
inline PointCloud planar_cloud(std::mt19937& rng, std::size_t n, double half, double z_noise) {
  std::uniform_real_distribution<double> u(-half, half);
  std::normal_distribution<double> nz(0.0, 1.0);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), z_noise * nz(rng));
  return c;
}

// ---------------------------------------------------------------- BPA

// (n x n) grid with the given spacing in the z = 0 plane, normals +z.
inline PointCloud grid_cloud(int n, double spacing) {
  PointCloud c;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      c.points.emplace_back(i * spacing, j * spacing, 0.0);
      c.normals.emplace_back(0.0, 0.0, 1.0);
    }
  }
  return c;
}

// Fibonacci points on a sphere, outward normals.
inline PointCloud sphere_cloud(int n, double radius) {
  PointCloud c;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double r = std::sqrt(1.0 - z * z);
    const Vec3 d(r * std::cos(golden * i), r * std::sin(golden * i), z);
    c.points.push_back(radius * d);
    c.normals.push_back(d);
  }
  return c;
}

// Per-leaf laser area differences (percent) for the aggregation fixture.
inline const std::vector<double>& table_laser_area_diffs() {
  static const std::vector<double> v = {-3.3, -6.2, 1.73, -6.3, -14.9};
  return v;
}

// ------------------------------------------------------ exposure, texture
inline Histogram8 dark_histogram() {
  Histogram8 h;
  h.counts = {600, 200, 100, 50, 30, 10, 5, 5};
  return h;
}

inline Histogram8 bright_histogram() {
  Histogram8 h;
  h.counts = {5, 5, 10, 30, 50, 100, 200, 600};
  return h;
}

// Priority model written out independently of the controller.
inline ExposureAction expected_action(const Histogram8& h, const ExposureState& s, const ExposureParams& p) {
  const double under = static_cast<double>(h.counts[0]) / static_cast<double>(h.total());
  const double over = static_cast<double>(h.counts[7]) / static_cast<double>(h.total());
  if (std::abs(under - over) <= p.tolerance) return ExposureAction::NoChange;
  const auto stops = third_stop_sequence();
  const ExposureLimits& l = s.limits;
  if (under > over) {
    if (s.iso < l.iso_max) return ExposureAction::IsoUp;
    bool can_open = false;
    for (double f : stops) can_open |= f < s.f_stop - 1e-9 && f >= l.f_min - 1e-9;
    if (can_open) return ExposureAction::ApertureOpen;
    if (s.shutter_ms < l.shutter_max_ms) return ExposureAction::ShutterUp;
    return ExposureAction::Saturated;
  }
  if (s.iso > l.iso_min) return ExposureAction::IsoDown;
  bool can_close = false;
  for (double f : stops) can_close |= f > s.f_stop + 1e-9 && f <= l.f_max + 1e-9;
  if (can_close) return ExposureAction::ApertureClose;
  if (s.shutter_ms > l.shutter_min_ms) return ExposureAction::ShutterDown;
  return ExposureAction::Saturated;
}

// Axis-aligned square at height z from (x0, x0) with side `size`; UVs span
// the square [uv0, uv0 + uv_size].
inline TriangleMesh unit_quad(double z = 0.0, double x0 = 0.0, double size = 1.0, Vec2 uv0 = Vec2(0, 0), double uv_size = 1.0) {
  std::vector<Vec3> v = {Vec3(x0, x0, z), Vec3(x0 + size, x0, z), Vec3(x0 + size, x0 + size, z), Vec3(x0, x0 + size, z)};
  std::vector<Vec2> uv = {uv0, uv0 + Vec2(uv_size, 0), uv0 + Vec2(uv_size, uv_size), uv0 + Vec2(0, uv_size)};
  return TriangleMesh::build(v, {Eigen::Vector3i(0, 1, 2), Eigen::Vector3i(0, 2, 3)}, uv);
}

inline CameraView constant_view(const Vec3& eye, const Vec3& target, const Vec3& color) {
  CameraView v;
  v.pose = look_at(eye, target);
  v.intrinsics.width = 200;
  v.intrinsics.height = 200;
  v.intrinsics.cx = 99.5;
  v.intrinsics.cy = 99.5;
  v.intrinsics.fx = v.intrinsics.fy = 120.0;
  v.image = RgbImage(200, 200, color);
  return v;
}

}  // namespace agriscan::testing
