#include "agriscan/sensor_sim.hpp"

#include "agriscan/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace agriscan {

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over the combined key
  std::uint64_t z = seed * 0x9e3779b97f4a7c15ULL + index + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

PoseTrack generate_trajectory(const TrajectorySpec& spec, std::uint64_t seed) {
  if (!(spec.speed > 0.0)) fail(ErrorCode::InvalidArgument, "trajectory speed must be positive");
  if (!(spec.length > 0.0 && spec.rate > 0.0)) fail(ErrorCode::InvalidArgument, "trajectory length and rate must be positive");
  std::mt19937_64 rng(substream_seed(seed, 0x7a11));
  const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * kPi)(rng);
  const double duration = spec.length / spec.speed;
  const auto count = static_cast<std::size_t>(std::llround(duration * spec.rate)) + 1;
  const double omega = 2.0 * kPi * spec.wobble_frequency;
  const Quat heading0(Eigen::AngleAxisd(spec.yaw, Vec3::UnitZ()));

  std::vector<double> times(count);
  std::vector<Pose> poses(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) / spec.rate;
    const double lateral = spec.wobble_amplitude * std::sin(omega * t + phase);
    const double lateral_rate = spec.wobble_amplitude * omega * std::cos(omega * t + phase);
    times[k] = t;
    poses[k].position = spec.start + heading0 * Vec3(spec.speed * t, lateral, 0.0);
    const double yaw = std::atan2(lateral_rate, spec.speed);
    poses[k].rotation = heading0 * Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
  }
  return PoseTrack(std::move(times), std::move(poses));
}

std::vector<LaserProfile> simulate_laser_profiles(const RayCaster& scene, const PoseTrack& track,
                                                  const MountingCalibration& calib, const ScannerModel& model,
                                                  std::uint64_t seed, int threads) {
  model.validate();
  if (track.size() < 2) fail(ErrorCode::EmptyTrack, "laser simulation needs a pose track");
  const double t0 = track.start_time();
  const double span = track.end_time() - t0;
  const auto count = static_cast<std::size_t>(std::floor(span * model.scan_rate + 1e-9)) + 1;
  const int n = model.points_per_profile;

  std::vector<double> sin_a(n), cos_a(n);
  for (int j = 0; j < n; ++j) {
    const double a = model.beam_angle(j);
    sin_a[j] = std::sin(a);
    cos_a[j] = std::cos(a);
  }
  const Pose mount = calib.as_pose();
  const double reach = model.max_range + 6.0 * model.range_noise_sigma + 1e-3;

  std::vector<LaserProfile> profiles(count);
  parallel_for(count, threads, [&](std::size_t k) {
    LaserProfile& prof = profiles[k];
    prof.timestamp = t0 + static_cast<double>(k) / model.scan_rate;
    prof.samples.assign(n, LaserSample{});
    if (prof.timestamp > track.end_time()) return;
    const Pose sensor = compose(interpolate_pose(track, prof.timestamp), mount);
    const Mat3 r = sensor.rotation_matrix();
    std::mt19937_64 rng(substream_seed(seed, k));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int j = 0; j < n; ++j) {
      const Vec3 dir = r * Vec3(sin_a[j], 0.0, cos_a[j]);
      const auto hit = scene.intersect(sensor.position, dir, reach);
      // Draw unconditionally so the stream does not depend on hit pattern.
      const double eps = noise(rng);
      if (!hit) continue;
      const double range = hit->distance + model.range_noise_sigma * eps;
      if (range < model.min_range || range > model.max_range) continue;
      prof.samples[j].x = range * sin_a[j];
      prof.samples[j].z = range * cos_a[j];
      prof.samples[j].valid = true;
    }
  });
  return profiles;
}

namespace {

// Weights of the first derivative at node k of the Lagrange polynomial
// through nodes t[0..m).
std::vector<double> derivative_weights(const std::vector<double>& t, int k) {
  const int m = static_cast<int>(t.size());
  std::vector<double> w(m, 0.0);
  for (int j = 0; j < m; ++j) {
    if (j == k) {
      for (int i = 0; i < m; ++i) {
        if (i != k) w[k] += 1.0 / (t[k] - t[i]);
      }
      continue;
    }
    double c = 1.0 / (t[j] - t[k]);
    for (int i = 0; i < m; ++i) {
      if (i != j && i != k) c *= (t[k] - t[i]) / (t[j] - t[i]);
    }
    w[j] = c;
  }
  return w;
}

template <typename ValueAt>
Vec3 differentiate(const std::vector<double>& times, std::size_t k, ValueAt value_at) {
  const int n = static_cast<int>(times.size());
  const int width = std::min(5, n);
  const int lo = std::clamp(static_cast<int>(k) - width / 2, 0, n - width);
  std::vector<double> t(times.begin() + lo, times.begin() + lo + width);
  // shift for conditioning
  const double t_ref = times[k];
  for (double& x : t) x -= t_ref;
  const auto w = derivative_weights(t, static_cast<int>(k) - lo);
  Vec3 d = Vec3::Zero();
  for (int i = 0; i < width; ++i) d += w[i] * value_at(lo + i);
  return d;
}

}  // namespace

std::vector<Vec3> track_velocities(const PoseTrack& track) {
  const auto& times = track.times();
  const auto& poses = track.poses();
  std::vector<Vec3> v(track.size());
  for (std::size_t k = 0; k < track.size(); ++k) {
    const Vec3 p_ref = poses[k].position;
    v[k] = differentiate(times, k, [&](int i) -> Vec3 { return poses[i].position - p_ref; });
  }
  return v;
}

InertialData simulate_inertial_and_gnss(const PoseTrack& track, const ImuNoise& imu_noise,
                                        const GnssSimConfig& gnss, std::uint64_t seed) {
  if (track.size() < 5) fail(ErrorCode::EmptyTrack, "inertial simulation needs at least 5 track samples");
  const auto& times = track.times();
  const auto& poses = track.poses();
  const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  const double rate = 1.0 / dt;

  const std::vector<Vec3> vel = track_velocities(track);
  const Vec3 gravity(0.0, 0.0, -kGravity);

  InertialData out;
  std::mt19937_64 rng(substream_seed(seed, 0x1a0));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gauss3 = [&]() { return Vec3(normal(rng), normal(rng), normal(rng)); };
  const double gyro_sigma = imu_noise.gyro_density * std::sqrt(rate);
  const double accel_sigma = imu_noise.accel_density * std::sqrt(rate);

  out.imu.resize(track.size());
  for (std::size_t k = 0; k < track.size(); ++k) {
    const Quat q_ref = poses[k].rotation;
    const Vec3 omega = differentiate(times, k, [&](int i) -> Vec3 {
      return so3::log(q_ref.conjugate() * poses[i].rotation);
    });
    const Vec3 acc = differentiate(times, k, [&](int i) -> Vec3 { return vel[i] - vel[k]; });
    ImuSample& s = out.imu[k];
    s.t = times[k];
    s.gyro = omega + imu_noise.gyro_bias + gyro_sigma * gauss3();
    s.accel = q_ref.conjugate() * (acc - gravity) + imu_noise.accel_bias + accel_sigma * gauss3();
  }

  const Vec3 sigma(gnss.sigma_horizontal, gnss.sigma_horizontal, gnss.sigma_vertical);
  if (gnss.rate > 0.0) {
    const auto n_fix = static_cast<std::size_t>(std::floor((track.end_time() - track.start_time()) * gnss.rate + 1e-9)) + 1;
    for (std::size_t k = 0; k < n_fix; ++k) {
      const double t = track.start_time() + static_cast<double>(k) / gnss.rate;
      const Pose p = interpolate_pose(track, std::min(t, track.end_time()));
      GnssFix fix;
      fix.t = t;
      fix.sigma = sigma;
      fix.position = transform_point(p, gnss.antenna_lever_arm) + sigma.cwiseProduct(gauss3());
      out.gnss.push_back(fix);
    }
  }
  if (gnss.heading_rate > 0.0) {
    const auto n_obs =
        static_cast<std::size_t>(std::floor((track.end_time() - track.start_time()) * gnss.heading_rate + 1e-9)) + 1;
    for (std::size_t k = 0; k < n_obs; ++k) {
      const double t = track.start_time() + static_cast<double>(k) / gnss.heading_rate;
      const Pose p = interpolate_pose(track, std::min(t, track.end_time()));
      const Vec3 d = p.rotation * Vec3::UnitX();
      const double yaw = std::atan2(d.y(), d.x());
      const double pitch = std::atan2(d.z(), std::hypot(d.x(), d.y()));
      HeadingPitchObs obs;
      obs.t = t;
      obs.heading_sigma = gnss.heading_sigma;
      obs.pitch_sigma = gnss.pitch_sigma;
      obs.heading = wrap_angle(yaw_to_heading(yaw, gnss.convention) + gnss.heading_sigma * normal(rng));
      obs.pitch = pitch + gnss.pitch_sigma * normal(rng);
      out.heading.push_back(obs);
    }
  }
  return out;
}

MountingCalibration nominal_mounting(bool left, double lateral, double height, double tilt) {
  Mat3 base;
  base.col(0) = Vec3::UnitY();
  base.col(1) = Vec3::UnitX();
  base.col(2) = -Vec3::UnitZ();
  const double angle = left ? -tilt : tilt;
  MountingCalibration c;
  c.boresight = Quat(Eigen::AngleAxisd(angle, Vec3::UnitX()).toRotationMatrix() * base).normalized();
  c.lever_arm = Vec3(0.0, left ? lateral : -lateral, height);
  c.scanner_id = left ? "left" : "right";
  return c;
}

}  // namespace agriscan
