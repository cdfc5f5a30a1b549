#include "agriscan/imu_preintegration.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace agriscan {

Quat PreintegratedDelta::corrected_rotation(const ImuBias& bias) const {
  const Vec3 dbg = bias.gyro - linearization_bias.gyro;
  return renormalized(delta_rotation * so3::exp_quat(rotation_by_gyro_bias * dbg));
}

Vec3 PreintegratedDelta::corrected_velocity(const ImuBias& bias) const {
  return delta_velocity + velocity_by_accel_bias * (bias.accel - linearization_bias.accel) +
         velocity_by_gyro_bias * (bias.gyro - linearization_bias.gyro);
}

Vec3 PreintegratedDelta::corrected_position(const ImuBias& bias) const {
  return delta_position + position_by_accel_bias * (bias.accel - linearization_bias.accel) +
         position_by_gyro_bias * (bias.gyro - linearization_bias.gyro);
}

namespace {

ImuSample lerp_sample(const ImuSample& a, const ImuSample& b, double t) {
  if (t == a.t) return a;
  if (t == b.t) return b;
  const double s = (t - a.t) / (b.t - a.t);
  ImuSample out;
  out.t = t;
  out.gyro = (1.0 - s) * a.gyro + s * b.gyro;
  out.accel = (1.0 - s) * a.accel + s * b.accel;
  return out;
}

}  // namespace

PreintegratedDelta preintegrate_imu(std::span<const ImuSample> samples, const ImuBias& bias, double t0, double t1,
                                    const ImuNoiseModel& noise) {
  if (!(t1 > t0)) fail(ErrorCode::InvalidArgument, "preintegration interval must have positive duration");
  if (samples.size() < 2) fail(ErrorCode::EmptyStream, "preintegration needs at least two IMU samples");
  if (samples.front().t > t0 || samples.back().t < t1) {
    fail(ErrorCode::OutOfRange, "IMU samples do not cover the preintegration interval");
  }
  const double max_gap = 5.0 / noise.nominal_rate;

  // Integration nodes: interpolated start, interior samples, interpolated end.
  auto first_after = std::upper_bound(samples.begin(), samples.end(), t0,
                                      [](double t, const ImuSample& s) { return t < s.t; });
  std::vector<ImuSample> nodes;
  nodes.push_back(lerp_sample(*(first_after - 1), first_after == samples.end() ? *(first_after - 1) : *first_after, t0));
  for (auto it = first_after; it != samples.end() && it->t < t1; ++it) nodes.push_back(*it);
  auto end_it = std::lower_bound(samples.begin(), samples.end(), t1,
                                 [](const ImuSample& s, double t) { return s.t < t; });
  if (end_it->t == t1) {
    nodes.push_back(*end_it);
  } else {
    nodes.push_back(lerp_sample(*(end_it - 1), *end_it, t1));
  }
  // Gap check on the raw samples spanning the interval.
  for (auto it = first_after == samples.begin() ? first_after : first_after - 1; it + 1 != samples.end(); ++it) {
    if ((it + 1)->t - it->t > max_gap + 1e-12) {
      fail(ErrorCode::GapTooLarge, "IMU sample gap of " + std::to_string((it + 1)->t - it->t) + " s");
    }
    if (it->t >= t1) break;
  }

  PreintegratedDelta d;
  d.linearization_bias = bias;
  d.duration = t1 - t0;
  Mat3 dR = Mat3::Identity();
  Vec3 dv = Vec3::Zero();
  Vec3 dp = Vec3::Zero();
  Mat9 cov = Mat9::Zero();
  const double gd2 = noise.gyro_density * noise.gyro_density;
  const double ad2 = noise.accel_density * noise.accel_density;

  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
    const ImuSample& a = nodes[k];
    const ImuSample& b = nodes[k + 1];
    const double h = b.t - a.t;
    if (h <= 0.0) continue;
    const Vec3 omega = 0.5 * (a.gyro + b.gyro) - bias.gyro;
    const Vec3 fa = a.accel - bias.accel;
    const Vec3 fb = b.accel - bias.accel;
    const Mat3 step = so3::exp(omega * h);
    const Mat3 dR_next = dR * step;
    const Vec3 acc = 0.5 * (dR * fa + dR_next * fb);
    const Vec3 f_mid = 0.5 * (fa + fb);
    const Mat3 f_skew = so3::skew(f_mid);
    const Mat3 r_mid = 0.5 * (dR + dR_next);
    const Mat3 jr = so3::right_jacobian(omega * h);

    // Bias sensitivities: exact first derivative of the trapezoid update.
    const Mat3 rot_bg_next = step.transpose() * d.rotation_by_gyro_bias - jr * h;
    const Mat3 acc_bg = -0.5 * (dR * so3::skew(fa) * d.rotation_by_gyro_bias + dR_next * so3::skew(fb) * rot_bg_next);
    d.position_by_accel_bias += d.velocity_by_accel_bias * h - 0.5 * r_mid * h * h;
    d.position_by_gyro_bias += d.velocity_by_gyro_bias * h + 0.5 * acc_bg * h * h;
    d.velocity_by_accel_bias += -r_mid * h;
    d.velocity_by_gyro_bias += acc_bg * h;
    d.rotation_by_gyro_bias = rot_bg_next;

    // Covariance in (rotation, velocity, position).
    Mat9 A = Mat9::Identity();
    A.block<3, 3>(0, 0) = step.transpose();
    A.block<3, 3>(3, 0) = -dR * f_skew * h;
    A.block<3, 3>(6, 0) = -0.5 * dR * f_skew * h * h;
    A.block<3, 3>(6, 3) = Mat3::Identity() * h;
    Eigen::Matrix<double, 9, 3> Bg = Eigen::Matrix<double, 9, 3>::Zero();
    Eigen::Matrix<double, 9, 3> Ba = Eigen::Matrix<double, 9, 3>::Zero();
    Bg.block<3, 3>(0, 0) = jr * h;
    Ba.block<3, 3>(3, 0) = r_mid * h;
    Ba.block<3, 3>(6, 0) = 0.5 * r_mid * h * h;
    cov = A * cov * A.transpose() + (gd2 / h) * Bg * Bg.transpose() + (ad2 / h) * Ba * Ba.transpose();

    dp += dv * h + 0.5 * acc * h * h;
    dv += acc * h;
    dR = dR_next;
  }
  d.delta_rotation = Quat(dR).normalized();
  d.delta_velocity = dv;
  d.delta_position = dp;
  d.covariance = 0.5 * (cov + cov.transpose());
  return d;
}

NavState predict(const NavState& s, const PreintegratedDelta& d) {
  const Vec3 g(0.0, 0.0, -kGravity);
  const double T = d.duration;
  NavState out = s;
  out.rotation = renormalized(s.rotation * d.corrected_rotation(s.bias));
  out.velocity = s.velocity + g * T + s.rotation * d.corrected_velocity(s.bias);
  out.position = s.position + s.velocity * T + 0.5 * g * T * T + s.rotation * d.corrected_position(s.bias);
  return out;
}

}  // namespace agriscan
