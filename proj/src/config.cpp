#include "agriscan/config.hpp"

#include <set>

namespace agriscan {

using nlohmann::json;

PipelineConfig::PipelineConfig() {
  mounting.scanners = {nominal_mounting(true), nominal_mounting(false)};
  scene.random_plants.plants = 6;
  finalize();
}

void PipelineConfig::finalize() {
  graph.imu_noise.gyro_density = imu.gyro_density;
  graph.imu_noise.accel_density = imu.accel_density;
  graph.imu_noise.gyro_bias_walk = imu_gyro_bias_walk;
  graph.imu_noise.accel_bias_walk = imu_accel_bias_walk;
  graph.imu_noise.nominal_rate = trajectory.rate;
  graph.antenna_lever_arm = gnss.antenna_lever_arm;
  graph.heading_convention = gnss.convention;
  evaluation.m3c2.threads = threads;

  auto require = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::Config, what);
  };
  require(threads >= 1, "threads must be >= 1");
  require(trajectory.speed > 0.0 && trajectory.length > 0.0 && trajectory.rate > 0.0, "trajectory must move");
  require(gnss.rate > 0.0 && gnss.heading_rate > 0.0, "GNSS rates must be positive");
  require(gnss.sigma_horizontal > 0.0 && gnss.sigma_vertical > 0.0, "GNSS sigmas must be positive");
  require(!mounting.scanners.empty() && mounting.scanners.size() < 256, "need 1..255 scanners");
  require(evaluation.reference_density > 0.0, "reference density must be positive");
  require(!evaluation.bpa_radius_multipliers.empty(), "BPA needs radii");
  require(calibration_profile_stride >= 1, "calibration profile stride must be >= 1");
  require(texture.resolution > 0 && texture.cameras > 0, "texture needs a resolution and cameras");
  scanner.validate();
  evaluation.m3c2.validate();
  exposure.initial.validate();
}

namespace {

// Object reader that records consumed keys so leftovers can be rejected.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail(ErrorCode::Config, where_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!take(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(ErrorCode::Config, where_ + "." + key + ": " + e.what());
    }
  }

  void vec3(const char* key, Vec3& out) {
    if (!take(key)) return;
    const json& a = j_.at(key);
    if (!a.is_array() || a.size() != 3) fail(ErrorCode::Config, where_ + "." + key + " must be a 3-array");
    for (int i = 0; i < 3; ++i) {
      if (!a[static_cast<std::size_t>(i)].is_number()) fail(ErrorCode::Config, where_ + "." + key + " must be numeric");
      out[i] = a[static_cast<std::size_t>(i)].get<double>();
    }
  }

  const json* child(const char* key) { return take(key) ? &j_.at(key) : nullptr; }

  std::string path(const char* key) const { return where_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(ErrorCode::Config, "unknown key " + where_ + "." + it.key());
    }
  }

 private:
  bool take(const char* key) {
    if (!j_.contains(key)) return false;
    seen_.insert(key);
    return true;
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json v3(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

LeafPatch leaf_from_json(const json& j, const std::string& where) {
  LeafPatch l;
  Reader r(j, where);
  r.vec3("center", l.center);
  r.get("semi_axis_a", l.semi_axis_a);
  r.get("semi_axis_b", l.semi_axis_b);
  r.get("curvature", l.curvature);
  r.get("yaw", l.yaw);
  r.get("tilt", l.tilt);
  r.get("rings", l.rings);
  r.get("segments", l.segments);
  r.finish();
  return l;
}

json leaf_to_json(const LeafPatch& l) {
  return {{"center", v3(l.center)}, {"semi_axis_a", l.semi_axis_a}, {"semi_axis_b", l.semi_axis_b},
          {"curvature", l.curvature}, {"yaw", l.yaw}, {"tilt", l.tilt}, {"rings", l.rings}, {"segments", l.segments}};
}

}  // namespace

PipelineConfig config_from_json(const json& root) {
  PipelineConfig c;
  Reader r(root, "config");
  r.get("seed", c.seed);
  r.get("threads", c.threads);
  r.get("output_dir", c.output_dir);

  if (const json* s = r.child("scene")) {
    Reader rs(*s, "scene");
    rs.get("seed", c.scene.seed);
    if (const json* g = rs.child("ground")) {
      Reader rg(*g, "scene.ground");
      rg.get("height", c.scene.ground.height);
      rg.get("x_min", c.scene.ground.x_min);
      rg.get("x_max", c.scene.ground.x_max);
      rg.get("y_min", c.scene.ground.y_min);
      rg.get("y_max", c.scene.ground.y_max);
      rg.get("cell", c.scene.ground.cell);
      rg.finish();
    }
    if (const json* leaves = rs.child("leaves")) {
      if (!leaves->is_array()) fail(ErrorCode::Config, "scene.leaves must be an array");
      c.scene.leaves.clear();
      for (std::size_t i = 0; i < leaves->size(); ++i) {
        c.scene.leaves.push_back(leaf_from_json((*leaves)[i], "scene.leaves[" + std::to_string(i) + "]"));
      }
    }
    if (const json* p = rs.child("random_plants")) {
      Reader rp(*p, "scene.random_plants");
      RandomPlantSpec& q = c.scene.random_plants;
      rp.get("plants", q.plants);
      rp.get("leaves_per_plant", q.leaves_per_plant);
      rp.get("x_start", q.x_start);
      rp.get("x_end", q.x_end);
      rp.get("row_y", q.row_y);
      rp.get("min_leaf_length", q.min_leaf_length);
      rp.get("max_leaf_length", q.max_leaf_length);
      rp.get("min_height", q.min_height);
      rp.get("max_height", q.max_height);
      rp.get("max_tilt", q.max_tilt);
      rp.get("max_curvature", q.max_curvature);
      rp.finish();
    }
    rs.finish();
  }

  if (const json* t = r.child("trajectory")) {
    Reader rt(*t, "trajectory");
    rt.get("length_m", c.trajectory.length);
    rt.get("speed_mps", c.trajectory.speed);
    rt.get("wobble_amplitude_m", c.trajectory.wobble_amplitude);
    rt.get("wobble_frequency_hz", c.trajectory.wobble_frequency);
    rt.get("rate_hz", c.trajectory.rate);
    rt.vec3("start", c.trajectory.start);
    rt.get("yaw", c.trajectory.yaw);
    rt.finish();
  }

  if (const json* s = r.child("scanner")) {
    Reader rs(*s, "scanner");
    rs.get("points_per_profile", c.scanner.points_per_profile);
    rs.get("fan_half_angle", c.scanner.fan_half_angle);
    rs.get("min_range_m", c.scanner.min_range);
    rs.get("max_range_m", c.scanner.max_range);
    rs.get("range_noise_sigma_m", c.scanner.range_noise_sigma);
    rs.get("scan_rate_hz", c.scanner.scan_rate);
    rs.finish();
  }

  if (const json* m = r.child("mounting")) {
    Reader rm(*m, "mounting");
    if (const json* sc = rm.child("scanners")) {
      if (!sc->is_array()) fail(ErrorCode::Config, "mounting.scanners must be an array");
      c.mounting.scanners.clear();
      for (const json& e : *sc) {
        try {
          c.mounting.scanners.push_back(io::calibration_from_json(e));
        } catch (const Error& err) {
          fail(ErrorCode::Config, std::string("mounting.scanners: ") + err.what());
        }
      }
    }
    rm.get("init_rotation_error_deg", c.mounting.init_rotation_error_deg);
    rm.get("init_lever_error_m", c.mounting.init_lever_error_m);
    rm.finish();
  }

  if (const json* i = r.child("imu")) {
    Reader ri(*i, "imu");
    ri.get("gyro_density", c.imu.gyro_density);
    ri.get("accel_density", c.imu.accel_density);
    ri.vec3("gyro_bias", c.imu.gyro_bias);
    ri.vec3("accel_bias", c.imu.accel_bias);
    ri.get("gyro_bias_walk", c.imu_gyro_bias_walk);
    ri.get("accel_bias_walk", c.imu_accel_bias_walk);
    ri.finish();
  }

  if (const json* g = r.child("gnss")) {
    Reader rg(*g, "gnss");
    rg.get("rate_hz", c.gnss.rate);
    rg.get("sigma_horizontal_m", c.gnss.sigma_horizontal);
    rg.get("sigma_vertical_m", c.gnss.sigma_vertical);
    rg.vec3("antenna_lever_arm", c.gnss.antenna_lever_arm);
    rg.get("heading_rate_hz", c.gnss.heading_rate);
    rg.get("heading_sigma_rad", c.gnss.heading_sigma);
    rg.get("pitch_sigma_rad", c.gnss.pitch_sigma);
    std::string conv = to_string(c.gnss.convention);
    rg.get("heading_convention", conv);
    try {
      c.gnss.convention = parse_heading_convention(conv);
    } catch (const Error& e) {
      fail(ErrorCode::Config, e.what());
    }
    rg.finish();
  }

  if (const json* s = r.child("smoother")) {
    Reader rs(*s, "smoother");
    rs.get("lambda_init", c.solver.lambda_init);
    rs.get("lambda_factor", c.solver.lambda_factor);
    rs.get("max_iterations", c.solver.max_iterations);
    rs.get("relative_tolerance", c.solver.relative_tolerance);
    rs.get("huber_k", c.graph.huber_k);
    rs.get("heading_tolerance_s", c.graph.heading_tolerance);
    rs.get("use_heading", c.graph.use_heading);
    rs.get("prior_rotation_sigma", c.graph.prior_rotation_sigma);
    rs.get("prior_position_sigma", c.graph.prior_position_sigma);
    rs.get("prior_velocity_sigma", c.graph.prior_velocity_sigma);
    rs.get("prior_accel_bias_sigma", c.graph.prior_accel_bias_sigma);
    rs.get("prior_gyro_bias_sigma", c.graph.prior_gyro_bias_sigma);
    rs.finish();
  }

  if (const json* e = r.child("evaluation")) {
    Reader re(*e, "evaluation");
    EvaluationConfig& ev = c.evaluation;
    re.get("reference_density", ev.reference_density);
    re.get("max_compared_points", ev.max_compared_points);
    re.get("max_core_points", ev.max_core_points);
    re.get("run_icp", ev.run_icp);
    re.get("icp_max_points", ev.icp_max_points);
    if (const json* i = re.child("icp")) {
      Reader ri(*i, "evaluation.icp");
      ri.get("trim_ratio", ev.icp.trim_ratio);
      ri.get("max_iterations", ev.icp.max_iterations);
      ri.get("tolerance_m", ev.icp.tolerance);
      ri.finish();
    }
    if (const json* m = re.child("m3c2")) {
      Reader rm(*m, "evaluation.m3c2");
      rm.get("normal_scale_m", ev.m3c2.normal_scale);
      rm.get("projection_radius_m", ev.m3c2.projection_radius);
      rm.get("max_depth_m", ev.m3c2.max_depth);
      rm.get("min_normal_neighbors", ev.m3c2.min_normal_neighbors);
      rm.vec3("orientation", ev.m3c2.orientation);
      rm.finish();
    }
    re.get("bpa_radius_multipliers", ev.bpa_radius_multipliers);
    re.get("leaf_voxel_m", ev.leaf_voxel);
    re.get("leaf_extract_distance_m", ev.leaf_extract_distance);
    re.get("leaf_normal_radius_m", ev.leaf_normal_radius);
    re.finish();
  }

  if (const json* t = r.child("texture")) {
    Reader rt(*t, "texture");
    rt.get("resolution", c.texture.resolution);
    rt.get("cameras", c.texture.cameras);
    rt.get("dome_radius_m", c.texture.dome_radius);
    if (const json* k = rt.child("intrinsics")) {
      Reader rk(*k, "texture.intrinsics");
      rk.get("fx", c.texture.intrinsics.fx);
      rk.get("fy", c.texture.intrinsics.fy);
      rk.get("cx", c.texture.intrinsics.cx);
      rk.get("cy", c.texture.intrinsics.cy);
      rk.get("width", c.texture.intrinsics.width);
      rk.get("height", c.texture.intrinsics.height);
      rk.finish();
    }
    rt.finish();
  }

  if (const json* x = r.child("exposure")) {
    Reader rx(*x, "exposure");
    ExposureConfig& ex = c.exposure;
    rx.get("iso", ex.initial.iso);
    rx.get("f_stop", ex.initial.f_stop);
    rx.get("shutter_ms", ex.initial.shutter_ms);
    rx.get("iso_min", ex.initial.limits.iso_min);
    rx.get("iso_max", ex.initial.limits.iso_max);
    rx.get("f_min", ex.initial.limits.f_min);
    rx.get("f_max", ex.initial.limits.f_max);
    rx.get("shutter_min_ms", ex.initial.limits.shutter_min_ms);
    rx.get("shutter_max_ms", ex.initial.limits.shutter_max_ms);
    rx.get("tolerance", ex.params.tolerance);
    rx.get("iso_step", ex.params.iso_step);
    rx.get("shutter_step_ms", ex.params.shutter_step_ms);
    rx.get("scene_gain", ex.scene_gain);
    rx.get("max_steps", ex.max_steps);
    rx.finish();
  }

  if (const json* k = r.child("calibration")) {
    Reader rk(*k, "calibration");
    rk.get("max_iterations", c.calibration.max_iterations);
    rk.get("assignment_margin_m", c.calibration.assignment_margin);
    rk.get("assignment_distance_m", c.calibration.assignment_distance);
    rk.get("profile_stride", c.calibration_profile_stride);
    rk.finish();
  }
  r.finish();
  c.finalize();
  return c;
}

json config_to_json(const PipelineConfig& c) {
  json leaves = json::array();
  for (const LeafPatch& l : c.scene.leaves) leaves.push_back(leaf_to_json(l));
  const RandomPlantSpec& q = c.scene.random_plants;
  json scanners = json::array();
  for (const MountingCalibration& m : c.mounting.scanners) scanners.push_back(io::calibration_to_json(m));
  const EvaluationConfig& ev = c.evaluation;
  const ExposureConfig& ex = c.exposure;
  const CameraIntrinsics& k = c.texture.intrinsics;
  return {
      {"seed", c.seed},
      {"threads", c.threads},
      {"output_dir", c.output_dir},
      {"scene",
       {{"seed", c.scene.seed},
        {"ground",
         {{"height", c.scene.ground.height}, {"x_min", c.scene.ground.x_min}, {"x_max", c.scene.ground.x_max},
          {"y_min", c.scene.ground.y_min}, {"y_max", c.scene.ground.y_max}, {"cell", c.scene.ground.cell}}},
        {"leaves", leaves},
        {"random_plants",
         {{"plants", q.plants}, {"leaves_per_plant", q.leaves_per_plant}, {"x_start", q.x_start},
          {"x_end", q.x_end}, {"row_y", q.row_y}, {"min_leaf_length", q.min_leaf_length},
          {"max_leaf_length", q.max_leaf_length}, {"min_height", q.min_height}, {"max_height", q.max_height},
          {"max_tilt", q.max_tilt}, {"max_curvature", q.max_curvature}}}}},
      {"trajectory",
       {{"length_m", c.trajectory.length}, {"speed_mps", c.trajectory.speed},
        {"wobble_amplitude_m", c.trajectory.wobble_amplitude},
        {"wobble_frequency_hz", c.trajectory.wobble_frequency}, {"rate_hz", c.trajectory.rate},
        {"start", v3(c.trajectory.start)}, {"yaw", c.trajectory.yaw}}},
      {"scanner",
       {{"points_per_profile", c.scanner.points_per_profile}, {"fan_half_angle", c.scanner.fan_half_angle},
        {"min_range_m", c.scanner.min_range}, {"max_range_m", c.scanner.max_range},
        {"range_noise_sigma_m", c.scanner.range_noise_sigma}, {"scan_rate_hz", c.scanner.scan_rate}}},
      {"mounting",
       {{"scanners", scanners}, {"init_rotation_error_deg", c.mounting.init_rotation_error_deg},
        {"init_lever_error_m", c.mounting.init_lever_error_m}}},
      {"imu",
       {{"gyro_density", c.imu.gyro_density}, {"accel_density", c.imu.accel_density},
        {"gyro_bias", v3(c.imu.gyro_bias)}, {"accel_bias", v3(c.imu.accel_bias)},
        {"gyro_bias_walk", c.imu_gyro_bias_walk}, {"accel_bias_walk", c.imu_accel_bias_walk}}},
      {"gnss",
       {{"rate_hz", c.gnss.rate}, {"sigma_horizontal_m", c.gnss.sigma_horizontal},
        {"sigma_vertical_m", c.gnss.sigma_vertical}, {"antenna_lever_arm", v3(c.gnss.antenna_lever_arm)},
        {"heading_rate_hz", c.gnss.heading_rate}, {"heading_sigma_rad", c.gnss.heading_sigma},
        {"pitch_sigma_rad", c.gnss.pitch_sigma}, {"heading_convention", to_string(c.gnss.convention)}}},
      {"smoother",
       {{"lambda_init", c.solver.lambda_init}, {"lambda_factor", c.solver.lambda_factor},
        {"max_iterations", c.solver.max_iterations}, {"relative_tolerance", c.solver.relative_tolerance},
        {"huber_k", c.graph.huber_k}, {"heading_tolerance_s", c.graph.heading_tolerance},
        {"use_heading", c.graph.use_heading}, {"prior_rotation_sigma", c.graph.prior_rotation_sigma},
        {"prior_position_sigma", c.graph.prior_position_sigma},
        {"prior_velocity_sigma", c.graph.prior_velocity_sigma},
        {"prior_accel_bias_sigma", c.graph.prior_accel_bias_sigma},
        {"prior_gyro_bias_sigma", c.graph.prior_gyro_bias_sigma}}},
      {"calibration",
       {{"max_iterations", c.calibration.max_iterations},
        {"assignment_margin_m", c.calibration.assignment_margin},
        {"assignment_distance_m", c.calibration.assignment_distance},
        {"profile_stride", c.calibration_profile_stride}}},
      {"evaluation",
       {{"reference_density", ev.reference_density},
        {"max_compared_points", ev.max_compared_points},
        {"max_core_points", ev.max_core_points},
        {"run_icp", ev.run_icp},
        {"icp_max_points", ev.icp_max_points},
        {"icp",
         {{"trim_ratio", ev.icp.trim_ratio}, {"max_iterations", ev.icp.max_iterations},
          {"tolerance_m", ev.icp.tolerance}}},
        {"m3c2",
         {{"normal_scale_m", ev.m3c2.normal_scale}, {"projection_radius_m", ev.m3c2.projection_radius},
          {"max_depth_m", ev.m3c2.max_depth}, {"min_normal_neighbors", ev.m3c2.min_normal_neighbors},
          {"orientation", v3(ev.m3c2.orientation)}}},
        {"bpa_radius_multipliers", ev.bpa_radius_multipliers},
        {"leaf_voxel_m", ev.leaf_voxel},
        {"leaf_extract_distance_m", ev.leaf_extract_distance},
        {"leaf_normal_radius_m", ev.leaf_normal_radius}}},
      {"texture",
       {{"resolution", c.texture.resolution},
        {"cameras", c.texture.cameras},
        {"dome_radius_m", c.texture.dome_radius},
        {"intrinsics",
         {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}}}}},
      {"exposure",
       {{"iso", ex.initial.iso}, {"f_stop", ex.initial.f_stop}, {"shutter_ms", ex.initial.shutter_ms},
        {"iso_min", ex.initial.limits.iso_min}, {"iso_max", ex.initial.limits.iso_max},
        {"f_min", ex.initial.limits.f_min}, {"f_max", ex.initial.limits.f_max},
        {"shutter_min_ms", ex.initial.limits.shutter_min_ms}, {"shutter_max_ms", ex.initial.limits.shutter_max_ms},
        {"tolerance", ex.params.tolerance}, {"iso_step", ex.params.iso_step},
        {"shutter_step_ms", ex.params.shutter_step_ms}, {"scene_gain", ex.scene_gain},
        {"max_steps", ex.max_steps}}},
  };
}

PipelineConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = io::read_json(path);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) fail(ErrorCode::Config, e.what());
    throw;
  }
  return config_from_json(j);
}

std::string config_hash(const PipelineConfig& config) {
  json j = config_to_json(config);
  j.erase("output_dir");
  j.erase("threads");
  const std::string text = j.dump();
  return io::hex64(io::fnv1a(text.data(), text.size()));
}

}  // namespace agriscan
