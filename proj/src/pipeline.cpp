#include "agriscan/pipeline.hpp"

#include "agriscan/bpa.hpp"
#include "agriscan/cloud_ops.hpp"
#include "agriscan/io.hpp"
#include "agriscan/kdtree.hpp"

#include <Eigen/Core>

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <random>

namespace agriscan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void note(const std::string& stage, const std::string& msg) { std::clog << "[" << stage << "] " << msg << "\n"; }

std::string profiles_name(std::size_t i) { return "profiles_" + std::to_string(i) + ".bin"; }

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

std::vector<int> patch_of_triangles(const SceneMesh& sm) {
  std::vector<int> patch(sm.mesh.triangles.size(), -1);
  for (std::size_t p = 0; p < sm.patch_triangles.size(); ++p) {
    for (int t = sm.patch_triangles[p].first; t < sm.patch_triangles[p].second; ++t) {
      patch[static_cast<std::size_t>(t)] = static_cast<int>(p);
    }
  }
  return patch;
}

// Rotation angle between two unit quaternions.
double rotation_error(const Quat& a, const Quat& b) { return so3::log(a.conjugate() * b).norm(); }

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

void write_csv(const fs::path& path, const std::string& header, const std::vector<std::vector<std::string>>& rows) {
  std::string buf = header + "\n";
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) buf.push_back(',');
      buf += row[k];
    }
    buf.push_back('\n');
  }
  io::write_text(path, buf);
}

void apply_pose(const Pose& T, PointCloud& cloud) {
  const Mat3 R = T.rotation_matrix();
  for (Vec3& p : cloud.points) p = R * p + T.position;
  for (Vec3& n : cloud.normals) n = R * n;
}

json precision_json(const PrecisionReport& r) {
  json edges = json::array();
  for (double e : r.histogram.edges) edges.push_back(e * 1e3);
  return {{"sigma_mm", r.sigma * 1e3},
          {"mean_mm", r.mean * 1e3},
          {"count", r.count},
          {"histogram", {{"edges_mm", edges}, {"counts", r.histogram.counts}}}};
}

// Reads the recorded streams; the heading stream is optional.
std::vector<HeadingPitchObs> read_heading_if_present(const fs::path& out, bool wanted) {
  const fs::path p = out / "heading.csv";
  if (!wanted || !fs::exists(p)) return {};
  return io::read_heading_csv(p);
}

}  // namespace

std::vector<PlanePatch> calibration_planes(double ground_height) {
  const double tilt = 35.0 * kPi / 180.0;
  std::vector<PlanePatch> planes;
  PlanePatch ground;
  ground.center = Vec3(1.5, 0.0, ground_height);
  ground.half_u = 2.5;
  ground.half_v = 2.0;
  planes.push_back(ground);
  const std::array<Vec3, 3> normals = {Vec3(std::sin(tilt), 0.0, std::cos(tilt)),
                                       Vec3(0.0, std::sin(tilt), std::cos(tilt)),
                                       Vec3(0.0, -std::sin(tilt), std::cos(tilt))};
  for (std::size_t k = 0; k < normals.size(); ++k) {
    PlanePatch b;
    b.center = Vec3(0.5 + static_cast<double>(k), 0.0, ground_height + 0.5);
    b.normal = normals[k];
    b.u_axis = k == 0 ? Vec3::UnitY() : Vec3::UnitX();
    b.half_u = 0.4;
    b.half_v = 0.4;
    planes.push_back(b);
  }
  return planes;
}

Vec3 procedural_albedo(int patch, const Vec2& uv) {
  Vec3 base;
  if (patch <= 0) {
    base = Vec3(120.0, 90.0, 60.0);
  } else {
    base = Vec3(40.0 + (patch * 37) % 60, 110.0 + (patch * 53) % 90, 30.0 + (patch * 29) % 40);
  }
  const int cu = static_cast<int>(std::floor(uv.x() * 64.0));
  const int cv = static_cast<int>(std::floor(uv.y() * 64.0));
  return ((cu + cv) & 1) ? base : 0.8 * base;
}

GrayImage expose_scene(const std::vector<double>& reflectance, int width, int height, const ExposureState& state,
                       double gain) {
  if (reflectance.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    fail(ErrorCode::InvalidArgument, "reflectance size does not match the image");
  }
  const double ev = static_cast<double>(state.iso) * state.shutter_ms / (100.0 * state.f_stop * state.f_stop);
  GrayImage img{width, height, std::vector<std::uint8_t>(reflectance.size())};
  for (std::size_t i = 0; i < reflectance.size(); ++i) {
    const double v = std::floor(255.0 * reflectance[i] * gain * ev);
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return img;
}

CloudComparison compare_clouds(const PointCloud& reference, PointCloud& compared, const EvaluationConfig& eval,
                               int threads) {
  if (reference.empty() || compared.empty()) fail(ErrorCode::EmptyCloud, "cannot compare an empty cloud");
  CloudComparison c;
  if (eval.run_icp) {
    const PointCloud src = stride_subsample(compared, eval.icp_max_points);
    c.icp = register_icp(src, reference, eval.icp);
    apply_pose(c.icp.transform, compared);
  }
  const double ratio =
      std::min(1.0, static_cast<double>(eval.max_core_points) / static_cast<double>(reference.size()));
  c.core_source = m3c2_core_indices(reference.size(), ratio);
  std::vector<Vec3> cores;
  cores.reserve(c.core_source.size());
  for (int i : c.core_source) cores.push_back(reference.points[static_cast<std::size_t>(i)]);
  M3C2Params p = eval.m3c2;
  p.threads = threads;
  c.m3c2 = compute_m3c2(reference, compared, p, &cores);
  std::vector<double> d;
  d.reserve(c.m3c2.entries.size());
  for (const M3C2Entry& e : c.m3c2.entries) d.push_back(e.distance);
  if (d.empty()) fail(ErrorCode::EmptyInput, "no M3C2 core point found compared points");
  c.precision = precision_stats(d);
  return c;
}

StageOutput run_simulate(const PipelineConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  StageOutput o;
  const SceneMesh sm = synthesize_scene(cfg.scene);
  io::write_ply(out / "scene.ply", sm.mesh);
  json leaves = json::array();
  for (std::size_t i = 0; i < sm.leaves.size(); ++i) {
    leaves.push_back({{"leaf", i + 1},
                      {"center", vec_json(sm.leaves[i].center)},
                      {"area_cm2", sm.leaves[i].surface_area() * 1e4}});
  }
  io::write_json(out / "leaves.json", leaves);
  note("simulate", "scene: " + std::to_string(sm.mesh.triangles.size()) + " triangles, " +
                       std::to_string(sm.leaves.size()) + " leaves");

  const PoseTrack truth = generate_trajectory(cfg.trajectory, substream_seed(cfg.seed, 0));
  io::write_pose_track_csv(out / "truth_trajectory.csv", truth);
  const InertialData d = simulate_inertial_and_gnss(truth, cfg.imu, cfg.gnss, substream_seed(cfg.seed, 1));
  io::write_imu_csv(out / "imu.csv", d.imu);
  io::write_gnss_csv(out / "gnss.csv", d.gnss);
  io::write_heading_csv(out / "heading.csv", d.heading);
  o.artifacts = {"scene.ply", "leaves.json", "truth_trajectory.csv", "imu.csv", "gnss.csv", "heading.csv"};

  const RayCaster caster(sm.mesh);
  json scanners = json::array();
  for (std::size_t i = 0; i < cfg.mounting.scanners.size(); ++i) {
    const MountingCalibration& calib = cfg.mounting.scanners[i];
    const auto profiles =
        simulate_laser_profiles(caster, truth, calib, cfg.scanner, substream_seed(cfg.seed, 2 + i), cfg.threads);
    std::size_t valid = 0;
    for (const LaserProfile& p : profiles) {
      for (const LaserSample& s : p.samples) valid += s.valid ? 1 : 0;
    }
    io::write_profiles(out / profiles_name(i), profiles);
    o.artifacts.push_back(profiles_name(i));
    // Body displacement between consecutive profiles.
    double spacing = 0.0;
    for (std::size_t k = 1; k < profiles.size(); ++k) {
      spacing += (interpolate_pose(truth, profiles[k].timestamp).position -
                  interpolate_pose(truth, profiles[k - 1].timestamp).position)
                     .norm();
    }
    if (profiles.size() > 1) spacing /= static_cast<double>(profiles.size() - 1);
    scanners.push_back({{"scanner", calib.scanner_id},
                        {"profiles", profiles.size()},
                        {"valid_samples", valid},
                        {"mean_profile_spacing_m", spacing}});
    note("simulate", calib.scanner_id + ": " + std::to_string(profiles.size()) + " profiles, " +
                         std::to_string(valid) + " valid samples");
  }
  o.metrics = {{"triangles", sm.mesh.triangles.size()},
               {"leaves", sm.leaves.size()},
               {"imu_samples", d.imu.size()},
               {"gnss_fixes", d.gnss.size()},
               {"heading_obs", d.heading.size()},
               {"scanners", scanners}};
  return o;
}

StageOutput run_solve(const PipelineConfig& cfg, const fs::path& out) {
  const auto imu = io::read_imu_csv(out / "imu.csv");
  const auto gnss = io::read_gnss_csv(out / "gnss.csv");
  const auto heading = read_heading_if_present(out, cfg.graph.use_heading);
  const FactorGraph graph = assemble_graph(imu, gnss, heading, cfg.graph);
  note("solve", std::to_string(graph.nodes.size()) + " nodes, " + std::to_string(graph.factors.size()) + " factors");
  const TrajectoryEstimate est = optimize_trajectory(graph, nullptr, cfg.solver);
  const OptimReport& r = est.report;
  io::write_pose_track_csv(out / "trajectory.csv", est.track);
  json report = {{"converged", r.converged},
                 {"initial_cost", r.initial_cost},
                 {"final_cost", r.final_cost},
                 {"iterations", r.iterations},
                 {"relinearizations", r.relinearizations},
                 {"cost_history", r.cost_history}};

  StageOutput o;
  o.metrics = {{"converged", r.converged},
               {"iterations", r.iterations},
               {"initial_cost", r.initial_cost},
               {"final_cost", r.final_cost},
               {"nodes", graph.nodes.size()}};
  const fs::path truth_path = out / "truth_trajectory.csv";
  if (fs::exists(truth_path)) {
    const PoseTrack truth = io::read_pose_track_csv(truth_path);
    double se = 0.0;
    double yaw_se = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < est.track.size(); ++k) {
      const double t = est.track.times()[k];
      if (!truth.covers(t)) continue;
      const Pose ref = interpolate_pose(truth, t);
      se += (est.track.poses()[k].position - ref.position).squaredNorm();
      yaw_se += std::pow(rotation_error(est.track.poses()[k].rotation, ref.rotation), 2);
      ++n;
    }
    if (n > 0) {
      report["position_rmse_m"] = std::sqrt(se / static_cast<double>(n));
      report["rotation_rmse_rad"] = std::sqrt(yaw_se / static_cast<double>(n));
      o.metrics["position_rmse_m"] = report["position_rmse_m"];
      o.metrics["rotation_rmse_rad"] = report["rotation_rmse_rad"];
    }
  }
  io::write_json(out / "optim_report.json", report);
  o.artifacts = {"trajectory.csv", "optim_report.json"};
  note("solve", std::string(r.converged ? "converged" : "not converged") + " after " +
                    std::to_string(r.iterations) + " iterations, cost " + io::format_double(r.initial_cost) +
                    " -> " + io::format_double(r.final_cost));
  if (!r.converged) fail(ErrorCode::NoConvergence, "trajectory smoother hit its iteration limit");
  return o;
}

StageOutput run_georef(const PipelineConfig& cfg, const fs::path& out) {
  const PoseTrack track = io::read_pose_track_csv(out / "trajectory.csv");
  std::vector<ScannerStream> streams;
  for (std::size_t i = 0; i < cfg.mounting.scanners.size(); ++i) {
    ScannerStream s;
    s.scanner_id = static_cast<std::uint8_t>(i);
    s.calib = cfg.mounting.scanners[i];
    s.profiles = io::read_profiles(out / profiles_name(i));
    streams.push_back(std::move(s));
  }
  CloudBuildResult r = build_point_cloud(streams, track, cfg.threads);
  streams.clear();
  if (r.cloud.empty()) fail(ErrorCode::EmptyCloud, "georeferencing produced no points");
  io::write_ply(out / "cloud.ply", r.cloud);
  note("georef", std::to_string(r.report.points) + " points from " + std::to_string(r.report.profiles_used) +
                     " profiles (" + std::to_string(r.report.profiles_skipped) + " outside the trajectory)");
  StageOutput o;
  o.artifacts = {"cloud.ply"};
  o.metrics = {{"points", r.report.points},
               {"profiles_used", r.report.profiles_used},
               {"profiles_skipped", r.report.profiles_skipped}};
  return o;
}

StageOutput run_calibrate(const PipelineConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  const std::vector<PlanePatch> planes = calibration_planes(cfg.scene.ground.height);
  const RayCaster caster(synthesize_planes(planes));
  const PoseTrack truth = generate_trajectory(cfg.trajectory, substream_seed(cfg.seed, 0));
  ScannerModel model = cfg.scanner;
  model.scan_rate /= static_cast<double>(cfg.calibration_profile_stride);
  std::mt19937_64 rng(substream_seed(cfg.seed, 11));

  StageOutput o;
  json results = json::array();
  for (std::size_t i = 0; i < cfg.mounting.scanners.size(); ++i) {
    const MountingCalibration& truth_calib = cfg.mounting.scanners[i];
    const auto profiles =
        simulate_laser_profiles(caster, truth, truth_calib, model, substream_seed(cfg.seed, 20 + i), cfg.threads);
    MountingCalibration init = truth_calib;
    const double angle = cfg.mounting.init_rotation_error_deg * kPi / 180.0;
    init.boresight = (truth_calib.boresight * so3::exp_quat(angle * random_unit(rng))).normalized();
    init.lever_arm += cfg.mounting.init_lever_error_m * random_unit(rng);

    const CalibrationResult r = calibrate_mounting(profiles, truth, planes, init, cfg.calibration);
    const double rot_err = rotation_error(r.calib.boresight, truth_calib.boresight);
    const double lever_err = (r.calib.lever_arm - truth_calib.lever_arm).norm();
    json j = io::calibration_to_json(r.calib);
    j["initial_rms_m"] = r.initial_rms;
    j["final_rms_m"] = r.final_rms;
    j["points_used"] = r.points_used;
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    const std::string name = "calibration_estimate_" + std::to_string(i) + ".json";
    io::write_json(out / name, j);
    o.artifacts.push_back(name);
    results.push_back({{"scanner", truth_calib.scanner_id},
                       {"rotation_error_rad", rot_err},
                       {"lever_arm_error_m", lever_err},
                       {"initial_rms_m", r.initial_rms},
                       {"final_rms_m", r.final_rms},
                       {"points_used", r.points_used},
                       {"converged", r.converged}});
    note("calibrate", truth_calib.scanner_id + ": rms " + io::format_double(r.initial_rms) + " -> " +
                          io::format_double(r.final_rms) + " m, boresight error " + io::format_double(rot_err) +
                          " rad, lever error " + io::format_double(lever_err) + " m");
  }
  o.metrics = {{"scanners", results}};
  return o;
}

StageOutput run_evaluate(const PipelineConfig& cfg, const fs::path& out, const EvaluateInputs& inputs) {
  fs::create_directories(out);
  const EvaluationConfig& ev = cfg.evaluation;
  const fs::path cmp_path = inputs.compared.value_or(out / "cloud.ply");
  PointCloud cmp_full = io::read_ply_cloud(cmp_path);
  if (cmp_full.empty()) fail(ErrorCode::EmptyCloud, "compared cloud is empty: " + cmp_path.string());

  const bool synthetic_reference = !inputs.reference.has_value();
  PointCloud reference;
  SceneMesh sm;
  std::vector<int> patch_of_tri;
  std::vector<int> ref_triangle;
  if (synthetic_reference) {
    sm = synthesize_scene(cfg.scene);
    patch_of_tri = patch_of_triangles(sm);
    // Only sample the part of the scene the scan could reach.
    Eigen::AlignedBox3d box;
    for (const Vec3& p : cmp_full.points) box.extend(p);
    box.min() -= Vec3::Constant(0.02);
    box.max() += Vec3::Constant(0.02);
    std::vector<int> subset;
    for (std::size_t t = 0; t < sm.mesh.triangles.size(); ++t) {
      const auto& tri = sm.mesh.triangles[t];
      const Vec3 c = (sm.mesh.vertices[static_cast<std::size_t>(tri[0])] +
                      sm.mesh.vertices[static_cast<std::size_t>(tri[1])] +
                      sm.mesh.vertices[static_cast<std::size_t>(tri[2])]) /
                     3.0;
      if (box.contains(c)) subset.push_back(static_cast<int>(t));
    }
    SurfaceSamples s = sample_mesh_surface(sm.mesh, ev.reference_density, substream_seed(cfg.seed, 10), subset);
    reference = std::move(s.cloud);
    ref_triangle = std::move(s.triangle);
  } else {
    reference = io::read_ply_cloud(*inputs.reference);
  }
  note("evaluate", "reference " + std::to_string(reference.size()) + " points, compared " +
                       std::to_string(cmp_full.size()) + " points");

  PointCloud cmp = stride_subsample(cmp_full, ev.max_compared_points);
  const CloudComparison cc = compare_clouds(reference, cmp, ev, cfg.threads);
  const PrecisionReport& pr = cc.precision;
  note("evaluate", "M3C2 sigma " + io::format_double(pr.sigma * 1e3) + " mm, mean " +
                       io::format_double(pr.mean * 1e3) + " mm over " + std::to_string(pr.count) + " cores");

  json report = precision_json(pr);
  report["icp"] = {{"enabled", ev.run_icp},
                   {"rms_m", cc.icp.rms},
                   {"iterations", cc.icp.iterations},
                   {"translation_m", vec_json(cc.icp.transform.position)},
                   {"rotation_rad", so3::log(cc.icp.transform.rotation).norm()}};
  report["m3c2"] = {{"core_points", cc.m3c2.core_points},
                    {"no_normal", cc.m3c2.no_normal},
                    {"no_compared", cc.m3c2.no_compared}};

  std::vector<std::vector<std::string>> rows;
  rows.reserve(cc.m3c2.entries.size());
  for (const M3C2Entry& e : cc.m3c2.entries) {
    rows.push_back({io::format_double(e.core.x()), io::format_double(e.core.y()), io::format_double(e.core.z()),
                    io::format_double(e.normal.x()), io::format_double(e.normal.y()),
                    io::format_double(e.normal.z()), io::format_double(e.distance)});
  }
  write_csv(out / "m3c2_distances.csv", "x,y,z,nx,ny,nz,distance", rows);

  StageOutput o;
  o.artifacts = {"m3c2_distances.csv"};
  o.metrics = {{"sigma_mm", pr.sigma * 1e3},
               {"mean_mm", pr.mean * 1e3},
               {"cores", pr.count},
               {"icp_rms_m", cc.icp.rms}};

  if (synthetic_reference && !sm.leaves.empty()) {
    // Leaf segmentation by nearest ground-truth leaf sample.
    std::vector<Vec3> leaf_pts;
    std::vector<int> leaf_patch;
    for (std::size_t i = 0; i < reference.size(); ++i) {
      const int p = patch_of_tri[static_cast<std::size_t>(ref_triangle[i])];
      if (p >= 1) {
        leaf_pts.push_back(reference.points[i]);
        leaf_patch.push_back(p);
      }
    }
    const std::size_t n_leaves = sm.leaves.size();
    std::vector<PointCloud> leaf_clouds(n_leaves);
    if (!leaf_pts.empty()) {
      const KdTree tree(leaf_pts);
      const Mat3 R = cc.icp.transform.rotation_matrix();
      const double z_min = cfg.scene.ground.height + 0.01;
      const double r2 = ev.leaf_extract_distance * ev.leaf_extract_distance;
      for (const Vec3& raw : cmp_full.points) {
        const Vec3 p = R * raw + cc.icp.transform.position;
        if (p.z() < z_min) continue;
        const auto [idx, d2] = tree.nearest(p);
        if (idx < 0 || d2 > r2) continue;
        leaf_clouds[static_cast<std::size_t>(leaf_patch[static_cast<std::size_t>(idx)] - 1)].points.push_back(p);
      }
    }
    cmp_full = PointCloud{};

    // Per-leaf M3C2 spread.
    std::vector<std::vector<double>> leaf_dist(n_leaves);
    for (const M3C2Entry& e : cc.m3c2.entries) {
      const int ref_idx = cc.core_source[static_cast<std::size_t>(e.core_index)];
      const int p = patch_of_tri[static_cast<std::size_t>(ref_triangle[static_cast<std::size_t>(ref_idx)])];
      if (p >= 1) leaf_dist[static_cast<std::size_t>(p - 1)].push_back(e.distance);
    }

    json leaves = json::array();
    std::vector<TableRow> table;
    std::vector<double> abs_pct;
    for (std::size_t l = 0; l < n_leaves; ++l) {
      const double ref_area = sm.leaves[l].surface_area() * 1e4;
      double est_area = 0.0;
      std::size_t triangles = 0;
      const PointCloud down = voxel_downsample(leaf_clouds[l], ev.leaf_voxel);
      if (down.size() >= 3) {
        try {
          const KdTree tree(down.points);
          NormalEstimation ne;
          ne.radius = ev.leaf_normal_radius;
          const std::vector<Vec3> normals = estimate_normals(down.points, tree, ne);
          PointCloud withn;
          for (std::size_t i = 0; i < down.size(); ++i) {
            if (normals[i].squaredNorm() == 0.0) continue;
            withn.points.push_back(down.points[i]);
            withn.normals.push_back(normals[i]);
          }
          const KdTree tree2(withn.points);
          const double spacing = median_nn_spacing(withn.points, tree2);
          std::vector<double> radii;
          for (double m : ev.bpa_radius_multipliers) radii.push_back(m * spacing);
          const TriangleMesh mesh = reconstruct_surface_bpa(withn, radii);
          est_area = leaf_area(mesh);
          triangles = mesh.triangles.size();
        } catch (const Error& e) {
          note("evaluate", "leaf " + std::to_string(l + 1) + ": " + e.what());
        }
      }
      const LeafAreaReport ar = completeness_report(ref_area, est_area);
      abs_pct.push_back(ar.absolute_percent_diff);
      TableRow row;
      row.label = std::to_string(l + 1);
      row.area_diff_laser_pct = ar.percent_diff;
      row.reference_area_cm2 = ref_area;
      json lj = {{"leaf", l + 1},
                 {"points", leaf_clouds[l].size()},
                 {"triangles", triangles},
                 {"reference_area_cm2", ref_area},
                 {"estimated_area_cm2", est_area},
                 {"percent_diff", ar.percent_diff}};
      if (leaf_dist[l].size() >= 2) {
        const PrecisionReport lp = precision_stats(leaf_dist[l]);
        row.sigma_laser_mm = lp.sigma * 1e3;
        lj["sigma_mm"] = lp.sigma * 1e3;
        lj["mean_mm"] = lp.mean * 1e3;
      }
      table.push_back(row);
      leaves.push_back(lj);
    }
    const double mean_abs = mean_absolute_percent(abs_pct);
    report["leaves"] = leaves;
    report["leaf_area_mean_absolute_percent"] = mean_abs;
    io::write_json(out / "leaf_areas.json", leaves);
    io::write_text(out / "precision_table.txt", format_precision_table(table));
    o.artifacts.push_back("leaf_areas.json");
    o.artifacts.push_back("precision_table.txt");
    o.metrics["leaf_area_mean_absolute_percent"] = mean_abs;
    note("evaluate", "leaf area mean absolute difference " + io::format_double(mean_abs) + "%");
  }
  io::write_json(out / "precision_report.json", report);
  o.artifacts.insert(o.artifacts.begin(), "precision_report.json");
  return o;
}

StageOutput run_bake(const PipelineConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  const SceneMesh sm = synthesize_scene(cfg.scene);
  const std::vector<int> patch = patch_of_triangles(sm);
  const RayCaster caster(sm.mesh);
  Vec3 target(0.5 * (cfg.scene.ground.x_min + cfg.scene.ground.x_max),
              0.5 * (cfg.scene.ground.y_min + cfg.scene.ground.y_max), cfg.scene.ground.height);
  if (!sm.leaves.empty()) {
    target.setZero();
    for (const LeafPatch& l : sm.leaves) target += l.center;
    target /= static_cast<double>(sm.leaves.size());
  }
  const std::vector<Pose> poses = camera_dome(target, cfg.texture.dome_radius, cfg.texture.cameras);
  const SurfaceShader shader = [&](int tri, const Vec2& uv) {
    return procedural_albedo(patch[static_cast<std::size_t>(tri)], uv);
  };
  std::vector<CameraView> views;
  for (const Pose& pose : poses) {
    CameraView v;
    v.pose = pose;
    v.intrinsics = cfg.texture.intrinsics;
    v.image = render_view(caster, pose, v.intrinsics, shader, Vec3(180.0, 200.0, 230.0), cfg.threads);
    views.push_back(std::move(v));
  }
  BakeOptions opts;
  opts.threads = cfg.threads;
  const TextureMap tm = bake_texture(sm.mesh, views, cfg.texture.resolution, cfg.texture.resolution, opts);
  write_png(out / "texture.png", tm.to_image());
  write_pgm(out / "texture_views.pgm", tm.width, tm.height, tm.count);

  std::size_t covered = 0;
  std::size_t seen = 0;
  double views_sum = 0.0;
  for (std::size_t i = 0; i < tm.count.size(); ++i) {
    covered += tm.covered[i] ? 1 : 0;
    if (tm.covered[i] && tm.count[i] > 0) {
      ++seen;
      views_sum += tm.count[i];
    }
  }
  StageOutput o;
  o.artifacts = {"texture.png", "texture_views.pgm"};
  o.metrics = {{"cameras", views.size()},
               {"covered_texels", covered},
               {"seen_texels", seen},
               {"seen_fraction", covered ? static_cast<double>(seen) / static_cast<double>(covered) : 0.0},
               {"mean_views_per_seen_texel", seen ? views_sum / static_cast<double>(seen) : 0.0}};
  io::write_json(out / "bake_report.json", o.metrics);
  o.artifacts.push_back("bake_report.json");
  note("bake", std::to_string(seen) + " of " + std::to_string(covered) + " covered texels seen by " +
                   std::to_string(views.size()) + " cameras");
  return o;
}

StageOutput run_autoexpose(const PipelineConfig& cfg, const fs::path& out,
                           const std::optional<fs::path>& histograms) {
  fs::create_directories(out);
  const ExposureConfig& ex = cfg.exposure;
  std::vector<std::vector<std::string>> rows;
  auto state_cells = [](int step, const ExposureState& s, ExposureAction a) {
    return std::vector<std::string>{std::to_string(step), std::to_string(s.iso), io::format_double(s.f_stop),
                                    io::format_double(s.shutter_ms), to_string(a)};
  };
  StageOutput o;
  if (histograms) {
    std::vector<Histogram8> hs;
    for (const auto& r : io::read_numeric_csv(*histograms, 8)) {
      Histogram8 h;
      for (std::size_t k = 0; k < 8; ++k) {
        if (r[k] < 0.0 || r[k] != std::floor(r[k])) fail(ErrorCode::InvalidArgument, "histogram counts must be whole");
        h.counts[k] = static_cast<std::uint64_t>(r[k]);
      }
      hs.push_back(h);
    }
    const auto trace = exposure_replay(hs, ex.initial, ex.params);
    for (const ExposureTraceRow& t : trace) rows.push_back(state_cells(t.step, t.state, t.action));
    write_csv(out / "exposure_trace.csv", "step,iso,f_stop,shutter_ms,action", rows);
    o.metrics = {{"mode", "replay"}, {"steps", trace.size()}};
    if (!trace.empty()) {
      o.metrics["final"] = {{"iso", trace.back().state.iso},
                            {"f_stop", trace.back().state.f_stop},
                            {"shutter_ms", trace.back().state.shutter_ms}};
    }
  } else {
    const int w = 160;
    const int h = 120;
    std::mt19937_64 rng(substream_seed(cfg.seed, 12));
    std::uniform_real_distribution<double> refl(0.3, 0.9);
    std::vector<double> scene(static_cast<std::size_t>(w * h));
    for (double& r : scene) r = refl(rng);
    ExposureState s = ex.initial;
    bool converged = false;
    int step = 0;
    for (; step < ex.max_steps; ++step) {
      const GrayImage img = expose_scene(scene, w, h, s, ex.scene_gain);
      const Histogram8 hist = compute_histogram(std::span<const GrayImage>(&img, 1));
      const ExposureDecision d = exposure_step(hist, s, ex.params);
      s = d.state;
      auto cells = state_cells(step, s, d.action);
      cells.push_back(io::format_double(static_cast<double>(hist.counts[0]) / static_cast<double>(hist.total())));
      cells.push_back(io::format_double(static_cast<double>(hist.counts[7]) / static_cast<double>(hist.total())));
      rows.push_back(std::move(cells));
      if (d.action == ExposureAction::NoChange) {
        converged = true;
        break;
      }
      if (d.action == ExposureAction::Saturated) break;
    }
    write_csv(out / "exposure_trace.csv", "step,iso,f_stop,shutter_ms,action,under,over", rows);
    o.metrics = {{"mode", "closed_loop"},
                 {"steps", rows.size()},
                 {"converged", converged},
                 {"final", {{"iso", s.iso}, {"f_stop", s.f_stop}, {"shutter_ms", s.shutter_ms}}}};
    note("autoexpose", std::string(converged ? "settled" : "did not settle") + " at ISO " + std::to_string(s.iso) +
                           ", f/" + io::format_double(s.f_stop) + ", " + io::format_double(s.shutter_ms) +
                           " ms after " + std::to_string(rows.size()) + " steps");
  }
  o.artifacts = {"exposure_trace.csv"};
  return o;
}

StageOutput run_e2e(const PipelineConfig& cfg, const fs::path& out) {
  StageOutput all;
  auto merge = [&](const std::string& name, const StageOutput& s) {
    all.artifacts.insert(all.artifacts.end(), s.artifacts.begin(), s.artifacts.end());
    all.metrics[name] = s.metrics;
  };
  merge("simulate", run_simulate(cfg, out));
  merge("solve", run_solve(cfg, out));
  merge("georef", run_georef(cfg, out));
  merge("calibrate", run_calibrate(cfg, out));
  merge("evaluate", run_evaluate(cfg, out));
  merge("bake", run_bake(cfg, out));
  merge("autoexpose", run_autoexpose(cfg, out));
  return all;
}

json write_manifest(const fs::path& out, const std::string& subcommand, const PipelineConfig& cfg,
                    const StageOutput& output) {
  fs::create_directories(out);
  json resolved = config_to_json(cfg);
  resolved.erase("output_dir");
  resolved.erase("threads");
  io::write_json(out / "config.json", resolved);

  json artifacts = json::object();
  artifacts["config.json"] = io::hex64(io::hash_file(out / "config.json"));
  for (const std::string& a : output.artifacts) artifacts[a] = io::hex64(io::hash_file(out / a));
  const json m = {{"subcommand", subcommand},
                  {"config_hash", config_hash(cfg)},
                  {"seed", cfg.seed},
                  {"versions",
                   {{"agriscan", kVersion},
                    {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION)},
                    {"compiler", __VERSION__}}},
                  {"artifacts", artifacts},
                  {"metrics", output.metrics}};
  io::write_json(out / ("manifest_" + subcommand + ".json"), m);
  return m;
}

}  // namespace agriscan
