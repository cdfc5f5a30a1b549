// Python module agriscan._core: thin wrappers over the C++ library.

#include "agriscan/bpa.hpp"
#include "agriscan/config.hpp"
#include "agriscan/exposure.hpp"
#include "agriscan/georef.hpp"
#include "agriscan/m3c2.hpp"
#include "agriscan/pipeline.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace agriscan;

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

PointCloud to_cloud(const Points& m) {
  PointCloud c;
  c.points.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) c.points.emplace_back(m(i, 0), m(i, 1), m(i, 2));
  return c;
}

Points to_matrix(const std::vector<Vec3>& v) {
  Points m(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
  return m;
}

Quat quat_wxyz(const Eigen::Vector4d& q) { return Quat(q[0], q[1], q[2], q[3]).normalized(); }

Points georeference(const Eigen::VectorXd& x, const Eigen::VectorXd& z, const Vec3& position,
                    const Eigen::Vector4d& rotation, const Eigen::Vector4d& boresight, const Vec3& lever_arm) {
  if (x.size() != z.size()) fail(ErrorCode::InvalidArgument, "x and z must have the same length");
  LaserProfile p;
  for (Eigen::Index i = 0; i < x.size(); ++i) p.samples.push_back({x[i], z[i], true});
  MountingCalibration calib;
  calib.boresight = quat_wxyz(boresight);
  calib.lever_arm = lever_arm;
  return to_matrix(georeference_profile(p, Pose(position, quat_wxyz(rotation)), calib));
}

py::dict m3c2(const Points& reference, const Points& compared, double normal_scale, double projection_radius,
              double max_depth, int threads) {
  M3C2Params params;
  params.normal_scale = normal_scale;
  params.projection_radius = projection_radius;
  params.max_depth = max_depth;
  params.threads = threads;
  M3C2Result r;
  {
    py::gil_scoped_release release;
    r = compute_m3c2(to_cloud(reference), to_cloud(compared), params);
  }
  std::vector<Vec3> cores, normals;
  Eigen::VectorXd distances(static_cast<Eigen::Index>(r.entries.size()));
  for (std::size_t k = 0; k < r.entries.size(); ++k) {
    cores.push_back(r.entries[k].core);
    normals.push_back(r.entries[k].normal);
    distances[static_cast<Eigen::Index>(k)] = r.entries[k].distance;
  }
  py::dict d;
  d["cores"] = to_matrix(cores);
  d["normals"] = to_matrix(normals);
  d["distances"] = distances;
  d["no_normal"] = r.no_normal;
  d["no_compared"] = r.no_compared;
  return d;
}

double bpa_area(const Points& points, const Points& normals, std::vector<double> radii) {
  if (points.rows() != normals.rows()) fail(ErrorCode::InvalidArgument, "points and normals differ in length");
  PointCloud c = to_cloud(points);
  for (Eigen::Index i = 0; i < normals.rows(); ++i) c.normals.push_back(normals.row(i).transpose().normalized());
  if (radii.empty()) radii = default_bpa_radii(c);
  return leaf_area(reconstruct_surface_bpa(c, radii));
}

py::tuple step_exposure(const std::array<std::uint64_t, 8>& counts, int iso, double f_stop, double shutter_ms) {
  Histogram8 h;
  h.counts = counts;
  ExposureState s;
  s.iso = iso;
  s.f_stop = f_stop;
  s.shutter_ms = shutter_ms;
  const ExposureDecision d = exposure_step(h, s);
  return py::make_tuple(d.state.iso, d.state.f_stop, d.state.shutter_ms, to_string(d.action));
}

std::string run_stage(const std::string& stage, const std::optional<std::string>& config, const std::string& out,
                      std::optional<std::uint64_t> seed) {
  PipelineConfig cfg = config ? load_config(*config) : PipelineConfig{};
  if (seed) cfg.seed = *seed;
  cfg.output_dir = out;
  cfg.finalize();
  py::gil_scoped_release release;
  const std::filesystem::path dir(out);
  std::filesystem::create_directories(dir);
  StageOutput o;
  if (stage == "simulate") {
    o = run_simulate(cfg, dir);
  } else if (stage == "solve") {
    o = run_solve(cfg, dir);
  } else if (stage == "georef") {
    o = run_georef(cfg, dir);
  } else if (stage == "calibrate") {
    o = run_calibrate(cfg, dir);
  } else if (stage == "evaluate") {
    o = run_evaluate(cfg, dir);
  } else if (stage == "bake") {
    o = run_bake(cfg, dir);
  } else if (stage == "autoexpose") {
    o = run_autoexpose(cfg, dir);
  } else if (stage == "e2e") {
    o = run_e2e(cfg, dir);
  } else {
    fail(ErrorCode::InvalidArgument, "unknown stage " + stage);
  }
  return write_manifest(dir, stage, cfg, o).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "agriscan kinematic laser scanning pipeline";
  m.attr("__version__") = kVersion;

  py::register_exception<Error>(m, "AgriscanError", PyExc_RuntimeError);

  m.def("georeference", &georeference, py::arg("x"), py::arg("z"), py::arg("position"), py::arg("rotation_wxyz"),
        py::arg("boresight_wxyz"), py::arg("lever_arm"),
        "Global coordinates of profile samples (x, z) for one body pose and mounting.");
  m.def("m3c2", &m3c2, py::arg("reference"), py::arg("compared"), py::arg("normal_scale") = 0.01,
        py::arg("projection_radius") = 0.005, py::arg("max_depth") = 0.02, py::arg("threads") = 1,
        "Signed M3C2 distances with every reference point as a core point.");
  m.def("bpa_area", &bpa_area, py::arg("points"), py::arg("normals"), py::arg("radii") = std::vector<double>{},
        "Ball-pivoting surface area in cm^2.");
  m.def("exposure_step", &step_exposure, py::arg("counts"), py::arg("iso"), py::arg("f_stop"), py::arg("shutter_ms"),
        "One exposure controller step; returns (iso, f_stop, shutter_ms, action).");
  m.def("run_stage", &run_stage, py::arg("stage"), py::arg("config") = py::none(), py::arg("out") = "out",
        py::arg("seed") = py::none(), "Runs a pipeline stage and returns its manifest as JSON text.");
  m.def("config_hash", [](const std::string& path) { return config_hash(load_config(path)); }, py::arg("path"));
}
