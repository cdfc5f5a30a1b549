#pragma once

#include "agriscan/config.hpp"
#include "agriscan/metrics.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace agriscan {

inline constexpr const char* kVersion = "0.1.0";

struct StageOutput {
  std::vector<std::string> artifacts;  // file names inside the output directory
  nlohmann::json metrics = nlohmann::json::object();
};

// Stages read their inputs from, and write their artifacts to, `out`.
StageOutput run_simulate(const PipelineConfig& config, const std::filesystem::path& out);
StageOutput run_solve(const PipelineConfig& config, const std::filesystem::path& out);
StageOutput run_georef(const PipelineConfig& config, const std::filesystem::path& out);
StageOutput run_calibrate(const PipelineConfig& config, const std::filesystem::path& out);

struct EvaluateInputs {
  std::optional<std::filesystem::path> reference;  // PLY; default: sampled ground-truth scene
  std::optional<std::filesystem::path> compared;   // PLY; default: <out>/cloud.ply
};
StageOutput run_evaluate(const PipelineConfig& config, const std::filesystem::path& out,
                         const EvaluateInputs& inputs = {});
StageOutput run_bake(const PipelineConfig& config, const std::filesystem::path& out);
/// Replays a CSV of 8-bin histograms when given, otherwise closes the loop
/// around a simulated camera.
StageOutput run_autoexpose(const PipelineConfig& config, const std::filesystem::path& out,
                           const std::optional<std::filesystem::path>& histograms = std::nullopt);
StageOutput run_e2e(const PipelineConfig& config, const std::filesystem::path& out);

/// Writes <out>/manifest_<subcommand>.json with the config hash, versions,
/// artifact hashes and metrics. No timestamps, so repeated runs match.
nlohmann::json write_manifest(const std::filesystem::path& out, const std::string& subcommand,
                              const PipelineConfig& config, const StageOutput& output);

// Building blocks shared with the tests.

/// Ground plus three boards tilted 35 degrees with normals toward +x, +y, -y.
std::vector<PlanePatch> calibration_planes(double ground_height = 0.0);

struct CloudComparison {
  IcpResult icp;                 // identity when ICP is disabled
  M3C2Result m3c2;
  std::vector<int> core_source;  // reference index of each core point
  PrecisionReport precision;
};

/// ICP of `compared` onto `reference` (on a stride subsample), then M3C2 with
/// core points drawn from the reference. `compared` is transformed in place.
CloudComparison compare_clouds(const PointCloud& reference, PointCloud& compared, const EvaluationConfig& eval,
                               int threads);

/// Deterministic per-patch albedo with a UV checker, 0..255 RGB.
Vec3 procedural_albedo(int patch, const Vec2& uv);

/// Simulated camera: pixel = floor(255 * reflectance * gain * iso * shutter_ms / (100 * f^2)), clamped.
GrayImage expose_scene(const std::vector<double>& reflectance, int width, int height, const ExposureState& state,
                       double gain);

}  // namespace agriscan
