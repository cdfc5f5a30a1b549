#pragma once

#include "agriscan/geometry.hpp"
#include "agriscan/sensor_types.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace agriscan::io {

namespace fs = std::filesystem;

enum class PlyFormat { Ascii, BinaryLittleEndian };

// PLY. Clouds carry x/y/z and, when present, nx/ny/nz, intensity,
// scanner_id (uchar) and t (double). Meshes add u/v per vertex and a
// vertex_indices face list.
void write_ply(const fs::path& path, const PointCloud& cloud, PlyFormat format = PlyFormat::BinaryLittleEndian);
void write_ply(const fs::path& path, const TriangleMesh& mesh, PlyFormat format = PlyFormat::BinaryLittleEndian);
PointCloud read_ply_cloud(const fs::path& path);
TriangleMesh read_ply_mesh(const fs::path& path);

// CSV: t,px,py,pz,qw,qx,qy,qz
void write_pose_track_csv(const fs::path& path, const PoseTrack& track);
PoseTrack read_pose_track_csv(const fs::path& path);

// Binary profile records: u64 count, then per profile f64 timestamp followed
// by N x (f32 x, f32 z, u8 valid), all little-endian. N is recovered from the
// file size on read. Samples are held as double in memory, so a write/read
// round trip rounds them to float.
void write_profiles(const fs::path& path, const std::vector<LaserProfile>& profiles);
std::vector<LaserProfile> read_profiles(const fs::path& path);

// CSV: t,gx,gy,gz,ax,ay,az
void write_imu_csv(const fs::path& path, const std::vector<ImuSample>& samples);
std::vector<ImuSample> read_imu_csv(const fs::path& path);
// CSV: t,x,y,z,sx,sy,sz
void write_gnss_csv(const fs::path& path, const std::vector<GnssFix>& fixes);
std::vector<GnssFix> read_gnss_csv(const fs::path& path);
// CSV: t,heading,pitch,sigma_heading,sigma_pitch
void write_heading_csv(const fs::path& path, const std::vector<HeadingPitchObs>& obs);
std::vector<HeadingPitchObs> read_heading_csv(const fs::path& path);

// JSON: {"scanner_id", "boresight_quaternion": [w,x,y,z], "lever_arm_m": [x,y,z]}
nlohmann::json calibration_to_json(const MountingCalibration& calib);
MountingCalibration calibration_from_json(const nlohmann::json& j);

nlohmann::json read_json(const fs::path& path);
void write_json(const fs::path& path, const nlohmann::json& j);
void write_text(const fs::path& path, const std::string& text);

/// Numeric CSV rows after a single header line.
std::vector<std::vector<double>> read_numeric_csv(const fs::path& path, std::size_t expected_columns);

/// Shortest decimal text that round-trips the double.
std::string format_double(double v);

/// 64-bit FNV-1a, used for config and artifact fingerprints.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_file(const fs::path& path);
std::string hex64(std::uint64_t v);

}  // namespace agriscan::io
