#include "agriscan/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <functional>
#include <type_traits>
#include <fstream>
#include <sstream>

namespace agriscan::io {

namespace {

std::ofstream open_out(const fs::path& path, bool binary) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) fail(ErrorCode::Io, "cannot open for writing: " + path.string());
  return out;
}

std::vector<char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open: " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<char> data(size);
  if (size > 0) in.read(data.data(), static_cast<std::streamsize>(size));
  return data;
}

// ---------------------------------------------------------------- PLY

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType parse_ply_type(const std::string& s) {
  if (s == "char" || s == "int8") return PlyType::Int8;
  if (s == "uchar" || s == "uint8") return PlyType::UInt8;
  if (s == "short" || s == "int16") return PlyType::Int16;
  if (s == "ushort" || s == "uint16") return PlyType::UInt16;
  if (s == "int" || s == "int32") return PlyType::Int32;
  if (s == "uint" || s == "uint32") return PlyType::UInt32;
  if (s == "float" || s == "float32") return PlyType::Float32;
  if (s == "double" || s == "float64") return PlyType::Float64;
  fail(ErrorCode::Io, "ply: unsupported property type " + s);
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::Int8: case PlyType::UInt8: return 1;
    case PlyType::Int16: case PlyType::UInt16: return 2;
    case PlyType::Int32: case PlyType::UInt32: case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

struct PlyData {
  // vertex properties by name -> column
  std::vector<std::string> vertex_names;
  std::vector<std::vector<double>> vertex_columns;
  std::size_t vertex_count = 0;
  std::vector<Eigen::Vector3i> faces;

  const std::vector<double>* column(const std::string& name) const {
    for (std::size_t i = 0; i < vertex_names.size(); ++i) {
      if (vertex_names[i] == name) return &vertex_columns[i];
    }
    return nullptr;
  }
};

double read_binary_value(const char*& p, const char* end, PlyType t) {
  const std::size_t n = ply_size(t);
  if (p + n > end) fail(ErrorCode::Io, "ply: truncated binary body");
  double v = 0.0;
  switch (t) {
    case PlyType::Int8: { std::int8_t x; std::memcpy(&x, p, 1); v = x; break; }
    case PlyType::UInt8: { std::uint8_t x; std::memcpy(&x, p, 1); v = x; break; }
    case PlyType::Int16: { std::int16_t x; std::memcpy(&x, p, 2); v = x; break; }
    case PlyType::UInt16: { std::uint16_t x; std::memcpy(&x, p, 2); v = x; break; }
    case PlyType::Int32: { std::int32_t x; std::memcpy(&x, p, 4); v = x; break; }
    case PlyType::UInt32: { std::uint32_t x; std::memcpy(&x, p, 4); v = x; break; }
    case PlyType::Float32: { float x; std::memcpy(&x, p, 4); v = x; break; }
    case PlyType::Float64: { std::memcpy(&v, p, 8); break; }
  }
  p += n;
  return v;
}

PlyData parse_ply(const fs::path& path) {
  const std::vector<char> raw = slurp(path);
  const char* p = raw.data();
  const char* end = raw.data() + raw.size();

  auto next_line = [&]() {
    const char* nl = static_cast<const char*>(std::memchr(p, '\n', static_cast<std::size_t>(end - p)));
    if (!nl) fail(ErrorCode::Io, "ply: unterminated header in " + path.string());
    std::string line(p, nl);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    p = nl + 1;
    return line;
  };

  if (next_line() != "ply") fail(ErrorCode::Io, "not a ply file: " + path.string());
  bool binary = false;
  std::vector<PlyElement> elements;
  for (;;) {
    const std::string line = next_line();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") {
        binary = false;
      } else if (fmt == "binary_little_endian") {
        binary = true;
      } else {
        fail(ErrorCode::Io, "ply: unsupported format " + fmt);
      }
    } else if (key == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (key == "property") {
      if (elements.empty()) fail(ErrorCode::Io, "ply: property before element");
      PlyProperty prop;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string ct, it;
        ls >> ct >> it >> prop.name;
        prop.is_list = true;
        prop.count_type = parse_ply_type(ct);
        prop.type = parse_ply_type(it);
      } else {
        prop.type = parse_ply_type(type);
        ls >> prop.name;
      }
      elements.back().properties.push_back(prop);
    } else if (key == "end_header") {
      break;
    }
  }

  PlyData data;
  std::istringstream ascii;
  if (!binary) ascii.str(std::string(p, end));

  for (const auto& e : elements) {
    const bool is_vertex = e.name == "vertex";
    const bool is_face = e.name == "face";
    if (is_vertex) {
      data.vertex_count = e.count;
      for (const auto& prop : e.properties) {
        if (prop.is_list) fail(ErrorCode::Io, "ply: list property on vertex");
        data.vertex_names.push_back(prop.name);
        data.vertex_columns.emplace_back();
        data.vertex_columns.back().reserve(e.count);
      }
    }
    for (std::size_t i = 0; i < e.count; ++i) {
      for (std::size_t k = 0; k < e.properties.size(); ++k) {
        const auto& prop = e.properties[k];
        if (prop.is_list) {
          double n = 0;
          if (binary) {
            n = read_binary_value(p, end, prop.count_type);
          } else if (!(ascii >> n)) {
            fail(ErrorCode::Io, "ply: truncated ascii body");
          }
          std::vector<int> idx(static_cast<std::size_t>(n));
          for (auto& v : idx) {
            double x = 0;
            if (binary) {
              x = read_binary_value(p, end, prop.type);
            } else if (!(ascii >> x)) {
              fail(ErrorCode::Io, "ply: truncated ascii body");
            }
            v = static_cast<int>(x);
          }
          if (is_face && prop.name == "vertex_indices") {
            // fan-triangulate polygons
            for (std::size_t j = 1; j + 1 < idx.size(); ++j) data.faces.emplace_back(idx[0], idx[j], idx[j + 1]);
          }
        } else {
          double v = 0;
          if (binary) {
            v = read_binary_value(p, end, prop.type);
          } else if (!(ascii >> v)) {
            fail(ErrorCode::Io, "ply: truncated ascii body");
          }
          if (is_vertex) data.vertex_columns[k].push_back(v);
        }
      }
    }
  }
  return data;
}

class PlyWriter {
 public:
  PlyWriter(const fs::path& path, PlyFormat format) : out_(open_out(path, true)), format_(format) {}

  void header(const std::string& text) {
    out_ << "ply\nformat " << (format_ == PlyFormat::Ascii ? "ascii" : "binary_little_endian") << " 1.0\n"
         << text << "end_header\n";
  }

  template <typename T>
  void value(T v) {
    if (format_ == PlyFormat::Ascii) {
      if (!first_) buf_.push_back(' ');
      first_ = false;
      if constexpr (std::is_floating_point_v<T>) {
        buf_ += format_double(static_cast<double>(v));
      } else {
        buf_ += std::to_string(static_cast<long long>(v));
      }
    } else {
      const char* bytes = reinterpret_cast<const char*>(&v);
      buf_.append(bytes, sizeof(T));
    }
  }

  void end_row() {
    if (format_ == PlyFormat::Ascii) buf_.push_back('\n');
    first_ = true;
    if (buf_.size() > (1u << 20)) flush();
  }

  void flush() {
    out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    buf_.clear();
  }

  ~PlyWriter() { flush(); }

 private:
  std::ofstream out_;
  PlyFormat format_;
  std::string buf_;
  bool first_ = true;
};

}  // namespace

void write_ply(const fs::path& path, const PointCloud& cloud, PlyFormat format) {
  const std::size_t n = cloud.size();
  const bool normals = cloud.has_normals();
  const bool intensity = cloud.intensities.size() == n && n > 0;
  const bool sid = cloud.scanner_ids.size() == n && n > 0;
  const bool times = cloud.times.size() == n && n > 0;
  std::ostringstream h;
  h << "element vertex " << n << "\n"
    << "property double x\nproperty double y\nproperty double z\n";
  if (normals) h << "property double nx\nproperty double ny\nproperty double nz\n";
  if (intensity) h << "property float intensity\n";
  if (sid) h << "property uchar scanner_id\n";
  if (times) h << "property double t\n";
  PlyWriter w(path, format);
  w.header(h.str());
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) w.value(cloud.points[i][k]);
    if (normals) for (int k = 0; k < 3; ++k) w.value(cloud.normals[i][k]);
    if (intensity) w.value(cloud.intensities[i]);
    if (sid) w.value(cloud.scanner_ids[i]);
    if (times) w.value(cloud.times[i]);
    w.end_row();
  }
}

void write_ply(const fs::path& path, const TriangleMesh& mesh, PlyFormat format) {
  const bool uv = mesh.has_uvs();
  std::ostringstream h;
  h << "element vertex " << mesh.vertices.size() << "\n"
    << "property double x\nproperty double y\nproperty double z\n";
  if (uv) h << "property double u\nproperty double v\n";
  h << "element face " << mesh.triangles.size() << "\nproperty list uchar int vertex_indices\n";
  PlyWriter w(path, format);
  w.header(h.str());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    for (int k = 0; k < 3; ++k) w.value(mesh.vertices[i][k]);
    if (uv) {
      w.value(mesh.uvs[i].x());
      w.value(mesh.uvs[i].y());
    }
    w.end_row();
  }
  for (const auto& t : mesh.triangles) {
    w.value(static_cast<std::uint8_t>(3));
    for (int k = 0; k < 3; ++k) w.value(static_cast<std::int32_t>(t[k]));
    w.end_row();
  }
}

PointCloud read_ply_cloud(const fs::path& path) {
  const PlyData d = parse_ply(path);
  const auto* x = d.column("x");
  const auto* y = d.column("y");
  const auto* z = d.column("z");
  if (!x || !y || !z) fail(ErrorCode::Io, "ply: missing x/y/z in " + path.string());
  PointCloud cloud;
  const std::size_t n = d.vertex_count;
  cloud.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) cloud.points[i] = Vec3((*x)[i], (*y)[i], (*z)[i]);
  const auto* nx = d.column("nx");
  const auto* ny = d.column("ny");
  const auto* nz = d.column("nz");
  if (nx && ny && nz) {
    cloud.normals.resize(n);
    for (std::size_t i = 0; i < n; ++i) cloud.normals[i] = Vec3((*nx)[i], (*ny)[i], (*nz)[i]);
  }
  if (const auto* c = d.column("intensity")) cloud.intensities.assign(c->begin(), c->end());
  if (const auto* c = d.column("scanner_id")) {
    cloud.scanner_ids.reserve(n);
    for (double v : *c) cloud.scanner_ids.push_back(static_cast<std::uint8_t>(v));
  }
  if (const auto* c = d.column("t")) cloud.times = *c;
  return cloud;
}

TriangleMesh read_ply_mesh(const fs::path& path) {
  const PlyData d = parse_ply(path);
  const auto* x = d.column("x");
  const auto* y = d.column("y");
  const auto* z = d.column("z");
  if (!x || !y || !z) fail(ErrorCode::Io, "ply: missing x/y/z in " + path.string());
  std::vector<Vec3> vertices(d.vertex_count);
  for (std::size_t i = 0; i < d.vertex_count; ++i) vertices[i] = Vec3((*x)[i], (*y)[i], (*z)[i]);
  std::vector<Vec2> uvs;
  const auto* u = d.column("u");
  const auto* v = d.column("v");
  if (!u || !v) {
    u = d.column("texture_u");
    v = d.column("texture_v");
  }
  if (u && v) {
    uvs.resize(d.vertex_count);
    for (std::size_t i = 0; i < d.vertex_count; ++i) uvs[i] = Vec2((*u)[i], (*v)[i]);
  }
  return TriangleMesh::build(std::move(vertices), d.faces, std::move(uvs));
}

// ---------------------------------------------------------------- CSV

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::vector<std::vector<double>> read_numeric_csv(const fs::path& path, std::size_t expected_columns) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open: " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      double v = 0.0;
      auto res = std::from_chars(p, comma, v);
      if (res.ec != std::errc() || res.ptr != comma) {
        fail(ErrorCode::Io, path.string() + ":" + std::to_string(line_no) + ": malformed number");
      }
      row.push_back(v);
      if (comma == end) break;
      p = comma + 1;
    }
    if (expected_columns != 0 && row.size() != expected_columns) {
      fail(ErrorCode::Io, path.string() + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(expected_columns) + " columns");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

void write_rows(const fs::path& path, const std::string& header, std::size_t n,
                const std::function<void(std::size_t, std::vector<double>&)>& row_fn) {
  auto out = open_out(path, false);
  std::string buf = header + "\n";
  std::vector<double> row;
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    row_fn(i, row);
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) buf.push_back(',');
      buf += format_double(row[k]);
    }
    buf.push_back('\n');
  }
  out << buf;
}

}  // namespace

void write_pose_track_csv(const fs::path& path, const PoseTrack& track) {
  write_rows(path, "t,px,py,pz,qw,qx,qy,qz", track.size(), [&](std::size_t i, std::vector<double>& r) {
    const Pose& p = track.poses()[i];
    r = {track.times()[i], p.position.x(), p.position.y(), p.position.z(),
         p.rotation.w(), p.rotation.x(), p.rotation.y(), p.rotation.z()};
  });
}

PoseTrack read_pose_track_csv(const fs::path& path) {
  const auto rows = read_numeric_csv(path, 8);
  std::vector<double> times;
  std::vector<Pose> poses;
  for (const auto& r : rows) {
    times.push_back(r[0]);
    poses.emplace_back(Vec3(r[1], r[2], r[3]), Quat(r[4], r[5], r[6], r[7]));
  }
  return PoseTrack(std::move(times), std::move(poses));
}

void write_imu_csv(const fs::path& path, const std::vector<ImuSample>& samples) {
  write_rows(path, "t,gx,gy,gz,ax,ay,az", samples.size(), [&](std::size_t i, std::vector<double>& r) {
    const auto& s = samples[i];
    r = {s.t, s.gyro.x(), s.gyro.y(), s.gyro.z(), s.accel.x(), s.accel.y(), s.accel.z()};
  });
}

std::vector<ImuSample> read_imu_csv(const fs::path& path) {
  std::vector<ImuSample> out;
  for (const auto& r : read_numeric_csv(path, 7)) out.push_back({r[0], Vec3(r[1], r[2], r[3]), Vec3(r[4], r[5], r[6])});
  return out;
}

void write_gnss_csv(const fs::path& path, const std::vector<GnssFix>& fixes) {
  write_rows(path, "t,x,y,z,sx,sy,sz", fixes.size(), [&](std::size_t i, std::vector<double>& r) {
    const auto& f = fixes[i];
    r = {f.t, f.position.x(), f.position.y(), f.position.z(), f.sigma.x(), f.sigma.y(), f.sigma.z()};
  });
}

std::vector<GnssFix> read_gnss_csv(const fs::path& path) {
  std::vector<GnssFix> out;
  for (const auto& r : read_numeric_csv(path, 7)) out.push_back({r[0], Vec3(r[1], r[2], r[3]), Vec3(r[4], r[5], r[6])});
  return out;
}

void write_heading_csv(const fs::path& path, const std::vector<HeadingPitchObs>& obs) {
  write_rows(path, "t,heading,pitch,sigma_heading,sigma_pitch", obs.size(), [&](std::size_t i, std::vector<double>& r) {
    const auto& o = obs[i];
    r = {o.t, o.heading, o.pitch, o.heading_sigma, o.pitch_sigma};
  });
}

std::vector<HeadingPitchObs> read_heading_csv(const fs::path& path) {
  std::vector<HeadingPitchObs> out;
  for (const auto& r : read_numeric_csv(path, 5)) out.push_back({r[0], r[1], r[2], r[3], r[4]});
  return out;
}

// ---------------------------------------------------------------- profiles

void write_profiles(const fs::path& path, const std::vector<LaserProfile>& profiles) {
  static_assert(std::endian::native == std::endian::little, "profile files are little-endian");
  auto out = open_out(path, true);
  std::string buf;
  const std::uint64_t count = profiles.size();
  buf.append(reinterpret_cast<const char*>(&count), 8);
  const std::size_t n = profiles.empty() ? 0 : profiles.front().samples.size();
  for (const auto& prof : profiles) {
    if (prof.samples.size() != n) fail(ErrorCode::InvalidArgument, "profiles must share a sample count");
    buf.append(reinterpret_cast<const char*>(&prof.timestamp), 8);
    for (const auto& s : prof.samples) {
      const float x = static_cast<float>(s.x);
      const float z = static_cast<float>(s.z);
      buf.append(reinterpret_cast<const char*>(&x), 4);
      buf.append(reinterpret_cast<const char*>(&z), 4);
      buf.push_back(static_cast<char>(s.valid ? 1 : 0));
    }
    if (buf.size() > (1u << 22)) {
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<LaserProfile> read_profiles(const fs::path& path) {
  const std::vector<char> raw = slurp(path);
  if (raw.size() < 8) fail(ErrorCode::Io, "profile file too short: " + path.string());
  std::uint64_t count = 0;
  std::memcpy(&count, raw.data(), 8);
  std::vector<LaserProfile> profiles;
  if (count == 0) return profiles;
  const std::size_t body = raw.size() - 8;
  if (body % count != 0 || (body / count) < 8 || ((body / count) - 8) % 9 != 0) {
    fail(ErrorCode::Io, "profile file size inconsistent with its count: " + path.string());
  }
  const std::size_t n = ((body / count) - 8) / 9;
  profiles.resize(count);
  const char* p = raw.data() + 8;
  for (auto& prof : profiles) {
    std::memcpy(&prof.timestamp, p, 8);
    p += 8;
    prof.samples.resize(n);
    for (auto& s : prof.samples) {
      float x = 0.0f;
      float z = 0.0f;
      std::memcpy(&x, p, 4);
      std::memcpy(&z, p + 4, 4);
      s.x = x;
      s.z = z;
      s.valid = p[8] != 0;
      p += 9;
    }
  }
  return profiles;
}

// ---------------------------------------------------------------- JSON

nlohmann::json calibration_to_json(const MountingCalibration& c) {
  return {{"scanner_id", c.scanner_id},
          {"boresight_quaternion", {c.boresight.w(), c.boresight.x(), c.boresight.y(), c.boresight.z()}},
          {"lever_arm_m", {c.lever_arm.x(), c.lever_arm.y(), c.lever_arm.z()}}};
}

MountingCalibration calibration_from_json(const nlohmann::json& j) {
  try {
    MountingCalibration c;
    c.scanner_id = j.value("scanner_id", std::string("scanner"));
    const auto& q = j.at("boresight_quaternion");
    c.boresight = Quat(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(), q.at(3).get<double>())
                      .normalized();
    const auto& l = j.at("lever_arm_m");
    c.lever_arm = Vec3(l.at(0).get<double>(), l.at(1).get<double>(), l.at(2).get<double>());
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Config, std::string("calibration json: ") + e.what());
  }
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Config, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path, false);
  out << text;
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_file(const fs::path& path) {
  const auto raw = slurp(path);
  return fnv1a(raw.data(), raw.size());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace agriscan::io
