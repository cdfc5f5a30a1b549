#include "doctest.h"
#include "support.hpp"

#include "agriscan/exposure.hpp"
#include "agriscan/image.hpp"
#include "agriscan/texture.hpp"

#include <filesystem>

using namespace agriscan;
using namespace agriscan::testing;
namespace fs = std::filesystem;

TEST_CASE("exposure steps ISO by 100") {
  ExposureState s;
  s.iso = 400;
  const ExposureDecision up = exposure_step(dark_histogram(), s);
  CHECK(up.action == ExposureAction::IsoUp);
  CHECK(up.state.iso == 500);
  CHECK(up.state.f_stop == s.f_stop);
  CHECK(up.state.shutter_ms == s.shutter_ms);
  const ExposureDecision down = exposure_step(bright_histogram(), s);
  CHECK(down.action == ExposureAction::IsoDown);
  CHECK(down.state.iso == 300);
}

TEST_CASE("exposure switches to the aperture at the ISO limit") {
  ExposureState s;
  s.iso = s.limits.iso_max;
  s.f_stop = 14.0;
  const ExposureDecision open = exposure_step(dark_histogram(), s);
  CHECK(open.action == ExposureAction::ApertureOpen);
  CHECK(open.state.f_stop == 13.0);
  CHECK(open.state.iso == s.iso);
  s.iso = s.limits.iso_min;
  const ExposureDecision close = exposure_step(bright_histogram(), s);
  CHECK(close.action == ExposureAction::ApertureClose);
  CHECK(close.state.f_stop == 16.0);
}

TEST_CASE("exposure lengthens the shutter by 5 ms at both limits") {
  ExposureState s;
  s.iso = s.limits.iso_max;
  s.f_stop = s.limits.f_min;
  s.shutter_ms = 10.0;
  const ExposureDecision up = exposure_step(dark_histogram(), s);
  CHECK(up.action == ExposureAction::ShutterUp);
  CHECK(up.state.shutter_ms == 15.0);
  CHECK(up.state.iso == s.iso);
  CHECK(up.state.f_stop == s.f_stop);

  s.iso = s.limits.iso_min;
  s.f_stop = s.limits.f_max;
  const ExposureDecision down = exposure_step(bright_histogram(), s);
  CHECK(down.action == ExposureAction::ShutterDown);
  CHECK(down.state.shutter_ms == 5.0);

  s.shutter_ms = s.limits.shutter_min_ms;
  CHECK(exposure_step(bright_histogram(), s).action == ExposureAction::Saturated);
}

TEST_CASE("balanced histogram leaves the state alone") {
  Histogram8 h;
  h.counts = {10, 100, 100, 100, 100, 100, 100, 10};
  const ExposureDecision d = exposure_step(h, ExposureState{});
  CHECK(d.action == ExposureAction::NoChange);
  CHECK(d.state.iso == ExposureState{}.iso);
  CHECK_THROWS_AS(exposure_step(Histogram8{}, ExposureState{}), Error);
  ExposureState bad;
  bad.iso = 50;
  CHECK_THROWS_AS(exposure_step(h, bad), Error);
}

TEST_CASE("exposure priority order holds over random sequences") {
  std::mt19937 rng(77);
  const auto stops = third_stop_sequence();
  std::vector<double> legal;
  for (double f : stops) {
    if (f >= 5.6 && f <= 22.0) legal.push_back(f);
  }
  std::uniform_int_distribution<int> count(0, 400), iso_k(1, 32), stop_k(0, static_cast<int>(legal.size()) - 1),
      shutter_k(1, 8), len(1, 30);
  ExposureParams p;
  for (int seq = 0; seq < 1000; ++seq) {
    ExposureState s;
    s.iso = 100 * iso_k(rng);
    s.f_stop = legal[static_cast<std::size_t>(stop_k(rng))];
    s.shutter_ms = 5.0 * shutter_k(rng);
    const int n = len(rng);
    for (int k = 0; k < n; ++k) {
      Histogram8 h;
      for (auto& c : h.counts) c = static_cast<std::uint64_t>(count(rng));
      if (h.total() == 0) h.counts[3] = 1;
      const ExposureDecision d = exposure_step(h, s, p);
      REQUIRE(d.action == expected_action(h, s, p));
      const int moved = (d.state.iso != s.iso) + (d.state.f_stop != s.f_stop) + (d.state.shutter_ms != s.shutter_ms);
      CHECK(moved == (d.action == ExposureAction::NoChange || d.action == ExposureAction::Saturated ? 0 : 1));
      d.state.validate();
      s = d.state;
    }
  }
}

TEST_CASE("exposure converges without oscillating on a monotone camera") {
  std::mt19937 rng(78);
  std::uniform_real_distribution<double> refl(0.3, 0.9);
  for (double gain : {0.05, 0.3, 1.0, 3.0, 20.0}) {
    std::vector<double> scene(64 * 48);
    for (double& r : scene) r = refl(rng);
    ExposureState s;
    int direction = 0;
    bool settled = false;
    for (int step = 0; step < 200 && !settled; ++step) {
      const GrayImage img = expose_scene(scene, 64, 48, s, gain);
      const ExposureDecision d = exposure_step(compute_histogram(std::span<const GrayImage>(&img, 1)), s);
      REQUIRE(d.action != ExposureAction::Saturated);
      if (d.action == ExposureAction::NoChange) {
        settled = true;
        break;
      }
      const bool brighter = d.action == ExposureAction::IsoUp || d.action == ExposureAction::ApertureOpen ||
                            d.action == ExposureAction::ShutterUp;
      const int dir = brighter ? 1 : -1;
      CHECK((direction == 0 || direction == dir));
      direction = dir;
      s = d.state;
    }
    CHECK(settled);
  }
}

TEST_CASE("histogram bins and replay") {
  GrayImage img{4, 1, {0, 31, 32, 255}};
  const Histogram8 h = compute_histogram(std::span<const GrayImage>(&img, 1));
  CHECK(h.counts[0] == 2);
  CHECK(h.counts[1] == 1);
  CHECK(h.counts[7] == 1);
  const std::vector<Histogram8> seq = {dark_histogram(), dark_histogram(), bright_histogram()};
  const auto trace = exposure_replay(seq, ExposureState{});
  REQUIRE(trace.size() == 3);
  CHECK(trace[1].state.iso == 600);
  CHECK(trace[2].state.iso == 500);
  CHECK_THROWS_AS(compute_histogram(std::span<const GrayImage>()), Error);
}

TEST_CASE("two cameras of constant color average exactly") {
  const TriangleMesh quad = unit_quad();
  const Vec3 a(200.0, 10.0, 33.0), b(50.0, 101.0, 7.0);
  const std::vector<CameraView> views = {constant_view(Vec3(0.3, 0.5, 2.0), Vec3(0.5, 0.5, 0.0), a),
                                         constant_view(Vec3(0.7, 0.4, 2.5), Vec3(0.5, 0.5, 0.0), b)};
  const TextureMap tm = bake_texture(quad, views, 32, 32);
  std::size_t both = 0;
  for (std::size_t i = 0; i < tm.rgb.size(); ++i) {
    if (tm.count[i] == 2) {
      CHECK(tm.rgb[i] == Vec3(0.5 * (a + b)));
      ++both;
    }
  }
  CHECK(both == tm.rgb.size());
}

TEST_CASE("occluded cameras are excluded") {
  // Small blocker above the lower-left quarter, mapped to its own UV corner.
  TriangleMesh base = unit_quad(0.0, 0.0, 1.0, Vec2(0, 0), 0.8);
  base.append(unit_quad(0.5, 0.0, 0.5, Vec2(0.9, 0.9), 0.05));
  const Vec3 a(100.0, 100.0, 100.0), b(20.0, 40.0, 60.0);
  const std::vector<CameraView> views = {constant_view(Vec3(0.5, 0.5, 3.0), Vec3(0.5, 0.5, 0.0), a),
                                         constant_view(Vec3(0.5, 0.5, -3.0), Vec3(0.5, 0.5, 0.0), b)};
  const int res = 64;
  const TextureMap tm = bake_texture(base, views, res, res);
  std::size_t single = 0, shared = 0;
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const std::size_t i = static_cast<std::size_t>(y * res + x);
      const double u = (x + 0.5) / res / 0.8;
      const double v = (1.0 - (y + 0.5) / res) / 0.8;
      if (u >= 1.0 || v >= 1.0) continue;
      REQUIRE(tm.covered[i]);
      // The ground quad is seen from above by `a` except under the blocker,
      // and from below by `b` everywhere.
      const bool shadowed = u < 0.45 && v < 0.45;
      if (shadowed) {
        CHECK(tm.count[i] == 1);
        CHECK(tm.rgb[i] == b);
        ++single;
      } else if (u > 0.7 || v > 0.7) {
        CHECK(tm.count[i] == 2);
        CHECK(tm.rgb[i] == Vec3(0.5 * (a + b)));
        ++shared;
      }
    }
  }
  CHECK(single > 50);
  CHECK(shared > 50);
}

TEST_CASE("texture is bit-identical under view permutations") {
  SceneSpec spec;
  spec.ground.x_min = 0.0;
  spec.ground.x_max = 0.4;
  spec.ground.y_min = -0.2;
  spec.ground.y_max = 0.2;
  LeafPatch leaf;
  leaf.center = Vec3(0.2, 0.0, 0.1);
  leaf.curvature = 3.0;
  leaf.tilt = 0.3;
  spec.leaves.push_back(leaf);
  const SceneMesh sm = synthesize_scene(spec);
  const RayCaster caster(sm.mesh);
  CameraIntrinsics k;
  k.width = 80;
  k.height = 60;
  k.cx = 39.5;
  k.cy = 29.5;
  k.fx = k.fy = 70.0;
  std::vector<CameraView> views;
  for (const Pose& pose : camera_dome(leaf.center, 0.6, 5)) {
    CameraView v;
    v.pose = pose;
    v.intrinsics = k;
    v.image = render_view(caster, pose, k, [](int tri, const Vec2& uv) {
      return Vec3(50.0 + tri % 100, 255.0 * uv.x(), 255.0 * uv.y());
    });
    views.push_back(v);
  }
  const TextureMap ref = bake_texture(sm.mesh, views, 64, 64);
  std::mt19937 rng(5);
  for (int trial = 0; trial < 4; ++trial) {
    std::shuffle(views.begin(), views.end(), rng);
    const TextureMap t = bake_texture(sm.mesh, views, 64, 64, BakeOptions{trial + 1});
    CHECK(t.rgb == ref.rgb);
    CHECK(t.count == ref.count);
  }
}

TEST_CASE("bake input errors") {
  TriangleMesh no_uv = TriangleMesh::build({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)}, {Eigen::Vector3i(0, 1, 2)});
  const std::vector<CameraView> views = {constant_view(Vec3(0, 0, 2), Vec3::Zero(), Vec3::Zero())};
  try {
    bake_texture(no_uv, views, 8, 8);
    FAIL("mesh without UVs accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoUVs);
  }
  try {
    bake_texture(unit_quad(), {}, 8, 8);
    FAIL("empty view list accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoViews);
  }
}

TEST_CASE("unseen texels are magenta and png round trips") {
  const TriangleMesh quad = unit_quad();
  // Camera below the quad, facing away: every texel is covered but unseen.
  const std::vector<CameraView> views = {constant_view(Vec3(5.0, 5.0, 2.0), Vec3(6.0, 6.0, 2.0), Vec3(1, 2, 3))};
  const TextureMap tm = bake_texture(quad, views, 16, 16);
  const RgbImage img = tm.to_image();
  CHECK(img.at(3, 3) == kUnseenColor);
  const fs::path p = fs::temp_directory_path() / "agriscan_unit_tex.png";
  write_png(p, img);
  const RgbImage back = read_png(p);
  CHECK(back.width == img.width);
  CHECK(back.data == img.data);
}

TEST_CASE("camera projection follows the pinhole model") {
  CameraView v = constant_view(Vec3(0, 0, 2), Vec3::Zero(), Vec3::Zero());
  const auto c = v.project(Vec3::Zero());
  REQUIRE(c.has_value());
  CHECK(c->x() == doctest::Approx(99.5));
  CHECK(c->y() == doctest::Approx(99.5));
  CHECK(!v.project(Vec3(0, 0, 3)).has_value());
}

TEST_CASE("histogram matches a brute-force pixel count") {
  GrayImage ramp{256, 1, {}};
  for (int i = 0; i < 256; ++i) ramp.pixels.push_back(static_cast<std::uint8_t>(i));
  const Histogram8 hr = compute_histogram(std::span<const GrayImage>(&ramp, 1));
  for (int k = 0; k < 8; ++k) CHECK(hr.counts[k] == 32);

  std::mt19937 rng(77);
  std::uniform_int_distribution<int> px(0, 255), dim(1, 40);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<GrayImage> imgs(3);
    std::array<std::uint64_t, 8> brute{};
    for (GrayImage& g : imgs) {
      g.width = dim(rng);
      g.height = dim(rng);
      for (int i = 0; i < g.width * g.height; ++i) {
        const int v = px(rng);
        g.pixels.push_back(static_cast<std::uint8_t>(v));
        for (int k = 0; k < 8; ++k) brute[k] += (v >= 32 * k && v <= 32 * k + 31);
      }
    }
    const Histogram8 h = compute_histogram(imgs);
    for (int k = 0; k < 8; ++k) CHECK(h.counts[k] == brute[k]);
  }
}

TEST_CASE("exposure step is pure") {
  std::mt19937 rng(78);
  std::uniform_int_distribution<int> c(0, 1000);
  for (int i = 0; i < 100; ++i) {
    Histogram8 h;
    for (auto& x : h.counts) x = static_cast<std::uint64_t>(c(rng));
    if (h.total() == 0) continue;
    const ExposureDecision a = exposure_step(h, ExposureState{});
    const ExposureDecision b = exposure_step(h, ExposureState{});
    CHECK(a.action == b.action);
    CHECK(a.state.iso == b.state.iso);
    CHECK(a.state.f_stop == b.state.f_stop);
    CHECK(a.state.shutter_ms == b.state.shutter_ms);
  }
}

TEST_CASE("a camera that sees nothing leaves the texture unchanged") {
  const TriangleMesh quad = unit_quad();
  std::vector<CameraView> views = {constant_view(Vec3(0.3, 0.5, 2.0), Vec3(0.5, 0.5, 0.0), Vec3(90, 80, 70))};
  const TextureMap ref = bake_texture(quad, views, 32, 32);
  views.push_back(constant_view(Vec3(5.0, 5.0, 2.0), Vec3(6.0, 6.0, 2.0), Vec3(1, 2, 3)));
  const TextureMap t = bake_texture(quad, views, 32, 32);
  CHECK(t.rgb == ref.rgb);
  CHECK(t.count == ref.count);
}

TEST_CASE("baking a horizontal gradient onto a fronto-parallel quad") {
  const TriangleMesh quad = unit_quad();
  CameraView v = constant_view(Vec3::Zero(), Vec3::UnitX(), Vec3::Zero());
  v.pose = Pose(Vec3(0.5, 0.5, 1.5), Quat(Eigen::AngleAxisd(kPi, Vec3::UnitX())));
  for (int y = 0; y < v.image.height; ++y)
    for (int x = 0; x < v.image.width; ++x) v.image.set(x, y, Vec3(x, 255 - x, 100));
  const int res = 48;
  const TextureMap tm = bake_texture(quad, {v}, res, res);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const std::size_t i = static_cast<std::size_t>(y * res + x);
      REQUIRE(tm.count[i] == 1);
      const Vec3 world((x + 0.5) / res, 1.0 - (y + 0.5) / res, 0.0);
      const double px = v.project(world)->x();
      CHECK(std::abs(tm.rgb[i].x() - px) <= 1.0);
      CHECK(std::abs(tm.rgb[i].y() - (255.0 - px)) <= 1.0);
      CHECK(tm.rgb[i].z() == doctest::Approx(100.0));
    }
  }
}
