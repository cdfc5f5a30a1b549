#pragma once

#include "agriscan/common.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace agriscan {

/// 8-bit RGB raster, row-major, pixel centers at integer coordinates.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // 3 * width * height

  RgbImage() = default;
  RgbImage(int w, int h, const Vec3& fill = Vec3::Zero());

  bool empty() const { return width <= 0 || height <= 0; }
  Vec3 at(int x, int y) const;
  void set(int x, int y, const Vec3& rgb);  // rounds and clamps to [0, 255]
  /// Bilinear sample at continuous pixel coordinates; caller keeps (x, y)
  /// inside [0, width-1] x [0, height-1].
  Vec3 bilinear(double x, double y) const;
};

void write_png(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_png(const std::filesystem::path& path);
/// Binary PGM (P5), values saturated at 255.
void write_pgm(const std::filesystem::path& path, int width, int height, const std::vector<std::uint16_t>& values);

}  // namespace agriscan
