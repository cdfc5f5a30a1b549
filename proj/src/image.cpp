#include "agriscan/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

namespace agriscan {

RgbImage::RgbImage(int w, int h, const Vec3& fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) fail(ErrorCode::InvalidArgument, "image size must be positive");
  data.resize(3 * static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) set(x, y, fill);
  }
}

Vec3 RgbImage::at(int x, int y) const {
  const std::size_t o = 3 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x));
  return {static_cast<double>(data[o]), static_cast<double>(data[o + 1]), static_cast<double>(data[o + 2])};
}

void RgbImage::set(int x, int y, const Vec3& rgb) {
  const std::size_t o = 3 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x));
  for (int c = 0; c < 3; ++c) data[o + static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(std::clamp(std::lround(rgb[c]), 0L, 255L));
}

Vec3 RgbImage::bilinear(double x, double y) const {
  const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, width - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, height - 1);
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double tx = std::clamp(x - x0, 0.0, 1.0);
  const double ty = std::clamp(y - y0, 0.0, 1.0);
  // a + t (b - a) keeps constant images exact.
  const Vec3 top = at(x0, y0) + tx * (at(x1, y0) - at(x0, y0));
  const Vec3 bottom = at(x0, y1) + tx * (at(x1, y1) - at(x0, y1));
  return top + ty * (bottom - top);
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  if (image.empty()) fail(ErrorCode::InvalidArgument, "cannot write an empty image");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.string().c_str(), "wb"));
  if (!file) fail(ErrorCode::Io, "cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::Io, "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::Io, "PNG encoding failed: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.data.data() + 3 * static_cast<std::size_t>(y) * static_cast<std::size_t>(image.width)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RgbImage read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.string().c_str(), "rb"));
  if (!file) fail(ErrorCode::Io, "cannot open for reading: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::Io, "libpng initialization failed");
  }
  RgbImage img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::Io, "PNG decoding failed: " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.data.resize(3 * static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    png_read_row(png, img.data.data() + 3 * static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width), nullptr);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_pgm(const std::filesystem::path& path, int width, int height, const std::vector<std::uint16_t>& values) {
  if (values.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    fail(ErrorCode::InvalidArgument, "PGM size mismatch");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot open for writing: " + path.string());
  out << "P5\n" << width << " " << height << "\n255\n";
  std::vector<char> buf(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) buf[i] = static_cast<char>(std::min<std::uint16_t>(values[i], 255));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace agriscan
