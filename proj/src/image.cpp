#include "headsynth/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace headsynth {

Image Image::channel_slice(int first, int count) const {
  require(first >= 0 && count > 0 && first + count <= channels_, "Image::channel_slice: range out of bounds");
  Image out(width_, height_, count);
  for (std::size_t p = 0; p < pixel_count(); ++p) {
    const auto src = pixel(p);
    auto dst = out.pixel(p);
    std::copy(src.begin() + first, src.begin() + first + count, dst.begin());
  }
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const Image& rgb, const std::filesystem::path& path) {
  require(rgb.channels() == 3, "write_png: expected a 3-channel image");
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw IoError("cannot open " + path.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed for " + path.string());
  }
  std::vector<png_byte> bytes(static_cast<std::size_t>(rgb.width()) * rgb.height() * 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const double v = std::clamp(static_cast<double>(rgb.data()[i]), 0.0, 1.0);
    bytes[i] = static_cast<png_byte>(std::lround(v * 255.0));
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(rgb.height()));
  for (int y = 0; y < rgb.height(); ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * rgb.width() * 3;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(rgb.width()), static_cast<png_uint_32>(rgb.height()), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed for " + path.string());
  }
  Image out;
  std::vector<png_byte> bytes;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("PNG file " + path.string() + ": decode failed");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_expand(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY || png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  bytes.resize(static_cast<std::size_t>(w) * h * 3);
  rows.resize(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  out = Image(w, h, 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) out.data()[i] = static_cast<float>(bytes[i]) / 255.0f;
  return out;
}

void write_pfm(const Image& image, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  const int w = image.width(), h = image.height(), c = image.channels();
  const bool color = c == 3;
  const int out_h = color ? h : h * c;
  os << (color ? "PF" : "Pf") << "\n" << w << " " << out_h << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(w) * (color ? 3 : 1));
  // PFM scanlines run bottom to top.
  for (int r = out_h - 1; r >= 0; --r) {
    if (color) {
      for (int x = 0; x < w; ++x)
        for (int k = 0; k < 3; ++k) row[static_cast<std::size_t>(x) * 3 + k] = image.at(x, r, k);
    } else {
      const int band = r / h, y = r % h;
      for (int x = 0; x < w; ++x) row[x] = image.at(x, y, band);
    }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!os) throw IoError("failed writing " + path.string());
}

Image read_pfm(const std::filesystem::path& path, int channels) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  const std::string what = "PFM file " + path.string();
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  is >> magic >> w >> h >> scale;
  if (!is || (magic != "Pf" && magic != "PF") || w <= 0 || h <= 0) throw ParseError(what + ": malformed header");
  if (scale >= 0.0) throw ParseError(what + ": big-endian PFM is not supported");
  is.get();  // single whitespace before the payload
  const bool color = magic == "PF";
  const int per_pixel = color ? 3 : 1;
  std::vector<float> payload(static_cast<std::size_t>(w) * h * per_pixel);
  is.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!is) throw ParseError(what + ": truncated payload");

  if (color) {
    Image out(w, h, 3);
    for (int r = 0; r < h; ++r)
      for (int x = 0; x < w; ++x)
        for (int k = 0; k < 3; ++k)
          out.at(x, h - 1 - r, k) = payload[(static_cast<std::size_t>(r) * w + x) * 3 + k];
    return out;
  }
  const int c = channels > 0 ? channels : 1;
  if (h % c != 0) throw ParseError(what + ": height " + std::to_string(h) + " not divisible by " + std::to_string(c));
  const int img_h = h / c;
  Image out(w, img_h, c);
  for (int r = 0; r < h; ++r) {
    const int file_row = h - 1 - r;  // top-down row index in the stacked image
    const int band = file_row / img_h, y = file_row % img_h;
    for (int x = 0; x < w; ++x) out.at(x, y, band) = payload[static_cast<std::size_t>(r) * w + x];
  }
  return out;
}

}  // namespace headsynth
