#include "ssmix/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace ssmix {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Twenty visually distinct colours (dark backgrounds avoided so the black
// "unlabeled" stands out).
constexpr Rgb kPalette[20] = {
    {230, 25, 75},   {60, 180, 75},   {255, 225, 25}, {0, 130, 200},  {245, 130, 48},
    {145, 30, 180},  {70, 240, 240},  {240, 50, 230}, {210, 245, 60}, {250, 190, 212},
    {0, 128, 128},   {220, 190, 255}, {170, 110, 40}, {255, 250, 200}, {128, 0, 0},
    {170, 255, 195}, {128, 128, 0},   {255, 215, 180}, {0, 0, 128},    {128, 128, 128},
};

}  // namespace

Rgb class_color(std::int32_t label) {
  if (label <= 0) return {0, 0, 0};
  return kPalette[static_cast<std::size_t>(label - 1) % 20];
}

void write_png_rgb(const std::string& path, const std::vector<std::uint8_t>& rgb,
                   std::size_t width, std::size_t height) {
  if (rgb.size() != width * height * 3) {
    throw std::invalid_argument("png: buffer size does not match " + std::to_string(width) +
                                "x" + std::to_string(height));
  }
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("png: cannot write " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw std::runtime_error("png: writer allocation failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png: info allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png: write failed for " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(rgb.data() + y * width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<std::uint8_t> read_png_rgb(const std::string& path, std::size_t* width,
                                       std::size_t* height) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("png: cannot read " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw std::runtime_error("png: reader allocation failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png: info allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: read failed for " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);

  // Normalise every input to 8-bit RGB.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  const std::size_t w = png_get_image_width(png, info);
  const std::size_t h = png_get_image_height(png, info);
  std::vector<std::uint8_t> out(w * h * 3);
  for (std::size_t y = 0; y < h; ++y) png_read_row(png, out.data() + y * w * 3, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  if (width != nullptr) *width = w;
  if (height != nullptr) *height = h;
  return out;
}

void write_class_map_png(const std::string& path, const std::vector<std::int32_t>& labels,
                         std::size_t height, std::size_t width) {
  if (labels.size() != height * width) {
    throw std::invalid_argument("class map: label count does not match the grid");
  }
  std::vector<std::uint8_t> rgb(labels.size() * 3);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Rgb c = class_color(labels[i]);
    rgb[i * 3 + 0] = c[0];
    rgb[i * 3 + 1] = c[1];
    rgb[i * 3 + 2] = c[2];
  }
  write_png_rgb(path, rgb, width, height);
}

void write_gray_png(const std::string& path, const double* plane, std::size_t height,
                    std::size_t width) {
  std::vector<std::uint8_t> rgb(height * width * 3);
  for (std::size_t i = 0; i < height * width; ++i) {
    double v = std::clamp(plane[i], 0.0, 1.0);
    auto g = static_cast<std::uint8_t>(std::lround(v * 255.0));
    rgb[i * 3 + 0] = g;
    rgb[i * 3 + 1] = g;
    rgb[i * 3 + 2] = g;
  }
  write_png_rgb(path, rgb, width, height);
}

void write_spectra_png(const std::string& path, const Tensor& spectra) {
  if (spectra.ndim() != 2 || spectra.dim(1) < 1) {
    throw std::invalid_argument("spectra plot: expected a [P,C] matrix");
  }
  const std::size_t P = spectra.dim(0), C = spectra.dim(1);
  const std::size_t W = 640, H = 400, margin = 32;
  std::vector<std::uint8_t> rgb(W * H * 3, 255);

  auto put = [&](std::size_t x, std::size_t y, Rgb c) {
    if (x >= W || y >= H) return;
    rgb[(y * W + x) * 3 + 0] = c[0];
    rgb[(y * W + x) * 3 + 1] = c[1];
    rgb[(y * W + x) * 3 + 2] = c[2];
  };

  // Frame.
  const Rgb frame{180, 180, 180};
  for (std::size_t x = margin; x <= W - margin; ++x) {
    put(x, margin, frame);
    put(x, H - margin, frame);
  }
  for (std::size_t y = margin; y <= H - margin; ++y) {
    put(margin, y, frame);
    put(W - margin, y, frame);
  }

  double lo = spectra[0], hi = spectra[0];
  for (std::size_t i = 0; i < spectra.numel(); ++i) {
    lo = std::min(lo, spectra[i]);
    hi = std::max(hi, spectra[i]);
  }
  if (hi <= lo) hi = lo + 1.0;  // constant spectra: draw a flat line mid-plot

  auto to_xy = [&](std::size_t band, double v) {
    const double fx = C == 1 ? 0.5 : static_cast<double>(band) / static_cast<double>(C - 1);
    const double fy = (v - lo) / (hi - lo);
    const auto x = static_cast<long>(margin + fx * static_cast<double>(W - 2 * margin));
    const auto y = static_cast<long>(static_cast<double>(H - margin) -
                                     fy * static_cast<double>(H - 2 * margin));
    return std::pair<long, long>{x, y};
  };

  auto line = [&](std::pair<long, long> a, std::pair<long, long> b, Rgb c) {
    long dx = std::abs(b.first - a.first), dy = -std::abs(b.second - a.second);
    long sx = a.first < b.first ? 1 : -1, sy = a.second < b.second ? 1 : -1;
    long err = dx + dy;
    long x = a.first, y = a.second;
    while (true) {
      put(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c);
      if (x == b.first && y == b.second) break;
      long e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y += sy;
      }
    }
  };

  for (std::size_t p = 0; p < P; ++p) {
    const Rgb c = class_color(static_cast<std::int32_t>(p) + 1);
    for (std::size_t band = 0; band + 1 < C; ++band) {
      line(to_xy(band, spectra.at({p, band})), to_xy(band + 1, spectra.at({p, band + 1})), c);
    }
    if (C == 1) {
      auto xy = to_xy(0, spectra.at({p, 0}));
      line({xy.first - 4, xy.second}, {xy.first + 4, xy.second}, c);
    }
  }
  write_png_rgb(path, rgb, W, H);
}

}  // namespace ssmix
