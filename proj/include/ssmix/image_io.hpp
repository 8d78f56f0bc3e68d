#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ssmix/tensor.hpp"

namespace ssmix {

using Rgb = std::array<std::uint8_t, 3>;

// Fixed class palette so maps from different runs are directly comparable.
// Label 0 (unlabeled) is black; labels 1..20 cycle through twenty distinct
// colours; labels beyond 20 wrap around.
Rgb class_color(std::int32_t label);

// 8-bit RGB PNG, row-major, 3 bytes per pixel.
void write_png_rgb(const std::string& path, const std::vector<std::uint8_t>& rgb,
                   std::size_t width, std::size_t height);
std::vector<std::uint8_t> read_png_rgb(const std::string& path, std::size_t* width,
                                       std::size_t* height);

// Classification map: labels are row-major H*W, coloured by class_color.
void write_class_map_png(const std::string& path, const std::vector<std::int32_t>& labels,
                         std::size_t height, std::size_t width);

// Single-plane map rendered as grayscale; values clamped to [0,1].
void write_gray_png(const std::string& path, const double* plane, std::size_t height,
                    std::size_t width);

// Line plot of endmember spectra (rows of [P,C]), one colour per endmember,
// drawn on a white canvas with a light frame. Canvas is 640x400.
void write_spectra_png(const std::string& path, const Tensor& spectra /* [P,C] */);

}  // namespace ssmix
