#pragma once

#include <string>

#include "ssmix/tensor.hpp"

namespace ssmix {

// ENVI-style flat-binary image support. The header is a text file of
// `key = value` lines (values may be brace-enclosed lists spanning lines);
// the raw file holds the samples in one of three interleaves.
struct EnviHeader {
  std::size_t samples = 0;  // W
  std::size_t lines = 0;    // H
  std::size_t bands = 0;    // C
  int data_type = 0;        // 4 = float32, 5 = float64
  std::string interleave;   // bsq | bil | bip
  int byte_order = 0;       // only little-endian (0) is supported
  std::size_t header_offset = 0;
};

EnviHeader parse_envi_header(const std::string& hdr_path);

// Reads the raw samples into band-major [C,H,W] doubles without any scaling.
Tensor read_envi_raw(const EnviHeader& h, const std::string& raw_path);

// Writes float64 samples with the given interleave plus a matching header.
void write_envi(const std::string& hdr_path, const std::string& raw_path,
                const Tensor& cube /* [C,H,W] */, const std::string& interleave);

// Band-wise min-max scaling to [0,1]; a constant band maps to all zeros.
Tensor normalize_bands(const Tensor& cube /* [C,H,W] or [C,N] */);

}  // namespace ssmix
