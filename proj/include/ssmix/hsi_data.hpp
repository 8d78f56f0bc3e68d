#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssmix/tensor.hpp"

namespace ssmix {

// A hyperspectral image with pixels flattened row-major: n = row * W + col.
// `values` is [C, N] so 1x1 convolutions are plain matrix products.
struct HsiCube {
  std::size_t bands = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  Tensor values;  // [C, H*W]

  std::size_t pixels() const { return height * width; }
};

HsiCube make_cube(std::size_t bands, std::size_t height, std::size_t width);

// Loads either the binary array container ([C,H,W] float64) or an ENVI
// header+raw pair, normalising every band to [0,1].
HsiCube load_cube_normalized(const std::string& path);
HsiCube load_cube_normalized_envi(const std::string& hdr_path, const std::string& raw_path);

// Class labels per pixel; 0 means unlabeled. Stored row-major like HsiCube.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::int32_t> labels;

  std::size_t pixels() const { return height * width; }
  int num_classes() const;  // highest label value
};

LabelMap load_labels(const std::string& path);
void save_labels(const std::string& path, const LabelMap& lm);

struct SplitMasks {
  std::vector<std::uint8_t> train, val, test;
  std::size_t train_count = 0, val_count = 0, test_count = 0;
};

// Per-class sampling without replacement: ceil(frac * count) for train and
// then for val (never less than one train pixel when the class is present),
// remainder to test. Classes absent from the map are skipped. Deterministic
// in (labels, fractions, seed).
SplitMasks stratified_split(const LabelMap& lm, double train_frac, double val_frac,
                            std::uint64_t seed);

struct SyntheticGroundTruth {
  Tensor endmembers;  // [P, C]
  Tensor abundance;   // [P, N], simplex per pixel
  Tensor noise;       // [C, N]
  double snr_db = 0.0;
};

struct SyntheticData {
  HsiCube cube;  // values = endmembers^T . abundance + noise, NOT normalised
  SyntheticGroundTruth truth;
  LabelMap labels;  // argmax abundance per pixel, classes 1..P
};

// Piecewise-smooth abundance fields over Voronoi-style regions with Gaussian
// bump endmember spectra; additive white Gaussian noise scaled to the target
// SNR (pass +infinity for a noiseless cube).
SyntheticData generate_synthetic_cube(std::size_t P, std::size_t C, std::size_t H,
                                      std::size_t W, double snr_db, std::uint64_t seed);

}  // namespace ssmix
