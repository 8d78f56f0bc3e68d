#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssmix/tensor.hpp"

namespace ssmix {

// Minimal binary array container used for cubes, abundances, labels and
// checkpointed parameters. Layout (little-endian):
//   8 bytes magic "SSMXARR1"
//   u32 dtype code (1 = float64, 2 = int64)
//   u32 ndim
//   u64 shape[ndim]
//   payload, row-major
void save_array(const std::string& path, const Tensor& t);
Tensor load_array(const std::string& path);

void save_array_i64(const std::string& path, const Shape& shape,
                    const std::vector<std::int64_t>& data);
std::pair<Shape, std::vector<std::int64_t>> load_array_i64(const std::string& path);

// Shortest round-trippable decimal rendering of a double (printf %.17g).
std::string g17(double v);

}  // namespace ssmix
