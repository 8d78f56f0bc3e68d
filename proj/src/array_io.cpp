#include "ssmix/array_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ssmix {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'M', 'X', 'A', 'R', 'R', '1'};
constexpr std::uint32_t kDtypeF64 = 1;
constexpr std::uint32_t kDtypeI64 = 2;

static_assert(std::endian::native == std::endian::little,
              "array container assumes a little-endian host");

void write_header(std::ofstream& f, std::uint32_t dtype, const Shape& shape) {
  f.write(kMagic, 8);
  f.write(reinterpret_cast<const char*>(&dtype), 4);
  std::uint32_t ndim = static_cast<std::uint32_t>(shape.size());
  f.write(reinterpret_cast<const char*>(&ndim), 4);
  for (std::size_t d : shape) {
    std::uint64_t v = d;
    f.write(reinterpret_cast<const char*>(&v), 8);
  }
}

Shape read_header(std::ifstream& f, const std::string& path, std::uint32_t expect_dtype) {
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("array container: bad magic in " + path);
  std::uint32_t dtype = 0, ndim = 0;
  f.read(reinterpret_cast<char*>(&dtype), 4);
  f.read(reinterpret_cast<char*>(&ndim), 4);
  if (!f) throw std::runtime_error("array container: truncated header in " + path);
  if (dtype != expect_dtype)
    throw std::runtime_error("array container: dtype mismatch in " + path + " (found code " +
                             std::to_string(dtype) + ", expected " +
                             std::to_string(expect_dtype) + ")");
  if (ndim == 0 || ndim > 8)
    throw std::runtime_error("array container: implausible rank in " + path);
  Shape shape(ndim);
  for (std::uint32_t i = 0; i < ndim; ++i) {
    std::uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    shape[i] = static_cast<std::size_t>(v);
  }
  if (!f) throw std::runtime_error("array container: truncated shape in " + path);
  return shape;
}

void read_payload(std::ifstream& f, const std::string& path, char* dst, std::size_t bytes) {
  f.read(dst, static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(f.gcount()) != bytes)
    throw std::runtime_error("array container: truncated payload in " + path);
  // Reject trailing garbage so corrupt files are caught loudly.
  char probe;
  f.read(&probe, 1);
  if (!f.eof())
    throw std::runtime_error("array container: trailing bytes in " + path);
}

}  // namespace

void save_array(const std::string& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  write_header(f, kDtypeF64, t.shape());
  f.write(reinterpret_cast<const char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * sizeof(double)));
  if (!f) throw std::runtime_error("write failed: " + path);
}

Tensor load_array(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  Shape shape = read_header(f, path, kDtypeF64);
  Tensor t(shape);
  read_payload(f, path, reinterpret_cast<char*>(t.data()), t.numel() * sizeof(double));
  return t;
}

void save_array_i64(const std::string& path, const Shape& shape,
                    const std::vector<std::int64_t>& data) {
  if (shape_numel(shape) != data.size())
    throw std::invalid_argument("save_array_i64: shape/data mismatch");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  write_header(f, kDtypeI64, shape);
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(std::int64_t)));
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::pair<Shape, std::vector<std::int64_t>> load_array_i64(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  Shape shape = read_header(f, path, kDtypeI64);
  std::vector<std::int64_t> data(shape_numel(shape));
  read_payload(f, path, reinterpret_cast<char*>(data.data()),
               data.size() * sizeof(std::int64_t));
  return {std::move(shape), std::move(data)};
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace ssmix
