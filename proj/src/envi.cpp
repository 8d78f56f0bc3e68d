#include "ssmix/envi.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ssmix {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::size_t parse_size(const std::string& v, const std::string& key,
                       const std::string& path) {
  try {
    long long x = std::stoll(v);
    if (x < 0) throw std::invalid_argument("negative");
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    throw std::runtime_error("ENVI header " + path + ": bad value for '" + key + "': " + v);
  }
}

}  // namespace

EnviHeader parse_envi_header(const std::string& hdr_path) {
  std::ifstream f(hdr_path);
  if (!f) throw std::runtime_error("cannot open ENVI header: " + hdr_path);
  std::string whole((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  EnviHeader h;
  bool saw_samples = false, saw_lines = false, saw_bands = false, saw_dtype = false,
       saw_interleave = false;

  std::size_t pos = 0;
  while (pos < whole.size()) {
    std::size_t eol = whole.find('\n', pos);
    if (eol == std::string::npos) eol = whole.size();
    std::string line = whole.substr(pos, eol - pos);
    pos = eol + 1;

    std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;  // e.g. the leading "ENVI" banner
    std::string key = lower(trim(line.substr(0, eq)));
    std::string value = trim(line.substr(eq + 1));

    // Brace-enclosed list values may span lines; consume to the closing brace.
    if (!value.empty() && value.front() == '{' && value.find('}') == std::string::npos) {
      while (pos < whole.size()) {
        std::size_t e2 = whole.find('\n', pos);
        if (e2 == std::string::npos) e2 = whole.size();
        value += "\n" + whole.substr(pos, e2 - pos);
        pos = e2 + 1;
        if (value.find('}') != std::string::npos) break;
      }
    }

    if (key == "samples") {
      h.samples = parse_size(value, key, hdr_path);
      saw_samples = true;
    } else if (key == "lines") {
      h.lines = parse_size(value, key, hdr_path);
      saw_lines = true;
    } else if (key == "bands") {
      h.bands = parse_size(value, key, hdr_path);
      saw_bands = true;
    } else if (key == "data type") {
      h.data_type = static_cast<int>(parse_size(value, key, hdr_path));
      saw_dtype = true;
    } else if (key == "interleave") {
      h.interleave = lower(value);
      saw_interleave = true;
    } else if (key == "byte order") {
      h.byte_order = static_cast<int>(parse_size(value, key, hdr_path));
    } else if (key == "header offset") {
      h.header_offset = parse_size(value, key, hdr_path);
    }
    // Other keys (wavelength lists, descriptions, ...) are ignored.
  }

  if (!saw_samples || !saw_lines || !saw_bands || !saw_dtype || !saw_interleave)
    throw std::runtime_error("ENVI header " + hdr_path +
                             ": missing one of samples/lines/bands/data type/interleave");
  if (h.samples == 0 || h.lines == 0 || h.bands == 0)
    throw std::runtime_error("ENVI header " + hdr_path + ": zero-sized dimension");
  if (h.data_type != 4 && h.data_type != 5)
    throw std::runtime_error("ENVI header " + hdr_path + ": unsupported data type " +
                             std::to_string(h.data_type) + " (supported: 4 float32, 5 float64)");
  if (h.interleave != "bsq" && h.interleave != "bil" && h.interleave != "bip")
    throw std::runtime_error("ENVI header " + hdr_path + ": unsupported interleave '" +
                             h.interleave + "'");
  if (h.byte_order != 0)
    throw std::runtime_error("ENVI header " + hdr_path +
                             ": only byte order 0 (little-endian) is supported");
  return h;
}

Tensor read_envi_raw(const EnviHeader& h, const std::string& raw_path) {
  std::ifstream f(raw_path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("cannot open ENVI raw file: " + raw_path);
  const std::size_t file_size = static_cast<std::size_t>(f.tellg());
  const std::size_t elem = h.data_type == 5 ? 8 : 4;
  const std::size_t count = h.samples * h.lines * h.bands;
  const std::size_t expected = h.header_offset + count * elem;
  if (file_size != expected)
    throw std::runtime_error("ENVI raw file " + raw_path + ": size mismatch (file has " +
                             std::to_string(file_size) + " bytes, header implies " +
                             std::to_string(expected) + ")");
  f.seekg(static_cast<std::streamoff>(h.header_offset));

  std::vector<double> raw(count);
  if (h.data_type == 5) {
    f.read(reinterpret_cast<char*>(raw.data()),
           static_cast<std::streamsize>(count * sizeof(double)));
  } else {
    std::vector<float> tmp(count);
    f.read(reinterpret_cast<char*>(tmp.data()),
           static_cast<std::streamsize>(count * sizeof(float)));
    for (std::size_t i = 0; i < count; ++i) raw[i] = static_cast<double>(tmp[i]);
  }
  if (!f) throw std::runtime_error("ENVI raw file " + raw_path + ": short read");

  const std::size_t C = h.bands, H = h.lines, W = h.samples;
  Tensor cube(Shape{C, H, W});
  if (h.interleave == "bsq") {
    std::copy(raw.begin(), raw.end(), cube.data());
  } else if (h.interleave == "bil") {
    // raw[line][band][sample]
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < W; ++j)
          cube[(c * H + i) * W + j] = raw[(i * C + c) * W + j];
  } else {  // bip: raw[line][sample][band]
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j)
        for (std::size_t c = 0; c < C; ++c)
          cube[(c * H + i) * W + j] = raw[(i * W + j) * C + c];
  }
  return cube;
}

void write_envi(const std::string& hdr_path, const std::string& raw_path,
                const Tensor& cube, const std::string& interleave) {
  if (cube.ndim() != 3)
    throw std::invalid_argument("write_envi: cube must be [bands,lines,samples]");
  const std::string il = lower(interleave);
  if (il != "bsq" && il != "bil" && il != "bip")
    throw std::invalid_argument("write_envi: unsupported interleave '" + interleave + "'");
  const std::size_t C = cube.dim(0), H = cube.dim(1), W = cube.dim(2);

  std::vector<double> raw(cube.numel());
  if (il == "bsq") {
    std::copy(cube.data(), cube.data() + cube.numel(), raw.begin());
  } else if (il == "bil") {
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < W; ++j)
          raw[(i * C + c) * W + j] = cube[(c * H + i) * W + j];
  } else {
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j)
        for (std::size_t c = 0; c < C; ++c)
          raw[(i * W + j) * C + c] = cube[(c * H + i) * W + j];
  }

  {
    std::ofstream f(raw_path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + raw_path);
    f.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(double)));
    if (!f) throw std::runtime_error("write failed: " + raw_path);
  }
  {
    std::ofstream f(hdr_path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + hdr_path);
    f << "ENVI\n";
    f << "samples = " << W << "\n";
    f << "lines = " << H << "\n";
    f << "bands = " << C << "\n";
    f << "header offset = 0\n";
    f << "data type = 5\n";
    f << "interleave = " << il << "\n";
    f << "byte order = 0\n";
    if (!f) throw std::runtime_error("write failed: " + hdr_path);
  }
}

Tensor normalize_bands(const Tensor& cube) {
  if (cube.ndim() < 2)
    throw std::invalid_argument("normalize_bands: need at least [C, ...]");
  const std::size_t C = cube.dim(0);
  const std::size_t n = cube.numel() / C;
  Tensor out(cube.shape());
  for (std::size_t c = 0; c < C; ++c) {
    const double* src = cube.data() + c * n;
    double* dst = out.data() + c * n;
    double mn = src[0], mx = src[0];
    for (std::size_t i = 1; i < n; ++i) {
      mn = std::min(mn, src[i]);
      mx = std::max(mx, src[i]);
    }
    if (mx > mn) {
      const double inv = 1.0 / (mx - mn);
      for (std::size_t i = 0; i < n; ++i) dst[i] = (src[i] - mn) * inv;
    } else {
      for (std::size_t i = 0; i < n; ++i) dst[i] = 0.0;
    }
  }
  return out;
}

}  // namespace ssmix
