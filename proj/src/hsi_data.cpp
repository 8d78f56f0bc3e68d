#include "ssmix/hsi_data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ssmix/array_io.hpp"
#include "ssmix/envi.hpp"
#include "ssmix/rng.hpp"

namespace ssmix {

HsiCube make_cube(std::size_t bands, std::size_t height, std::size_t width) {
  HsiCube c;
  c.bands = bands;
  c.height = height;
  c.width = width;
  c.values = Tensor::zeros(Shape{bands, height * width});
  return c;
}

namespace {

HsiCube cube_from_chw(const Tensor& chw) {
  if (chw.ndim() != 3)
    throw std::runtime_error("cube data must be rank 3 [bands,height,width], got " +
                             shape_str(chw.shape()));
  HsiCube c;
  c.bands = chw.dim(0);
  c.height = chw.dim(1);
  c.width = chw.dim(2);
  c.values = chw.reshaped(Shape{c.bands, c.height * c.width});
  return c;
}

}  // namespace

HsiCube load_cube_normalized(const std::string& path) {
  Tensor raw = load_array(path);
  return cube_from_chw(normalize_bands(raw));
}

HsiCube load_cube_normalized_envi(const std::string& hdr_path, const std::string& raw_path) {
  EnviHeader h = parse_envi_header(hdr_path);
  Tensor raw = read_envi_raw(h, raw_path);
  return cube_from_chw(normalize_bands(raw));
}

int LabelMap::num_classes() const {
  std::int32_t mx = 0;
  for (std::int32_t v : labels) mx = std::max(mx, v);
  return static_cast<int>(mx);
}

LabelMap load_labels(const std::string& path) {
  auto [shape, data] = load_array_i64(path);
  if (shape.size() != 2)
    throw std::runtime_error("label map must be rank 2 [height,width], got " +
                             shape_str(shape));
  LabelMap lm;
  lm.height = shape[0];
  lm.width = shape[1];
  lm.labels.reserve(data.size());
  for (std::int64_t v : data) {
    if (v < 0)
      throw std::runtime_error("label map contains negative class id in " + path);
    lm.labels.push_back(static_cast<std::int32_t>(v));
  }
  return lm;
}

void save_labels(const std::string& path, const LabelMap& lm) {
  std::vector<std::int64_t> data(lm.labels.begin(), lm.labels.end());
  save_array_i64(path, Shape{lm.height, lm.width}, data);
}

SplitMasks stratified_split(const LabelMap& lm, double train_frac, double val_frac,
                            std::uint64_t seed) {
  if (!(train_frac > 0.0) || train_frac >= 1.0)
    throw std::invalid_argument("stratified_split: train fraction must be in (0,1)");
  if (val_frac < 0.0 || train_frac + val_frac >= 1.0)
    throw std::invalid_argument("stratified_split: train+val fractions must leave test pixels");
  const std::size_t n = lm.pixels();
  if (lm.labels.size() != n)
    throw std::invalid_argument("stratified_split: label buffer size mismatch");

  SplitMasks m;
  m.train.assign(n, 0);
  m.val.assign(n, 0);
  m.test.assign(n, 0);

  const int ncls = lm.num_classes();
  Rng rng(seed);
  for (int c = 1; c <= ncls; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
      if (lm.labels[i] == c) idx.push_back(i);
    if (idx.empty()) continue;  // class id gap: nothing to sample
    Rng class_rng = rng.fork(static_cast<std::uint64_t>(c));
    class_rng.shuffle(idx);

    const std::size_t count = idx.size();
    std::size_t n_train = static_cast<std::size_t>(
        std::ceil(train_frac * static_cast<double>(count)));
    n_train = std::max<std::size_t>(1, std::min(n_train, count));
    std::size_t n_val = static_cast<std::size_t>(
        std::ceil(val_frac * static_cast<double>(count)));
    n_val = std::min(n_val, count - n_train);

    for (std::size_t k = 0; k < n_train; ++k) m.train[idx[k]] = 1;
    for (std::size_t k = n_train; k < n_train + n_val; ++k) m.val[idx[k]] = 1;
    for (std::size_t k = n_train + n_val; k < count; ++k) m.test[idx[k]] = 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    m.train_count += m.train[i];
    m.val_count += m.val[i];
    m.test_count += m.test[i];
  }
  return m;
}

namespace {

double spectra_angle(const double* a, const double* b, std::size_t n) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  double u = dot / (std::sqrt(na) * std::sqrt(nb));
  u = std::clamp(u, -1.0, 1.0);
  return std::acos(u);
}

// Smooth positive spectrum: low baseline plus 2-3 Gaussian bumps.
void draw_spectrum(double* s, std::size_t C, Rng& rng) {
  const double base = 0.15 + 0.1 * rng.uniform();
  for (std::size_t c = 0; c < C; ++c) s[c] = base;
  const std::size_t nb = 2 + rng.bounded(2);
  for (std::size_t k = 0; k < nb; ++k) {
    const double center = rng.uniform() * static_cast<double>(C - 1);
    const double width = static_cast<double>(C) * (0.05 + 0.15 * rng.uniform());
    const double amp = 0.3 + 0.6 * rng.uniform();
    for (std::size_t c = 0; c < C; ++c) {
      const double d = (static_cast<double>(c) - center) / width;
      s[c] += amp * std::exp(-0.5 * d * d);
    }
  }
  for (std::size_t c = 0; c < C; ++c) s[c] = std::clamp(s[c], 0.02, 1.0);
}

// Separable Gaussian blur with truncated, renormalised kernels so that
// blurring a field of ones returns ones (keeps per-pixel abundance sums at 1).
void gaussian_blur_plane(std::vector<double>& img, std::size_t H, std::size_t W,
                         double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(2.5 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k)
    kernel[k + radius] = std::exp(-0.5 * (k * k) / (sigma * sigma));

  std::vector<double> tmp(H * W);
  // Horizontal pass.
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      double s = 0, wsum = 0;
      for (int k = -radius; k <= radius; ++k) {
        const long long jj = static_cast<long long>(j) + k;
        if (jj < 0 || jj >= static_cast<long long>(W)) continue;
        s += kernel[k + radius] * img[i * W + static_cast<std::size_t>(jj)];
        wsum += kernel[k + radius];
      }
      tmp[i * W + j] = s / wsum;
    }
  // Vertical pass.
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      double s = 0, wsum = 0;
      for (int k = -radius; k <= radius; ++k) {
        const long long ii = static_cast<long long>(i) + k;
        if (ii < 0 || ii >= static_cast<long long>(H)) continue;
        s += kernel[k + radius] * tmp[static_cast<std::size_t>(ii) * W + j];
        wsum += kernel[k + radius];
      }
      img[i * W + j] = s / wsum;
    }
}

}  // namespace

SyntheticData generate_synthetic_cube(std::size_t P, std::size_t C, std::size_t H,
                                      std::size_t W, double snr_db, std::uint64_t seed) {
  if (P < 2) throw std::invalid_argument("generate_synthetic_cube: need at least 2 endmembers");
  if (C <= P)
    throw std::invalid_argument("generate_synthetic_cube: need more bands than endmembers");
  if (H < 2 || W < 2)
    throw std::invalid_argument("generate_synthetic_cube: image must be at least 2x2");
  if (!(snr_db > 0.0))
    throw std::invalid_argument("generate_synthetic_cube: SNR must be positive");

  Rng rng(seed);
  const std::size_t N = H * W;

  // Endmember spectra, redrawn until pairwise angles are comfortably apart.
  Tensor S(Shape{P, C});
  for (std::size_t p = 0; p < P; ++p) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      draw_spectrum(S.data() + p * C, C, rng);
      bool distinct = true;
      for (std::size_t q = 0; q < p; ++q)
        if (spectra_angle(S.data() + p * C, S.data() + q * C, C) < 0.15) distinct = false;
      if (distinct) break;
      if (attempt == 99)
        throw std::runtime_error("generate_synthetic_cube: failed to draw distinct spectra");
    }
  }

  // Voronoi-style dominant regions from random seed points.
  const std::size_t nseeds = std::max(P, (3 * P) / 2);
  std::vector<std::size_t> srow(nseeds), scol(nseeds), slabel(nseeds);
  for (std::size_t k = 0; k < nseeds; ++k) {
    srow[k] = rng.bounded(H);
    scol[k] = rng.bounded(W);
    slabel[k] = k < P ? k : rng.bounded(P);
  }
  std::vector<std::size_t> region(N);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      std::size_t best = 0;
      double bestd = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < nseeds; ++k) {
        const double di = static_cast<double>(i) - static_cast<double>(srow[k]);
        const double dj = static_cast<double>(j) - static_cast<double>(scol[k]);
        const double d = di * di + dj * dj;
        if (d < bestd) {
          bestd = d;
          best = k;
        }
      }
      region[i * W + j] = slabel[best];
    }

  // One-hot per region, blurred into smooth fields, then Dirichlet jitter.
  Tensor A(Shape{P, N});
  {
    std::vector<double> plane(N);
    const double sigma = std::max(1.0, static_cast<double>(std::min(H, W)) / 12.0);
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t n = 0; n < N; ++n) plane[n] = region[n] == p ? 1.0 : 0.0;
      gaussian_blur_plane(plane, H, W, sigma);
      for (std::size_t n = 0; n < N; ++n) A[p * N + n] = plane[n];
    }
    const double eta = 0.1;  // mixing weight of the random jitter component
    for (std::size_t n = 0; n < N; ++n) {
      double gsum = 0;
      std::vector<double> gam(P);
      for (std::size_t p = 0; p < P; ++p) {
        double u;
        do {
          u = rng.uniform();
        } while (u <= 0.0);
        gam[p] = -std::log(u);  // Exp(1) draws normalise to a Dirichlet(1) point
        gsum += gam[p];
      }
      double total = 0;
      for (std::size_t p = 0; p < P; ++p) {
        const double v = (1.0 - eta) * A[p * N + n] + eta * gam[p] / gsum;
        A[p * N + n] = v;
        total += v;
      }
      for (std::size_t p = 0; p < P; ++p) A[p * N + n] /= total;
    }
  }

  // Mix and add noise at the requested SNR.
  Tensor signal(Shape{C, N});
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t c = 0; c < C; ++c) {
      const double s = S[p * C + c];
      if (s == 0.0) continue;
      for (std::size_t n = 0; n < N; ++n) signal[c * N + n] += s * A[p * N + n];
    }

  Tensor noise(Shape{C, N});
  if (!std::isinf(snr_db)) {
    double power = 0;
    for (std::size_t i = 0; i < signal.numel(); ++i) power += signal[i] * signal[i];
    power /= static_cast<double>(signal.numel());
    const double sigma_n = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
    for (std::size_t i = 0; i < noise.numel(); ++i) noise[i] = sigma_n * rng.normal();
  }

  SyntheticData out;
  out.cube.bands = C;
  out.cube.height = H;
  out.cube.width = W;
  out.cube.values = Tensor(Shape{C, N});
  for (std::size_t i = 0; i < signal.numel(); ++i)
    out.cube.values[i] = signal[i] + noise[i];

  out.truth.endmembers = std::move(S);
  out.truth.noise = std::move(noise);
  out.truth.snr_db = snr_db;

  out.labels.height = H;
  out.labels.width = W;
  out.labels.labels.resize(N);
  for (std::size_t n = 0; n < N; ++n) {
    std::size_t best = 0;
    for (std::size_t p = 1; p < P; ++p)
      if (A[p * N + n] > A[best * N + n]) best = p;
    out.labels.labels[n] = static_cast<std::int32_t>(best + 1);
  }
  out.truth.abundance = std::move(A);
  return out;
}

}  // namespace ssmix
