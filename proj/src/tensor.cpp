#include "ssmix/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ssmix {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  if (shape_.empty()) throw std::invalid_argument("Tensor: empty shape");
  data_.assign(shape_numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, double fill) : Tensor(std::move(shape)) {
  std::fill(data_.begin(), data_.end(), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw std::invalid_argument("Tensor: empty shape");
  if (data_.size() != shape_numel(shape_)) {
    throw std::invalid_argument("Tensor: data size " + std::to_string(data_.size()) +
                                " does not match shape " + shape_str(shape_));
  }
}

namespace {
std::size_t flat_offset(const Shape& shape, std::initializer_list<std::size_t> idx) {
  if (idx.size() != shape.size())
    throw std::invalid_argument("Tensor::at: rank mismatch for shape " + shape_str(shape));
  std::size_t off = 0;
  std::size_t d = 0;
  for (std::size_t i : idx) {
    if (i >= shape[d]) throw std::out_of_range("Tensor::at: index out of range");
    off = off * shape[d] + i;
    ++d;
  }
  return off;
}
}  // namespace

double& Tensor::at(std::initializer_list<std::size_t> idx) {
  return data_[flat_offset(shape_, idx)];
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
  return data_[flat_offset(shape_, idx)];
}

Tensor Tensor::reshaped(Shape s) const {
  if (shape_numel(s) != data_.size()) {
    throw std::invalid_argument("Tensor::reshaped: cannot view " + shape_str(shape_) +
                                " as " + shape_str(s));
  }
  return Tensor(std::move(s), data_);
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double Tensor::min() const {
  if (data_.empty()) throw std::logic_error("Tensor::min on empty tensor");
  return *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
  if (data_.empty()) throw std::logic_error("Tensor::max on empty tensor");
  return *std::max_element(data_.begin(), data_.end());
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::mean() const {
  if (data_.empty()) throw std::logic_error("Tensor::mean on empty tensor");
  return sum() / static_cast<double>(data_.size());
}

bool broadcastable(const Shape& a, const Shape& b) {
  std::size_t na = a.size(), nb = b.size();
  std::size_t n = std::max(na, nb);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t da = i < n - na ? 1 : a[i - (n - na)];
    std::size_t db = i < n - nb ? 1 : b[i - (n - nb)];
    if (da != db && da != 1 && db != 1) return false;
  }
  return true;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  if (!broadcastable(a, b)) {
    throw std::invalid_argument("broadcast_shape: incompatible shapes " + shape_str(a) +
                                " and " + shape_str(b));
  }
  std::size_t na = a.size(), nb = b.size();
  std::size_t n = std::max(na, nb);
  Shape out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t da = i < n - na ? 1 : a[i - (n - na)];
    std::size_t db = i < n - nb ? 1 : b[i - (n - nb)];
    out[i] = std::max(da, db);
  }
  return out;
}

std::vector<std::size_t> bcast_strides(const Shape& in, const Shape& out) {
  if (in.size() > out.size())
    throw std::invalid_argument("bcast_strides: input rank exceeds output rank");
  std::size_t off = out.size() - in.size();
  // Row-major strides of `in`.
  std::vector<std::size_t> in_strides(in.size());
  std::size_t acc = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    in_strides[i] = acc;
    acc *= in[i];
  }
  std::vector<std::size_t> s(out.size(), 0);
  for (std::size_t d = 0; d < out.size(); ++d) {
    if (d < off) continue;
    std::size_t j = d - off;
    if (in[j] == 1 && out[d] != 1) {
      s[d] = 0;
    } else if (in[j] == out[d]) {
      s[d] = in_strides[j];
    } else {
      throw std::invalid_argument("bcast_strides: shape " + shape_str(in) +
                                  " not broadcastable to " + shape_str(out));
    }
  }
  return s;
}

void bcast_binary(const Tensor& a, const Tensor& b, Tensor& out,
                  const std::function<double(double, double)>& f) {
  const Shape& os = out.shape();
  auto sa = bcast_strides(a.shape(), os);
  auto sb = bcast_strides(b.shape(), os);
  std::vector<std::size_t> idx(os.size(), 0);
  std::size_t ia = 0, ib = 0;
  const std::size_t n = out.numel();
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = f(a[ia], b[ib]);
    for (std::size_t d = os.size(); d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < os[d]) break;
      idx[d] = 0;
      ia -= sa[d] * os[d];
      ib -= sb[d] * os[d];
    }
  }
}

Tensor reduce_to_shape(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor r = Tensor::zeros(target);
  const Shape& gs = g.shape();
  auto st = bcast_strides(target, gs);
  std::vector<std::size_t> idx(gs.size(), 0);
  std::size_t it = 0;
  const std::size_t n = g.numel();
  for (std::size_t k = 0; k < n; ++k) {
    r[it] += g[k];
    for (std::size_t d = gs.size(); d-- > 0;) {
      ++idx[d];
      it += st[d];
      if (idx[d] < gs[d]) break;
      idx[d] = 0;
      it -= st[d] * gs[d];
    }
  }
  return r;
}

}  // namespace ssmix
