#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

namespace ssmix {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

// Dense row-major double tensor. All model math runs in double so that
// finite-difference gradient checks are meaningful.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, double fill);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::initializer_list<std::size_t> idx);
  double at(std::initializer_list<std::size_t> idx) const;

  Tensor reshaped(Shape s) const;
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  void fill(double v);

  double min() const;
  double max() const;
  double sum() const;
  double mean() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Right-aligned broadcasting rules (a dim of size 1 stretches to match).
bool broadcastable(const Shape& a, const Shape& b);
Shape broadcast_shape(const Shape& a, const Shape& b);

// Strides of `in` aligned to the dims of `out`; broadcast dims get stride 0.
// Requires in.ndim() <= out.ndim() and compatibility.
std::vector<std::size_t> bcast_strides(const Shape& in, const Shape& out);

// out[k] = f(a[..], b[..]) with both inputs broadcast to out's shape.
// `out` must already have the broadcast shape.
void bcast_binary(const Tensor& a, const Tensor& b, Tensor& out,
                  const std::function<double(double, double)>& f);

// Sum g over the dims along which `target` was broadcast, producing a tensor
// of shape `target`. Inverse companion of broadcasting for gradient flow.
Tensor reduce_to_shape(const Tensor& g, const Shape& target);

}  // namespace ssmix
