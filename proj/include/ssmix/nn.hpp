#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ssmix/rng.hpp"
#include "ssmix/tape.hpp"
#include "ssmix/tensor.hpp"

namespace ssmix::nn {

// Optimiser parameter groups: the classification path and the unmixing path
// train with separate learning rates.
inline constexpr int kGroupClassification = 0;
inline constexpr int kGroupUnmixing = 1;
inline constexpr int kNumGroups = 2;

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
  int group = kGroupClassification;

  void zero_grad() { grad.fill(0.0); }
};

// Owns parameters in stable registration order (checkpoint and optimiser
// state are keyed by this order and by name).
class ParamStore {
 public:
  Param& add(std::string name, Tensor init, int group);
  Param* find(std::string_view name);
  const Param* find(std::string_view name) const;
  const std::vector<std::unique_ptr<Param>>& items() const { return items_; }
  std::size_t count() const { return items_.size(); }
  std::size_t scalar_count() const;
  void zero_grads();

 private:
  std::vector<std::unique_ptr<Param>> items_;
};

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// y = W x + b over column-vector features: x is [in, N], y is [out, N].
// Acts as a 1x1 convolution when columns are the pixels of an image.
struct Linear {
  Param* w = nullptr;  // [out, in]
  Param* b = nullptr;  // [out, 1]
  Var operator()(Tape& t, Var x) const;
};
Linear make_linear(ParamStore& ps, const std::string& name, std::size_t in,
                   std::size_t out, int group, Rng& rng);

struct BatchNorm {
  Param* gamma = nullptr;  // [D, 1]
  Param* beta = nullptr;   // [D, 1]
  double eps = 1e-5;
  Var operator()(Tape& t, Var x) const;
};
BatchNorm make_batchnorm(ParamStore& ps, const std::string& name, std::size_t dim,
                         int group);

// Adam with per-group learning rates; moments keyed by registration order.
class Adam {
 public:
  explicit Adam(ParamStore& ps, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(const std::vector<double>& group_lrs);
  std::size_t steps_taken() const { return step_; }

 private:
  struct Slot {
    Tensor m, v;
  };
  ParamStore* ps_;
  std::vector<Slot> slots_;
  std::size_t step_ = 0;
  double beta1_, beta2_, eps_;
};

}  // namespace ssmix::nn
