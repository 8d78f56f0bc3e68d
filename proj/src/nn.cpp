#include "ssmix/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ssmix::nn {

Param& ParamStore::add(std::string name, Tensor init, int group) {
  if (find(name) != nullptr)
    throw std::invalid_argument("ParamStore: duplicate parameter name " + name);
  auto p = std::make_unique<Param>();
  p->name = std::move(name);
  p->grad = Tensor::zeros(init.shape());
  p->value = std::move(init);
  p->group = group;
  items_.push_back(std::move(p));
  return *items_.back();
}

Param* ParamStore::find(std::string_view name) {
  for (auto& p : items_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Param* ParamStore::find(std::string_view name) const {
  for (auto& p : items_)
    if (p->name == name) return p.get();
  return nullptr;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (auto& p : items_) n += p->value.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& p : items_) p->zero_grad();
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

Var Linear::operator()(Tape& t, Var x) const {
  Var wv = t.param(*w);
  Var bv = t.param(*b);
  return add(matmul(wv, x), bv);
}

Linear make_linear(ParamStore& ps, const std::string& name, std::size_t in,
                   std::size_t out, int group, Rng& rng) {
  Linear l;
  l.w = &ps.add(name + ".w", glorot_uniform(Shape{out, in}, in, out, rng), group);
  l.b = &ps.add(name + ".b", Tensor::zeros(Shape{out, 1}), group);
  return l;
}

Var BatchNorm::operator()(Tape& t, Var x) const {
  Var g = t.param(*gamma);
  Var b = t.param(*beta);
  return batchnorm_rows(x, g, b, eps);
}

BatchNorm make_batchnorm(ParamStore& ps, const std::string& name, std::size_t dim,
                         int group) {
  BatchNorm bn;
  bn.gamma = &ps.add(name + ".gamma", Tensor(Shape{dim, 1}, 1.0), group);
  bn.beta = &ps.add(name + ".beta", Tensor::zeros(Shape{dim, 1}), group);
  return bn;
}

Adam::Adam(ParamStore& ps, double beta1, double beta2, double eps)
    : ps_(&ps), beta1_(beta1), beta2_(beta2), eps_(eps) {
  slots_.reserve(ps.items().size());
  for (auto& p : ps.items()) {
    Slot s;
    s.m = Tensor::zeros(p->value.shape());
    s.v = Tensor::zeros(p->value.shape());
    slots_.push_back(std::move(s));
  }
}

void Adam::step(const std::vector<double>& group_lrs) {
  if (slots_.size() != ps_->items().size())
    throw std::logic_error("Adam: parameter store changed since construction");
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(beta1_, t);
  const double bc2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    Param& p = *ps_->items()[i];
    if (!p.trainable) continue;
    if (p.group < 0 || static_cast<std::size_t>(p.group) >= group_lrs.size())
      throw std::logic_error("Adam: no learning rate for group of " + p.name);
    const double lr = group_lrs[static_cast<std::size_t>(p.group)];
    Slot& s = slots_[i];
    for (std::size_t k = 0; k < p.value.numel(); ++k) {
      const double g = p.grad[k];
      s.m[k] = beta1_ * s.m[k] + (1.0 - beta1_) * g;
      s.v[k] = beta2_ * s.v[k] + (1.0 - beta2_) * g * g;
      const double mhat = s.m[k] / bc1;
      const double vhat = s.v[k] / bc2;
      p.value[k] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace ssmix::nn
