#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "abda/autograd.hpp"
#include "abda/rng.hpp"

namespace abda::nn {

// Named trainable leaves of one network. Leaves persist across steps; each
// forward pass builds a fresh op graph over them.
class ParamSet {
 public:
  ad::Value add(const std::string& name, Tensor init) {
    auto v = ad::leaf(std::move(init), true);
    items_.emplace_back(name, v);
    return v;
  }

  void zero_grad() {
    for (auto& [n, v] : items_) v->zero_grad();
  }

  void set_requires_grad(bool rg) {
    for (auto& [n, v] : items_) v->requires_grad = rg;
  }

  double grad_norm() const {
    double s = 0.0;
    for (const auto& [n, v] : items_)
      if (v->grad.size() == v->val.size())
        for (std::size_t i = 0; i < v->grad.size(); ++i)
          s += v->grad[i] * v->grad[i];
    return std::sqrt(s);
  }

  std::vector<std::pair<std::string, ad::Value>>& items() { return items_; }
  const std::vector<std::pair<std::string, ad::Value>>& items() const {
    return items_;
  }

  ad::Value find(const std::string& name) const {
    for (const auto& [n, v] : items_)
      if (n == name) return v;
    throw std::invalid_argument("ParamSet: unknown parameter " + name);
  }

 private:
  std::vector<std::pair<std::string, ad::Value>> items_;
};

// He-normal weight init
Tensor conv_weight_init(Rng& rng, int cout, int cin, int k);

struct Conv {
  ad::Value w, b;
  int stride = 1, pad = 1;

  ad::Value operator()(const ad::Value& x) const {
    return ad::conv2d(x, w, b, stride, pad);
  }
};

Conv make_conv(ParamSet& ps, const std::string& prefix, int cin, int cout,
               int k, int stride, Rng& rng);

// Adam with bias correction; state keyed by parameter name.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamSet& ps);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  struct State {
    Tensor m, v;
    long t = 0;
  };
  double lr_, beta1_, beta2_, eps_;
  std::map<std::string, State> state_;
};

}  // namespace abda::nn
