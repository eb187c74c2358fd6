#include "abda/nn.hpp"

#include <cmath>

namespace abda::nn {

Tensor conv_weight_init(Rng& rng, int cout, int cin, int k) {
  Tensor w({cout, cin, k, k});
  double std = std::sqrt(2.0 / (cin * k * k));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, std);
  return w;
}

Conv make_conv(ParamSet& ps, const std::string& prefix, int cin, int cout,
               int k, int stride, Rng& rng) {
  Conv c;
  c.w = ps.add(prefix + ".w", conv_weight_init(rng, cout, cin, k));
  c.b = ps.add(prefix + ".b", Tensor({cout}));
  c.stride = stride;
  c.pad = k / 2;
  return c;
}

void Adam::step(ParamSet& ps) {
  for (auto& [name, v] : ps.items()) {
    if (v->grad.size() != v->val.size()) continue;  // no grad this step
    State& st = state_[name];
    if (st.m.size() != v->val.size()) {
      st.m = Tensor(v->val.shape());
      st.v = Tensor(v->val.shape());
      st.t = 0;
    }
    ++st.t;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(st.t));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(st.t));
    for (std::size_t i = 0; i < v->val.size(); ++i) {
      double g = v->grad[i];
      st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g;
      st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g * g;
      double mhat = st.m[i] / bc1;
      double vhat = st.v[i] / bc2;
      v->val[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace abda::nn
