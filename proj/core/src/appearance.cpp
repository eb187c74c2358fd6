#include "abda/appearance.hpp"

#include "abda/types.hpp"

namespace abda::appearance {

namespace ad = abda::ad;

Discriminator::Discriminator(int image_channels, std::uint64_t seed) {
  Rng rng(seed);
  c1_ = nn::make_conv(params_, "c1", image_channels, 8, 3, 2, rng);
  c2_ = nn::make_conv(params_, "c2", 8, 16, 3, 2, rng);
  c3_ = nn::make_conv(params_, "c3", 16, 1, 3, 2, rng);
}

ad::Value Discriminator::probability(const ad::Value& reflectance) const {
  auto h = ad::leaky_relu(c1_(reflectance));
  h = ad::leaky_relu(c2_(h));
  return ad::sigmoid(ad::mean(c3_(h)));
}

namespace {
ad::Value clamped_log(const ad::Value& p) { return ad::log_floor(p, kProbFloor); }
}  // namespace

AdversarialLosses adversarial_losses(const std::vector<ad::Value>& refl_day,
                                     const std::vector<ad::Value>& refl_night,
                                     const Discriminator& disc) {
  if (refl_day.empty() || refl_night.empty())
    throw std::invalid_argument("adversarial_losses: empty batch");
  ad::Value d_term = ad::constant(0.0);
  for (const auto& r : refl_day)
    d_term = ad::add(d_term, clamped_log(disc.probability(r)));
  d_term = ad::mul_scalar(d_term, 1.0 / static_cast<double>(refl_day.size()));

  ad::Value n_term = ad::constant(0.0);
  ad::Value g_term = ad::constant(0.0);
  for (const auto& r : refl_night) {
    auto p = disc.probability(r);
    n_term = ad::add(n_term, clamped_log(ad::sub(ad::constant(1.0), p)));
    g_term = ad::add(g_term, clamped_log(p));
  }
  double inv_n = 1.0 / static_cast<double>(refl_night.size());
  AdversarialLosses out;
  out.discriminator = ad::add(d_term, ad::mul_scalar(n_term, inv_n));
  out.generator = ad::mul_scalar(g_term, -inv_n);
  return out;
}

ad::Value softmax_dist(const ad::Value& cost_volume) {
  return ad::softmax_channels(cost_volume);
}

namespace {
// mean-over-pixels KL between per-pixel channel distributions; q is a
// constant target
ad::Value kl_mean(const ad::Value& p_logits, const ad::Value& q_logits) {
  check_same_shape(p_logits->val, q_logits->val, "kl loss");
  auto p = ad::softmax_channels(p_logits);
  auto q = ad::softmax_channels(ad::detach(q_logits));
  auto ratio = ad::sub(ad::log_floor(p, 1e-300), ad::log_floor(q, 1e-300));
  auto kl = ad::mul(p, ratio);  // summed over channels below
  int pixels = p->val.dim(1) * p->val.dim(2);
  return ad::mul_scalar(ad::sum(kl), 1.0 / static_cast<double>(pixels));
}
}  // namespace

ad::Value kl_cost_loss(const ad::Value& cv_night_refl,
                       const ad::Value& cv_day_refl) {
  return kl_mean(cv_night_refl, cv_day_refl);
}

ad::Value intra_align_loss(const ad::Value& cv_d, const ad::Value& cv_d_r,
                           const ad::Value& cv_n, const ad::Value& cv_n_r) {
  check_same_shape(cv_d->val, cv_d_r->val, "intra_align_loss");
  check_same_shape(cv_n->val, cv_n_r->val, "intra_align_loss");
  auto day = ad::mean(ad::pow_abs(ad::sub(cv_d, cv_d_r), 1.0, 0.0));
  auto night = ad::mean(ad::pow_abs(ad::sub(cv_n, cv_n_r), 1.0, 0.0));
  return ad::add(day, night);
}

ad::Value inter_align_loss(const ad::Value& cv_d, const ad::Value& cv_d_r,
                           const ad::Value& cv_n, const ad::Value& cv_n_r) {
  check_same_shape(cv_d->val, cv_d_r->val, "inter_align_loss");
  check_same_shape(cv_n->val, cv_n_r->val, "inter_align_loss");
  auto res_n = ad::sub(cv_n, cv_n_r);
  auto res_d = ad::sub(ad::detach(cv_d), ad::detach(cv_d_r));
  return kl_mean(res_n, res_d);
}

}  // namespace abda::appearance
