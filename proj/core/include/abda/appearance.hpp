#pragma once

#include <cstdint>

#include "abda/autograd.hpp"
#include "abda/nn.hpp"

namespace abda::appearance {

// Convolutional binary classifier over reflectance maps; output is the
// per-image probability that the input came from the daytime domain.
class Discriminator {
 public:
  explicit Discriminator(int image_channels, std::uint64_t seed = 2);

  ad::Value probability(const ad::Value& reflectance) const;  // scalar in (0,1)

  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

 private:
  nn::ParamSet params_;
  nn::Conv c1_, c2_, c3_;
};

constexpr double kProbFloor = 1e-6;

struct AdversarialLosses {
  // value D maximizes: E[log D(R_d)] + E[log(1 - D(R_n))]
  ad::Value discriminator;
  // non-saturating generator side: -E[log D(R_n)]
  ad::Value generator;
};

// Batched over reflectance maps; gradient isolation (D-only vs night-branch-
// only updates) is the caller's contract.
AdversarialLosses adversarial_losses(const std::vector<ad::Value>& refl_day,
                                     const std::vector<ad::Value>& refl_night,
                                     const Discriminator& disc);

// per-pixel softmax over the displacement channels, temperature 1
ad::Value softmax_dist(const ad::Value& cost_volume);

// KL(softmax(cv_night_refl) || softmax(cv_day_refl)), mean over pixels.
// The daytime side is detached inside: knowledge flows day -> night only.
ad::Value kl_cost_loss(const ad::Value& cv_night_refl,
                       const ad::Value& cv_day_refl);

// ||cv_d - cv_d_r||_1 + ||cv_n - cv_n_r||_1, mean-reduced per pair
ad::Value intra_align_loss(const ad::Value& cv_d, const ad::Value& cv_d_r,
                           const ad::Value& cv_n, const ad::Value& cv_n_r);

// KL(softmax(cv_n - cv_n_r) || softmax(cv_d - cv_d_r)), day residual detached
ad::Value inter_align_loss(const ad::Value& cv_d, const ad::Value& cv_d_r,
                           const ad::Value& cv_n, const ad::Value& cv_n_r);

}  // namespace abda::appearance
