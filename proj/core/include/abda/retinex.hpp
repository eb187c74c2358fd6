#pragma once

#include <cstdint>
#include <vector>

#include "abda/autograd.hpp"
#include "abda/nn.hpp"
#include "abda/types.hpp"

namespace abda::retinex {

constexpr double kIllumFloor = 1e-3;

struct Decomposition {
  Tensor reflectance;   // (C,H,W) in [0,1]
  Tensor illumination;  // (1,H,W) >= kIllumFloor
};

struct TrainOptions {
  int epochs = 100;
  double lr = 1e-3;
  double w_recon = 1.0;
  double w_smooth = 0.1;
  double w_consist = 0.5;
  std::uint64_t seed = 0;
};

// Small conv encoder with reflectance (sigmoid) and illumination
// (softplus + floor) heads. Stands in for a full low-light decomposition
// network at test scale.
class Decomposer {
 public:
  explicit Decomposer(int image_channels, std::uint64_t seed = 1);

  Decomposition decompose(const Image& image) const;

  // differentiable path used during training and for adversarial coupling
  struct Heads {
    ad::Value reflectance;
    ad::Value illumination;
  };
  Heads forward(const ad::Value& image) const;

  // day/night pairs share their reflectance; returns per-epoch mean
  // reconstruction L1
  std::vector<double> train(const std::vector<std::pair<Image, Image>>& pairs,
                            const TrainOptions& opts);

  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  int image_channels() const { return channels_; }

 private:
  int channels_;
  nn::ParamSet params_;
  nn::Conv c1_, c2_, head_r_, head_l_;
};

}  // namespace abda::retinex
