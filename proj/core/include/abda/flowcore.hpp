#pragma once

#include <cstdint>

#include "abda/autograd.hpp"
#include "abda/nn.hpp"
#include "abda/types.hpp"

namespace abda::flowcore {

// single correlation scale at 1/4 resolution
constexpr int kStride = 4;
constexpr int kRadius = 4;  // displacement radius d
constexpr int kCostChannels = (2 * kRadius + 1) * (2 * kRadius + 1);
constexpr int kFeatChannels = 32;
constexpr int kEventChannels = 10;  // 5 sub-windows x 2 polarities

// Tiny shared flow estimator: a 3-level strided conv encoder feeding one
// correlation volume, decoded by a soft-argmax over displacement logits.
// The same decoder serves image and event branches; events get their own
// input convs.
class FlowNet {
 public:
  FlowNet(int image_channels, std::uint64_t seed);

  struct Features {
    ad::Value normed;   // unit L2 norm per pixel, correlation input
    ad::Value context;  // pre-normalization features
  };

  Features encode_image(const ad::Value& image) const;
  Features encode_events(const ad::Value& voxel) const;

  // cost (D,h,w) + context (F,h,w) -> full-resolution flow (2,H,W)
  ad::Value decode(const ad::Value& cost, const ad::Value& context) const;

  ad::Value forward(const ad::Value& frame_t, const ad::Value& frame_t1) const;
  ad::Value forward_events(const ad::Value& voxel_t,
                           const ad::Value& voxel_t1) const;

  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

 private:
  Features run_encoder(const nn::Conv& c1, const nn::Conv& c2,
                       const nn::Conv& c3, const ad::Value& x) const;

  nn::ParamSet params_;
  nn::Conv img1_, img2_, img3_;
  nn::Conv ev1_, ev2_, ev3_;
  nn::Conv dec1_, dec2_;
  ad::Value cost_gain_;  // scalar added as gain on the raw cost volume
};

// ---- stateless ops ----

// backward bilinear sampling, clamp-to-border (see ad::bilinear_warp)
Tensor warp(const Tensor& map, const Tensor& flow);

// cv[(dy,dx),y,x] = <f_t[y,x], warp(f_t1, init_flow)[y+dy,x+dx]>, -1 out of range
ad::Value cost_volume(const ad::Value& f_t, const ad::Value& f_t1,
                      const ad::Value* init_flow, int radius);
Tensor cost_volume(const Tensor& f_t, const Tensor& f_t1, int radius);

// forward-backward consistency; 1 = occluded
// ||fw + w(bw,fw)||^2 > a1 (||fw||^2 + ||w(bw,fw)||^2) + a2
Tensor occlusion_mask(const Tensor& flow_fw, const Tensor& flow_bw,
                      double alpha1 = 0.01, double alpha2 = 0.5);

// sparse Lp photometric loss (p=0.4, eps=0.01) over non-occluded pixels
constexpr double kPhotoP = 0.4;
constexpr double kPhotoEps = 0.01;
ad::Value photometric_loss(const Tensor& frame_t, const Tensor& frame_t1,
                           const ad::Value& flow, const Tensor& occlusion);

}  // namespace abda::flowcore
