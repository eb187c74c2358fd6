#pragma once

#include <cstdint>
#include <vector>

#include "abda/autograd.hpp"
#include "abda/flowcore.hpp"
#include "abda/nn.hpp"
#include "abda/rng.hpp"
#include "abda/types.hpp"

namespace abda::boundary {

// -(dI/dx u + dI/dy v) on log(I + 1e-3); central differences inside,
// one-sided at borders. The image-side spatiotemporal gradient.
Tensor image_st_gradient(const Image& image, const FlowField& flow);
Tensor image_st_gradient(const Tensor& image, const Tensor& flow);

// Per-pixel Euclidean distance between the two spatiotemporal gradient maps
// over a patch window, min-max normalized to [0,1] (all zeros if the raw
// distances are constant). Larger value = larger discrepancy.
Tensor correlation_map(const Tensor& event_gradient,
                       const Tensor& image_gradient, int patch = 3);

// uniform bins on [0,1]; counts sum to the pixel count
std::pair<std::vector<double>, std::vector<long>> correlation_histogram(
    const Tensor& corr, int bins);

// Quantile binning of the correlation map into K classes, class 0 = lowest
// discrepancy. Constant maps degenerate to all-zero labels.
Tensor class_labels(const Tensor& corr, int num_classes);

// correlation map -> per-pixel K-class attention via a small per-pixel MLP
// (3x3 input conv, then 1x1 layers) and softmax
class AttentionNet {
 public:
  AttentionNet(int num_classes, std::uint64_t seed = 3);

  ad::Value forward(const ad::Value& corr) const;  // (K,H,W), channels sum to 1

  int num_classes() const { return k_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

 private:
  int k_;
  nn::ParamSet params_;
  nn::Conv c1_, c2_, c3_;
};

constexpr double kClsProbFloor = 1e-8;

// mean over pixels of -log A[y]
ad::Value cls_loss(const ad::Value& attention, const Tensor& labels);

struct SampleSet {
  ad::Value positives_event;   // (C,N), unit columns
  ad::Value positives_night;   // (C,N)
  ad::Value negatives_night;   // (C,N)
  double tau = 0.07;
};

// Positives come from label-0 pixels (weighted by the class-0 attention),
// negatives from label!=0 pixels (weighted by 1 - A0); sampling is seeded
// and without replacement.
SampleSet sample_features(const ad::Value& cv_night, const ad::Value& cv_event,
                          const Tensor& attention0, const Tensor& labels,
                          int n_samples, double tau, Rng& rng);

// InfoNCE over the sample set: night positives pulled to event anchors,
// pushed from night negatives.
ad::Value contrastive_loss(const SampleSet& samples);

// V = (argmax_k A == 0) && (A0 >= p0)
Tensor valid_mask(const Tensor& attention, double p0);

// sum ||F_n - F_ev||_1 . V / sum V  (L1 over both flow channels per pixel)
ad::Value motion_consistency_loss(const ad::Value& flow_night,
                                  const Tensor& flow_event,
                                  const Tensor& valid);

// events -> (2 * kEventSubWindows, H, W) polarity count maps over equal
// sub-windows of [t0, t1)
constexpr int kEventSubWindows = 5;
Tensor event_voxel(const EventStream& events, double t0, double t1,
                   int sub_windows = kEventSubWindows);

// Event-only flow: the slice list is split in half along time, each half
// re-binned to the encoder's sub-window count. Slices are (2,H,W) polarity
// count maps.
FlowField event_flow_forward(const flowcore::FlowNet& net,
                             const std::vector<Tensor>& slices);
// differentiable variant used in training
ad::Value event_flow_forward_ad(const flowcore::FlowNet& net,
                                const std::vector<Tensor>& slices);

// nearest (top-left) downsampling used to bring labels/attention to the
// cost-volume scale
Tensor downsample_nearest(const Tensor& map, int factor);

}  // namespace abda::boundary
