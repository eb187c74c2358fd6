#include "abda/flowcore.hpp"

#include <cmath>

namespace abda::flowcore {

namespace ad = abda::ad;

FlowNet::FlowNet(int image_channels, std::uint64_t seed) {
  Rng rng(seed);
  img1_ = nn::make_conv(params_, "img1", image_channels, 16, 3, 2, rng);
  img2_ = nn::make_conv(params_, "img2", 16, kFeatChannels, 3, 2, rng);
  img3_ = nn::make_conv(params_, "img3", kFeatChannels, kFeatChannels, 3, 1, rng);
  ev1_ = nn::make_conv(params_, "ev1", kEventChannels, 16, 3, 2, rng);
  ev2_ = nn::make_conv(params_, "ev2", 16, kFeatChannels, 3, 2, rng);
  ev3_ = nn::make_conv(params_, "ev3", kFeatChannels, kFeatChannels, 3, 1, rng);
  dec1_ = nn::make_conv(params_, "dec1", kCostChannels + kFeatChannels, 16, 3, 1, rng);
  dec2_ = nn::make_conv(params_, "dec2", 16, kCostChannels, 3, 1, rng);
  cost_gain_ = params_.add("cost_gain", Tensor({1, 1, 1}, 1.0));
}

FlowNet::Features FlowNet::run_encoder(const nn::Conv& c1, const nn::Conv& c2,
                                       const nn::Conv& c3,
                                       const ad::Value& x) const {
  auto h1 = ad::leaky_relu(c1(x));
  auto h2 = ad::leaky_relu(c2(h1));
  auto h3 = c3(h2);
  Features f;
  f.context = h3;
  f.normed = ad::l2norm_channels(h3);
  return f;
}

FlowNet::Features FlowNet::encode_image(const ad::Value& image) const {
  return run_encoder(img1_, img2_, img3_, image);
}

FlowNet::Features FlowNet::encode_events(const ad::Value& voxel) const {
  return run_encoder(ev1_, ev2_, ev3_, voxel);
}

ad::Value FlowNet::decode(const ad::Value& cost, const ad::Value& context) const {
  auto h = ad::leaky_relu(dec1_(ad::concat_channels(cost, context)));
  auto logits = dec2_(h);
  // the raw correlation is a strong prior on the displacement distribution
  logits = ad::add(logits, ad::mul(cost_gain_, cost));
  auto p = ad::softmax_channels(logits);
  int side = 2 * kRadius + 1;
  std::vector<double> wx(static_cast<std::size_t>(kCostChannels));
  std::vector<double> wy(static_cast<std::size_t>(kCostChannels));
  for (int dy = -kRadius; dy <= kRadius; ++dy)
    for (int dx = -kRadius; dx <= kRadius; ++dx) {
      int ch = (dy + kRadius) * side + (dx + kRadius);
      wx[static_cast<std::size_t>(ch)] = dx;
      wy[static_cast<std::size_t>(ch)] = dy;
    }
  auto u = ad::weighted_channel_sum(p, wx);
  auto v = ad::weighted_channel_sum(p, wy);
  auto flow_q = ad::concat_channels(u, v);
  return ad::mul_scalar(ad::upsample_bilinear(flow_q, kStride),
                        static_cast<double>(kStride));
}

ad::Value FlowNet::forward(const ad::Value& frame_t,
                           const ad::Value& frame_t1) const {
  Features ft = encode_image(frame_t);
  Features ft1 = encode_image(frame_t1);
  auto cv = cost_volume(ft.normed, ft1.normed, nullptr, kRadius);
  return decode(cv, ft.context);
}

ad::Value FlowNet::forward_events(const ad::Value& voxel_t,
                                  const ad::Value& voxel_t1) const {
  Features ft = encode_events(voxel_t);
  Features ft1 = encode_events(voxel_t1);
  auto cv = cost_volume(ft.normed, ft1.normed, nullptr, kRadius);
  return decode(cv, ft.context);
}

Tensor warp(const Tensor& map, const Tensor& flow) {
  return ad::bilinear_warp(ad::constant(map), ad::constant(flow))->val;
}

ad::Value cost_volume(const ad::Value& f_t, const ad::Value& f_t1,
                      const ad::Value* init_flow, int radius) {
  ad::Value g = f_t1;
  if (init_flow) {
    bool zero = true;
    for (std::size_t i = 0; i < (*init_flow)->val.size() && zero; ++i)
      zero = (*init_flow)->val[i] == 0.0;
    if (!zero) g = ad::bilinear_warp(f_t1, *init_flow);
  }
  return ad::cost_volume(f_t, g, radius);
}

Tensor cost_volume(const Tensor& f_t, const Tensor& f_t1, int radius) {
  return ad::cost_volume(ad::constant(f_t), ad::constant(f_t1), radius)->val;
}

Tensor occlusion_mask(const Tensor& flow_fw, const Tensor& flow_bw,
                      double alpha1, double alpha2) {
  check_same_shape(flow_fw, flow_bw, "occlusion_mask");
  Tensor bw_warped = warp(flow_bw, flow_fw);
  int H = flow_fw.dim(1), W = flow_fw.dim(2);
  Tensor mask({1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double fu = flow_fw.at(0, y, x), fv = flow_fw.at(1, y, x);
      double bu = bw_warped.at(0, y, x), bv = bw_warped.at(1, y, x);
      double du = fu + bu, dv = fv + bv;
      double lhs = du * du + dv * dv;
      double rhs = alpha1 * (fu * fu + fv * fv + bu * bu + bv * bv) + alpha2;
      mask.at(0, y, x) = lhs > rhs ? 1.0 : 0.0;
    }
  return mask;
}

ad::Value photometric_loss(const Tensor& frame_t, const Tensor& frame_t1,
                           const ad::Value& flow, const Tensor& occlusion) {
  if (frame_t.dim(1) != occlusion.dim(1) || frame_t.dim(2) != occlusion.dim(2))
    throw std::invalid_argument("photometric_loss: occlusion shape mismatch");
  double valid = 0.0;
  for (std::size_t i = 0; i < occlusion.size(); ++i)
    valid += 1.0 - occlusion[i];
  if (valid <= 0.0)
    throw DegenerateInputError("photometric_loss: fully occluded mask");

  Tensor keep(occlusion.shape());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = 1.0 - occlusion[i];

  auto warped = ad::bilinear_warp(ad::constant(frame_t1), flow);
  auto res = ad::sub(ad::constant(frame_t), warped);
  auto psi = ad::pow_abs(res, kPhotoP, kPhotoEps);
  auto masked = ad::mul(psi, ad::constant(keep));  // keep broadcasts over channels
  double denom = valid * frame_t.dim(0);
  return ad::mul_scalar(ad::sum(masked), 1.0 / denom);
}

}  // namespace abda::flowcore
