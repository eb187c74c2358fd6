#include "abda/retinex.hpp"

namespace abda::retinex {

namespace ad = abda::ad;

namespace {

// charbonnier |x| for smoothness terms
ad::Value smooth_abs(const ad::Value& x) {
  return ad::pow_const(ad::add_scalar(ad::square(x), 1e-6), 0.5);
}

// horizontal/vertical forward differences via fixed conv kernels
ad::Value spatial_diff(const ad::Value& x, bool horizontal) {
  Tensor w({1, 1, 3, 3});
  if (horizontal) {
    w[4] = -1.0;
    w[5] = 1.0;
  } else {
    w[4] = -1.0;
    w[7] = 1.0;
  }
  return ad::conv2d(x, ad::constant(w), ad::constant(Tensor({1})), 1, 1);
}

ad::Value total_variation(const ad::Value& x) {
  return ad::add(ad::mean(smooth_abs(spatial_diff(x, true))),
                 ad::mean(smooth_abs(spatial_diff(x, false))));
}

}  // namespace

Decomposer::Decomposer(int image_channels, std::uint64_t seed)
    : channels_(image_channels) {
  Rng rng(seed);
  c1_ = nn::make_conv(params_, "c1", image_channels, 8, 3, 1, rng);
  c2_ = nn::make_conv(params_, "c2", 8, 8, 3, 1, rng);
  head_r_ = nn::make_conv(params_, "head_r", 8, image_channels, 3, 1, rng);
  head_l_ = nn::make_conv(params_, "head_l", 8, 1, 3, 1, rng);
}

Decomposer::Heads Decomposer::forward(const ad::Value& image) const {
  auto h = ad::relu(c1_(image));
  h = ad::relu(c2_(h));
  Heads out;
  out.reflectance = ad::sigmoid(head_r_(h));
  out.illumination = ad::add_scalar(ad::softplus(head_l_(h)), kIllumFloor);
  return out;
}

Decomposition Decomposer::decompose(const Image& image) const {
  if (!image.data.all_finite())
    throw std::invalid_argument("decompose: non-finite input");
  if (image.channels() != channels_)
    throw std::invalid_argument("decompose: channel count mismatch");
  Decomposition d;
  if (image.data.max() <= 0.0) {
    // all-black input: R = 0, L = floor
    d.reflectance = Tensor(image.data.shape());
    d.illumination = Tensor({1, image.height(), image.width()}, kIllumFloor);
    return d;
  }
  Heads h = forward(ad::constant(image.data));
  d.reflectance = h.reflectance->val;
  d.illumination = h.illumination->val;
  return d;
}

std::vector<double> Decomposer::train(
    const std::vector<std::pair<Image, Image>>& pairs,
    const TrainOptions& opts) {
  if (pairs.empty())
    throw std::invalid_argument("train_decomposer: empty dataset");
  nn::Adam adam(opts.lr);
  std::vector<double> recon_curve;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    double recon_sum = 0.0;
    for (const auto& [day, night] : pairs) {
      params_.zero_grad();
      auto id = ad::constant(day.data);
      auto in = ad::constant(night.data);
      Heads hd = forward(id);
      Heads hn = forward(in);
      auto recon_d =
          ad::mean(ad::pow_abs(ad::sub(ad::mul(hd.reflectance, hd.illumination), id), 1.0, 0.0));
      auto recon_n =
          ad::mean(ad::pow_abs(ad::sub(ad::mul(hn.reflectance, hn.illumination), in), 1.0, 0.0));
      auto recon = ad::add(recon_d, recon_n);
      auto smooth = ad::add(total_variation(hd.illumination),
                            total_variation(hn.illumination));
      auto consist = ad::mean(
          ad::pow_abs(ad::sub(hd.reflectance, hn.reflectance), 1.0, 0.0));
      auto loss = ad::add(
          ad::add(ad::mul_scalar(recon, opts.w_recon),
                  ad::mul_scalar(smooth, opts.w_smooth)),
          ad::mul_scalar(consist, opts.w_consist));
      ad::backward(loss);
      adam.step(params_);
      recon_sum += recon->val.item();
    }
    recon_curve.push_back(recon_sum / static_cast<double>(pairs.size()));
  }
  return recon_curve;
}

}  // namespace abda::retinex
