#include "abda/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "abda/synthdata.hpp"

namespace abda::boundary {

namespace ad = abda::ad;

Tensor image_st_gradient(const Tensor& image, const Tensor& flow) {
  if (image.rank() != 3 || flow.rank() != 3 || flow.dim(0) != 2)
    throw std::invalid_argument("image_st_gradient: bad ranks");
  int H = image.dim(1), W = image.dim(2);
  if (flow.dim(1) != H || flow.dim(2) != W)
    throw std::invalid_argument("image_st_gradient: size mismatch");
  int C = image.dim(0);
  Tensor logi({1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double v = 0.0;
      for (int c = 0; c < C; ++c) v += image.at(c, y, x);
      logi.at(0, y, x) = std::log(v / C + synthdata::kLogEps);
    }
  Tensor out({1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double gx, gy;
      if (x == 0)
        gx = logi.at(0, y, 1) - logi.at(0, y, 0);
      else if (x == W - 1)
        gx = logi.at(0, y, W - 1) - logi.at(0, y, W - 2);
      else
        gx = 0.5 * (logi.at(0, y, x + 1) - logi.at(0, y, x - 1));
      if (y == 0)
        gy = logi.at(0, 1, x) - logi.at(0, 0, x);
      else if (y == H - 1)
        gy = logi.at(0, H - 1, x) - logi.at(0, H - 2, x);
      else
        gy = 0.5 * (logi.at(0, y + 1, x) - logi.at(0, y - 1, x));
      out.at(0, y, x) = -(gx * flow.at(0, y, x) + gy * flow.at(1, y, x));
    }
  return out;
}

Tensor image_st_gradient(const Image& image, const FlowField& flow) {
  return image_st_gradient(image.data, flow.data);
}

Tensor correlation_map(const Tensor& event_gradient,
                       const Tensor& image_gradient, int patch) {
  check_same_shape(event_gradient, image_gradient, "correlation_map");
  if (patch < 1 || patch % 2 == 0)
    throw std::invalid_argument("correlation_map: patch must be odd >= 1");
  int H = event_gradient.dim(1), W = event_gradient.dim(2);
  int r = patch / 2;
  Tensor raw({1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
          double d = event_gradient.at(0, yy, xx) - image_gradient.at(0, yy, xx);
          acc += d * d;
        }
      raw.at(0, y, x) = std::sqrt(acc);
    }
  double lo = raw.min(), hi = raw.max();
  Tensor out({1, H, W});
  if (hi - lo > 1e-12)
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = (raw[i] - lo) / (hi - lo);
  return out;
}

std::pair<std::vector<double>, std::vector<long>> correlation_histogram(
    const Tensor& corr, int bins) {
  if (bins < 2)
    throw std::invalid_argument("correlation_histogram: bins >= 2 required");
  std::vector<double> edges(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i)
    edges[static_cast<std::size_t>(i)] = static_cast<double>(i) / bins;
  std::vector<long> counts(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < corr.size(); ++i) {
    int b = static_cast<int>(corr[i] * bins);
    b = std::min(std::max(b, 0), bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  return {edges, counts};
}

Tensor class_labels(const Tensor& corr, int num_classes) {
  if (num_classes < 2)
    throw std::invalid_argument("class_labels: K >= 2 required");
  std::size_t n = corr.size();
  Tensor labels(corr.shape());
  if (corr.max() - corr.min() < 1e-12) return labels;  // constant map: all 0
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return corr[a] < corr[b];
  });
  for (std::size_t rank = 0; rank < n; ++rank) {
    int k = static_cast<int>((rank * static_cast<std::size_t>(num_classes)) / n);
    labels[order[rank]] = static_cast<double>(k);
  }
  return labels;
}

AttentionNet::AttentionNet(int num_classes, std::uint64_t seed) : k_(num_classes) {
  if (num_classes < 2)
    throw std::invalid_argument("AttentionNet: K >= 2 required");
  Rng rng(seed);
  c1_ = nn::make_conv(params_, "c1", 1, 32, 3, 1, rng);
  c2_ = nn::make_conv(params_, "c2", 32, 32, 1, 1, rng);
  c3_ = nn::make_conv(params_, "c3", 32, num_classes, 1, 1, rng);
}

ad::Value AttentionNet::forward(const ad::Value& corr) const {
  auto h = ad::relu(c1_(corr));
  h = ad::relu(c2_(h));
  return ad::softmax_channels(c3_(h));
}

ad::Value cls_loss(const ad::Value& attention, const Tensor& labels) {
  int K = attention->val.dim(0);
  int H = attention->val.dim(1), W = attention->val.dim(2);
  if (labels.dim(1) != H || labels.dim(2) != W)
    throw std::invalid_argument("cls_loss: label map size mismatch");
  Tensor onehot(attention->val.shape());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double lv = labels.at(0, y, x);
      int k = static_cast<int>(lv);
      if (lv != k || k < 0 || k >= K)
        throw std::invalid_argument("cls_loss: label out of [0,K)");
      onehot.at(k, y, x) = 1.0;
    }
  auto picked = ad::mul(ad::log_floor(attention, kClsProbFloor),
                        ad::constant(onehot));
  return ad::mul_scalar(ad::sum(picked), -1.0 / static_cast<double>(H * W));
}

namespace {
ad::Value l2norm_columns(const ad::Value& m) {
  int C = m->val.dim(0), N = m->val.dim(1);
  auto cube = ad::reshape(m, {C, N, 1});
  return ad::reshape(ad::l2norm_channels(cube), {C, N});
}
}  // namespace

SampleSet sample_features(const ad::Value& cv_night, const ad::Value& cv_event,
                          const Tensor& attention0, const Tensor& labels,
                          int n_samples, double tau, Rng& rng) {
  if (tau <= 0.0) throw std::invalid_argument("sample_features: tau > 0");
  if (n_samples < 1) throw std::invalid_argument("sample_features: N >= 1");
  check_same_shape(cv_night->val, cv_event->val, "sample_features");
  int H = cv_night->val.dim(1), W = cv_night->val.dim(2);
  if (labels.dim(1) != H || labels.dim(2) != W || attention0.dim(1) != H ||
      attention0.dim(2) != W)
    throw std::invalid_argument("sample_features: label/attention size mismatch");

  std::vector<std::pair<int, int>> normal, degraded;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      (labels.at(0, y, x) == 0.0 ? normal : degraded).emplace_back(y, x);
  if (static_cast<int>(normal.size()) < n_samples)
    throw DegenerateInputError(
        "sample_features: fewer than N pixels in class 0 (normal motion)");
  if (static_cast<int>(degraded.size()) < n_samples)
    throw DegenerateInputError(
        "sample_features: fewer than N pixels outside class 0 (degraded motion)");
  rng.shuffle(normal);
  rng.shuffle(degraded);
  normal.resize(static_cast<std::size_t>(n_samples));
  degraded.resize(static_cast<std::size_t>(n_samples));

  Tensor w_pos({1, H, W}), w_neg({1, H, W});
  for (std::size_t i = 0; i < w_pos.size(); ++i) {
    w_pos[i] = attention0[i];
    w_neg[i] = 1.0 - attention0[i];
  }
  auto night_pos = ad::mul(cv_night, ad::constant(w_pos));
  auto night_neg = ad::mul(cv_night, ad::constant(w_neg));
  auto event_pos = ad::mul(cv_event, ad::constant(w_pos));

  SampleSet s;
  s.tau = tau;
  s.positives_night = l2norm_columns(ad::gather_pixels(night_pos, normal));
  s.positives_event = l2norm_columns(ad::gather_pixels(event_pos, normal));
  s.negatives_night = l2norm_columns(ad::gather_pixels(night_neg, degraded));
  return s;
}

ad::Value contrastive_loss(const SampleSet& samples) {
  if (samples.tau <= 0.0)
    throw std::invalid_argument("contrastive_loss: tau > 0 required");
  double inv_tau = 1.0 / samples.tau;
  // s_pe[j,k] = p_j . e_k ; s_np[i,j] = n_i . p_j
  auto s_pe = ad::mul_scalar(
      ad::pairwise_dot(samples.positives_night, samples.positives_event),
      inv_tau);
  auto s_np = ad::mul_scalar(
      ad::pairwise_dot(samples.negatives_night, samples.positives_night),
      inv_tau);
  int n = s_np->val.dim(0);
  // q_j = sum_i exp(s_np[i,j]); column sums -> (N,1) for row-broadcast
  std::vector<double> ones(static_cast<std::size_t>(n), 1.0);
  auto e_np = ad::exp(s_np);
  auto q = ad::reshape(
      ad::weighted_channel_sum(ad::reshape(e_np, {n, s_np->val.dim(1), 1}), ones),
      {s_np->val.dim(1), 1});
  auto denom = ad::add(ad::exp(s_pe), q);
  auto log_frac = ad::sub(s_pe, ad::log(denom));
  return ad::neg(ad::mean(log_frac));
}

Tensor valid_mask(const Tensor& attention, double p0) {
  if (!(p0 > 0.0 && p0 < 1.0))
    throw std::invalid_argument("valid_mask: p0 in (0,1) required");
  int K = attention.dim(0), H = attention.dim(1), W = attention.dim(2);
  Tensor v({1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double a0 = attention.at(0, y, x);
      bool is_argmax = true;
      for (int k = 1; k < K && is_argmax; ++k)
        is_argmax = attention.at(k, y, x) <= a0;
      v.at(0, y, x) = (is_argmax && a0 >= p0) ? 1.0 : 0.0;
    }
  return v;
}

ad::Value motion_consistency_loss(const ad::Value& flow_night,
                                  const Tensor& flow_event,
                                  const Tensor& valid) {
  check_same_shape(flow_night->val, flow_event, "motion_consistency_loss");
  if (valid.dim(1) != flow_event.dim(1) || valid.dim(2) != flow_event.dim(2))
    throw std::invalid_argument("motion_consistency_loss: mask size mismatch");
  double vsum = valid.sum();
  if (vsum <= 0.0)
    throw DegenerateInputError("motion_consistency_loss: empty valid mask");
  auto diff = ad::pow_abs(ad::sub(flow_night, ad::constant(flow_event)), 1.0, 0.0);
  auto masked = ad::mul(diff, ad::constant(valid));
  return ad::mul_scalar(ad::sum(masked), 1.0 / vsum);
}

Tensor event_voxel(const EventStream& events, double t0, double t1,
                   int sub_windows) {
  if (t0 >= t1) throw std::invalid_argument("event_voxel: t0 < t1 required");
  if (sub_windows < 1) throw std::invalid_argument("event_voxel: sub_windows");
  Tensor voxel({2 * sub_windows, events.height, events.width});
  double span = t1 - t0;
  for (const Event& e : events.events) {
    if (e.t < t0 || e.t >= t1) continue;
    int w = static_cast<int>((e.t - t0) / span * sub_windows);
    w = std::min(w, sub_windows - 1);
    int ch = 2 * w + (e.p > 0 ? 0 : 1);
    voxel.at(ch, e.y, e.x) += 1.0;
  }
  return voxel;
}

namespace {
// re-bin (2,H,W) polarity slices into the encoder's fixed channel layout
Tensor stack_slices(const std::vector<Tensor>& slices, std::size_t begin,
                    std::size_t end) {
  int H = slices[begin].dim(1), W = slices[begin].dim(2);
  Tensor voxel({2 * kEventSubWindows, H, W});
  std::size_t count = end - begin;
  for (std::size_t i = 0; i < count; ++i) {
    const Tensor& s = slices[begin + i];
    int group = static_cast<int>(i * static_cast<std::size_t>(kEventSubWindows) / count);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        voxel.at(2 * group, y, x) += s.at(0, y, x);
        voxel.at(2 * group + 1, y, x) += s.at(1, y, x);
      }
  }
  return voxel;
}
}  // namespace

ad::Value event_flow_forward_ad(const flowcore::FlowNet& net,
                                const std::vector<Tensor>& slices) {
  if (slices.size() < 2)
    throw std::invalid_argument("event_flow_forward: need >= 2 slices");
  for (const Tensor& s : slices)
    if (s.rank() != 3 || s.dim(0) != 2)
      throw std::invalid_argument("event_flow_forward: slices must be (2,H,W)");
  std::size_t half = slices.size() / 2;
  Tensor va = stack_slices(slices, 0, half);
  Tensor vb = stack_slices(slices, half, slices.size());
  return net.forward_events(ad::constant(va), ad::constant(vb));
}

FlowField event_flow_forward(const flowcore::FlowNet& net,
                             const std::vector<Tensor>& slices) {
  return FlowField(event_flow_forward_ad(net, slices)->val);
}

Tensor downsample_nearest(const Tensor& map, int factor) {
  int C = map.dim(0), H = map.dim(1), W = map.dim(2);
  Tensor out({C, H / factor, W / factor});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H / factor; ++y)
      for (int x = 0; x < W / factor; ++x)
        out.at(c, y, x) = map.at(c, y * factor, x * factor);
  return out;
}

}  // namespace abda::boundary
