#include <doctest.h>

#include <cmath>

#include "abda/flowcore.hpp"
#include "abda/nn.hpp"
#include "abda/rng.hpp"
#include "abda/synthdata.hpp"

using namespace abda;
using namespace abda::flowcore;

namespace {
Tensor rnd(std::vector<int> shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}
}  // namespace

TEST_CASE("encoder features are unit-norm and deterministic") {
  FlowNet a(1, 7), b(1, 7);
  Rng rng(1);
  Tensor img = rnd({1, 32, 32}, rng, 0, 1);
  auto fa = a.encode_image(ad::constant(img));
  auto fb = b.encode_image(ad::constant(img));
  const Tensor& n = fa.normed->val;
  for (int y = 0; y < n.dim(1); ++y)
    for (int x = 0; x < n.dim(2); ++x) {
      double s = 0;
      for (int c = 0; c < n.dim(0); ++c) s += n.at(c, y, x) * n.at(c, y, x);
      CHECK(std::abs(std::sqrt(s) - 1.0) <= 1e-5);
    }
  for (std::size_t i = 0; i < n.size(); ++i) CHECK(n[i] == fb.normed->val[i]);
}

TEST_CASE("warp identity, integer shift, size mismatch") {
  Rng rng(2);
  Tensor img = rnd({1, 8, 8}, rng, 0, 1);
  Tensor zero({2, 8, 8});
  Tensor out = warp(img, zero);
  for (std::size_t i = 0; i < img.size(); ++i)
    CHECK(std::abs(out[i] - img[i]) <= 1e-7);

  // backward sampling with u=+1 pulls the value one column to the right
  Tensor shift({2, 8, 8});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) shift.at(0, y, x) = 1.0;
  Tensor ramp({1, 8, 8});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) ramp.at(0, y, x) = x;
  Tensor shifted = warp(ramp, shift);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 7; ++x) CHECK(shifted.at(0, y, x) == doctest::Approx(x + 1));
    CHECK(shifted.at(0, y, 7) == doctest::Approx(7));  // clamped border
  }

  Tensor small({2, 4, 4});
  CHECK_THROWS_AS(warp(img, small), std::invalid_argument);
}

TEST_CASE("cost volume center channel is 1 for identical unit features") {
  Rng rng(3);
  Tensor f = rnd({4, 6, 6}, rng);
  // normalize columns
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) {
      double s = 0;
      for (int c = 0; c < 4; ++c) s += f.at(c, y, x) * f.at(c, y, x);
      s = std::sqrt(s);
      for (int c = 0; c < 4; ++c) f.at(c, y, x) /= s;
    }
  Tensor cv = cost_volume(f, f, 2);
  int center = (2 * 2 + 1) * 2 + 2;  // dy=0,dx=0 at d=2
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x)
      CHECK(cv.at(center, y, x) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(cv.min() >= -1.0 - 1e-5);
  CHECK(cv.max() <= 1.0 + 1e-5);
}

TEST_CASE("cost volume argmax tracks a known shift") {
  Rng rng(4);
  Tensor f = rnd({3, 8, 8}, rng);
  // unit columns make the self-match score a strict maximum
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int c = 0; c < 3; ++c) s += f.at(c, y, x) * f.at(c, y, x);
      s = std::sqrt(s);
      for (int c = 0; c < 3; ++c) f.at(c, y, x) /= s;
    }
  Tensor g({3, 8, 8});
  // g shifted by +1 column: g[.,y,x] = f[.,y,x-1]
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 1; x < 8; ++x) g.at(c, y, x) = f.at(c, y, x - 1);
  Tensor cv = cost_volume(f, g, 2);
  int side = 5;
  int expect = (0 + 2) * side + (1 + 2);  // dy=0, dx=+1
  int hits = 0, total = 0;
  for (int y = 2; y < 6; ++y)
    for (int x = 2; x < 6; ++x) {
      int best = 0;
      for (int ch = 1; ch < cv.dim(0); ++ch)
        if (cv.at(ch, y, x) > cv.at(best, y, x)) best = ch;
      ++total;
      if (best == expect) ++hits;
    }
  CHECK(hits == total);
}

TEST_CASE("occlusion mask consistency cases") {
  Tensor fw({2, 8, 8}), bw({2, 8, 8});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      fw.at(0, y, x) = 1.5;
      bw.at(0, y, x) = -1.5;
    }
  CHECK(occlusion_mask(fw, bw).sum() == 0.0);

  Tensor gross({2, 8, 8});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) gross.at(0, y, x) = 10.0;
  Tensor zero({2, 8, 8});
  Tensor m = occlusion_mask(gross, zero);
  CHECK(m.sum() == 64.0);
  for (std::size_t i = 0; i < m.size(); ++i)
    CHECK((m[i] == 0.0 || m[i] == 1.0));
}

TEST_CASE("photometric loss hits the epsilon floor at the true flow") {
  Rng rng(5);
  Tensor img = rnd({1, 8, 8}, rng, 0.1, 0.9);
  Tensor zero_flow({2, 8, 8});
  Tensor no_occ({1, 8, 8});
  auto loss = photometric_loss(img, img, ad::constant(zero_flow), no_occ);
  CHECK(loss->val.item() == doctest::Approx(std::pow(kPhotoEps, kPhotoP)).epsilon(1e-12));

  synthdata::MotionSpec spec;
  synthdata::GenOptions gen;
  gen.quantize = false;
  SceneSample s = synthdata::gen_scene(17, 64, 64, spec, gen);
  auto l2 = photometric_loss(s.frame_t.data, s.frame_t1.data,
                             ad::constant(s.gt_flow.data), s.gt_occlusion);
  CHECK(std::abs(l2->val.item() - std::pow(kPhotoEps, kPhotoP)) <= 1e-3);

  Tensor all_occ({1, 8, 8}, 1.0);
  CHECK_THROWS_AS(photometric_loss(img, img, ad::constant(zero_flow), all_occ),
                  DegenerateInputError);
}

TEST_CASE("photometric loss over integer candidates is minimized at the true shift") {
  Rng rng(6);
  // smooth image so bilinear resampling noise stays below the shift signal
  Tensor img({1, 16, 16});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      img.at(0, y, x) = 0.5 + 0.4 * std::sin(0.7 * x) * std::cos(0.5 * y);
  Tensor truth({2, 16, 16});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) truth.at(0, y, x) = 2.0;
  Tensor img_t = warp(img, truth);  // frame_t sampled forward by the true shift
  Tensor no_occ({1, 16, 16});
  // ignore the clamped border band
  for (int y = 0; y < 16; ++y)
    for (int x = 13; x < 16; ++x) no_occ.at(0, y, x) = 1.0;
  double best = 1e9;
  int best_u = -99;
  for (int u = -3; u <= 3; ++u) {
    Tensor cand({2, 16, 16});
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) cand.at(0, y, x) = u;
    double v = photometric_loss(img_t, img, ad::constant(cand), no_occ)->val.item();
    if (v < best) {
      best = v;
      best_u = u;
    }
  }
  CHECK(best_u == 2);
}

TEST_CASE("untrained flow net is reproducible and flow is displacement bounded") {
  FlowNet a(1, 99), b(1, 99);
  Rng rng(7);
  Tensor i1 = rnd({1, 32, 32}, rng, 0, 1);
  Tensor i2 = rnd({1, 32, 32}, rng, 0, 1);
  Tensor fa = a.forward(ad::constant(i1), ad::constant(i2))->val;
  Tensor fb = b.forward(ad::constant(i1), ad::constant(i2))->val;
  for (std::size_t i = 0; i < fa.size(); ++i) CHECK(fa[i] == fb[i]);
  // soft-argmax over radius-4 displacements at 1/4 scale, upsampled x4
  CHECK(fa.max() <= kRadius * kStride + 1e-9);
  CHECK(fa.min() >= -kRadius * kStride - 1e-9);
}

TEST_CASE("flow on identical frames shrinks after training on static scenes") {
  FlowNet net(1, 123);
  nn::Adam opt(2e-3);
  synthdata::MotionSpec still;
  still.zero_motion = true;
  std::vector<SceneSample> scenes;
  for (std::uint64_t i = 0; i < 4; ++i)
    scenes.push_back(synthdata::gen_scene(200 + i, 32, 32, still));
  Tensor no_occ({1, 32, 32});
  for (int step = 0; step < 150; ++step) {
    const SceneSample& s = scenes[static_cast<std::size_t>(step) % scenes.size()];
    net.params().zero_grad();
    auto flow = net.forward(ad::constant(s.frame_t.data), ad::constant(s.frame_t1.data));
    auto loss = photometric_loss(s.frame_t.data, s.frame_t1.data, flow, no_occ);
    ad::backward(loss);
    opt.step(net.params());
  }
  SceneSample held = synthdata::gen_scene(300, 32, 32, still);
  Tensor flow = net.forward(ad::constant(held.frame_t.data),
                            ad::constant(held.frame_t1.data))->val;
  CHECK(std::max(std::abs(flow.min()), std::abs(flow.max())) <= 0.5);
}
