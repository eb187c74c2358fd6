#include <doctest.h>

#include <cmath>

#include "abda/appearance.hpp"
#include "abda/rng.hpp"

using namespace abda;
using namespace abda::appearance;

namespace {
Tensor rnd(std::vector<int> shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}
}  // namespace

TEST_CASE("discriminator probability stays in (0,1)") {
  Discriminator disc(1, 3);
  Rng rng(1);
  for (int i = 0; i < 5; ++i) {
    double p = disc.probability(ad::constant(rnd({1, 16, 16}, rng, 0, 1)))->val.item();
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("adversarial losses match the probability oracle") {
  Discriminator disc(1, 4);
  Rng rng(2);
  std::vector<ad::Value> day = {ad::constant(rnd({1, 16, 16}, rng, 0.4, 1)),
                                ad::constant(rnd({1, 16, 16}, rng, 0.4, 1))};
  std::vector<ad::Value> night = {ad::constant(rnd({1, 16, 16}, rng, 0, 0.4))};
  auto losses = adversarial_losses(day, night, disc);
  double pd0 = disc.probability(day[0])->val.item();
  double pd1 = disc.probability(day[1])->val.item();
  double pn = disc.probability(night[0])->val.item();
  double expect_d = 0.5 * (std::log(pd0) + std::log(pd1)) + std::log(1.0 - pn);
  double expect_g = -std::log(pn);
  CHECK(losses.discriminator->val.item() == doctest::Approx(expect_d).epsilon(1e-9));
  CHECK(losses.generator->val.item() == doctest::Approx(expect_g).epsilon(1e-9));

  CHECK_THROWS_AS(adversarial_losses({}, night, disc), std::invalid_argument);
}

TEST_CASE("softmax_dist matches a direct exp/sum oracle") {
  Rng rng(3);
  Tensor cv = rnd({9, 4, 4}, rng, -2, 2);
  Tensor p = softmax_dist(ad::constant(cv))->val;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      double denom = 0;
      for (int c = 0; c < 9; ++c) denom += std::exp(cv.at(c, y, x));
      for (int c = 0; c < 9; ++c)
        CHECK(std::abs(p.at(c, y, x) - std::exp(cv.at(c, y, x)) / denom) <= 1e-7);
    }
}

TEST_CASE("kl_cost_loss hand value, zero case, non-negativity") {
  // 2-channel single pixel: softmax(p)=(0.9,0.1), softmax(q)=(0.5,0.5)
  Tensor pn({2, 1, 1}), pd({2, 1, 1});
  pn[0] = std::log(0.9);
  pn[1] = std::log(0.1);
  pd[0] = pd[1] = 0.0;
  double v = kl_cost_loss(ad::constant(pn), ad::constant(pd))->val.item();
  double expect = 0.9 * std::log(1.8) + 0.1 * std::log(0.2);
  CHECK(v == doctest::Approx(expect).epsilon(1e-9));

  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    Tensor a = rnd({5, 2, 2}, rng, -3, 3);
    Tensor b = rnd({5, 2, 2}, rng, -3, 3);
    CHECK(kl_cost_loss(ad::constant(a), ad::constant(b))->val.item() >= -1e-7);
  }
  Tensor same = rnd({5, 3, 3}, rng, -2, 2);
  CHECK(std::abs(kl_cost_loss(ad::constant(same), ad::constant(same))->val.item()) <= 1e-7);
}

TEST_CASE("kl_cost_loss is invariant to per-pixel channel shifts") {
  Rng rng(5);
  Tensor a = rnd({5, 3, 3}, rng, -2, 2);
  Tensor b = rnd({5, 3, 3}, rng, -2, 2);
  double base = kl_cost_loss(ad::constant(a), ad::constant(b))->val.item();
  Tensor a2 = a, b2 = b;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      double c = rng.uniform(-5, 5), c2 = rng.uniform(-5, 5);
      for (int ch = 0; ch < 5; ++ch) {
        a2.at(ch, y, x) += c;
        b2.at(ch, y, x) += c2;
      }
    }
  double shifted = kl_cost_loss(ad::constant(a2), ad::constant(b2))->val.item();
  CHECK(std::abs(base - shifted) <= 1e-7);
}

TEST_CASE("kl gradients do not reach the daytime side") {
  Rng rng(6);
  auto cv_n = ad::leaf(rnd({5, 3, 3}, rng));
  auto cv_d = ad::leaf(rnd({5, 3, 3}, rng));
  auto loss = kl_cost_loss(cv_n, cv_d);
  ad::backward(loss);
  double day_norm = 0.0;
  if (cv_d->grad.size() == cv_d->val.size())
    for (std::size_t i = 0; i < cv_d->grad.size(); ++i)
      day_norm += cv_d->grad[i] * cv_d->grad[i];
  CHECK(day_norm == 0.0);
  double night_norm = 0.0;
  for (std::size_t i = 0; i < cv_n->grad.size(); ++i)
    night_norm += cv_n->grad[i] * cv_n->grad[i];
  CHECK(night_norm > 0.0);
}

TEST_CASE("intra_align_loss constant offset and oracle") {
  Tensor cv_d({3, 2, 2}, 1.0), cv_d_r({3, 2, 2}, 0.5);
  Tensor cv_n({3, 2, 2}, 0.2), cv_n_r({3, 2, 2}, 0.2);
  double v = intra_align_loss(ad::constant(cv_d), ad::constant(cv_d_r),
                              ad::constant(cv_n), ad::constant(cv_n_r))->val.item();
  CHECK(v == doctest::Approx(0.5).epsilon(1e-12));

  Rng rng(7);
  Tensor a = rnd({4, 3, 3}, rng), b = rnd({4, 3, 3}, rng);
  Tensor c = rnd({4, 3, 3}, rng), d = rnd({4, 3, 3}, rng);
  double got = intra_align_loss(ad::constant(a), ad::constant(b), ad::constant(c),
                                ad::constant(d))->val.item();
  double expect = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    expect += std::abs(a[i] - b[i]) + std::abs(c[i] - d[i]);
  expect /= static_cast<double>(a.size());
  CHECK(std::abs(got - expect) <= 1e-6);
}

TEST_CASE("inter_align_loss zero case, permutation case, hand value") {
  Rng rng(8);
  Tensor cv_d = rnd({4, 3, 3}, rng), cv_d_r = rnd({4, 3, 3}, rng);
  // night residual equals day residual -> 0
  Tensor cv_n = rnd({4, 3, 3}, rng);
  Tensor cv_n_r = cv_n;
  for (std::size_t i = 0; i < cv_n_r.size(); ++i) cv_n_r[i] -= (cv_d[i] - cv_d_r[i]);
  double zero = inter_align_loss(ad::constant(cv_d), ad::constant(cv_d_r),
                                 ad::constant(cv_n), ad::constant(cv_n_r))->val.item();
  CHECK(std::abs(zero) <= 1e-7);

  // permuted residual channels -> strictly positive
  Tensor perm = cv_n_r;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      double tmp = perm.at(0, y, x);
      perm.at(0, y, x) = perm.at(3, y, x);
      perm.at(3, y, x) = tmp;
    }
  double pos = inter_align_loss(ad::constant(cv_d), ad::constant(cv_d_r),
                                ad::constant(cv_n), ad::constant(perm))->val.item();
  CHECK(pos > 0.0);

  // 2-channel hand case: residuals softmax to (0.9,0.1) vs (0.5,0.5)
  Tensor rd({2, 1, 1}), zero_t({2, 1, 1}), rn({2, 1, 1});
  rn[0] = std::log(0.9);
  rn[1] = std::log(0.1);
  rd[0] = rd[1] = 0.0;
  double v = inter_align_loss(ad::constant(rd), ad::constant(zero_t),
                              ad::constant(rn), ad::constant(zero_t))->val.item();
  CHECK(v == doctest::Approx(0.9 * std::log(1.8) + 0.1 * std::log(0.2)).epsilon(1e-9));
}
