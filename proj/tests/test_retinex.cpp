#include <doctest.h>

#include <cmath>

#include "abda/retinex.hpp"
#include "abda/synthdata.hpp"

using namespace abda;
using namespace abda::retinex;

namespace {

double recon_l1(const Image& img, const Decomposition& d) {
  double acc = 0.0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      acc += std::abs(d.reflectance.at(0, y, x) * d.illumination.at(0, y, x) -
                      img.data.at(0, y, x));
  return acc / (img.height() * img.width());
}

double l1_dist(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

std::vector<std::pair<Image, Image>> training_pairs(int count) {
  std::vector<std::pair<Image, Image>> pairs;
  for (int i = 0; i < count; ++i) {
    synthdata::MotionSpec spec;
    spec.max_translation = 1.5;
    spec.max_rotation = 0.01;
    spec.max_scale_delta = 0.01;
    SceneSample s = synthdata::gen_scene(static_cast<std::uint64_t>(40 + i), 32, 32, spec);
    synthdata::IllumSpec illum;
    synthdata::NoiseSpec noise;
    noise.sigma = 0.0;
    auto [night, L] = synthdata::darken(s.frame_t, illum, noise,
                                        static_cast<std::uint64_t>(40 + i));
    pairs.emplace_back(s.frame_t, night);
  }
  return pairs;
}

const Decomposer& trained_decomposer() {
  static Decomposer dec = [] {
    Decomposer d(1, 77);
    TrainOptions opts;
    opts.epochs = 120;
    opts.seed = 77;
    d.train(training_pairs(6), opts);
    return d;
  }();
  return dec;
}

}  // namespace

TEST_CASE("decompose output ranges and degenerate inputs") {
  Decomposer dec(1, 5);
  Image img(1, 32, 32);
  img.data.fill(0.5);
  Decomposition d = dec.decompose(img);
  CHECK(d.reflectance.min() >= 0.0);
  CHECK(d.reflectance.max() <= 1.0);
  CHECK(d.illumination.min() >= kIllumFloor);

  Image black(1, 32, 32);
  Decomposition db = dec.decompose(black);
  CHECK(db.reflectance.max() == 0.0);
  CHECK(db.illumination.max() == doctest::Approx(kIllumFloor));

  Image bad = img;
  bad.data[0] = std::nan("");
  CHECK_THROWS_AS(dec.decompose(bad), std::invalid_argument);
}

TEST_CASE("training reduces reconstruction loss and is deterministic") {
  auto pairs = training_pairs(4);
  Decomposer a(1, 9), b(1, 9);
  TrainOptions opts;
  opts.epochs = 30;
  opts.seed = 9;
  auto curve_a = a.train(pairs, opts);
  auto curve_b = b.train(pairs, opts);
  REQUIRE(curve_a.size() == 30);
  CHECK(curve_a.back() < curve_a.front());
  for (std::size_t i = 0; i < curve_a.size(); ++i) CHECK(curve_a[i] == curve_b[i]);
  const auto& pa = a.params().items();
  const auto& pb = b.params().items();
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i].second->val.size(); ++j)
      CHECK(pa[i].second->val[j] == pb[i].second->val[j]);

  CHECK_THROWS_AS(a.train({}, opts), std::invalid_argument);
}

TEST_CASE("trained decomposer reconstructs within tolerance") {
  const Decomposer& dec = trained_decomposer();
  synthdata::MotionSpec spec;
  spec.zero_motion = true;
  SceneSample s = synthdata::gen_scene(99, 32, 32, spec);
  Decomposition d = dec.decompose(s.frame_t);
  CHECK(recon_l1(s.frame_t, d) <= 0.05);
}

TEST_CASE("trained decomposer is approximately illumination equivariant") {
  const Decomposer& dec = trained_decomposer();
  synthdata::MotionSpec spec;
  spec.zero_motion = true;
  SceneSample s = synthdata::gen_scene(98, 32, 32, spec);
  Decomposition base = dec.decompose(s.frame_t);
  for (double c : {0.25, 0.5, 1.0}) {
    Image scaled(1, 32, 32);
    for (std::size_t i = 0; i < scaled.data.size(); ++i)
      scaled.data[i] = s.frame_t.data[i] * c;
    Decomposition d = dec.decompose(scaled);
    CHECK(l1_dist(d.reflectance, base.reflectance) <= 0.1);
  }
}
