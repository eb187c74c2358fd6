#include <doctest.h>

#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "abda/eval.hpp"
#include "abda/rng.hpp"

using namespace abda;
using namespace abda::eval;

namespace {
FlowField rnd_flow(int h, int w, Rng& rng, double scale = 5.0) {
  FlowField f(h, w);
  for (std::size_t i = 0; i < f.data.size(); ++i)
    f.data[i] = rng.uniform(-scale, scale);
  return f;
}
}  // namespace

TEST_CASE("epe 3-4-5 hand value") {
  FlowField gt(4, 4), flow(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      flow.u(y, x) = gt.u(y, x) + 3.0;
      flow.v(y, x) = gt.v(y, x) + 4.0;
    }
  Tensor valid({1, 4, 4}, 1.0);
  CHECK(epe(flow, gt, valid) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("fl_all applies both the 3px and 5 percent rules") {
  Tensor valid({1, 4, 4}, 1.0);
  // error 4 px but only 4% of ||gt|| = 100: not erroneous
  FlowField gt(4, 4), flow(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      gt.u(y, x) = 100.0;
      flow.u(y, x) = 96.0;
    }
  CHECK(fl_all(flow, gt, valid) == 0.0);

  // error 4 px and 40% of ||gt|| = 10: every pixel erroneous
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      gt.u(y, x) = 10.0;
      flow.u(y, x) = 6.0;
    }
  CHECK(fl_all(flow, gt, valid) == 100.0);

  // error 2 px: under the absolute threshold
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) flow.u(y, x) = 8.0;
  CHECK(fl_all(flow, gt, valid) == 0.0);
}

TEST_CASE("epe and fl_all match a brute-force oracle over many seeds") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(500 + seed);
    FlowField gt = rnd_flow(7, 9, rng);
    FlowField flow = rnd_flow(7, 9, rng);
    Tensor valid({1, 7, 9});
    for (std::size_t i = 0; i < valid.size(); ++i)
      valid[i] = (rng.uniform() < 0.7) ? 1.0 : 0.0;
    if (valid.sum() == 0.0) valid[0] = 1.0;

    double acc = 0.0, bad = 0.0, n = 0.0;
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 9; ++x) {
        if (valid.at(0, y, x) != 1.0) continue;
        double du = flow.u(y, x) - gt.u(y, x);
        double dv = flow.v(y, x) - gt.v(y, x);
        double err = std::sqrt(du * du + dv * dv);
        double mag = std::hypot(gt.u(y, x), gt.v(y, x));
        acc += err;
        if (err > 3.0 && err > 0.05 * mag) bad += 1.0;
        n += 1.0;
      }
    CHECK(std::abs(epe(flow, gt, valid) - acc / n) <= 1e-6);
    CHECK(std::abs(fl_all(flow, gt, valid) - 100.0 * bad / n) <= 1e-6);
  }
}

TEST_CASE("empty valid set raises a degenerate-input error") {
  Rng rng(1);
  FlowField gt = rnd_flow(4, 4, rng);
  FlowField flow = rnd_flow(4, 4, rng);
  Tensor empty({1, 4, 4});
  CHECK_THROWS_AS(epe(flow, gt, empty), DegenerateInputError);
  CHECK_THROWS_AS(fl_all(flow, gt, empty), DegenerateInputError);
  FlowField small(3, 3);
  Tensor ones({1, 4, 4}, 1.0);
  CHECK_THROWS_AS(epe(small, gt, ones), std::invalid_argument);
}

TEST_CASE("boundary band on uniform and step-edge flows") {
  FlowField uniform(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) uniform.u(y, x) = 2.5;
  CHECK(boundary_band(uniform).sum() == 0.0);
  Tensor valid({1, 16, 16}, 1.0);
  CHECK(!boundary_epe(uniform, uniform, valid).has_value());

  // vertical step in u at column 8: band = edge columns dilated by 2
  FlowField step(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 8; x < 16; ++x) step.u(y, x) = 4.0;
  Tensor band = boundary_band(step);
  for (int y = 2; y < 14; ++y) {
    CHECK(band.at(0, y, 8) == 1.0);
    CHECK(band.at(0, y, 0) == 0.0);
    CHECK(band.at(0, y, 15) == 0.0);
  }

  FlowField off(16, 16);
  for (std::size_t i = 0; i < off.data.size(); ++i)
    off.data[i] = step.data[i] + 1.0;
  auto b = boundary_epe(off, step, valid);
  REQUIRE(b.has_value());
  CHECK(*b == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("flow_to_color conventions") {
  FlowField zero(8, 8);
  Image white = flow_to_color(zero);
  for (std::size_t i = 0; i < white.data.size(); ++i)
    CHECK(white.data[i] == doctest::Approx(1.0));

  FlowField right(8, 8), left(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      right.u(y, x) = 3.0;
      left.u(y, x) = -3.0;
    }
  Image a = flow_to_color(right);
  Image b = flow_to_color(left);
  // uniform hue per constant field
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < a.data.size() / 3; ++i) {
      CHECK(a.data[c * 64 + i] == a.data[static_cast<std::size_t>(c) * 64]);
    }
  // opposite flows render distinct colors
  double diff = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    diff = std::max(diff, std::abs(a.data[i] - b.data[i]));
  CHECK(diff > 0.1);
  // output stays inside [0,1] and is deterministic
  Image a2 = flow_to_color(right);
  CHECK(a.data.min() >= 0.0);
  CHECK(a.data.max() <= 1.0);
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == a2.data[i]);

  FlowField bad(4, 4);
  bad.data[0] = std::nan("");
  CHECK_THROWS_AS(flow_to_color(bad), std::invalid_argument);
}

TEST_CASE("report JSON keeps the schema field set") {
  EvalReport r;
  r.sample_count = 2;
  r.mean_epe_night = 0.5;
  r.per_sample.push_back({"s1", 0.4, 1.0, 0.3});
  r.per_sample.push_back({"s2", 0.6, 0.0, 0.2});
  auto j = nlohmann::json::parse(r.to_json());
  std::set<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.insert(it.key());
  std::set<std::string> expect = {"schema_version",     "sample_count",
                                  "mean_epe_night",     "fl_all_night",
                                  "boundary_epe_night", "mean_epe_day",
                                  "fl_all_day",         "mean_epe_event",
                                  "per_sample"};
  CHECK(keys == expect);
  CHECK(j["schema_version"] == 1);
  REQUIRE(j["per_sample"].size() == 2);
  std::set<std::string> sample_keys;
  for (auto it = j["per_sample"][0].begin(); it != j["per_sample"][0].end(); ++it)
    sample_keys.insert(it.key());
  std::set<std::string> expect_sample = {"id", "epe_night", "fl_all_night",
                                         "epe_day"};
  CHECK(sample_keys == expect_sample);
  CHECK(j["per_sample"][0]["id"] == "s1");
}
