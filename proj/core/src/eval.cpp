#include "abda/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace abda::eval {

using nlohmann::json;

namespace {

void check_eval_inputs(const FlowField& flow, const FlowField& gt,
                       const Tensor& valid, const char* where) {
  check_same_shape(flow.data, gt.data, where);
  if (valid.dim(1) != gt.height() || valid.dim(2) != gt.width())
    throw std::invalid_argument(std::string(where) + ": valid mask mismatch");
  if (valid.sum() <= 0.0)
    throw DegenerateInputError(std::string(where) + ": empty valid set");
}

}  // namespace

double epe(const FlowField& flow, const FlowField& gt, const Tensor& valid) {
  check_eval_inputs(flow, gt, valid, "epe");
  double acc = 0.0, count = 0.0;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      if (valid.at(0, y, x) <= 0.5) continue;
      double du = flow.u(y, x) - gt.u(y, x);
      double dv = flow.v(y, x) - gt.v(y, x);
      acc += std::sqrt(du * du + dv * dv);
      count += 1.0;
    }
  return acc / count;
}

double fl_all(const FlowField& flow, const FlowField& gt, const Tensor& valid) {
  check_eval_inputs(flow, gt, valid, "fl_all");
  double bad = 0.0, count = 0.0;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      if (valid.at(0, y, x) <= 0.5) continue;
      double du = flow.u(y, x) - gt.u(y, x);
      double dv = flow.v(y, x) - gt.v(y, x);
      double err = std::sqrt(du * du + dv * dv);
      double mag = std::sqrt(gt.u(y, x) * gt.u(y, x) + gt.v(y, x) * gt.v(y, x));
      if (err > 3.0 && err > 0.05 * mag) bad += 1.0;
      count += 1.0;
    }
  return 100.0 * bad / count;
}

Tensor boundary_band(const FlowField& gt) {
  int H = gt.height(), W = gt.width();
  auto at = [&](int c, int y, int x) {
    y = std::min(std::max(y, 0), H - 1);
    x = std::min(std::max(x, 0), W - 1);
    return gt.data.at(c, y, x);
  };
  Tensor edges({1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double strongest = 0.0;
      for (int c = 0; c < 2; ++c) {
        double gx = at(c, y - 1, x + 1) + 2 * at(c, y, x + 1) + at(c, y + 1, x + 1) -
                    at(c, y - 1, x - 1) - 2 * at(c, y, x - 1) - at(c, y + 1, x - 1);
        double gy = at(c, y + 1, x - 1) + 2 * at(c, y + 1, x) + at(c, y + 1, x + 1) -
                    at(c, y - 1, x - 1) - 2 * at(c, y - 1, x) - at(c, y - 1, x + 1);
        // Sobel sums carry a factor 8 relative to the unit-spacing gradient
        strongest = std::max(strongest, std::sqrt(gx * gx + gy * gy) / 8.0);
      }
      edges.at(0, y, x) = strongest > 1.0 ? 1.0 : 0.0;
    }
  Tensor band({1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      bool hit = false;
      for (int dy = -2; dy <= 2 && !hit; ++dy)
        for (int dx = -2; dx <= 2 && !hit; ++dx) {
          int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < H && xx >= 0 && xx < W &&
              edges.at(0, yy, xx) > 0.5)
            hit = true;
        }
      band.at(0, y, x) = hit ? 1.0 : 0.0;
    }
  return band;
}

std::optional<double> boundary_epe(const FlowField& flow, const FlowField& gt,
                                   const Tensor& valid) {
  Tensor band = boundary_band(gt);
  Tensor both({1, gt.height(), gt.width()});
  double n = 0.0;
  for (std::size_t i = 0; i < both.size(); ++i) {
    both[i] = (band[i] > 0.5 && valid[i] > 0.5) ? 1.0 : 0.0;
    n += both[i];
  }
  if (n <= 0.0) return std::nullopt;
  return epe(flow, gt, both);
}

namespace {
// the 55-entry Middlebury color wheel
std::vector<std::array<double, 3>> make_colorwheel() {
  const int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
  std::vector<std::array<double, 3>> wheel;
  auto ramp = [&](int n, int from, int to, bool up) {
    for (int i = 0; i < n; ++i) {
      std::array<double, 3> c = {0, 0, 0};
      double t = static_cast<double>(i) / n;
      c[static_cast<std::size_t>(from)] = up ? 1.0 : 1.0 - t;
      c[static_cast<std::size_t>(to)] = up ? t : 1.0;
      wheel.push_back(c);
    }
  };
  ramp(RY, 0, 1, true);   // red -> yellow
  ramp(YG, 1, 0, false);  // yellow -> green (red fades)
  ramp(GC, 1, 2, true);   // green -> cyan
  ramp(CB, 2, 1, false);  // cyan -> blue
  ramp(BM, 2, 0, true);   // blue -> magenta
  ramp(MR, 0, 2, false);  // magenta -> red
  return wheel;
}
}  // namespace

Image flow_to_color(const FlowField& flow) {
  if (!flow.data.all_finite())
    throw std::invalid_argument("flow_to_color: non-finite flow");
  int H = flow.height(), W = flow.width();
  std::vector<double> mags;
  mags.reserve(static_cast<std::size_t>(H) * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      mags.push_back(std::hypot(flow.u(y, x), flow.v(y, x)));
  std::vector<double> sorted = mags;
  std::sort(sorted.begin(), sorted.end());
  double p99 = sorted[static_cast<std::size_t>(0.99 * (sorted.size() - 1))];
  double norm = std::max(p99, 1e-9);

  static const auto wheel = make_colorwheel();
  int ncols = static_cast<int>(wheel.size());
  Image out(3, H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double u = flow.u(y, x) / norm, v = flow.v(y, x) / norm;
      double rad = std::min(std::hypot(u, v), 1.0);
      double angle = std::atan2(-v, -u) / 3.141592653589793;  // [-1,1]
      double fk = (angle + 1.0) / 2.0 * (ncols - 1);
      int k0 = static_cast<int>(fk) % ncols;
      int k1 = (k0 + 1) % ncols;
      double f = fk - std::floor(fk);
      for (int c = 0; c < 3; ++c) {
        double col = (1 - f) * wheel[static_cast<std::size_t>(k0)][static_cast<std::size_t>(c)] +
                     f * wheel[static_cast<std::size_t>(k1)][static_cast<std::size_t>(c)];
        out.data.at(c, y, x) = 1.0 - rad * (1.0 - col);
      }
    }
  return out;
}

std::string EvalReport::to_json() const {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["sample_count"] = sample_count;
  j["mean_epe_night"] = mean_epe_night;
  j["fl_all_night"] = fl_all_night;
  j["boundary_epe_night"] = boundary_epe_night;
  j["mean_epe_day"] = mean_epe_day;
  j["fl_all_day"] = fl_all_day;
  j["mean_epe_event"] = mean_epe_event;
  j["per_sample"] = json::array();
  for (const SampleMetrics& s : per_sample)
    j["per_sample"].push_back({{"id", s.id},
                               {"epe_night", s.epe_night},
                               {"fl_all_night", s.fl_all_night},
                               {"epe_day", s.epe_day}});
  return j.dump(2);
}

void EvalReport::write_json(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write report: " + path.string());
  f << to_json() << "\n";
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write report: " + path.string());
  f << "id,epe_night,fl_all_night,epe_day\n";
  for (const SampleMetrics& s : per_sample)
    f << s.id << "," << s.epe_night << "," << s.fl_all_night << ","
      << s.epe_day << "\n";
}

}  // namespace abda::eval
