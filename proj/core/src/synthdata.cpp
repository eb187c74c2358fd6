#include "abda/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace abda::synthdata {

namespace {

constexpr double kTwoPi = 6.283185307179586;

double quant16(double v) { return std::round(v * 65535.0) / 65535.0; }
double quantf32(double v) { return static_cast<double>(static_cast<float>(v)); }

// Smooth analytic texture: a base level plus three sinusoidal plaids. Low
// frequencies keep the Taylor-equivalence residual small away from sprite
// boundaries.
struct Texture {
  double base;
  double amp[3];
  double fx[3], fy[3], phase[3];

  static Texture random(Rng& rng, double base_lo, double base_hi) {
    Texture t;
    t.base = rng.uniform(base_lo, base_hi);
    for (int k = 0; k < 3; ++k) {
      t.amp[k] = rng.uniform(0.03, 0.09);
      t.fx[k] = rng.uniform(-0.05, 0.05);
      t.fy[k] = rng.uniform(-0.05, 0.05);
      t.phase[k] = rng.uniform(0.0, kTwoPi);
    }
    return t;
  }

  double operator()(double x, double y) const {
    double v = base;
    for (int k = 0; k < 3; ++k)
      v += amp[k] * std::sin(kTwoPi * (fx[k] * x + fy[k] * y) + phase[k]);
    return std::min(std::max(v, 0.02), 0.98);
  }
};

struct Sprite {
  enum class Shape { Disk, Rect };
  Shape shape;
  double cx, cy;      // center at t
  double rx, ry;      // half extents in local coords
  double tx, ty;      // translation over the frame interval
  double rot;         // rotation over the interval, radians
  double dscale;      // scale change over the interval
  Texture tex;

  // world -> local at time s in [0,1]
  void to_local(double s, double wx, double wy, double& lx, double& ly) const {
    double cxs = cx + s * tx, cys = cy + s * ty;
    double th = s * rot, sc = 1.0 + s * dscale;
    double dx = wx - cxs, dy = wy - cys;
    double c = std::cos(th), sn = std::sin(th);
    lx = (c * dx + sn * dy) / sc;
    ly = (-sn * dx + c * dy) / sc;
  }

  void to_world(double s, double lx, double ly, double& wx, double& wy) const {
    double cxs = cx + s * tx, cys = cy + s * ty;
    double th = s * rot, sc = 1.0 + s * dscale;
    double c = std::cos(th), sn = std::sin(th);
    wx = cxs + sc * (c * lx - sn * ly);
    wy = cys + sc * (sn * lx + c * ly);
  }

  bool covers(double s, double wx, double wy) const {
    double lx, ly;
    to_local(s, wx, wy, lx, ly);
    if (shape == Shape::Disk)
      return (lx * lx) / (rx * rx) + (ly * ly) / (ry * ry) <= 1.0;
    return std::fabs(lx) <= rx && std::fabs(ly) <= ry;
  }
};

struct Scene {
  Texture background;
  std::vector<Sprite> sprites;

  // index of front-most sprite covering (x,y) at time s, or -1
  int layer(double s, double x, double y) const {
    for (int i = static_cast<int>(sprites.size()) - 1; i >= 0; --i)
      if (sprites[static_cast<std::size_t>(i)].covers(s, x, y)) return i;
    return -1;
  }

  double render(double s, double x, double y) const {
    int i = layer(s, x, y);
    if (i < 0) return background(x, y);
    const Sprite& sp = sprites[static_cast<std::size_t>(i)];
    double lx, ly;
    sp.to_local(s, x, y, lx, ly);
    return sp.tex(lx, ly);
  }
};

double bilinear_sample(const Tensor& img, double sx, double sy) {
  int H = img.dim(1), W = img.dim(2);
  sx = std::min(std::max(sx, 0.0), static_cast<double>(W - 1));
  sy = std::min(std::max(sy, 0.0), static_cast<double>(H - 1));
  int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
  int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
  double wx = sx - x0, wy = sy - y0;
  return (1 - wy) * ((1 - wx) * img.at(0, y0, x0) + wx * img.at(0, y0, x1)) +
         wy * ((1 - wx) * img.at(0, y1, x0) + wx * img.at(0, y1, x1));
}

Scene build_scene(Rng& rng, int height, int width, const MotionSpec& spec) {
  Scene scene;
  scene.background = Texture::random(rng, 0.40, 0.60);
  int n = spec.sprite_count;
  double rmax = std::min(height, width) / 5.0;
  for (int i = 0; i < n; ++i) {
    Sprite sp;
    sp.shape = rng.uniform() < 0.5 ? Sprite::Shape::Disk : Sprite::Shape::Rect;
    sp.rx = rng.uniform(rmax * 0.35, rmax);
    sp.ry = rng.uniform(rmax * 0.35, rmax);
    sp.cx = rng.uniform(width * 0.2, width * 0.8);
    sp.cy = rng.uniform(height * 0.2, height * 0.8);
    if (spec.zero_motion) {
      sp.tx = sp.ty = sp.rot = sp.dscale = 0.0;
    } else if (spec.exact_translation) {
      sp.tx = spec.tx;
      sp.ty = spec.ty;
      sp.rot = sp.dscale = 0.0;
    } else {
      sp.tx = rng.uniform(-spec.max_translation, spec.max_translation);
      sp.ty = rng.uniform(-spec.max_translation, spec.max_translation);
      sp.rot = rng.uniform(-spec.max_rotation, spec.max_rotation);
      sp.dscale = rng.uniform(-spec.max_scale_delta, spec.max_scale_delta);
    }
    // alternate bright/dark sprites against the mid-gray background
    sp.tex = Texture::random(rng, i % 2 == 0 ? 0.70 : 0.18,
                             i % 2 == 0 ? 0.88 : 0.32);
    scene.sprites.push_back(sp);
  }
  return scene;
}

void validate_motion(int height, int width, const MotionSpec& spec) {
  if (spec.sprite_count < 1 || spec.sprite_count > 4)
    throw std::invalid_argument("gen_scene: sprite_count must be 1..4");
  double rmax = std::min(height, width) / 5.0;
  double bound;
  if (spec.zero_motion)
    bound = 0.0;
  else if (spec.exact_translation)
    bound = std::hypot(spec.tx, spec.ty);
  else
    bound = std::hypot(spec.max_translation, spec.max_translation) +
            (spec.max_scale_delta +
             spec.max_rotation * (1.0 + spec.max_scale_delta)) *
                rmax * 1.5;
  if (bound > width / 8.0)
    throw std::invalid_argument(
        "gen_scene: motion spec exceeds the width/8 displacement bound");
}

}  // namespace

SceneSample gen_scene(std::uint64_t seed, int height, int width,
                      const MotionSpec& spec, const GenOptions& opts) {
  if (height < 32 || width < 32)
    throw std::invalid_argument("gen_scene: height and width must be >= 32");
  validate_motion(height, width, spec);

  Rng rng(seed);
  Scene scene = build_scene(rng, height, width, spec);

  SceneSample s;
  s.seed = seed;
  s.id = "s" + std::to_string(seed);
  s.gt_flow = FlowField(height, width);
  s.gt_occlusion = Tensor({1, height, width});
  s.frame_t = Image(1, height, width);
  s.frame_t1 = Image(1, height, width);

  // analytic flow and occlusion on the time-t grid
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      int li = scene.layer(0.0, x, y);
      double u = 0.0, v = 0.0;
      if (li >= 0) {
        const Sprite& sp = scene.sprites[static_cast<std::size_t>(li)];
        double lx, ly, qx, qy;
        sp.to_local(0.0, x, y, lx, ly);
        sp.to_world(1.0, lx, ly, qx, qy);
        u = qx - x;
        v = qy - y;
      }
      if (opts.quantize) {
        u = quantf32(u);
        v = quantf32(v);
      }
      s.gt_flow.u(y, x) = u;
      s.gt_flow.v(y, x) = v;

      double qx = x + u, qy = y + v;
      bool occluded = qx < 0.0 || qx > width - 1 || qy < 0.0 || qy > height - 1;
      if (!occluded) {
        int l1 = scene.layer(1.0, qx, qy);
        occluded = (l1 != li) && (l1 > li);
        if (li < 0) occluded = l1 >= 0;  // background covered by any sprite
      }
      s.gt_occlusion.at(0, y, x) = occluded ? 1.0 : 0.0;
    }

  // frame_t1 is rendered analytically; frame_t is its backward warp on
  // non-occluded pixels (so the warp invariant holds by construction) and an
  // analytic time-0 render where occluded.
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double v = scene.render(1.0, x, y);
      s.frame_t1.data.at(0, y, x) = opts.quantize ? quant16(v) : v;
    }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double v;
      if (s.gt_occlusion.at(0, y, x) > 0.5) {
        v = scene.render(0.0, x, y);
      } else {
        v = bilinear_sample(s.frame_t1.data, x + s.gt_flow.u(y, x),
                            y + s.gt_flow.v(y, x));
      }
      s.frame_t.data.at(0, y, x) = opts.quantize ? quant16(v) : v;
    }
  return s;
}

std::pair<Image, Tensor> darken(const Image& image, const IllumSpec& illum,
                                const NoiseSpec& noise, std::uint64_t seed,
                                std::uint64_t noise_stream) {
  image.validate();
  if (!(illum.lo > 0.0 && illum.lo <= illum.hi && illum.hi <= 1.0))
    throw std::invalid_argument("darken: illumination range must satisfy 0 < lo <= hi <= 1");
  if (!(noise.sigma >= 0.0 && noise.sigma <= 0.1))
    throw std::invalid_argument("darken: noise sigma must be in [0, 0.1]");

  int H = image.height(), W = image.width();
  // smooth illumination: blurred uniform field rescaled to [lo, hi];
  // depends only on (seed, H, W) so both frames of a pair share it
  Rng lrng(seed ^ 0xA5A5A5A5ull);
  Tensor field({1, H, W});
  for (std::size_t i = 0; i < field.size(); ++i) field[i] = lrng.uniform();
  if (illum.smooth_sigma > 0.0) {
    int rad = static_cast<int>(std::ceil(3.0 * illum.smooth_sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * rad + 1));
    double ks = 0.0;
    for (int i = -rad; i <= rad; ++i) {
      double w = std::exp(-0.5 * i * i / (illum.smooth_sigma * illum.smooth_sigma));
      k[static_cast<std::size_t>(i + rad)] = w;
      ks += w;
    }
    for (double& w : k) w /= ks;
    Tensor tmp({1, H, W});
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int i = -rad; i <= rad; ++i)
          acc += k[static_cast<std::size_t>(i + rad)] *
                 field.at(0, y, std::min(std::max(x + i, 0), W - 1));
        tmp.at(0, y, x) = acc;
      }
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int i = -rad; i <= rad; ++i)
          acc += k[static_cast<std::size_t>(i + rad)] *
                 tmp.at(0, std::min(std::max(y + i, 0), H - 1), x);
        field.at(0, y, x) = acc;
      }
  }
  double fmin = field.min(), fmax = field.max();
  Tensor L({1, H, W});
  for (std::size_t i = 0; i < L.size(); ++i) {
    double t = fmax > fmin ? (field[i] - fmin) / (fmax - fmin) : 0.5;
    L[i] = illum.lo + t * (illum.hi - illum.lo);
  }

  Rng nrng(seed * 1315423911ull + noise_stream + 17);
  double cap = std::max(0.0, 3.0 * noise.sigma - 1e-5);
  Image night(image.channels(), H, W);
  for (int c = 0; c < image.channels(); ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double n = noise.sigma > 0.0
                       ? std::min(std::max(nrng.normal(0.0, noise.sigma), -cap), cap)
                       : 0.0;
        double v = image.data.at(c, y, x) * L.at(0, y, x) + n;
        night.data.at(c, y, x) = std::min(std::max(v, 0.0), 1.0);
      }
  return {std::move(night), std::move(L)};
}

EventStream simulate_events(const std::vector<Image>& frames,
                            const std::vector<double>& timestamps, double C,
                            int substeps, std::uint64_t /*seed*/) {
  if (frames.size() < 2)
    throw std::invalid_argument("simulate_events: need >= 2 frames");
  if (frames.size() != timestamps.size())
    throw std::invalid_argument("simulate_events: frame/timestamp count mismatch");
  if (C <= 0.0) throw std::invalid_argument("simulate_events: C > 0 required");
  if (substeps < 1) throw std::invalid_argument("simulate_events: substeps >= 1");
  int H = frames[0].height(), W = frames[0].width();
  for (const Image& f : frames)
    if (f.height() != H || f.width() != W || f.channels() != frames[0].channels())
      throw std::invalid_argument("simulate_events: mismatched frame sizes");
  for (std::size_t k = 1; k < timestamps.size(); ++k)
    if (timestamps[k] <= timestamps[k - 1])
      throw std::invalid_argument("simulate_events: timestamps must increase");

  auto logint = [&](const Image& f, int y, int x) {
    double v = f.channels() == 1
                   ? f.data.at(0, y, x)
                   : (f.data.at(0, y, x) + f.data.at(1, y, x) +
                      f.data.at(2, y, x)) / 3.0;
    return std::log(v + kLogEps);
  };

  EventStream es;
  es.height = H;
  es.width = W;
  es.contrast = C;
  constexpr double kCrossTol = 1e-9;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double ref = logint(frames[0], y, x);
      for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
        double l0 = logint(frames[k], y, x);
        double l1 = logint(frames[k + 1], y, x);
        double t0 = timestamps[k], t1 = timestamps[k + 1];
        double prev = l0;
        double tprev = t0;
        for (int s = 1; s <= substeps; ++s) {
          double frac = static_cast<double>(s) / substeps;
          double cur = l0 + frac * (l1 - l0);
          double tcur = t0 + frac * (t1 - t0);
          // emit every threshold crossing inside this substep
          while (cur - ref >= C - kCrossTol || ref - cur >= C - kCrossTol) {
            int p = cur > ref ? 1 : -1;
            double target = ref + p * C;
            double a = std::fabs(cur - prev) > 1e-300
                           ? (target - prev) / (cur - prev)
                           : 1.0;
            a = std::min(std::max(a, 0.0), 1.0);
            double te = tprev + a * (tcur - tprev);
            te = std::round(te * 1e9) / 1e9;
            es.events.push_back({te, x, y, p});
            ref = target;
          }
          prev = cur;
          tprev = tcur;
        }
      }
    }
  std::stable_sort(es.events.begin(), es.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  return es;
}

Tensor accumulate_events(const EventStream& events, double t0, double t1) {
  if (t0 >= t1)
    throw std::invalid_argument("accumulate_events: require t0 < t1");
  Tensor map({1, events.height, events.width});
  for (const Event& e : events.events) {
    if (e.t >= t0 && e.t < t1)
      map.at(0, e.y, e.x) += events.contrast * e.p;
  }
  return map;
}

SceneSample make_sample(std::uint64_t seed, int height, int width,
                        const SampleOptions& opts) {
  SceneSample s = gen_scene(seed, height, width, opts.motion, opts.gen);
  auto [night_t, L] = darken(s.frame_t, opts.illum, opts.noise, seed, 0);
  auto [night_t1, L2] = darken(s.frame_t1, opts.illum, opts.noise, seed, 1);
  if (opts.gen.quantize) {
    for (std::size_t i = 0; i < L.size(); ++i) L[i] = quantf32(L[i]);
    for (std::size_t i = 0; i < night_t.data.size(); ++i)
      night_t.data[i] = quant16(night_t.data[i]);
    for (std::size_t i = 0; i < night_t1.data.size(); ++i)
      night_t1.data[i] = quant16(night_t1.data[i]);
  }
  s.night_t = std::move(night_t);
  s.night_t1 = std::move(night_t1);
  s.gt_illumination = std::move(L);
  s.t0 = 0.0;
  // window end sits one ns past the last frame so a crossing that lands
  // exactly on the frame boundary stays inside the half-open window
  s.t1 = opts.frame_dt + 1e-9;
  // events come from the clean frames: the event sensor's high dynamic range
  // sees boundaries the darkened frames lose
  s.events = simulate_events({s.frame_t, s.frame_t1}, {0.0, opts.frame_dt},
                             opts.contrast, opts.substeps, seed);
  return s;
}

}  // namespace abda::synthdata
