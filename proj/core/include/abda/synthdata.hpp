#pragma once

#include <cstdint>
#include <vector>

#include "abda/rng.hpp"
#include "abda/types.hpp"

namespace abda::synthdata {

// Motion layout for a generated scene: a textured static background plus
// 1..4 sprites, each moving by an affine transform between the two frames.
struct MotionSpec {
  int sprite_count = 2;          // 1..4
  double max_translation = 3.0;  // pixels, per axis
  double max_rotation = 0.04;    // radians
  double max_scale_delta = 0.03;
  bool zero_motion = false;
  // when set, every sprite translates by exactly (tx, ty), no rotation/scale
  bool exact_translation = false;
  double tx = 0.0, ty = 0.0;
};

struct IllumSpec {
  double lo = 0.05;        // illumination range, must stay in (0, 0.5]
  double hi = 0.30;
  double smooth_sigma = 8.0;  // Gaussian blur of the random field, pixels
};

struct NoiseSpec {
  double sigma = 0.02;  // Gaussian read noise, truncated at 3 sigma; [0, 0.1]
};

struct GenOptions {
  // Quantize frames to the 16-bit PNG grid and flow/illumination through
  // float32 so the on-disk round trip is bitwise. Disable for analytic-
  // precision warp tests.
  bool quantize = true;
};

// Frames only; night/events are filled in by make_sample.
SceneSample gen_scene(std::uint64_t seed, int height, int width,
                      const MotionSpec& spec, const GenOptions& opts = {});

// night = clip(image * L + noise, 0, 1). L depends only on (seed, H, W) so a
// frame pair darkened with the same seed shares its illumination;
// noise_stream decorrelates the per-frame noise.
std::pair<Image, Tensor> darken(const Image& image, const IllumSpec& illum,
                                const NoiseSpec& noise, std::uint64_t seed,
                                std::uint64_t noise_stream = 0);

// Per-pixel integrate-and-fire on log(I + 1e-3), linear interpolation in log
// space between frames (ESIM convention). Deterministic; seed reserved for
// threshold jitter extensions.
EventStream simulate_events(const std::vector<Image>& frames,
                            const std::vector<double>& timestamps, double C,
                            int substeps, std::uint64_t seed);

// map(x,y) = C * sum of polarities of events in [t0, t1) at (x,y); (1,H,W)
Tensor accumulate_events(const EventStream& events, double t0, double t1);

// Full sample: scene + darkened pair + simulated events over [t0, t1).
struct SampleOptions {
  MotionSpec motion;
  IllumSpec illum;
  NoiseSpec noise;
  GenOptions gen;
  double contrast = 0.15;
  int substeps = 10;
  double frame_dt = 0.1;  // seconds between the two frames
};

SceneSample make_sample(std::uint64_t seed, int height, int width,
                        const SampleOptions& opts = {});

constexpr double kLogEps = 1e-3;

}  // namespace abda::synthdata
