#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "abda/types.hpp"

namespace abda::eval {

// mean over valid pixels of sqrt((u-u*)^2 + (v-v*)^2)
double epe(const FlowField& flow, const FlowField& gt, const Tensor& valid);

// KITTI rule: erroneous iff error > 3 px AND > 5% of ||gt||; returns percent
double fl_all(const FlowField& flow, const FlowField& gt, const Tensor& valid);

// 2-px dilation of Sobel edges (magnitude > 1 px/px) of the ground-truth
// flow channels; the motion-boundary evaluation band
Tensor boundary_band(const FlowField& gt);

// EPE restricted to the boundary band; nullopt when the band is empty
std::optional<double> boundary_epe(const FlowField& flow, const FlowField& gt,
                                   const Tensor& valid);

// Middlebury color wheel; saturation normalized by the 99th percentile
// magnitude, zero flow renders white
Image flow_to_color(const FlowField& flow);

struct SampleMetrics {
  std::string id;
  double epe_night = 0.0;
  double fl_all_night = 0.0;
  double epe_day = 0.0;
};

struct EvalReport {
  static constexpr int kSchemaVersion = 1;

  int sample_count = 0;
  double mean_epe_night = 0.0;
  double fl_all_night = 0.0;
  double boundary_epe_night = 0.0;
  double mean_epe_day = 0.0;
  double fl_all_day = 0.0;
  double mean_epe_event = 0.0;
  std::vector<SampleMetrics> per_sample;

  std::string to_json() const;
  void write_json(const std::filesystem::path& path) const;
  void write_csv(const std::filesystem::path& path) const;
};

}  // namespace abda::eval
