#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "abda/tensor.hpp"

namespace abda {

// Thrown when inputs are structurally valid but leave nothing to compute
// (fully occluded mask, empty sample class, ...).
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Intensity image, values in [0,1], stored (C,H,W).
struct Image {
  Tensor data;  // (C,H,W)

  Image() = default;
  Image(int channels, int height, int width)
      : data({channels, height, width}) {}
  explicit Image(Tensor t) : data(std::move(t)) {
    if (data.rank() != 3) throw std::invalid_argument("Image: rank-3 required");
  }

  int channels() const { return data.dim(0); }
  int height() const { return data.dim(1); }
  int width() const { return data.dim(2); }

  void validate() const {
    if (height() < 16 || width() < 16)
      throw std::invalid_argument("Image: height/width must be >= 16");
    if (channels() != 1 && channels() != 3)
      throw std::invalid_argument("Image: channels must be 1 or 3");
    for (std::size_t i = 0; i < data.size(); ++i) {
      double v = data[i];
      if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument("Image: values must be finite in [0,1]");
    }
  }
};

// Per-pixel displacements, (2,H,W): channel 0 = u (x), channel 1 = v (y).
struct FlowField {
  Tensor data;

  FlowField() = default;
  FlowField(int height, int width) : data({2, height, width}) {}
  explicit FlowField(Tensor t) : data(std::move(t)) {
    if (data.rank() != 3 || data.dim(0) != 2)
      throw std::invalid_argument("FlowField: (2,H,W) required");
  }

  int height() const { return data.dim(1); }
  int width() const { return data.dim(2); }
  double& u(int y, int x) { return data.at(0, y, x); }
  double& v(int y, int x) { return data.at(1, y, x); }
  double u(int y, int x) const { return data.at(0, y, x); }
  double v(int y, int x) const { return data.at(1, y, x); }
};

struct Event {
  double t;  // seconds
  int x;
  int y;
  int p;  // +1 or -1
};

struct EventStream {
  std::vector<Event> events;  // non-decreasing timestamps
  int height = 0;
  int width = 0;
  double contrast = 0.15;  // log-intensity threshold C

  void validate() const {
    if (contrast <= 0.0) throw std::invalid_argument("EventStream: C > 0");
    double prev = -1e300;
    for (const Event& e : events) {
      if (e.t < prev)
        throw std::invalid_argument("EventStream: timestamps must be sorted");
      prev = e.t;
      if (e.x < 0 || e.x >= width || e.y < 0 || e.y >= height)
        throw std::invalid_argument("EventStream: event out of sensor bounds");
      if (e.p != 1 && e.p != -1)
        throw std::invalid_argument("EventStream: polarity must be +-1");
    }
  }
};

// One synthetic training sample: paired day/night frames, analytic ground
// truth and the simulated event stream.
struct SceneSample {
  std::string id;
  Image frame_t, frame_t1;  // daytime
  Image night_t, night_t1;
  FlowField gt_flow;     // t -> t+1
  Tensor gt_occlusion;   // (1,H,W) in {0,1}
  Tensor gt_illumination;  // (1,H,W) > 0, shared by both night frames
  EventStream events;
  std::uint64_t seed = 0;
  double t0 = 0.0, t1 = 0.1;  // event window endpoints
};

}  // namespace abda
