#include "abda/dataset_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace abda::dataset {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr float kFloMagic = 202021.25f;

[[noreturn]] void io_fail(const fs::path& path, const std::string& what) {
  throw IoError(what + ": " + path.string());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) io_fail(path, "cannot open for writing");
  return f;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) io_fail(path, "cannot open for reading");
  return f;
}

}  // namespace

void write_flo(const FlowField& flow, const fs::path& path) {
  std::ofstream f = open_out(path);
  std::int32_t w = flow.width(), h = flow.height();
  f.write(reinterpret_cast<const char*>(&kFloMagic), 4);
  f.write(reinterpret_cast<const char*>(&w), 4);
  f.write(reinterpret_cast<const char*>(&h), 4);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float u = static_cast<float>(flow.u(y, x));
      float v = static_cast<float>(flow.v(y, x));
      f.write(reinterpret_cast<const char*>(&u), 4);
      f.write(reinterpret_cast<const char*>(&v), 4);
    }
  if (!f) io_fail(path, "write failed");
}

FlowField read_flo(const fs::path& path) {
  std::ifstream f = open_in(path);
  float magic = 0.0f;
  std::int32_t w = 0, h = 0;
  f.read(reinterpret_cast<char*>(&magic), 4);
  f.read(reinterpret_cast<char*>(&w), 4);
  f.read(reinterpret_cast<char*>(&h), 4);
  if (!f || magic != kFloMagic || w <= 0 || h <= 0)
    io_fail(path, "corrupt .flo header");
  FlowField flow(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float u, v;
      f.read(reinterpret_cast<char*>(&u), 4);
      f.read(reinterpret_cast<char*>(&v), 4);
      flow.u(y, x) = u;
      flow.v(y, x) = v;
    }
  if (!f) io_fail(path, "truncated .flo");
  return flow;
}

void write_png16(const Image& image, const fs::path& path) {
  int H = image.height(), W = image.width(), C = image.channels();
  cv::Mat m(H, W, C == 1 ? CV_16UC1 : CV_16UC3);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (C == 1) {
        m.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(
            std::lround(image.data.at(0, y, x) * 65535.0));
      } else {
        cv::Vec3w px;  // BGR on disk
        for (int c = 0; c < 3; ++c)
          px[2 - c] = static_cast<std::uint16_t>(
              std::lround(image.data.at(c, y, x) * 65535.0));
        m.at<cv::Vec3w>(y, x) = px;
      }
    }
  if (!cv::imwrite(path.string(), m)) io_fail(path, "PNG write failed");
}

Image read_png16(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) io_fail(path, "PNG read failed");
  if (m.depth() != CV_16U) io_fail(path, "expected 16-bit PNG");
  int C = m.channels() == 1 ? 1 : 3;
  Image img(C, m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      if (C == 1) {
        img.data.at(0, y, x) = m.at<std::uint16_t>(y, x) / 65535.0;
      } else {
        cv::Vec3w px = m.at<cv::Vec3w>(y, x);
        for (int c = 0; c < 3; ++c) img.data.at(c, y, x) = px[2 - c] / 65535.0;
      }
    }
  return img;
}

void write_mask_png(const Tensor& mask, const fs::path& path) {
  int H = mask.dim(1), W = mask.dim(2);
  cv::Mat m(H, W, CV_8UC1);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      m.at<std::uint8_t>(y, x) = mask.at(0, y, x) > 0.5 ? 255 : 0;
  if (!cv::imwrite(path.string(), m)) io_fail(path, "PNG write failed");
}

Tensor read_mask_png(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) io_fail(path, "PNG read failed");
  Tensor mask({1, m.rows, m.cols});
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x)
      mask.at(0, y, x) = m.at<std::uint8_t>(y, x) >= 128 ? 1.0 : 0.0;
  return mask;
}

void write_map_png16(const Tensor& map, double scale, const fs::path& path) {
  int H = map.dim(1), W = map.dim(2);
  cv::Mat m(H, W, CV_16UC1);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double v = std::min(std::max(map.at(0, y, x) * scale, 0.0), 1.0);
      m.at<std::uint16_t>(y, x) =
          static_cast<std::uint16_t>(std::lround(v * 65535.0));
    }
  if (!cv::imwrite(path.string(), m)) io_fail(path, "PNG write failed");
}

void write_float_map(const Tensor& map, const fs::path& path) {
  std::ofstream f = open_out(path);
  std::int32_t h = map.dim(1), w = map.dim(2);
  f.write(reinterpret_cast<const char*>(&h), 4);
  f.write(reinterpret_cast<const char*>(&w), 4);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float v = static_cast<float>(map.at(0, y, x));
      f.write(reinterpret_cast<const char*>(&v), 4);
    }
  if (!f) io_fail(path, "write failed");
}

Tensor read_float_map(const fs::path& path) {
  std::ifstream f = open_in(path);
  std::int32_t h = 0, w = 0;
  f.read(reinterpret_cast<char*>(&h), 4);
  f.read(reinterpret_cast<char*>(&w), 4);
  if (!f || h <= 0 || w <= 0) io_fail(path, "corrupt float map header");
  Tensor map({1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float v;
      f.read(reinterpret_cast<char*>(&v), 4);
      map.at(0, y, x) = v;
    }
  if (!f) io_fail(path, "truncated float map");
  return map;
}

void write_events_csv(const EventStream& events, const fs::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) io_fail(path, "cannot open for writing");
  std::fputs("t,x,y,p\n", f);
  for (const Event& e : events.events)
    std::fprintf(f, "%.9f,%d,%d,%d\n", e.t, e.x, e.y, e.p);
  if (std::fclose(f) != 0) io_fail(path, "write failed");
}

EventStream read_events_csv(const fs::path& path, int height, int width,
                            double contrast) {
  std::ifstream f = open_in(path);
  std::string line;
  if (!std::getline(f, line) || line.rfind("t,x,y,p", 0) != 0)
    io_fail(path, "bad events.csv header");
  EventStream es;
  es.height = height;
  es.width = width;
  es.contrast = contrast;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    Event e;
    if (std::sscanf(line.c_str(), "%lf,%d,%d,%d", &e.t, &e.x, &e.y, &e.p) != 4)
      io_fail(path, "bad events.csv row");
    es.events.push_back(e);
  }
  es.validate();
  return es;
}

void write_dataset(const std::vector<SceneSample>& samples, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) io_fail(dir, "cannot create directory");

  std::set<std::string> seen;
  for (const SceneSample& s : samples) {
    if (s.id.empty() || s.id.find('/') != std::string::npos)
      throw std::invalid_argument("write_dataset: sample id must be a non-empty name");
    if (!seen.insert(s.id).second)
      throw std::invalid_argument("write_dataset: duplicate sample id " + s.id);
  }

  json index;
  index["version"] = 1;
  index["samples"] = json::array();
  for (const SceneSample& s : samples) {
    fs::path sdir = dir / s.id;
    fs::create_directories(sdir, ec);
    if (ec) io_fail(sdir, "cannot create sample directory");
    write_png16(s.frame_t, sdir / "frame_t.png");
    write_png16(s.frame_t1, sdir / "frame_t1.png");
    write_png16(s.night_t, sdir / "night_t.png");
    write_png16(s.night_t1, sdir / "night_t1.png");
    write_flo(s.gt_flow, sdir / "flow.flo");
    write_mask_png(s.gt_occlusion, sdir / "occ.png");
    write_float_map(s.gt_illumination, sdir / "illum.bin");
    write_events_csv(s.events, sdir / "events.csv");
    index["samples"].push_back({{"id", s.id},
                                {"height", s.frame_t.height()},
                                {"width", s.frame_t.width()},
                                {"contrast", s.events.contrast},
                                {"seed", s.seed},
                                {"t0", s.t0},
                                {"t1", s.t1}});
  }
  std::ofstream f = open_out(dir / "index.json");
  f << index.dump(2) << "\n";
  if (!f) io_fail(dir / "index.json", "write failed");
}

std::vector<SceneSample> read_dataset(const fs::path& dir) {
  fs::path ipath = dir / "index.json";
  std::ifstream f(ipath);
  if (!f) io_fail(ipath, "missing index");
  json index;
  try {
    f >> index;
  } catch (const json::exception& e) {
    io_fail(ipath, std::string("corrupt index: ") + e.what());
  }
  std::vector<SceneSample> samples;
  for (const json& j : index.at("samples")) {
    SceneSample s;
    s.id = j.at("id").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.t0 = j.at("t0").get<double>();
    s.t1 = j.at("t1").get<double>();
    int h = j.at("height").get<int>();
    int w = j.at("width").get<int>();
    double c = j.at("contrast").get<double>();
    fs::path sdir = dir / s.id;
    s.frame_t = read_png16(sdir / "frame_t.png");
    s.frame_t1 = read_png16(sdir / "frame_t1.png");
    s.night_t = read_png16(sdir / "night_t.png");
    s.night_t1 = read_png16(sdir / "night_t1.png");
    s.gt_flow = read_flo(sdir / "flow.flo");
    s.gt_occlusion = read_mask_png(sdir / "occ.png");
    s.gt_illumination = read_float_map(sdir / "illum.bin");
    s.events = read_events_csv(sdir / "events.csv", h, w, c);
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace abda::dataset
