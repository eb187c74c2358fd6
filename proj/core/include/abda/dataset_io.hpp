#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "abda/types.hpp"

namespace abda::dataset {

// On-disk layout:
//   <dir>/index.json                 ids, sizes, contrast, seeds, windows
//   <dir>/<id>/frame_t.png           16-bit PNG
//   <dir>/<id>/frame_t1.png
//   <dir>/<id>/night_t.png
//   <dir>/<id>/night_t1.png
//   <dir>/<id>/flow.flo              Middlebury .flo (float 202021.25, W, H)
//   <dir>/<id>/occ.png               8-bit, 0/255
//   <dir>/<id>/illum.bin             int32 H, int32 W, float32 row-major
//   <dir>/<id>/events.csv            header t,x,y,p; t with 9 decimals

void write_dataset(const std::vector<SceneSample>& samples,
                   const std::filesystem::path& dir);
std::vector<SceneSample> read_dataset(const std::filesystem::path& dir);

// individual formats, also used by the CLI
void write_flo(const FlowField& flow, const std::filesystem::path& path);
FlowField read_flo(const std::filesystem::path& path);

void write_png16(const Image& image, const std::filesystem::path& path);
Image read_png16(const std::filesystem::path& path);

void write_mask_png(const Tensor& mask, const std::filesystem::path& path);
Tensor read_mask_png(const std::filesystem::path& path);

// (1,H,W) float map scaled by `scale` into the 16-bit range
void write_map_png16(const Tensor& map, double scale,
                     const std::filesystem::path& path);

void write_float_map(const Tensor& map, const std::filesystem::path& path);
Tensor read_float_map(const std::filesystem::path& path);

void write_events_csv(const EventStream& events,
                      const std::filesystem::path& path);
EventStream read_events_csv(const std::filesystem::path& path, int height,
                            int width, double contrast);

}  // namespace abda::dataset
