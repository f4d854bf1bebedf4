#pragma once

#include <string>

#include "dv/codec.hpp"

namespace dv {

// Video file format: magic "DVID", little-endian u32 T, H, W, C, then
// T*H*W*C float32 values in frame-major order.
void write_dvid(const std::string& path, const VideoTensor& video);
VideoTensor read_dvid(const std::string& path);

// 8-bit RGB PNG; values are quantized with round(v * 255) on write and
// mapped back as k / 255 on read.
void write_png(const std::string& path, const Tensor& image);  // [H,W,3]
Tensor read_png(const std::string& path);

// All frames tiled horizontally with a separator strip.
void write_frame_grid_png(const std::string& path, const VideoTensor& video, int separator = 2);

// Loads a condition image from .png or .dvid (first frame).
Tensor read_image_any(const std::string& path);

}  // namespace dv
