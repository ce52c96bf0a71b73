#pragma once

#include <string>
#include <vector>

#include "hmjnd/tensor.hpp"

namespace hmjnd {

/// Single- or three-channel raster of intensities in [0,1], row-major with
/// interleaved channels.
struct ImagePlane {
  int width = 0, height = 0, channels = 1;
  std::vector<double> data;

  static ImagePlane make(int w, int h, int c, double fill = 0.0);
  bool empty() const { return data.empty(); }
  double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool same_dims(const ImagePlane& o) const {
    return width == o.width && height == o.height;
  }
};

/// Per-pixel visibility-threshold magnitudes (>= 0, [0,1] intensity scale),
/// same spatial size as the image it was derived from.
struct JndMap {
  int width = 0, height = 0;
  std::vector<double> thresholds;

  static JndMap make(int w, int h, double fill = 0.0);
  double at(int x, int y) const { return thresholds[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return thresholds[static_cast<std::size_t>(y) * width + x]; }
};

/// Loads an 8-bit binary PGM (P5) or PPM (P6). Values are divided by 255.
/// Malformed input throws with the offending byte offset in the message.
ImagePlane load_image(const std::string& path);

/// Writes 8-bit PGM/PPM depending on channel count; quantizes round-half-up.
void save_image(const ImagePlane& plane, const std::string& path);

/// ITU-R BT.601 luma of an RGB plane (identity on single-channel input).
ImagePlane luma_of(const ImagePlane& plane);

Tensor plane_to_tensor(const ImagePlane& plane);     // (1, C, H, W) leaf
ImagePlane tensor_to_plane(const Tensor& t);         // inverse, clamps to [0,1]

}  // namespace hmjnd
