#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfpn/tensor.hpp"

namespace mfpn {

// Interleaved H x W x 3 image with values in [0,1]. Rendered and loaded
// images always hold exact multiples of 1/255 so PPM round trips are exact.
struct Image {
  int h = 0, w = 0;
  std::vector<double> rgb;  // (y, x, c)

  Image() = default;
  Image(int h_, int w_) : h(h_), w(w_), rgb(static_cast<size_t>(h_) * w_ * 3, 0.0) {}

  double* px(int y, int x) { return rgb.data() + (static_cast<size_t>(y) * w + x) * 3; }
  const double* px(int y, int x) const {
    return rgb.data() + (static_cast<size_t>(y) * w + x) * 3;
  }
  bool inside(int y, int x) const { return y >= 0 && y < h && x >= 0 && x < w; }

  Tensor to_chw() const;                 // {3,H,W}
  static Image from_chw(const Tensor& t);
};

struct LabelMap {
  int h = 0, w = 0;
  std::vector<uint8_t> ids;  // (y, x)

  LabelMap() = default;
  LabelMap(int h_, int w_, uint8_t fill = 0)
      : h(h_), w(w_), ids(static_cast<size_t>(h_) * w_, fill) {}

  uint8_t& at(int y, int x) { return ids[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int y, int x) const { return ids[static_cast<size_t>(y) * w + x]; }
  bool inside(int y, int x) const { return y >= 0 && y < h && x >= 0 && x < w; }
};

struct Mask {
  int h = 0, w = 0;
  std::vector<uint8_t> on;  // 0/1

  Mask() = default;
  Mask(int h_, int w_) : h(h_), w(w_), on(static_cast<size_t>(h_) * w_, 0) {}

  uint8_t& at(int y, int x) { return on[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int y, int x) const { return on[static_cast<size_t>(y) * w + x]; }
  size_t count() const;
  bool empty_mask() const { return count() == 0; }
};

double quantize255(double v);  // clamp to [0,1], snap to n/255

void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);
void write_pgm(const std::string& path, const std::vector<uint8_t>& gray, int h, int w);
void write_pgm(const std::string& path, const LabelMap& labels);
void write_pgm(const std::string& path, const Mask& mask);  // 0 / 255
LabelMap read_pgm(const std::string& path);

// simple overlay helpers for demo output
void draw_cross(Image& img, double x, double y, double r, double g, double b);
Image colorize_labels(const LabelMap& labels, size_t num_classes);

}  // namespace mfpn
