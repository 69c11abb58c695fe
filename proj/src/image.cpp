#include "mfpn/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mfpn/common.hpp"

namespace mfpn {

Tensor Image::to_chw() const {
  Tensor t(Shape{3, static_cast<size_t>(h), static_cast<size_t>(w)});
  double* d = t.mutable_data();
  const size_t hw = static_cast<size_t>(h) * w;
  for (size_t i = 0; i < hw; ++i)
    for (size_t c = 0; c < 3; ++c) d[c * hw + i] = rgb[i * 3 + c];
  return t;
}

Image Image::from_chw(const Tensor& t) {
  check(t.rank() == 3 && t.dim(0) == 3, "from_chw: expected {3,H,W}");
  Image img(static_cast<int>(t.dim(1)), static_cast<int>(t.dim(2)));
  const size_t hw = t.dim(1) * t.dim(2);
  const double* d = t.data();
  for (size_t i = 0; i < hw; ++i)
    for (size_t c = 0; c < 3; ++c) img.rgb[i * 3 + c] = d[c * hw + i];
  return img;
}

size_t Mask::count() const {
  size_t n = 0;
  for (uint8_t v : on) n += v != 0;
  return n;
}

double quantize255(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return std::round(v * 255.0) / 255.0;
}

namespace {

void expect_header(std::istream& is, const std::string& path, const char* magic, int* h, int* w) {
  std::string m;
  is >> m;
  if (m != magic) fail_data(path + ": expected " + magic + " header, got '" + m + "'");
  auto next_int = [&](int* out) {
    // skip whitespace and '#' comments
    while (true) {
      int c = is.peek();
      if (c == '#') {
        std::string line;
        std::getline(is, line);
      } else if (std::isspace(c)) {
        is.get();
      } else {
        break;
      }
    }
    if (!(is >> *out)) fail_data(path + ": malformed header");
  };
  int maxval = 0;
  next_int(w);
  next_int(h);
  next_int(&maxval);
  if (maxval != 255) fail_data(path + ": maxval " + std::to_string(maxval) + ", expected 255");
  is.get();  // single whitespace before binary payload
}

}  // namespace

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail_data(path + ": cannot open for writing");
  os << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::vector<uint8_t> bytes(img.rgb.size());
  for (size_t i = 0; i < img.rgb.size(); ++i)
    bytes[i] = static_cast<uint8_t>(std::lround(std::clamp(img.rgb[i], 0.0, 1.0) * 255.0));
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) fail_data(path + ": write failed");
}

Image read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail_data(path + ": cannot open");
  int h = 0, w = 0;
  expect_header(is, path, "P6", &h, &w);
  Image img(h, w);
  std::vector<uint8_t> bytes(img.rgb.size());
  if (!is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size())))
    fail_data(path + ": truncated pixel data");
  for (size_t i = 0; i < bytes.size(); ++i) img.rgb[i] = bytes[i] / 255.0;
  return img;
}

void write_pgm(const std::string& path, const std::vector<uint8_t>& gray, int h, int w) {
  check(gray.size() == static_cast<size_t>(h) * w, "write_pgm: size mismatch");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail_data(path + ": cannot open for writing");
  os << "P5\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
  if (!os) fail_data(path + ": write failed");
}

void write_pgm(const std::string& path, const LabelMap& labels) {
  write_pgm(path, labels.ids, labels.h, labels.w);
}

void write_pgm(const std::string& path, const Mask& mask) {
  std::vector<uint8_t> bytes(mask.on.size());
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.on[i] ? 255 : 0;
  write_pgm(path, bytes, mask.h, mask.w);
}

LabelMap read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail_data(path + ": cannot open");
  int h = 0, w = 0;
  expect_header(is, path, "P5", &h, &w);
  LabelMap m(h, w);
  if (!is.read(reinterpret_cast<char*>(m.ids.data()), static_cast<std::streamsize>(m.ids.size())))
    fail_data(path + ": truncated pixel data");
  return m;
}

void draw_cross(Image& img, double x, double y, double r, double g, double b) {
  const int cx = static_cast<int>(std::lround(x));
  const int cy = static_cast<int>(std::lround(y));
  for (int d = -2; d <= 2; ++d) {
    if (img.inside(cy, cx + d)) {
      double* p = img.px(cy, cx + d);
      p[0] = r, p[1] = g, p[2] = b;
    }
    if (img.inside(cy + d, cx)) {
      double* p = img.px(cy + d, cx);
      p[0] = r, p[1] = g, p[2] = b;
    }
  }
}

Image colorize_labels(const LabelMap& labels, size_t num_classes) {
  // fixed palette, distinct hues per class id
  static const double palette[][3] = {
      {0.05, 0.05, 0.05}, {0.85, 0.66, 0.52}, {0.45, 0.30, 0.15}, {0.95, 0.95, 0.30},
      {0.30, 0.75, 0.35}, {0.90, 0.35, 0.30}, {0.60, 0.30, 0.70}, {0.25, 0.55, 0.95},
      {0.55, 0.35, 0.20}, {0.95, 0.55, 0.90}, {0.20, 0.85, 0.85}, {0.75, 0.75, 0.75},
  };
  const size_t pn = sizeof(palette) / sizeof(palette[0]);
  Image img(labels.h, labels.w);
  for (int y = 0; y < labels.h; ++y)
    for (int x = 0; x < labels.w; ++x) {
      const size_t id = std::min<size_t>(labels.at(y, x), num_classes);
      const double* c = palette[id % pn];
      double* p = img.px(y, x);
      p[0] = quantize255(c[0]);
      p[1] = quantize255(c[1]);
      p[2] = quantize255(c[2]);
    }
  return img;
}

}  // namespace mfpn
