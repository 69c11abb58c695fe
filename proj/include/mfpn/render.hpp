#pragma once

#include <vector>

#include "mfpn/geometry.hpp"
#include "mfpn/image.hpp"
#include "mfpn/morphable.hpp"

namespace mfpn {

// Weak-perspective camera: p = (cx + scale*x, cy - scale*y), z kept for the
// depth test (larger z is closer to the viewer).
struct Projection {
  double scale = 1.0;
  double cx = 0.0, cy = 0.0;

  Vec2 project(const Vec3& v) const { return {cx + scale * v.x, cy - scale * v.y}; }
};

Projection default_projection(int image_size);

struct RenderResult {
  Image image;
  LabelMap labels;
  std::vector<double> depth;  // H*W, -inf where nothing was drawn
  std::vector<Vec2> landmarks_2d;
  std::vector<uint8_t> landmark_visible;
};

struct RenderOptions {
  // per-sample color tint multipliers
  double tint[3] = {1.0, 1.0, 1.0};
  bool shade = true;
};

// Rasterizes the deformed mesh with a z-buffer. Pixel labels come from the
// covering triangle's vertex parts via barycentric majority; landmark
// visibility is a depth test against the buffer (self-occlusion only).
RenderResult render(const MorphableModel& model, const std::vector<double>& coeffs,
                    const Pose& pose, int image_size, const RenderOptions& opts = {});

// Depth-only pass over explicit positions under an explicit camera; used by
// the UV module's visibility test.
std::vector<double> render_depth(const MorphableModel& model, const std::vector<Vec3>& positions,
                                 const Rot3& rot, const Projection& proj, int image_size);

inline double depth_background() { return -1e30; }

}  // namespace mfpn
