#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mfpn/geometry.hpp"

namespace mfpn {

// Fixed desk-scale class scheme; the occlusion class is always last.
enum ClassId : uint8_t {
  kBackground = 0,
  kSkin = 1,
  kBrow = 2,
  kEye = 3,
  kNose = 4,
  kUpperLip = 5,
  kLowerLip = 6,
  kMouthInterior = 7,
  kHair = 8,
  kOcclusion = 9,
};

inline constexpr size_t kNumClasses = 10;
const std::vector<std::string>& class_names();

// Procedural head: a radial surface r(theta, phi) sampled on a regular
// (theta, phi) grid. theta sweeps left-right, phi bottom-up. The grid makes
// the UV map a regular lattice (injective, mirror-symmetric) and the mesh
// hole-free by construction.
class MorphableModel {
 public:
  // grid resolution
  int nu = 0, nv = 0;

  std::vector<Vec3> mean_shape;             // V, unit head radius
  std::vector<std::vector<Vec3>> bases;     // K deformation fields of V
  std::vector<std::array<int, 3>> triangles;
  std::vector<Vec2> uv;                     // V, in [0,1]^2
  std::vector<uint8_t> vertex_part;         // V
  std::vector<Vec3> vertex_normal;          // V, on the mean shape
  std::vector<double> vertex_theta, vertex_phi;
  std::vector<int> landmark_vertices;       // L
  std::vector<uint8_t> landmark_parts;      // L
  std::vector<int> sigma;                   // left/right vertex involution
  uint64_t seed = 0;

  size_t num_vertices() const { return mean_shape.size(); }
  size_t num_landmarks() const { return landmark_vertices.size(); }
  size_t num_bases() const { return bases.size(); }

  int vertex_index(int iu, int iv) const { return iv * nu + iu; }

  // mean + sum_k coeffs[k] * basis_k
  std::vector<Vec3> deformed(const std::vector<double>& coeffs) const;

  // surface appearance, a function of the surface parameterization only
  uint8_t part_at(double theta, double phi) const;
  void albedo_at(double theta, double phi, double rgb[3]) const;

 private:
  double tex_phase_[4] = {0, 0, 0, 0};
  friend MorphableModel build_model(size_t num_bases, size_t landmark_count, uint64_t seed);
};

MorphableModel build_model(size_t num_bases, size_t landmark_count, uint64_t seed);

}  // namespace mfpn
