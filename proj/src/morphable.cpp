#include "mfpn/morphable.hpp"

#include <algorithm>
#include <cmath>

#include "mfpn/common.hpp"
#include "mfpn/rng.hpp"

namespace mfpn {

namespace {

constexpr double kThetaMax = 1.15;  // radians, left-right sweep
constexpr double kPhiMax = 1.0;     // radians, bottom-up sweep
constexpr int kGrid = 65;           // vertices per axis

double gauss(double x, double mu, double sigma) {
  const double d = (x - mu) / sigma;
  return std::exp(-0.5 * d * d);
}

// outward direction of the radial surface
Vec3 direction(double theta, double phi) {
  return {std::sin(theta) * std::cos(phi), std::sin(phi), std::cos(theta) * std::cos(phi)};
}

// head radius field: base sphere plus facial features, symmetric in theta
double radius(double theta, double phi) {
  const double a = std::abs(theta);
  double r = 1.0;
  r += 0.16 * gauss(theta, 0.0, 0.20) * gauss(phi, -0.05, 0.20);   // nose
  r += 0.035 * gauss(phi, 0.32, 0.10) * gauss(a, 0.30, 0.35);      // brow ridge
  r -= 0.045 * gauss(a, 0.32, 0.17) * gauss(phi, 0.175, 0.10);     // eye sockets
  r += 0.050 * gauss(theta, 0.0, 0.33) * gauss(phi, -0.33, 0.10);  // lips mound
  r += 0.055 * gauss(theta, 0.0, 0.28) * gauss(phi, -0.80, 0.18);  // chin
  r += 0.020 * gauss(a, 0.55, 0.25) * gauss(phi, -0.25, 0.25);     // cheeks
  return r;
}

struct Curve {
  uint8_t intended_part;
  int count68;
  bool closed;  // closed curves place points at t = i/n, open at i/(n-1)
  double (*theta)(double t);
  double (*phi)(double t);
};

// 68-point default layout: jaw, brows, nose bridge + base, eyes, outer and
// inner lips. Other landmark counts rescale these group sizes.
const std::vector<Curve>& landmark_curves() {
  static const std::vector<Curve> curves = {
      {kSkin, 17, false,
       [](double t) { return 0.85 * kThetaMax * std::cos(3.14159265358979 * (1.0 - t)); },
       [](double t) { return 0.05 - 0.90 * std::sin(3.14159265358979 * t); }},
      {kBrow, 5, false, [](double t) { return -(0.17 + 0.30 * t); },
       [](double t) { return 0.335 + 0.03 * std::sin(3.14159265358979 * t); }},
      {kBrow, 5, false, [](double t) { return 0.17 + 0.30 * t; },
       [](double t) { return 0.335 + 0.03 * std::sin(3.14159265358979 * t); }},
      {kNose, 4, false, [](double) { return 0.0; }, [](double t) { return 0.20 - 0.36 * t; }},
      {kNose, 5, false, [](double t) { return -0.12 + 0.24 * t; }, [](double) { return -0.155; }},
      {kEye, 6, true, [](double t) { return -0.32 + 0.135 * std::cos(6.2831853 * t); },
       [](double t) { return 0.175 + 0.065 * std::sin(6.2831853 * t); }},
      {kEye, 6, true, [](double t) { return 0.32 + 0.135 * std::cos(6.2831853 * t); },
       [](double t) { return 0.175 + 0.065 * std::sin(6.2831853 * t); }},
      {kUpperLip, 12, true, [](double t) { return 0.285 * std::cos(6.2831853 * t); },
       [](double t) { return -0.33 + 0.095 * std::sin(6.2831853 * t); }},
      {kMouthInterior, 8, true, [](double t) { return 0.19 * std::cos(6.2831853 * t); },
       [](double t) { return -0.33 + 0.042 * std::sin(6.2831853 * t); }},
  };
  return curves;
}

}  // namespace

const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names = {
      "background", "skin",      "brow",           "eye",  "nose",
      "upper_lip",  "lower_lip", "mouth_interior", "hair", "occlusion"};
  return names;
}

uint8_t MorphableModel::part_at(double theta, double phi) const {
  const double a = std::abs(theta);
  // hair: top band plus side panels
  if (phi >= 0.60) return kHair;
  if (a >= 1.03 && phi >= -0.10) return kHair;
  // brows
  if (std::abs(phi - 0.335) <= 0.045 && a >= 0.15 && a <= 0.50) return kBrow;
  // eyes
  {
    const double ex = (a - 0.32) / 0.145;
    const double ey = (phi - 0.175) / 0.075;
    if (ex * ex + ey * ey <= 1.0) return kEye;
  }
  // nose wedge
  if (phi >= -0.18 && phi <= 0.24) {
    const double halfwidth = 0.055 + 0.10 * (0.24 - phi) / 0.42;
    if (a <= halfwidth) return kNose;
  }
  // mouth: nested ellipses around (0, -0.33)
  {
    const double ox = theta / 0.30;
    const double oy = (phi + 0.33) / 0.105;
    const double ix = theta / 0.21;
    const double iy = (phi + 0.33) / 0.048;
    if (ix * ix + iy * iy <= 1.0) return kMouthInterior;
    if (ox * ox + oy * oy <= 1.0) return phi >= -0.33 ? kUpperLip : kLowerLip;
  }
  return kSkin;
}

void MorphableModel::albedo_at(double theta, double phi, double rgb[3]) const {
  static const double base[kNumClasses][3] = {
      {0.05, 0.05, 0.05},  // background (unused on surface)
      {0.87, 0.67, 0.53},  // skin
      {0.30, 0.20, 0.12},  // brow
      {0.93, 0.93, 0.90},  // eye sclera
      {0.84, 0.62, 0.48},  // nose
      {0.78, 0.40, 0.38},  // upper lip
      {0.72, 0.34, 0.34},  // lower lip
      {0.32, 0.12, 0.14},  // mouth interior
      {0.22, 0.15, 0.10},  // hair
      {0.50, 0.50, 0.50},  // occlusion (composited separately)
  };
  const uint8_t part = part_at(theta, phi);
  double r = base[part][0], g = base[part][1], b = base[part][2];
  if (part == kEye) {
    // iris disk
    const double a = std::abs(theta);
    const double dx = a - 0.32, dy = phi - 0.175;
    if (dx * dx + dy * dy <= 0.055 * 0.055) r = 0.18, g = 0.22, b = 0.30;
  }
  const double v = 1.0 + 0.06 * std::sin(2.1 * theta + tex_phase_[0]) *
                             std::sin(1.7 * phi + tex_phase_[1]) +
                   0.04 * std::sin(3.3 * theta + tex_phase_[2]) *
                       std::cos(2.9 * phi + tex_phase_[3]);
  rgb[0] = std::clamp(r * v, 0.0, 1.0);
  rgb[1] = std::clamp(g * v, 0.0, 1.0);
  rgb[2] = std::clamp(b * v, 0.0, 1.0);
}

std::vector<Vec3> MorphableModel::deformed(const std::vector<double>& coeffs) const {
  check(coeffs.size() <= bases.size(), "deformed: more coeffs than bases");
  std::vector<Vec3> out = mean_shape;
  for (size_t k = 0; k < coeffs.size(); ++k) {
    const double c = coeffs[k];
    if (c == 0.0) continue;
    for (size_t v = 0; v < out.size(); ++v) out[v] = out[v] + bases[k][v] * c;
  }
  return out;
}

MorphableModel build_model(size_t num_bases, size_t landmark_count, uint64_t seed) {
  check(num_bases >= 1, "build_model: need at least one basis");
  check(landmark_count >= 5, "build_model: need at least 5 landmarks");

  MorphableModel m;
  m.seed = seed;
  m.nu = m.nv = kGrid;
  const int nu = m.nu, nv = m.nv;
  const size_t nvert = static_cast<size_t>(nu) * nv;

  Rng rng(seed ^ 0xface0001ull);
  for (double& p : m.tex_phase_) p = rng.uniform(0.0, 6.2831853);

  m.mean_shape.resize(nvert);
  m.uv.resize(nvert);
  m.vertex_part.resize(nvert);
  m.vertex_theta.resize(nvert);
  m.vertex_phi.resize(nvert);
  m.sigma.resize(nvert);
  for (int iv = 0; iv < nv; ++iv) {
    for (int iu = 0; iu < nu; ++iu) {
      const int idx = m.vertex_index(iu, iv);
      const double u = static_cast<double>(iu) / (nu - 1);
      const double v = static_cast<double>(iv) / (nv - 1);
      const double theta = (2.0 * u - 1.0) * kThetaMax;
      const double phi = (2.0 * v - 1.0) * kPhiMax;
      m.vertex_theta[idx] = theta;
      m.vertex_phi[idx] = phi;
      m.mean_shape[idx] = direction(theta, phi) * radius(theta, phi);
      m.uv[idx] = {u, v};
      m.vertex_part[idx] = m.part_at(theta, phi);
      m.sigma[idx] = m.vertex_index(nu - 1 - iu, iv);
    }
  }

  // two CCW triangles per grid cell (viewed frontally, x right / y up)
  m.triangles.reserve(2 * (nu - 1) * (nv - 1));
  for (int iv = 0; iv + 1 < nv; ++iv) {
    for (int iu = 0; iu + 1 < nu; ++iu) {
      const int a = m.vertex_index(iu, iv);
      const int b = m.vertex_index(iu + 1, iv);
      const int c = m.vertex_index(iu + 1, iv + 1);
      const int d = m.vertex_index(iu, iv + 1);
      m.triangles.push_back({a, b, c});
      m.triangles.push_back({a, c, d});
    }
  }

  // smooth vertex normals from incident triangles on the mean shape
  m.vertex_normal.assign(nvert, Vec3{});
  for (const auto& tri : m.triangles) {
    const Vec3 n = cross(m.mean_shape[tri[1]] - m.mean_shape[tri[0]],
                         m.mean_shape[tri[2]] - m.mean_shape[tri[0]]);
    for (int k = 0; k < 3; ++k) m.vertex_normal[tri[k]] = m.vertex_normal[tri[k]] + n;
  }
  for (Vec3& n : m.vertex_normal) n = normalized(n);

  // deformation bases: width scale, chin length, nose size, then seeded
  // symmetric radial bumps
  m.bases.resize(num_bases);
  for (size_t k = 0; k < num_bases; ++k) {
    m.bases[k].resize(nvert);
    double theta0 = 0.0, phi0 = 0.0, st = 0.2, sp = 0.2, amp = 0.0;
    if (k >= 3) {
      theta0 = rng.uniform(0.1, 0.8);
      phi0 = rng.uniform(-0.8, 0.5);
      st = rng.uniform(0.15, 0.30);
      sp = rng.uniform(0.15, 0.30);
      amp = rng.uniform(0.02, 0.04);
    }
    for (size_t v = 0; v < nvert; ++v) {
      const double theta = m.vertex_theta[v];
      const double phi = m.vertex_phi[v];
      const double a = std::abs(theta);
      Vec3 d;
      switch (k) {
        case 0:
          d = {0.06 * m.mean_shape[v].x, 0.0, 0.0};
          break;
        case 1:
          d = direction(theta, phi) * (0.05 * gauss(theta, 0.0, 0.35) * gauss(phi, -0.78, 0.20));
          break;
        case 2:
          d = direction(theta, phi) * (0.04 * gauss(theta, 0.0, 0.22) * gauss(phi, -0.05, 0.18));
          break;
        default:
          d = direction(theta, phi) * (amp * gauss(a, theta0, st) * gauss(phi, phi0, sp));
          break;
      }
      m.bases[k][v] = d;
    }
  }

  // landmark group sizes: largest-remainder rescale of the 68-point layout
  const auto& curves = landmark_curves();
  std::vector<size_t> counts(curves.size(), 0);
  {
    std::vector<std::pair<double, size_t>> rema;
    size_t assigned = 0;
    for (size_t g = 0; g < curves.size(); ++g) {
      const double exact = static_cast<double>(landmark_count) * curves[g].count68 / 68.0;
      counts[g] = static_cast<size_t>(exact);
      assigned += counts[g];
      rema.push_back({exact - std::floor(exact), g});
    }
    std::stable_sort(rema.begin(), rema.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (size_t i = 0; assigned < landmark_count; ++i, ++assigned) counts[rema[i % rema.size()].second]++;
    while (assigned > landmark_count) {
      for (size_t g = curves.size(); g-- > 0 && assigned > landmark_count;) {
        if (counts[g] > 0) {
          counts[g]--;
          assigned--;
        }
      }
    }
  }

  std::vector<char> taken(nvert, 0);
  auto snap = [&](double theta, double phi) {
    int iu = static_cast<int>(std::lround((theta / kThetaMax + 1.0) * 0.5 * (nu - 1)));
    int iv = static_cast<int>(std::lround((phi / kPhiMax + 1.0) * 0.5 * (nv - 1)));
    iu = std::clamp(iu, 0, nu - 1);
    iv = std::clamp(iv, 0, nv - 1);
    for (int ring = 0; ring < nu; ++ring) {
      for (int dv = -ring; dv <= ring; ++dv) {
        for (int du = -ring; du <= ring; ++du) {
          if (std::max(std::abs(du), std::abs(dv)) != ring) continue;
          const int ju = iu + du, jv = iv + dv;
          if (ju < 0 || ju >= nu || jv < 0 || jv >= nv) continue;
          const int idx = m.vertex_index(ju, jv);
          if (!taken[idx]) {
            taken[idx] = 1;
            return idx;
          }
        }
      }
    }
    fail("build_model: grid exhausted while placing landmarks");
  };

  for (size_t g = 0; g < curves.size(); ++g) {
    for (size_t i = 0; i < counts[g]; ++i) {
      const double t = curves[g].closed
                           ? static_cast<double>(i) / counts[g]
                           : (counts[g] == 1 ? 0.5 : static_cast<double>(i) / (counts[g] - 1));
      const int idx = snap(curves[g].theta(t), curves[g].phi(t));
      m.landmark_vertices.push_back(idx);
      m.landmark_parts.push_back(m.vertex_part[idx]);
    }
  }

  return m;
}

}  // namespace mfpn
