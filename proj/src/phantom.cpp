#include "wemf/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "wemf/error.hpp"
#include "wemf/rng.hpp"

namespace wemf {

void PhantomConfig::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[static_cast<size_t>(a)] < 2)
      throw UsageError("phantom: dims must be at least 2 voxels per axis");
    if (!(spacing_mm[static_cast<size_t>(a)] > 0.0))
      throw UsageError("phantom: spacing must be positive");
  }
  if (!(min_radius_mm > 0.0) || min_radius_mm > max_radius_mm)
    throw UsageError("phantom: radius range must be positive and ordered");
  double min_extent = 1e300;
  for (int a = 0; a < 3; ++a)
    min_extent = std::min(min_extent, static_cast<double>(dims[static_cast<size_t>(a)]) *
                                          spacing_mm[static_cast<size_t>(a)]);
  if (max_radius_mm >= min_extent)
    throw UsageError("phantom: lesion radius exceeds volume extent");
  if (min_lesions < 1 || min_lesions > max_lesions)
    throw UsageError("phantom: lesion count range must be ordered and >= 1");
  if (cyst_hu_lo < 0.0 || cyst_hu_hi > 20.0 || cyst_hu_lo > cyst_hu_hi)
    throw UsageError("phantom: cyst interior range must lie inside [0, 20]");
  if (noise_std < 0.0) throw UsageError("phantom: noise std must be >= 0");
  if (air_pockets < 0) throw UsageError("phantom: air pocket count < 0");
}

namespace {

struct Sphere {
  double cx, cy, cz, r;
};

struct Lesion {
  double cx, cy, cz;     // mm
  double ax, ay, az;     // semi-axes, mm
  int label;             // 1 tumor, 2 cyst
  double base_hu;
};

// Coarse lattice of normals, trilinearly interpolated: low-frequency texture.
struct SpeckleField {
  int64_t gx, gy, gz;
  double step_mm;
  std::vector<double> values;

  double sample(double x, double y, double z) const {
    const double fx = std::clamp(x / step_mm, 0.0, static_cast<double>(gx - 1) - 1e-9);
    const double fy = std::clamp(y / step_mm, 0.0, static_cast<double>(gy - 1) - 1e-9);
    const double fz = std::clamp(z / step_mm, 0.0, static_cast<double>(gz - 1) - 1e-9);
    const int64_t ix = static_cast<int64_t>(fx), iy = static_cast<int64_t>(fy),
                  iz = static_cast<int64_t>(fz);
    const double tx = fx - static_cast<double>(ix),
                 ty = fy - static_cast<double>(iy),
                 tz = fz - static_cast<double>(iz);
    auto at = [&](int64_t a, int64_t b, int64_t c) {
      return values[static_cast<size_t>((c * gy + b) * gx + a)];
    };
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
          acc += at(ix + dx, iy + dy, iz + dz) * (dx ? tx : 1.0 - tx) *
                 (dy ? ty : 1.0 - ty) * (dz ? tz : 1.0 - tz);
    return acc;
  }
};

}  // namespace

std::pair<HounsfieldVolume, LabelVolume> generate_phantom(
    const PhantomConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  const int64_t nx = cfg.dims[0], ny = cfg.dims[1], nz = cfg.dims[2];
  const double sx = cfg.spacing_mm[0], sy = cfg.spacing_mm[1],
               sz = cfg.spacing_mm[2];
  const double ex = static_cast<double>(nx) * sx,
               ey = static_cast<double>(ny) * sy,
               ez = static_cast<double>(nz) * sz;
  const double bcx = 0.5 * ex, bcy = 0.5 * ey;
  const double bax = 0.44 * ex, bay = 0.44 * ey;  // body ellipse semi-axes

  auto in_body = [&](double x, double y) {
    const double u = (x - bcx) / bax, v = (y - bcy) / bay;
    return u * u + v * v <= 1.0;
  };

  // geometry draws come first, in a fixed order, so the per-voxel texture
  // pass below never shifts the stream consumed by placement
  const int64_t fat_count = rng.uniform_int(3, 6);
  std::vector<Sphere> fat_blobs;
  for (int64_t i = 0; i < fat_count; ++i) {
    Sphere s;
    s.cx = rng.uniform(bcx - bax, bcx + bax);
    s.cy = rng.uniform(bcy - bay, bcy + bay);
    s.cz = rng.uniform(0.0, ez);
    s.r = rng.uniform(3.0, 8.0);
    fat_blobs.push_back(s);
  }

  double slab_y0 = -1.0, slab_y1 = -1.0;
  if (cfg.bone_slab) {
    const double frac = rng.uniform(0.62, 0.72);
    const double thickness = rng.uniform(4.0, 8.0);
    slab_y0 = frac * ey;
    slab_y1 = slab_y0 + thickness;
  }

  std::vector<Sphere> pockets;
  for (int64_t i = 0; i < cfg.air_pockets; ++i) {
    Sphere s;
    s.cx = rng.uniform(bcx - 0.5 * bax, bcx + 0.5 * bax);
    s.cy = rng.uniform(bcy - 0.5 * bay, bcy + 0.4 * bay);
    s.cz = rng.uniform(0.0, ez);
    s.r = rng.uniform(2.0, 4.0);
    pockets.push_back(s);
  }

  SpeckleField speckle;
  speckle.step_mm = 8.0;
  speckle.gx = static_cast<int64_t>(ex / speckle.step_mm) + 2;
  speckle.gy = static_cast<int64_t>(ey / speckle.step_mm) + 2;
  speckle.gz = static_cast<int64_t>(ez / speckle.step_mm) + 2;
  speckle.values.resize(
      static_cast<size_t>(speckle.gx * speckle.gy * speckle.gz));
  for (double& v : speckle.values) v = rng.normal();

  const int64_t lesion_count =
      rng.uniform_int(cfg.min_lesions, cfg.max_lesions);
  std::vector<Lesion> lesions;
  for (int64_t i = 0; i < lesion_count; ++i) {
    Lesion les;
    les.label = cfg.lesion_class == LesionClass::kTumor   ? 1
                : cfg.lesion_class == LesionClass::kCyst  ? 2
                : static_cast<int>(rng.uniform_int(1, 2));
    const double base_r = rng.uniform(cfg.min_radius_mm, cfg.max_radius_mm);
    les.ax = base_r * rng.uniform(0.75, 0.95);
    les.ay = base_r * rng.uniform(0.75, 0.95);
    les.az = base_r * rng.uniform(0.75, 0.95);
    les.base_hu = les.label == 2
                      ? rng.uniform(cfg.cyst_hu_lo, cfg.cyst_hu_hi)
                      : rng.normal(cfg.tumor.mean, cfg.tumor.std);

    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      les.cx = rng.uniform(bcx - bax, bcx + bax);
      les.cy = rng.uniform(bcy - bay, bcy + bay);
      les.cz = rng.uniform(0.0, ez);
      // the whole ellipsoid must sit inside the body in-plane and the
      // volume in z, clear of bone, pockets, and earlier lesions
      const double rmax = std::max({les.ax, les.ay, les.az});
      const double bu = (les.cx - bcx) / (bax - les.ax),
                   bv = (les.cy - bcy) / (bay - les.ay);
      if (bax <= les.ax || bay <= les.ay) break;
      if (bu * bu + bv * bv > 1.0) continue;
      if (les.cz - les.az < 0.0 || les.cz + les.az > ez) continue;
      if (cfg.bone_slab && les.cy + rmax > slab_y0 - 1.0 &&
          les.cy - rmax < slab_y1 + 1.0)
        continue;
      bool clear = true;
      for (const Sphere& p : pockets) {
        const double dx = les.cx - p.cx, dy = les.cy - p.cy,
                     dz = les.cz - p.cz;
        if (std::sqrt(dx * dx + dy * dy + dz * dz) < rmax + p.r + 1.0)
          clear = false;
      }
      for (const Lesion& other : lesions) {
        const double dx = les.cx - other.cx, dy = les.cy - other.cy,
                     dz = les.cz - other.cz;
        const double omax = std::max({other.ax, other.ay, other.az});
        if (std::sqrt(dx * dx + dy * dy + dz * dz) < rmax + omax + 2.0)
          clear = false;
      }
      placed = clear;
    }
    if (!placed)
      throw DataError("phantom: lesion placement failed after bounded retries");
    lesions.push_back(les);
  }

  // per-voxel base tissue, x-fastest
  const int64_t voxels = nx * ny * nz;
  std::vector<double> hu(static_cast<size_t>(voxels));
  std::vector<uint8_t> labels(static_cast<size_t>(voxels), 0);
  for (int64_t z = 0; z < nz; ++z) {
    for (int64_t y = 0; y < ny; ++y) {
      for (int64_t x = 0; x < nx; ++x) {
        const size_t idx = static_cast<size_t>((z * ny + y) * nx + x);
        const double px = (static_cast<double>(x) + 0.5) * sx;
        const double py = (static_cast<double>(y) + 0.5) * sy;
        const double pz = (static_cast<double>(z) + 0.5) * sz;
        if (!in_body(px, py)) {
          hu[idx] = cfg.air_hu;
          continue;
        }
        bool pocket = false;
        for (const Sphere& p : pockets) {
          const double dx = px - p.cx, dy = py - p.cy, dz = pz - p.cz;
          if (dx * dx + dy * dy + dz * dz <= p.r * p.r) pocket = true;
        }
        if (pocket) {
          hu[idx] = cfg.air_hu;
          continue;
        }
        if (cfg.bone_slab && py >= slab_y0 && py < slab_y1) {
          hu[idx] = rng.normal(cfg.bone.mean, cfg.bone.std);
          continue;
        }
        bool fat = false;
        for (const Sphere& f : fat_blobs) {
          const double dx = px - f.cx, dy = py - f.cy, dz = pz - f.cz;
          if (dx * dx + dy * dy + dz * dz <= f.r * f.r) fat = true;
        }
        hu[idx] = fat ? rng.normal(cfg.fat.mean, cfg.fat.std)
                      : rng.normal(cfg.muscle.mean, cfg.muscle.std);
      }
    }
  }

  // lesion interiors and their unlabeled blend shells
  for (const Lesion& les : lesions) {
    const int64_t x0 = std::max<int64_t>(
        0, static_cast<int64_t>((les.cx - 1.3 * les.ax) / sx) - 1);
    const int64_t x1 = std::min<int64_t>(
        nx - 1, static_cast<int64_t>((les.cx + 1.3 * les.ax) / sx) + 1);
    const int64_t y0 = std::max<int64_t>(
        0, static_cast<int64_t>((les.cy - 1.3 * les.ay) / sy) - 1);
    const int64_t y1 = std::min<int64_t>(
        ny - 1, static_cast<int64_t>((les.cy + 1.3 * les.ay) / sy) + 1);
    const int64_t z0 = std::max<int64_t>(
        0, static_cast<int64_t>((les.cz - 1.3 * les.az) / sz) - 1);
    const int64_t z1 = std::min<int64_t>(
        nz - 1, static_cast<int64_t>((les.cz + 1.3 * les.az) / sz) + 1);
    for (int64_t z = z0; z <= z1; ++z) {
      for (int64_t y = y0; y <= y1; ++y) {
        for (int64_t x = x0; x <= x1; ++x) {
          const size_t idx = static_cast<size_t>((z * ny + y) * nx + x);
          const double px = (static_cast<double>(x) + 0.5) * sx;
          const double py = (static_cast<double>(y) + 0.5) * sy;
          const double pz = (static_cast<double>(z) + 0.5) * sz;
          const double u = (px - les.cx) / les.ax, v = (py - les.cy) / les.ay,
                       w = (pz - les.cz) / les.az;
          const double r = std::sqrt(u * u + v * v + w * w);
          if (r <= 1.0) {
            double value = les.base_hu;
            if (les.label == 1)
              value += cfg.tumor_speckle_amp * speckle.sample(px, py, pz);
            hu[idx] = value;
            labels[idx] = static_cast<uint8_t>(les.label);
          } else if (r <= 1.3 && labels[idx] == 0) {
            const double alpha = (1.3 - r) / 0.3;
            hu[idx] = alpha * les.base_hu + (1.0 - alpha) * hu[idx];
          }
        }
      }
    }
  }

  HounsfieldVolume out;
  out.dims = cfg.dims;
  out.spacing_mm = cfg.spacing_mm;
  out.hu.resize(static_cast<size_t>(voxels));
  for (int64_t i = 0; i < voxels; ++i) {
    double v = hu[static_cast<size_t>(i)];
    if (cfg.noise_std > 0.0) v += rng.normal(0.0, cfg.noise_std);
    v = std::round(v);
    v = std::clamp(v, -1024.0, 3071.0);
    out.hu[static_cast<size_t>(i)] = static_cast<int16_t>(v);
  }

  LabelVolume lab;
  lab.dims = cfg.dims;
  lab.spacing_mm = cfg.spacing_mm;
  lab.labels = std::move(labels);
  return {std::move(out), std::move(lab)};
}

}  // namespace wemf
