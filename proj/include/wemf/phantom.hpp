#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "wemf/nrrd.hpp"

namespace wemf {

enum class LesionClass { kTumor, kCyst, kMixed };

struct GaussianHu {
  double mean = 0.0;
  double std = 1.0;
};

struct PhantomConfig {
  std::array<int64_t, 3> dims{64, 64, 8};
  std::array<double, 3> spacing_mm{1.0, 1.0, 2.0};
  LesionClass lesion_class = LesionClass::kMixed;
  int64_t min_lesions = 1, max_lesions = 3;
  double min_radius_mm = 3.0, max_radius_mm = 6.0;
  GaussianHu fat{-80.0, 15.0};
  GaussianHu muscle{50.0, 10.0};
  GaussianHu bone{900.0, 150.0};
  GaussianHu tumor{55.0, 25.0};
  double air_hu = -1000.0;
  double cyst_hu_lo = 0.0, cyst_hu_hi = 20.0;  // stays inside [0, 20]
  double tumor_speckle_amp = 20.0;
  bool bone_slab = true;
  int64_t air_pockets = 1;
  double noise_std = 5.0;
  uint64_t seed = 0;

  void validate() const;
};

// Deterministic in cfg (seed included): layered body ellipse over air, fat
// blobs, optional bone slab and air pockets, then ellipsoidal lesions with
// class-specific interiors and a smooth unlabeled blend shell, then additive
// Gaussian noise, rounding, and the HU clamp. Labels mark strict interiors.
std::pair<HounsfieldVolume, LabelVolume> generate_phantom(
    const PhantomConfig& cfg);

}  // namespace wemf
