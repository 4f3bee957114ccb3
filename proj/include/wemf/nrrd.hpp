#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace wemf {

// x-fastest voxel order throughout: flat = (z * ny + y) * nx + x.
struct HounsfieldVolume {
  std::array<int64_t, 3> dims{};        // (nx, ny, nz)
  std::array<double, 3> spacing_mm{};   // positive
  std::vector<int16_t> hu;              // clamped to [-1024, 3071]

  int64_t voxels() const { return dims[0] * dims[1] * dims[2]; }
  void validate() const;
};

struct LabelVolume {
  std::array<int64_t, 3> dims{};
  std::array<double, 3> spacing_mm{};
  std::vector<uint8_t> labels;  // 0 background, 1 tumor, 2 cyst

  int64_t voxels() const { return dims[0] * dims[1] * dims[2]; }
  void validate() const;
};

using NrrdVolume = std::variant<HounsfieldVolume, LabelVolume>;

// Strict subset: NRRD0004, type short|uchar, dimension 3, raw little-endian
// payload, spacings or diagonal space directions. Anything else fails loudly
// naming the offending field.
NrrdVolume read_nrrd(const std::string& path);
HounsfieldVolume read_hu_nrrd(const std::string& path);
LabelVolume read_label_nrrd(const std::string& path);

void write_nrrd(const HounsfieldVolume& vol, const std::string& path);
void write_nrrd(const LabelVolume& vol, const std::string& path);

// Windowing previews: uchar payload scaled for inspection.
struct PreviewVolume {
  std::array<int64_t, 3> dims{};
  std::array<double, 3> spacing_mm{};
  std::vector<uint8_t> values;
};
void write_nrrd(const PreviewVolume& vol, const std::string& path);

}  // namespace wemf
