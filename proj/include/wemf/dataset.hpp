#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "wemf/nrrd.hpp"
#include "wemf/tensor.hpp"

namespace wemf {

struct SplitManifest {
  std::vector<std::string> train, val, test;
};

// Case-level seeded shuffle then largest-remainder apportionment; a zero
// ratio keeps its split empty.
SplitManifest make_splits(const std::vector<std::string>& case_ids,
                          const std::array<double, 3>& ratios, uint64_t seed);

struct SliceSample {
  Tensor hu;                    // [ny, nx], rows follow y
  std::vector<uint8_t> labels;  // row-major, same layout
  double spacing_y = 1.0, spacing_x = 1.0;
};

SliceSample slice_at(const HounsfieldVolume& vol, const LabelVolume& lab,
                     int64_t k);
std::vector<SliceSample> slice_iter(const HounsfieldVolume& vol,
                                    const LabelVolume& lab);

struct CaseEntry {
  std::string id;
  std::string image;  // path relative to the manifest
  std::string label;
  std::string lesion_class;  // "tumor" | "cyst" | "mixed"
};

struct DatasetManifest {
  std::vector<CaseEntry> cases;
  SplitManifest splits;

  const CaseEntry& find(const std::string& id) const;
  const std::vector<std::string>& split(const std::string& name) const;

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
  void save(const std::string& path) const;
  static DatasetManifest load(const std::string& path);
};

// Reads every case of the split and flattens its z slices in case order.
std::vector<SliceSample> load_split_slices(const DatasetManifest& m,
                                           const std::string& split_name,
                                           const std::string& root_dir);

}  // namespace wemf
