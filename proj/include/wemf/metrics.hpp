#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace wemf {

// One-vs-rest voxel counts for a single class. tp+fp+fn+tn == voxel count.
struct ConfusionCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  int64_t tn = 0;
  int64_t total() const { return tp + fp + fn + tn; }
};

ConfusionCounts confusion(const std::vector<uint8_t>& pred,
                          const std::vector<uint8_t>& ref, uint8_t cls);

// Degenerate denominators (nothing to get wrong) score 1.0; in particular
// both-empty masks give dice == iou == 1.0.
double dice(const ConfusionCounts& c);
double iou(const ConfusionCounts& c);
double accuracy(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);
double specificity(const ConfusionCounts& c);
double precision(const ConfusionCounts& c);

// Sorted physical distances between mask surfaces. A surface voxel is a
// foreground voxel with a face-adjacent background neighbor; out-of-bounds
// counts as background, and axes of extent 1 are skipped so single-slice
// volumes use 4-neighborhood and in-plane spacing only.
struct SurfaceDistanceStats {
  std::vector<double> pred_to_ref_mm;  // ascending
  std::vector<double> ref_to_pred_mm;  // ascending
  bool pred_surface_empty = false;
  bool ref_surface_empty = false;
  bool undefined() const { return pred_surface_empty || ref_surface_empty; }
};

// Exact anisotropic Euclidean distances via per-axis squared-distance
// transforms. Masks are x-fastest, index (z*ny + y)*nx + x, dims (nx, ny, nz).
SurfaceDistanceStats surface_distances(const std::vector<uint8_t>& pred,
                                       const std::vector<uint8_t>& ref,
                                       const std::array<int64_t, 3>& dims,
                                       const std::array<double, 3>& spacing_mm);

// 95th percentile of the pooled symmetric distance multiset, linear
// interpolation at rank 0.95*(n-1). nullopt when a surface is empty.
std::optional<double> hd95(const SurfaceDistanceStats& s);

// Fraction of pooled surface points within tau of the other surface,
// boundary-inclusive. Pooling weights each direction by its surface size.
std::optional<double> nsd(const SurfaceDistanceStats& s, double tau_mm);

struct ClassMetrics {
  ConfusionCounts counts;
  double dsc = 0.0;
  double iou = 0.0;
  std::optional<double> hd95_mm;  // nullopt: one mask empty, distance undefined
  double nsd = 0.0;
  double accuracy = 0.0;
  double recall = 0.0;
  double specificity = 0.0;
  double precision = 0.0;
};

// Empty-mask policy: both masks empty scores dsc/iou/nsd 1.0 and hd95 0.0;
// exactly one empty scores dsc/iou/nsd 0.0 and leaves hd95 undefined.
struct CaseMetrics {
  std::string id;
  ClassMetrics tumor;    // label 1
  ClassMetrics cyst;     // label 2
  ClassMetrics overall;  // any-foreground vs background
};

// Labels must lie in {0, 1, 2}. tau_mm is the NSD tolerance.
CaseMetrics evaluate_case(const std::vector<uint8_t>& pred,
                          const std::vector<uint8_t>& ref,
                          const std::array<int64_t, 3>& dims,
                          const std::array<double, 3>& spacing_mm,
                          double tau_mm = 1.0);

// Per-metric means over cases. hd95_mm averages only cases where it is
// defined; hd95_undefined counts the excluded ones.
struct AggregateRow {
  double dsc = 0.0;
  double iou = 0.0;
  std::optional<double> hd95_mm;
  int64_t hd95_undefined = 0;
  double nsd = 0.0;
  double accuracy = 0.0;
  double recall = 0.0;
  double specificity = 0.0;
  double precision = 0.0;
};

struct MetricsReport {
  std::vector<CaseMetrics> cases;  // sorted by id
  AggregateRow tumor;
  AggregateRow cyst;
  AggregateRow class_mean;  // mean of the tumor and cyst rows
  AggregateRow overall;
  int64_t params = 0;
  double flops = 0.0;
  double tau_mm = 1.0;

  std::string to_json() const;
  std::string to_table() const;
};

// Sorts cases by id so means are order-independent.
MetricsReport aggregate(std::vector<CaseMetrics> cases, int64_t params,
                        double flops, double tau_mm);

}  // namespace wemf
