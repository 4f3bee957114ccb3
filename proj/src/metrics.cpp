#include "wemf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <vector>

#include "json.hpp"
#include "wemf/error.hpp"

namespace wemf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Ratio with the degenerate denominator scoring 1.0: an empty reference or
// prediction leaves nothing to get wrong.
double safe_ratio(int64_t num, int64_t den) {
  if (den == 0) return 1.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::vector<int64_t> surface_voxels(const std::vector<uint8_t>& m,
                                    const std::array<int64_t, 3>& dims) {
  const int64_t nx = dims[0], ny = dims[1], nz = dims[2];
  std::vector<int64_t> out;
  for (int64_t z = 0; z < nz; ++z) {
    for (int64_t y = 0; y < ny; ++y) {
      for (int64_t x = 0; x < nx; ++x) {
        const int64_t idx = (z * ny + y) * nx + x;
        if (m[idx] == 0) continue;
        bool surf = false;
        if (nx > 1)
          surf = x == 0 || x + 1 == nx || m[idx - 1] == 0 || m[idx + 1] == 0;
        if (!surf && ny > 1)
          surf = y == 0 || y + 1 == ny || m[idx - nx] == 0 || m[idx + nx] == 0;
        if (!surf && nz > 1)
          surf = z == 0 || z + 1 == nz || m[idx - nx * ny] == 0 ||
                 m[idx + nx * ny] == 0;
        if (surf) out.push_back(idx);
      }
    }
  }
  return out;
}

// Lower envelope of parabolas f[i] + (x - i*step)^2 sampled at x = q*step.
// Entries at +inf contribute no parabola; an all-inf row stays all-inf.
void dist_transform_1d(const std::vector<double>& f, int64_t n, double step,
                       std::vector<int64_t>& v, std::vector<double>& z,
                       std::vector<double>& out) {
  int64_t k = -1;
  for (int64_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double xq = static_cast<double>(q) * step;
    while (k >= 0) {
      const double xv = static_cast<double>(v[k]) * step;
      const double s =
          ((f[q] + xq * xq) - (f[v[k]] + xv * xv)) / (2.0 * (xq - xv));
      if (s <= z[k]) {
        --k;
      } else {
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
        break;
      }
    }
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
    }
  }
  if (k < 0) {
    std::fill(out.begin(), out.begin() + n, kInf);
    return;
  }
  int64_t j = 0;
  for (int64_t q = 0; q < n; ++q) {
    const double xq = static_cast<double>(q) * step;
    while (z[j + 1] < xq) ++j;
    const double dx = xq - static_cast<double>(v[j]) * step;
    out[q] = dx * dx + f[v[j]];
  }
}

// Exact anisotropic squared Euclidean distance to the nearest seed voxel,
// via one 1d transform pass per axis.
std::vector<double> squared_edt(const std::vector<int64_t>& seeds,
                                const std::array<int64_t, 3>& dims,
                                const std::array<double, 3>& spacing_mm) {
  const int64_t nx = dims[0], ny = dims[1], nz = dims[2];
  std::vector<double> grid(static_cast<size_t>(nx * ny * nz), kInf);
  for (int64_t idx : seeds) grid[idx] = 0.0;

  const int64_t nmax = std::max({nx, ny, nz});
  std::vector<double> row(nmax), res(nmax);
  std::vector<int64_t> v(nmax);
  std::vector<double> z(nmax + 1);

  for (int64_t zz = 0; zz < nz; ++zz) {
    for (int64_t y = 0; y < ny; ++y) {
      const int64_t base = (zz * ny + y) * nx;
      for (int64_t x = 0; x < nx; ++x) row[x] = grid[base + x];
      dist_transform_1d(row, nx, spacing_mm[0], v, z, res);
      for (int64_t x = 0; x < nx; ++x) grid[base + x] = res[x];
    }
  }
  for (int64_t zz = 0; zz < nz; ++zz) {
    for (int64_t x = 0; x < nx; ++x) {
      for (int64_t y = 0; y < ny; ++y) row[y] = grid[(zz * ny + y) * nx + x];
      dist_transform_1d(row, ny, spacing_mm[1], v, z, res);
      for (int64_t y = 0; y < ny; ++y) grid[(zz * ny + y) * nx + x] = res[y];
    }
  }
  for (int64_t y = 0; y < ny; ++y) {
    for (int64_t x = 0; x < nx; ++x) {
      for (int64_t zz = 0; zz < nz; ++zz)
        row[zz] = grid[(zz * ny + y) * nx + x];
      dist_transform_1d(row, nz, spacing_mm[2], v, z, res);
      for (int64_t zz = 0; zz < nz; ++zz)
        grid[(zz * ny + y) * nx + x] = res[zz];
    }
  }
  return grid;
}

}  // namespace

ConfusionCounts confusion(const std::vector<uint8_t>& pred,
                          const std::vector<uint8_t>& ref, uint8_t cls) {
  if (pred.size() != ref.size())
    throw UsageError("confusion: mask sizes differ");
  ConfusionCounts c;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == cls;
    const bool r = ref[i] == cls;
    if (p && r)
      ++c.tp;
    else if (p)
      ++c.fp;
    else if (r)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

double dice(const ConfusionCounts& c) {
  return safe_ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
}

double iou(const ConfusionCounts& c) {
  return safe_ratio(c.tp, c.tp + c.fp + c.fn);
}

double accuracy(const ConfusionCounts& c) {
  return safe_ratio(c.tp + c.tn, c.total());
}

double recall(const ConfusionCounts& c) { return safe_ratio(c.tp, c.tp + c.fn); }

double specificity(const ConfusionCounts& c) {
  return safe_ratio(c.tn, c.tn + c.fp);
}

double precision(const ConfusionCounts& c) {
  return safe_ratio(c.tp, c.tp + c.fp);
}

SurfaceDistanceStats surface_distances(const std::vector<uint8_t>& pred,
                                       const std::vector<uint8_t>& ref,
                                       const std::array<int64_t, 3>& dims,
                                       const std::array<double, 3>& spacing_mm) {
  for (int64_t d : dims)
    if (d < 1) throw UsageError("surface_distances: dims must be positive");
  for (double s : spacing_mm)
    if (!(s > 0.0))
      throw UsageError("surface_distances: spacing must be positive");
  const size_t n = static_cast<size_t>(dims[0] * dims[1] * dims[2]);
  if (pred.size() != n || ref.size() != n)
    throw UsageError("surface_distances: mask size does not match dims");

  const std::vector<int64_t> ps = surface_voxels(pred, dims);
  const std::vector<int64_t> rs = surface_voxels(ref, dims);
  SurfaceDistanceStats st;
  st.pred_surface_empty = ps.empty();
  st.ref_surface_empty = rs.empty();
  if (st.undefined()) return st;

  const std::vector<double> to_ref = squared_edt(rs, dims, spacing_mm);
  st.pred_to_ref_mm.reserve(ps.size());
  for (int64_t idx : ps) st.pred_to_ref_mm.push_back(std::sqrt(to_ref[idx]));

  const std::vector<double> to_pred = squared_edt(ps, dims, spacing_mm);
  st.ref_to_pred_mm.reserve(rs.size());
  for (int64_t idx : rs) st.ref_to_pred_mm.push_back(std::sqrt(to_pred[idx]));

  std::sort(st.pred_to_ref_mm.begin(), st.pred_to_ref_mm.end());
  std::sort(st.ref_to_pred_mm.begin(), st.ref_to_pred_mm.end());
  return st;
}

std::optional<double> hd95(const SurfaceDistanceStats& s) {
  if (s.undefined()) return std::nullopt;
  if (s.pred_to_ref_mm.empty() || s.ref_to_pred_mm.empty())
    throw UsageError("hd95: distance lists are empty");
  std::vector<double> pooled(s.pred_to_ref_mm.size() +
                             s.ref_to_pred_mm.size());
  std::merge(s.pred_to_ref_mm.begin(), s.pred_to_ref_mm.end(),
             s.ref_to_pred_mm.begin(), s.ref_to_pred_mm.end(), pooled.begin());
  const int64_t n = static_cast<int64_t>(pooled.size());
  if (n == 1) return pooled[0];
  const double rank = 0.95 * static_cast<double>(n - 1);
  const int64_t lo = static_cast<int64_t>(rank);
  if (lo + 1 >= n) return pooled[n - 1];
  const double frac = rank - static_cast<double>(lo);
  return pooled[lo] + frac * (pooled[lo + 1] - pooled[lo]);
}

std::optional<double> nsd(const SurfaceDistanceStats& s, double tau_mm) {
  if (!(tau_mm > 0.0)) throw UsageError("nsd: tau must be positive");
  if (s.undefined()) return std::nullopt;
  const size_t total = s.pred_to_ref_mm.size() + s.ref_to_pred_mm.size();
  if (total == 0) throw UsageError("nsd: distance lists are empty");
  const auto within = [tau_mm](const std::vector<double>& d) {
    return static_cast<size_t>(
        std::upper_bound(d.begin(), d.end(), tau_mm) - d.begin());
  };
  return static_cast<double>(within(s.pred_to_ref_mm) +
                             within(s.ref_to_pred_mm)) /
         static_cast<double>(total);
}

namespace {

ClassMetrics score_binary(const std::vector<uint8_t>& predb,
                          const std::vector<uint8_t>& refb,
                          const std::array<int64_t, 3>& dims,
                          const std::array<double, 3>& spacing_mm,
                          double tau_mm) {
  ClassMetrics m;
  m.counts = confusion(predb, refb, 1);
  m.dsc = dice(m.counts);
  m.iou = iou(m.counts);
  m.accuracy = accuracy(m.counts);
  m.recall = recall(m.counts);
  m.specificity = specificity(m.counts);
  m.precision = precision(m.counts);
  const bool pred_empty = m.counts.tp + m.counts.fp == 0;
  const bool ref_empty = m.counts.tp + m.counts.fn == 0;
  if (pred_empty && ref_empty) {
    m.nsd = 1.0;
    m.hd95_mm = 0.0;
  } else if (pred_empty || ref_empty) {
    m.nsd = 0.0;
    m.hd95_mm = std::nullopt;
  } else {
    const SurfaceDistanceStats st =
        surface_distances(predb, refb, dims, spacing_mm);
    m.hd95_mm = hd95(st);
    m.nsd = *nsd(st, tau_mm);
  }
  return m;
}

}  // namespace

CaseMetrics evaluate_case(const std::vector<uint8_t>& pred,
                          const std::vector<uint8_t>& ref,
                          const std::array<int64_t, 3>& dims,
                          const std::array<double, 3>& spacing_mm,
                          double tau_mm) {
  const size_t n = static_cast<size_t>(dims[0] * dims[1] * dims[2]);
  if (pred.size() != n || ref.size() != n)
    throw UsageError("evaluate_case: mask size does not match dims");
  if (!(tau_mm > 0.0)) throw UsageError("evaluate_case: tau must be positive");
  for (size_t i = 0; i < n; ++i)
    if (pred[i] > 2 || ref[i] > 2)
      throw DataError("evaluate_case: label outside {0, 1, 2}");

  std::vector<uint8_t> pb(n), rb(n);
  CaseMetrics cm;
  for (size_t i = 0; i < n; ++i) {
    pb[i] = pred[i] == 1;
    rb[i] = ref[i] == 1;
  }
  cm.tumor = score_binary(pb, rb, dims, spacing_mm, tau_mm);
  for (size_t i = 0; i < n; ++i) {
    pb[i] = pred[i] == 2;
    rb[i] = ref[i] == 2;
  }
  cm.cyst = score_binary(pb, rb, dims, spacing_mm, tau_mm);
  for (size_t i = 0; i < n; ++i) {
    pb[i] = pred[i] != 0;
    rb[i] = ref[i] != 0;
  }
  cm.overall = score_binary(pb, rb, dims, spacing_mm, tau_mm);
  return cm;
}

MetricsReport aggregate(std::vector<CaseMetrics> cases, int64_t params,
                        double flops, double tau_mm) {
  if (cases.empty()) throw UsageError("aggregate: no cases");
  if (!(tau_mm > 0.0)) throw UsageError("aggregate: tau must be positive");
  std::sort(cases.begin(), cases.end(),
            [](const CaseMetrics& a, const CaseMetrics& b) {
              return a.id < b.id;
            });
  MetricsReport r;
  r.cases = std::move(cases);
  r.params = params;
  r.flops = flops;
  r.tau_mm = tau_mm;

  const auto agg = [&r](const ClassMetrics& (*pick)(const CaseMetrics&)) {
    AggregateRow a;
    double hsum = 0.0;
    int64_t hn = 0;
    for (const CaseMetrics& c : r.cases) {
      const ClassMetrics& m = pick(c);
      a.dsc += m.dsc;
      a.iou += m.iou;
      a.nsd += m.nsd;
      a.accuracy += m.accuracy;
      a.recall += m.recall;
      a.specificity += m.specificity;
      a.precision += m.precision;
      if (m.hd95_mm) {
        hsum += *m.hd95_mm;
        ++hn;
      } else {
        ++a.hd95_undefined;
      }
    }
    const double n = static_cast<double>(r.cases.size());
    a.dsc /= n;
    a.iou /= n;
    a.nsd /= n;
    a.accuracy /= n;
    a.recall /= n;
    a.specificity /= n;
    a.precision /= n;
    if (hn > 0) a.hd95_mm = hsum / static_cast<double>(hn);
    return a;
  };
  r.tumor = agg(
      [](const CaseMetrics& c) -> const ClassMetrics& { return c.tumor; });
  r.cyst =
      agg([](const CaseMetrics& c) -> const ClassMetrics& { return c.cyst; });
  r.overall = agg(
      [](const CaseMetrics& c) -> const ClassMetrics& { return c.overall; });

  AggregateRow& cm = r.class_mean;
  cm.dsc = 0.5 * (r.tumor.dsc + r.cyst.dsc);
  cm.iou = 0.5 * (r.tumor.iou + r.cyst.iou);
  cm.nsd = 0.5 * (r.tumor.nsd + r.cyst.nsd);
  cm.accuracy = 0.5 * (r.tumor.accuracy + r.cyst.accuracy);
  cm.recall = 0.5 * (r.tumor.recall + r.cyst.recall);
  cm.specificity = 0.5 * (r.tumor.specificity + r.cyst.specificity);
  cm.precision = 0.5 * (r.tumor.precision + r.cyst.precision);
  cm.hd95_undefined = r.tumor.hd95_undefined + r.cyst.hd95_undefined;
  if (r.tumor.hd95_mm && r.cyst.hd95_mm)
    cm.hd95_mm = 0.5 * (*r.tumor.hd95_mm + *r.cyst.hd95_mm);
  else if (r.tumor.hd95_mm)
    cm.hd95_mm = r.tumor.hd95_mm;
  else if (r.cyst.hd95_mm)
    cm.hd95_mm = r.cyst.hd95_mm;
  return r;
}

namespace {

nlohmann::ordered_json row_json(const AggregateRow& a) {
  nlohmann::ordered_json j;
  j["dsc"] = a.dsc;
  j["iou"] = a.iou;
  if (a.hd95_mm)
    j["hd95_mm"] = *a.hd95_mm;
  else
    j["hd95_mm"] = nullptr;
  j["hd95_undefined"] = a.hd95_undefined;
  j["nsd"] = a.nsd;
  j["accuracy"] = a.accuracy;
  j["recall"] = a.recall;
  j["specificity"] = a.specificity;
  j["precision"] = a.precision;
  return j;
}

nlohmann::ordered_json class_json(const ClassMetrics& m) {
  nlohmann::ordered_json j;
  j["dsc"] = m.dsc;
  j["iou"] = m.iou;
  if (m.hd95_mm)
    j["hd95_mm"] = *m.hd95_mm;
  else
    j["hd95_mm"] = nullptr;
  j["nsd"] = m.nsd;
  j["accuracy"] = m.accuracy;
  j["recall"] = m.recall;
  j["specificity"] = m.specificity;
  j["precision"] = m.precision;
  j["tp"] = m.counts.tp;
  j["fp"] = m.counts.fp;
  j["fn"] = m.counts.fn;
  j["tn"] = m.counts.tn;
  return j;
}

}  // namespace

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["tau_mm"] = tau_mm;
  j["params"] = params;
  j["flops"] = flops;
  j["num_cases"] = static_cast<int64_t>(cases.size());
  nlohmann::ordered_json a;
  a["tumor"] = row_json(tumor);
  a["cyst"] = row_json(cyst);
  a["mean"] = row_json(class_mean);
  a["overall"] = row_json(overall);
  j["aggregate"] = a;
  j["cases"] = nlohmann::ordered_json::array();
  for (const CaseMetrics& c : cases) {
    nlohmann::ordered_json e;
    e["id"] = c.id;
    e["tumor"] = class_json(c.tumor);
    e["cyst"] = class_json(c.cyst);
    e["overall"] = class_json(c.overall);
    j["cases"].push_back(e);
  }
  return j.dump(2) + "\n";
}

std::string MetricsReport::to_table() const {
  static const char* const kHeaders[] = {
      "DSC(%)",      "IoU(%)",    "HD95(mm)",       "NSD(%)",
      "Accuracy(%)", "Recall(%)", "Specificity(%)", "Precision(%)"};
  const std::pair<const char*, const AggregateRow*> rows[] = {
      {"Tumor", &tumor},
      {"Cyst", &cyst},
      {"Mean", &class_mean},
      {"Overall", &overall}};

  char buf[128];
  std::string out;
  std::snprintf(buf, sizeof(buf),
                "Param(M): %.2f   FLOPs(G): %.2f   Cases: %lld   Tau(mm): %.2f\n\n",
                static_cast<double>(params) / 1e6, flops / 1e9,
                static_cast<long long>(cases.size()), tau_mm);
  out += buf;

  std::snprintf(buf, sizeof(buf), "%-9s", "Class");
  out += buf;
  for (const char* h : kHeaders) {
    std::snprintf(buf, sizeof(buf), "  %*s", static_cast<int>(std::strlen(h)),
                  h);
    out += buf;
  }
  out += "\n";
  for (const auto& [name, row] : rows) {
    std::snprintf(buf, sizeof(buf), "%-9s", name);
    out += buf;
    const double vals[] = {row->dsc * 100.0,
                           row->iou * 100.0,
                           row->hd95_mm ? *row->hd95_mm : 0.0,
                           row->nsd * 100.0,
                           row->accuracy * 100.0,
                           row->recall * 100.0,
                           row->specificity * 100.0,
                           row->precision * 100.0};
    for (size_t i = 0; i < 8; ++i) {
      const int w = static_cast<int>(std::strlen(kHeaders[i]));
      if (i == 2 && !row->hd95_mm)
        std::snprintf(buf, sizeof(buf), "  %*s", w, "n/a");
      else
        std::snprintf(buf, sizeof(buf), "  %*.2f", w, vals[i]);
      out += buf;
    }
    out += "\n";
  }
  const int64_t excl =
      tumor.hd95_undefined + cyst.hd95_undefined + overall.hd95_undefined;
  if (excl > 0) {
    std::snprintf(buf, sizeof(buf),
                  "HD95 means exclude cases with one empty mask: Tumor %lld, "
                  "Cyst %lld, Overall %lld\n",
                  static_cast<long long>(tumor.hd95_undefined),
                  static_cast<long long>(cyst.hd95_undefined),
                  static_cast<long long>(overall.hd95_undefined));
    out += buf;
  }
  return out;
}

}  // namespace wemf
