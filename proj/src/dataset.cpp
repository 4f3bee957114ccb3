#include "wemf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "wemf/error.hpp"
#include "wemf/rng.hpp"

namespace wemf {

SplitManifest make_splits(const std::vector<std::string>& case_ids,
                          const std::array<double, 3>& ratios, uint64_t seed) {
  double sum = 0.0;
  int64_t nonempty = 0;
  for (double r : ratios) {
    if (r < 0.0) throw UsageError("make_splits: negative ratio");
    if (r > 0.0) ++nonempty;
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw UsageError("make_splits: ratios must sum to 1");
  if (nonempty == 0) throw UsageError("make_splits: all ratios zero");
  const int64_t n = static_cast<int64_t>(case_ids.size());
  if (n < nonempty)
    throw DataError("make_splits: fewer cases than nonempty splits");

  std::vector<std::string> shuffled = case_ids;
  Rng rng(seed);
  rng.shuffle(shuffled);

  std::array<int64_t, 3> counts{};
  std::array<double, 3> fracs{};
  int64_t assigned = 0;
  for (size_t i = 0; i < 3; ++i) {
    const double target = ratios[i] * static_cast<double>(n);
    counts[i] = static_cast<int64_t>(std::floor(target));
    fracs[i] = target - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return fracs[a] > fracs[b]; });
  for (int64_t extra = 0; extra < n - assigned; ++extra)
    ++counts[order[static_cast<size_t>(extra)]];

  SplitManifest out;
  auto it = shuffled.begin();
  out.train.assign(it, it + counts[0]);
  it += counts[0];
  out.val.assign(it, it + counts[1]);
  it += counts[1];
  out.test.assign(it, it + counts[2]);
  return out;
}

SliceSample slice_at(const HounsfieldVolume& vol, const LabelVolume& lab,
                     int64_t k) {
  if (vol.dims != lab.dims)
    throw DataError("slice_at: volume and label dims differ");
  const int64_t nx = vol.dims[0], ny = vol.dims[1], nz = vol.dims[2];
  if (k < 0 || k >= nz) throw UsageError("slice_at: slice index out of range");
  const size_t base = static_cast<size_t>(k * ny * nx);
  std::vector<double> hu(static_cast<size_t>(ny * nx));
  for (size_t i = 0; i < hu.size(); ++i)
    hu[i] = static_cast<double>(vol.hu[base + i]);
  SliceSample s;
  s.hu = Tensor::from_data({ny, nx}, std::move(hu));
  s.labels.assign(lab.labels.begin() + static_cast<int64_t>(base),
                  lab.labels.begin() + static_cast<int64_t>(base) + ny * nx);
  s.spacing_x = vol.spacing_mm[0];
  s.spacing_y = vol.spacing_mm[1];
  return s;
}

std::vector<SliceSample> slice_iter(const HounsfieldVolume& vol,
                                    const LabelVolume& lab) {
  std::vector<SliceSample> out;
  for (int64_t k = 0; k < vol.dims[2]; ++k)
    out.push_back(slice_at(vol, lab, k));
  return out;
}

const CaseEntry& DatasetManifest::find(const std::string& id) const {
  for (const CaseEntry& c : cases)
    if (c.id == id) return c;
  throw DataError("manifest: unknown case id " + id);
}

const std::vector<std::string>& DatasetManifest::split(
    const std::string& name) const {
  if (name == "train") return splits.train;
  if (name == "val") return splits.val;
  if (name == "test") return splits.test;
  throw UsageError("manifest: unknown split " + name);
}

std::string DatasetManifest::to_json() const {
  nlohmann::ordered_json j;
  j["cases"] = nlohmann::ordered_json::array();
  for (const CaseEntry& c : cases) {
    nlohmann::ordered_json e;
    e["id"] = c.id;
    e["image"] = c.image;
    e["label"] = c.label;
    e["class"] = c.lesion_class;
    j["cases"].push_back(e);
  }
  j["splits"]["train"] = splits.train;
  j["splits"]["val"] = splits.val;
  j["splits"]["test"] = splits.test;
  return j.dump(2) + "\n";
}

namespace {

void reject_unknown(const nlohmann::json& obj,
                    const std::vector<std::string>& known,
                    const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw DataError("manifest: unknown key \"" + it.key() + "\" in " + where);
}

}  // namespace

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest: parse failure: ") + e.what());
  }
  reject_unknown(j, {"cases", "splits"}, "manifest");
  DatasetManifest m;
  for (const auto& e : j.at("cases")) {
    reject_unknown(e, {"id", "image", "label", "class"}, "cases[]");
    CaseEntry c;
    c.id = e.at("id").get<std::string>();
    c.image = e.at("image").get<std::string>();
    c.label = e.at("label").get<std::string>();
    c.lesion_class = e.at("class").get<std::string>();
    m.cases.push_back(std::move(c));
  }
  const auto& s = j.at("splits");
  reject_unknown(s, {"train", "val", "test"}, "splits");
  m.splits.train = s.at("train").get<std::vector<std::string>>();
  m.splits.val = s.at("val").get<std::vector<std::string>>();
  m.splits.test = s.at("test").get<std::vector<std::string>>();
  return m;
}

void DatasetManifest::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  const std::string text = to_json();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("write failed: " + path);
}

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::vector<SliceSample> load_split_slices(const DatasetManifest& m,
                                           const std::string& split_name,
                                           const std::string& root_dir) {
  std::vector<SliceSample> out;
  for (const std::string& id : m.split(split_name)) {
    const CaseEntry& c = m.find(id);
    HounsfieldVolume vol = read_hu_nrrd(root_dir + "/" + c.image);
    LabelVolume lab = read_label_nrrd(root_dir + "/" + c.label);
    for (auto& s : slice_iter(vol, lab)) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace wemf
