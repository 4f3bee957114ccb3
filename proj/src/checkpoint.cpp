#include "wemf/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "wemf/error.hpp"

namespace wemf {

namespace {

constexpr char kWeightsMagic[8] = {'W', 'E', 'M', 'F', '0', '0', '0', '1'};
constexpr char kOptMagic[8] = {'W', 'E', 'M', 'F', 'O', 'P', 'T', '1'};

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void put_f64(std::string& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  const char* what;

  bool done() const { return pos >= buf.size(); }

  void need(size_t n) const {
    if (pos + n > buf.size())
      throw DataError(std::string(what) + ": truncated file");
  }

  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + i]))
           << (8 * i);
    pos += 8;
    return v;
  }

  double f64() {
    const uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }

  std::string str(uint64_t n) {
    if (n > buf.size())
      throw DataError(std::string(what) + ": truncated file");
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(std::string(what) + ": cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes,
                const char* what) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(std::string(what) + ": cannot open " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(std::string(what) + ": write failed");
}

}  // namespace

void save_weights(const std::string& path, ModelWeights& w) {
  auto named = named_params(w);
  std::sort(named.begin(), named.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string out(kWeightsMagic, 8);
  for (const auto& [name, t] : named) {
    put_u64(out, name.size());
    out += name;
    put_u64(out, static_cast<uint64_t>(t.ndim()));
    for (int64_t e : t.shape()) put_u64(out, static_cast<uint64_t>(e));
    for (double d : t.data()) put_f64(out, d);
  }
  write_file(path, out, "weights");
}

void load_weights(const std::string& path, ModelWeights& w) {
  const std::string buf = read_file(path, "weights");
  Reader r{buf, 0, "weights"};
  if (r.str(8) != std::string(kWeightsMagic, 8))
    throw DataError("weights: bad magic");

  std::map<std::string, std::pair<Shape, std::vector<double>>> records;
  while (!r.done()) {
    const std::string name = r.str(r.u64());
    const uint64_t rank = r.u64();
    if (rank > 8) throw DataError("weights: implausible rank for " + name);
    Shape shape(rank);
    int64_t n = 1;
    for (auto& e : shape) {
      e = static_cast<int64_t>(r.u64());
      if (e < 1) throw DataError("weights: bad extent for " + name);
      n *= e;
    }
    std::vector<double> data(static_cast<size_t>(n));
    for (auto& d : data) d = r.f64();
    if (!records.emplace(name, std::make_pair(shape, std::move(data))).second)
      throw DataError("weights: duplicate parameter " + name);
  }

  size_t used = 0;
  visit_params(w, [&](const std::string& name, Tensor& t) {
    const auto it = records.find(name);
    if (it == records.end())
      throw DataError("weights: missing parameter " + name);
    if (it->second.first != t.shape())
      throw DataError("weights: shape mismatch for " + name);
    t.impl()->data = it->second.second;
    ++used;
  });
  if (used != records.size())
    throw DataError("weights: file carries parameters the model lacks");
}

void save_optimizer(const std::string& path, const AdamWState& s) {
  std::string out(kOptMagic, 8);
  put_u64(out, static_cast<uint64_t>(s.step));
  for (const auto& [name, mv] : s.moments) {
    if (mv.first.size() != mv.second.size())
      throw UsageError("optimizer: moment sizes differ for " + name);
    put_u64(out, name.size());
    out += name;
    put_u64(out, mv.first.size());
    for (double d : mv.first) put_f64(out, d);
    for (double d : mv.second) put_f64(out, d);
  }
  write_file(path, out, "optimizer");
}

AdamWState load_optimizer(const std::string& path) {
  const std::string buf = read_file(path, "optimizer");
  Reader r{buf, 0, "optimizer"};
  if (r.str(8) != std::string(kOptMagic, 8))
    throw DataError("optimizer: bad magic");
  AdamWState s;
  s.step = static_cast<int64_t>(r.u64());
  while (!r.done()) {
    const std::string name = r.str(r.u64());
    const uint64_t n = r.u64();
    std::vector<double> m(n), v(n);
    for (auto& d : m) d = r.f64();
    for (auto& d : v) d = r.f64();
    if (!s.moments.emplace(name, std::make_pair(std::move(m), std::move(v)))
             .second)
      throw DataError("optimizer: duplicate parameter " + name);
  }
  return s;
}

void save_train_state(const std::string& path, const TrainState& s) {
  nlohmann::ordered_json j;
  j["epochs_done"] = s.epochs_done;
  j["global_step"] = s.global_step;
  j["seed"] = s.seed;
  j["best_val_dsc"] = s.best_val_dsc;
  j["best_epoch"] = s.best_epoch;
  write_file(path, j.dump(2) + "\n", "train state");
}

TrainState load_train_state(const std::string& path) {
  const std::string buf = read_file(path, "train state");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("train state: ") + e.what());
  }
  static const char* const kKeys[] = {"epochs_done", "global_step", "seed",
                                      "best_val_dsc", "best_epoch"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) {
          return key == k;
        }) == std::end(kKeys))
      throw DataError("train state: unknown key " + key);
  }
  TrainState s;
  try {
    s.epochs_done = j.at("epochs_done").get<int64_t>();
    s.global_step = j.at("global_step").get<int64_t>();
    s.seed = j.at("seed").get<uint64_t>();
    s.best_val_dsc = j.at("best_val_dsc").get<double>();
    s.best_epoch = j.at("best_epoch").get<int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("train state: ") + e.what());
  }
  return s;
}

void save_checkpoint(const std::string& prefix, Checkpoint& c) {
  save_weights(prefix + ".weights.bin", c.weights);
  save_optimizer(prefix + ".opt.bin", c.opt);
  save_train_state(prefix + ".state.json", c.state);
}

Checkpoint load_checkpoint(const std::string& prefix,
                           const ModelConfig& cfg) {
  Checkpoint c;
  c.weights = init_model(cfg, 0);
  load_weights(prefix + ".weights.bin", c.weights);
  c.opt = load_optimizer(prefix + ".opt.bin");
  c.state = load_train_state(prefix + ".state.json");
  return c;
}

}  // namespace wemf
