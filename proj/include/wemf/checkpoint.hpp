#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "wemf/net.hpp"

namespace wemf {

// First and second moments per parameter name, sized like the parameter.
struct AdamWState {
  int64_t step = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>
      moments;
};

// Epoch counter, master seed, and model-selection state. Shuffle streams
// derive from (seed, epoch), so these fields fully determine the data order
// of every remaining epoch.
struct TrainState {
  int64_t epochs_done = 0;
  int64_t global_step = 0;
  uint64_t seed = 0;
  double best_val_dsc = -1.0;
  int64_t best_epoch = -1;
};

// Everything needed to continue training bit-exactly.
struct Checkpoint {
  ModelWeights weights;
  AdamWState opt;
  TrainState state;
};

// Flat binary weight file: magic "WEMF0001", then per-parameter records
// sorted by name, each a u64 name length, the name bytes, a u64 rank, u64
// extents, and the f64 payload, all little-endian.
void save_weights(const std::string& path, ModelWeights& w);

// Loads into an initialized model. The file must carry exactly the model's
// parameter names and shapes; anything else is a DataError.
void load_weights(const std::string& path, ModelWeights& w);

// Optimizer sidecar: magic "WEMFOPT1", u64 step count, then records sorted
// by name, each a u64 name length, the name bytes, a u64 element count, and
// two f64 payloads (first moment, then second).
void save_optimizer(const std::string& path, const AdamWState& s);
AdamWState load_optimizer(const std::string& path);

// JSON with exactly the TrainState fields; unknown keys are rejected.
void save_train_state(const std::string& path, const TrainState& s);
TrainState load_train_state(const std::string& path);

// prefix + ".weights.bin" / ".opt.bin" / ".state.json"
void save_checkpoint(const std::string& prefix, Checkpoint& c);
Checkpoint load_checkpoint(const std::string& prefix, const ModelConfig& cfg);

}  // namespace wemf
