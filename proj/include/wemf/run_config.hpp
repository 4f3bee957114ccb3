#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "wemf/net.hpp"
#include "wemf/trainer.hpp"
#include "wemf/windowing.hpp"

namespace wemf {

struct DataConfig {
  std::string dir = "data";
  std::array<double, 3> split_ratios{0.77, 0.08, 0.15};
  uint64_t split_seed = 0;
};

// preset "tri" uses the stored triple as-is; "single" replicates the first
// window into all three channels, keeping the network input arity fixed.
struct WindowsConfig {
  std::string preset = "tri";
  TriWindowConfig windows = TriWindowConfig::defaults();

  TriWindowConfig resolve() const;
};

struct EvalConfig {
  double tau_mm = 1.0;
  std::string split = "test";
};

// One document with sections {data, windows, model, train, eval}. Every key
// is optional and defaults as above; unknown keys are rejected. Serialization
// emits the fully-resolved document (round-trips to itself).
struct RunConfig {
  DataConfig data;
  WindowsConfig windows;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;

  // model with the resolved window triple injected
  ModelConfig resolved_model() const;
  void validate() const;

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
  void save(const std::string& path) const;
  static RunConfig load(const std::string& path);
};

}  // namespace wemf
