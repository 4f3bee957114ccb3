#pragma once

#include <array>
#include <utility>

#include "wemf/tensor.hpp"

namespace wemf {

// Clinical display window: center L and width W in Hounsfield units.
struct WindowSpec {
  double level;
  double width;  // > 0

  WindowSpec(double l, double w);
};

std::pair<double, double> window_bounds(const WindowSpec& spec);

// Fixed channel order: default, abdomen soft-tissue, spine soft-tissue.
struct TriWindowConfig {
  std::array<WindowSpec, 3> windows;

  static TriWindowConfig defaults();
  // One window replicated into all three channels; keeps the network input
  // arity unchanged for the single-window ablation.
  static TriWindowConfig replicated(const WindowSpec& spec);
};

// Clip to [L-W/2, L+W/2] then map linearly onto [0,1].
Tensor apply_window(const Tensor& hu, const WindowSpec& spec);

// [H,W] HU slice -> [H,W,3], channel c windowed by cfg.windows[c].
Tensor tri_window_stack(const Tensor& hu, const TriWindowConfig& cfg);

}  // namespace wemf
