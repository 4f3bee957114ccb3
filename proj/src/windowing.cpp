#include "wemf/windowing.hpp"

#include <stdexcept>

namespace wemf {

WindowSpec::WindowSpec(double l, double w) : level(l), width(w) {
  if (!(width > 0.0)) {
    throw std::invalid_argument("WindowSpec: width must be positive");
  }
}

std::pair<double, double> window_bounds(const WindowSpec& spec) {
  const double half = spec.width / 2.0;
  return {spec.level - half, spec.level + half};
}

TriWindowConfig TriWindowConfig::defaults() {
  return {{WindowSpec(25, 375), WindowSpec(40, 350), WindowSpec(20, 300)}};
}

TriWindowConfig TriWindowConfig::replicated(const WindowSpec& spec) {
  return {{spec, spec, spec}};
}

Tensor apply_window(const Tensor& hu, const WindowSpec& spec) {
  const auto [lo, hi] = window_bounds(spec);
  const auto& in = hu.data();
  std::vector<double> out(in.size());
  for (size_t i = 0; i < in.size(); ++i) {
    const double v = in[i];
    out[i] = v <= lo ? 0.0 : v >= hi ? 1.0 : (v - lo) / spec.width;
  }
  return Tensor::from_data(hu.shape(), std::move(out));
}

Tensor tri_window_stack(const Tensor& hu, const TriWindowConfig& cfg) {
  if (hu.ndim() != 2) {
    throw std::invalid_argument("tri_window_stack: expected [H,W] HU slice");
  }
  const int64_t h = hu.shape()[0], w = hu.shape()[1];
  std::array<Tensor, 3> chans = {apply_window(hu, cfg.windows[0]),
                                 apply_window(hu, cfg.windows[1]),
                                 apply_window(hu, cfg.windows[2])};
  std::vector<double> out(static_cast<size_t>(h * w * 3));
  for (int64_t p = 0; p < h * w; ++p) {
    for (int64_t c = 0; c < 3; ++c) {
      out[static_cast<size_t>(p * 3 + c)] =
          chans[static_cast<size_t>(c)].data()[static_cast<size_t>(p)];
    }
  }
  return Tensor::from_data({h, w, 3}, std::move(out));
}

}  // namespace wemf
