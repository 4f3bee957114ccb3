#include <cmath>

#include "doctest.h"
#include "wemf/rng.hpp"
#include "wemf/tensor.hpp"
#include "wemf/windowing.hpp"

using namespace wemf;

TEST_CASE("window bounds follow level and width") {
  CHECK(window_bounds(WindowSpec(25, 375)) == std::pair{-162.5, 212.5});
  CHECK(window_bounds(WindowSpec(40, 350)) == std::pair{-135.0, 215.0});
  CHECK(window_bounds(WindowSpec(20, 300)) == std::pair{-130.0, 170.0});
  CHECK(window_bounds(WindowSpec(0, 2)) == std::pair{-1.0, 1.0});
  CHECK_THROWS(WindowSpec(10, 0));
  CHECK_THROWS(WindowSpec(10, -5));
}

TEST_CASE("apply_window clips then maps linearly") {
  WindowSpec def(25, 375);
  Tensor hu = Tensor::from_data({4}, {-1000.0, 25.0, 100.0, 3000.0});
  Tensor out = apply_window(hu, def);
  CHECK(out.at(0) == 0.0);
  CHECK(out.at(1) == 0.5);  // the center maps to the exact midpoint
  CHECK(out.at(2) == doctest::Approx((100.0 + 162.5) / 375.0).epsilon(1e-15));
  CHECK(out.at(3) == 1.0);

  WindowSpec abdomen(40, 350);
  Tensor mid = apply_window(Tensor::from_data({1}, {100.0}), abdomen);
  CHECK(mid.at(0) == doctest::Approx(235.0 / 350.0).epsilon(1e-12));
  CHECK(apply_window(Tensor::from_data({1}, {40.0}), abdomen).at(0) == 0.5);
  CHECK(apply_window(Tensor::from_data({1}, {20.0}), WindowSpec(20, 300)).at(0) == 0.5);
}

TEST_CASE("output stays in range and is monotone") {
  WindowSpec spec(25, 375);
  Rng rng(7);
  std::vector<double> hu(256);
  for (auto& v : hu) v = -1200.0 + rng.uniform() * 4200.0;
  Tensor out = apply_window(Tensor::from_data({256}, hu), spec);
  for (double v : out.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  // monotone over a sweep
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double v = -1100.0 + 40.0 * i;
    const double w = apply_window(Tensor::from_data({1}, {v}), spec).at(0);
    CHECK(w >= prev);
    prev = w;
  }
}

TEST_CASE("clipping is idempotent") {
  WindowSpec spec(40, 350);
  Rng rng(8);
  std::vector<double> hu(64);
  for (auto& v : hu) v = -1200.0 + rng.uniform() * 4200.0;
  Tensor once = apply_window(Tensor::from_data({64}, hu), spec);
  // re-window the already-clipped HU (pre-normalization equivalent: clip twice)
  std::vector<double> clipped(64);
  const auto [lo, hi] = window_bounds(spec);
  for (size_t i = 0; i < hu.size(); ++i) {
    clipped[i] = std::min(std::max(hu[i], lo), hi);
  }
  Tensor twice = apply_window(Tensor::from_data({64}, clipped), spec);
  for (size_t i = 0; i < hu.size(); ++i) {
    CHECK(once.data()[i] == twice.data()[i]);
  }
}

TEST_CASE("tri-window stack fixes channel order and values") {
  Tensor hu = Tensor::full({2, 3}, 20.0);
  Tensor out = tri_window_stack(hu, TriWindowConfig::defaults());
  CHECK(out.shape() == Shape{2, 3, 3});
  for (int64_t p = 0; p < 6; ++p) {
    CHECK(out.data()[p * 3 + 0] == doctest::Approx(182.5 / 375.0).epsilon(1e-12));
    CHECK(out.data()[p * 3 + 1] == doctest::Approx(155.0 / 350.0).epsilon(1e-12));
    CHECK(out.data()[p * 3 + 2] == 0.5);
  }

  Tensor dark = tri_window_stack(Tensor::full({2, 2}, -162.5),
                                 TriWindowConfig::defaults());
  for (double v : dark.data()) CHECK(v == 0.0);
  Tensor darker = tri_window_stack(Tensor::full({2, 2}, -500.0),
                                   TriWindowConfig::defaults());
  for (double v : darker.data()) CHECK(v == 0.0);
}

TEST_CASE("perturbations only move channels whose pass-band covers them") {
  // 214 HU sits inside the abdomen band (-135, 215) but above the default
  // (212.5) and spine (170) ceilings
  TriWindowConfig cfg = TriWindowConfig::defaults();
  Tensor a = tri_window_stack(Tensor::full({1, 1}, 214.0), cfg);
  Tensor b = tri_window_stack(Tensor::full({1, 1}, 214.5), cfg);
  CHECK(a.at(0, 0, 0) == b.at(0, 0, 0));
  CHECK(a.at(0, 0, 1) != b.at(0, 0, 1));
  CHECK(a.at(0, 0, 2) == b.at(0, 0, 2));
}

TEST_CASE("replicated config reuses one window for all channels") {
  TriWindowConfig cfg = TriWindowConfig::replicated(WindowSpec(25, 375));
  Tensor out = tri_window_stack(Tensor::full({2, 2}, 90.0), cfg);
  for (int64_t p = 0; p < 4; ++p) {
    CHECK(out.data()[p * 3 + 0] == out.data()[p * 3 + 1]);
    CHECK(out.data()[p * 3 + 1] == out.data()[p * 3 + 2]);
  }
}
