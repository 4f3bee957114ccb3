#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace wemf {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  double limit = 0.0;

  bool ok() const { return max_rel_err < limit; }
};

// Central finite differences against the tape for every differentiable
// operation at small fixed shapes, ending with end-to-end checks through the
// full 32x32 network (windowing stays out: it has no parameters and its clip
// subgradient is pinned to 0 outside the bounds). Per-op limit 1e-4,
// end-to-end 1e-3.
std::vector<GradCheckEntry> run_grad_suite(uint64_t seed);

}  // namespace wemf
