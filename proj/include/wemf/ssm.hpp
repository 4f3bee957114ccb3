#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "wemf/rng.hpp"
#include "wemf/tensor.hpp"

namespace wemf {

// Parameters for one scan direction. The input-dependent projections produce
// the step size and the B/C mixing vectors; A_log and the skip vector D are
// input-independent.
struct SsmDirectionParams {
  Tensor x_proj_w;   // [d_inner, dt_rank + 2*d_state], no bias
  Tensor dt_proj_w;  // [dt_rank, d_inner]
  Tensor dt_proj_b;  // [d_inner]
  Tensor a_log;      // [d_inner, d_state]; A = -exp(a_log) stays negative
  Tensor d_skip;     // [d_inner]

  int64_t d_inner() const { return a_log.shape()[0]; }
  int64_t d_state() const { return a_log.shape()[1]; }
  int64_t dt_rank() const { return dt_proj_w.shape()[0]; }
  void validate() const;
};

// Fused recurrence over u [L, d_inner] with per-step delta_raw [L, d_inner],
// b and c [L, d_state], a_log [d_inner, d_state], d_skip [d_inner]:
//   delta = softplus(delta_raw), A = -exp(a_log), Abar = exp(delta*A)
//   h_t = Abar_t * h_{t-1} + delta_t * b_t * u_t   (h_0 = 0)
//   y_t = sum_n c_t[n] * h_t[:,n] + d_skip * u_t
// Differentiable w.r.t. every input via a hand-derived reverse sweep.
Tensor selective_scan_core(const Tensor& u, const Tensor& delta_raw,
                           const Tensor& b, const Tensor& c,
                           const Tensor& a_log, const Tensor& d_skip);

// Projections then the fused core.
Tensor selective_scan(const Tensor& u, const SsmDirectionParams& p);

// Token visit order for direction 0..3: row-major, reverse row-major,
// column-major, reverse column-major. order[k] is the flat row-major index
// visited at scan position k.
std::vector<int64_t> scan_order(int64_t h, int64_t w, int direction);
std::vector<int64_t> inverse_order(const std::vector<int64_t>& order);

// Four directional scans over the flattened [h*w, d_inner] map, summed after
// un-scanning each result back to row-major layout.
Tensor ss2d(const Tensor& x, const std::array<SsmDirectionParams, 4>& dirs);

struct VssBlockParams {
  Tensor ln_gamma, ln_beta;            // [C]
  Tensor in_proj_w;                    // [C, 2*d_inner], no bias
  Tensor conv_kernel;                  // [3, 3, d_inner]
  Tensor conv_bias;                    // [d_inner]
  std::array<SsmDirectionParams, 4> dirs;
  Tensor scan_ln_gamma, scan_ln_beta;  // [d_inner]
  Tensor out_proj_w;                   // [d_inner, C], no bias

  int64_t channels() const { return ln_gamma.shape()[0]; }
  int64_t d_inner() const { return conv_bias.shape()[0]; }
};

// x + out_proj(LN(SS2D(SiLU(DWConv(x1)))) * SiLU(z)) where (x1, z) is the
// channel split of in_proj(LN(x)).
Tensor vss_block(const Tensor& x, const VssBlockParams& p);

// d_inner = 2*channels, dt_rank = max(1, d_inner/16); a_log rows start at
// log(1..d_state), d_skip at 1, dt_proj_b so softplus lands in [1e-3, 1e-1].
SsmDirectionParams init_ssm_direction(int64_t d_inner, int64_t d_state,
                                      int64_t dt_rank, Rng& rng);
VssBlockParams init_vss_block(int64_t channels, int64_t d_state, Rng& rng);

}  // namespace wemf
