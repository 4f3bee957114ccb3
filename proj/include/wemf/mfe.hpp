#pragma once

#include <vector>

#include "wemf/rng.hpp"
#include "wemf/tensor.hpp"

namespace wemf {

// Axis-pair view each spectral branch transforms over, for [H,W,C/4] input.
enum class MfeView { kHW, kCW, kCH };

// Skip-enhancement weights for one stage operating on [H,W,C] features.
// Spectral filters store split real/imaginary planes shaped like their
// branch's full spectrum, [H,W,C/4].
struct MfeWeights {
  Tensor w_hw_re, w_hw_im;
  Tensor w_cw_re, w_cw_im;
  Tensor w_ch_re, w_ch_im;
  Tensor dw_kernel;  // [3,3,C/4]
  Tensor norm1_gamma, norm1_beta;  // [C]
  Tensor norm2_gamma, norm2_beta;  // [C]
  Tensor ffn_w1, ffn_b1;  // [C, 4C], [4C]
  Tensor ffn_w2, ffn_b2;  // [4C, C], [C]

  int64_t channels() const { return norm1_gamma.shape()[0]; }
};

// Contiguous channel quarters x1..x4; errors when C is not divisible by 4.
std::vector<Tensor> mfe_split(const Tensor& x);

// xi' = Re(idft2(dft2(xi, view) * W, view)), differentiable in xi and W.
Tensor freq_filter_branch(const Tensor& xi, const Tensor& w_re,
                          const Tensor& w_im, MfeView view);

// Depthwise 3x3 same-padded convolution of the fourth quarter.
Tensor local_branch(const Tensor& x4, const Tensor& dw_kernel);

// Z = concat(x1',x2',x3',x4') + x_residual.
Tensor mfe_fuse(const Tensor& x1p, const Tensor& x2p, const Tensor& x3p,
                const Tensor& x4p, const Tensor& x_residual);

// Full module: branches run on Norm1(X), fuse against the raw X, then
// Y = FFN(Norm2(Z)) + Z. Both norms are 4-group GroupNorm; FFN is
// C -> 4C -> C with GELU.
Tensor mfe_forward(const Tensor& x, const MfeWeights& w);

// W filters start at 1+0j, dw_kernel at identity plus N(0, dw_noise_std^2)
// jitter (pass 0 for an exact-identity start), FFN second layer at zero, so
// the module opens as a near-identity map.
MfeWeights init_mfe(int64_t h, int64_t w, int64_t c, Rng& rng,
                    double dw_noise_std = 1e-3);

}  // namespace wemf
