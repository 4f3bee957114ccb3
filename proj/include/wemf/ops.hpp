#pragma once

#include <functional>
#include <vector>

#include "wemf/tensor.hpp"

namespace wemf {

// ---- elementwise (shapes must match exactly; no implicit broadcasting) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

// ---- unary activations ----
Tensor silu(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form
Tensor softplus(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// ---- reductions ----
Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar

// ---- structure ----
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int64_t>& perm);
Tensor concat(const std::vector<Tensor>& parts, int64_t axis);
// Equal-sized split along axis; errors if the extent is not divisible.
std::vector<Tensor> split(const Tensor& a, int64_t axis, int64_t parts);
Tensor slice(const Tensor& a, int64_t axis, int64_t start, int64_t len);
// out[t, :] = x[order[t], :] for x of shape [L, C].
Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& order);
// [H,W,C] -> [H/2, W/2, 4C], 2x2 neighbors (0,0),(0,1),(1,0),(1,1) stacked
// into channel blocks. depth_to_space2 is its exact inverse.
Tensor space_to_depth2(const Tensor& x);
// [H,W,C] -> [2H, 2W, C/4]
Tensor depth_to_space2(const Tensor& x);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);  // [M,K] x [K,N]
// x: [..., K], w: [K, N], bias: [N] or undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// ---- convolutions ----
// x: [H,W,Cin], k: [kh,kw,Cin,Cout], bias: [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias,
              int64_t stride, int64_t pad);
// x: [H,W,C], k: [kh,kw,C] with odd kh,kw; zero-padded same-size output,
// no cross-channel mixing.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& k);

// x: [..., C] plus bias [C] on the last axis.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

// ---- normalization ----
// Channels-last input [..., C]; statistics per group over all positions and
// the group's channels (single-sample semantics, biased variance).
Tensor group_norm(const Tensor& x, int64_t groups, const Tensor& gamma,
                  const Tensor& beta, double eps);
// Per-position normalization over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps);

// ---- classification heads ----
Tensor softmax_lastdim(const Tensor& x);
// logits: [..., K]; labels: one class id per leading position, row-major.
// Mean of per-position (logsumexp - logit[label]).
Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& labels);

// ---- resize ----
enum class ResizeMode { kNearest, kBilinear };
// x: [H,W,C]; half-pixel sampling with edge clamping.
Tensor resize2d(const Tensor& x, int64_t out_h, int64_t out_w, ResizeMode mode);

// ---- gradient verification ----
// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar-valued f.
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double eps = 1e-4);

}  // namespace wemf
