#include "wemf/mfe.hpp"

#include <stdexcept>

#include "wemf/dft.hpp"
#include "wemf/ops.hpp"

namespace wemf {

namespace {

AxisPair view_axes(MfeView view) {
  switch (view) {
    case MfeView::kHW: return {0, 1};
    case MfeView::kCW: return {2, 1};
    case MfeView::kCH: return {2, 0};
  }
  throw std::invalid_argument("freq_filter_branch: bad view");
}

}  // namespace

std::vector<Tensor> mfe_split(const Tensor& x) {
  if (x.ndim() != 3) {
    throw std::invalid_argument("mfe_split: expected [H,W,C]");
  }
  if (x.shape()[2] % 4 != 0) {
    throw std::invalid_argument(
        "mfe_split: channel count " + std::to_string(x.shape()[2]) +
        " not divisible by 4; stage width misconfigured");
  }
  return split(x, 2, 4);
}

Tensor freq_filter_branch(const Tensor& xi, const Tensor& w_re,
                          const Tensor& w_im, MfeView view) {
  if (xi.ndim() != 3) {
    throw std::invalid_argument("freq_filter_branch: expected [H,W,C/4]");
  }
  return spectral_filter(xi, w_re, w_im, view_axes(view));
}

Tensor local_branch(const Tensor& x4, const Tensor& dw_kernel) {
  return depthwise_conv2d(x4, dw_kernel);
}

Tensor mfe_fuse(const Tensor& x1p, const Tensor& x2p, const Tensor& x3p,
                const Tensor& x4p, const Tensor& x_residual) {
  Tensor z = concat({x1p, x2p, x3p, x4p}, 2);
  if (z.shape() != x_residual.shape()) {
    throw std::invalid_argument("mfe_fuse: branch concat shape " +
                                shape_str(z.shape()) +
                                " does not match residual " +
                                shape_str(x_residual.shape()));
  }
  return add(z, x_residual);
}

Tensor mfe_forward(const Tensor& x, const MfeWeights& w) {
  Tensor xn = group_norm(x, 4, w.norm1_gamma, w.norm1_beta, 1e-5);
  auto quarters = mfe_split(xn);
  Tensor x1p = freq_filter_branch(quarters[0], w.w_hw_re, w.w_hw_im, MfeView::kHW);
  Tensor x2p = freq_filter_branch(quarters[1], w.w_cw_re, w.w_cw_im, MfeView::kCW);
  Tensor x3p = freq_filter_branch(quarters[2], w.w_ch_re, w.w_ch_im, MfeView::kCH);
  Tensor x4p = local_branch(quarters[3], w.dw_kernel);
  Tensor z = mfe_fuse(x1p, x2p, x3p, x4p, x);
  Tensor zn = group_norm(z, 4, w.norm2_gamma, w.norm2_beta, 1e-5);
  Tensor hidden = gelu(linear(zn, w.ffn_w1, w.ffn_b1));
  Tensor ffn_out = linear(hidden, w.ffn_w2, w.ffn_b2);
  return add(ffn_out, z);
}

MfeWeights init_mfe(int64_t h, int64_t w, int64_t c, Rng& rng,
                    double dw_noise_std) {
  if (c % 4 != 0) {
    throw std::invalid_argument("init_mfe: channels must be divisible by 4");
  }
  const int64_t cq = c / 4;
  MfeWeights out;
  out.w_hw_re = Tensor::full({h, w, cq}, 1.0, true);
  out.w_hw_im = Tensor::zeros({h, w, cq}, true);
  out.w_cw_re = Tensor::full({h, w, cq}, 1.0, true);
  out.w_cw_im = Tensor::zeros({h, w, cq}, true);
  out.w_ch_re = Tensor::full({h, w, cq}, 1.0, true);
  out.w_ch_im = Tensor::zeros({h, w, cq}, true);
  {
    std::vector<double> k(static_cast<size_t>(9 * cq), 0.0);
    for (int64_t ch = 0; ch < cq; ++ch) {
      k[static_cast<size_t>((1 * 3 + 1) * cq + ch)] = 1.0;
    }
    if (dw_noise_std > 0.0) {
      for (double& v : k) v += dw_noise_std * rng.normal();
    }
    out.dw_kernel = Tensor::from_data({3, 3, cq}, std::move(k), true);
  }
  out.norm1_gamma = Tensor::full({c}, 1.0, true);
  out.norm1_beta = Tensor::zeros({c}, true);
  out.norm2_gamma = Tensor::full({c}, 1.0, true);
  out.norm2_beta = Tensor::zeros({c}, true);
  {
    const double std1 = 1.0 / std::sqrt(static_cast<double>(c));
    Tensor t = Tensor::randn({c, 4 * c}, rng);
    auto d = t.data();
    for (double& v : d) v *= std1;
    out.ffn_w1 = Tensor::from_data({c, 4 * c}, std::move(d), true);
  }
  out.ffn_b1 = Tensor::zeros({4 * c}, true);
  out.ffn_w2 = Tensor::zeros({4 * c, c}, true);
  out.ffn_b2 = Tensor::zeros({c}, true);
  return out;
}

}  // namespace wemf
