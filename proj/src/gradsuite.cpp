#include "wemf/gradsuite.hpp"

#include <algorithm>
#include <cmath>

#include "wemf/dft.hpp"
#include "wemf/error.hpp"
#include "wemf/mfe.hpp"
#include "wemf/net.hpp"
#include "wemf/ops.hpp"
#include "wemf/rng.hpp"
#include "wemf/ssm.hpp"
#include "wemf/tensor.hpp"
#include "wemf/trainer.hpp"
#include "wemf/windowing.hpp"

namespace wemf {

namespace {

constexpr double kOpLimit = 1e-4;
constexpr double kEndToEndLimit = 1e-3;

Tensor uniform_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(shape, std::move(v));
}

// Probe-weighted sum makes the scalar sensitive to every output coordinate
// individually, so layout mistakes cannot cancel under a plain sum.
Tensor probed(const Tensor& y, const Tensor& probe) {
  return sum(mul(y, probe));
}

}  // namespace

std::vector<GradCheckEntry> run_grad_suite(uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCheckEntry> out;
  const auto push = [&out](const std::string& name, double err, double limit) {
    out.push_back({name, err, limit});
  };

  const Tensor a = Tensor::randn({3, 4}, rng);
  const Tensor b = uniform_tensor({3, 4}, rng, 0.5, 1.5);

  push("add",
       std::max(grad_check([&](const Tensor& t) { return sum(silu(add(t, b))); }, a),
                grad_check([&](const Tensor& t) { return sum(silu(add(a, t))); }, b)),
       kOpLimit);
  push("sub",
       std::max(grad_check([&](const Tensor& t) { return sum(silu(sub(t, b))); }, a),
                grad_check([&](const Tensor& t) { return sum(silu(sub(a, t))); }, b)),
       kOpLimit);
  push("mul",
       std::max(grad_check([&](const Tensor& t) { return sum(silu(mul(t, b))); }, a),
                grad_check([&](const Tensor& t) { return sum(silu(mul(a, t))); }, b)),
       kOpLimit);
  push("div",
       std::max(grad_check([&](const Tensor& t) { return sum(silu(div(t, b))); }, a),
                grad_check([&](const Tensor& t) { return sum(silu(div(a, t))); }, b)),
       kOpLimit);
  push("add_scalar",
       grad_check([](const Tensor& t) { return sum(silu(add_scalar(t, 0.7))); }, a),
       kOpLimit);
  push("mul_scalar",
       grad_check([](const Tensor& t) { return sum(silu(mul_scalar(t, -2.5))); }, a),
       kOpLimit);
  push("neg", grad_check([](const Tensor& t) { return sum(silu(neg(t))); }, a),
       kOpLimit);

  push("silu", grad_check([](const Tensor& t) { return sum(silu(t)); }, a),
       kOpLimit);
  push("gelu", grad_check([](const Tensor& t) { return sum(gelu(t)); }, a),
       kOpLimit);
  push("softplus",
       grad_check([](const Tensor& t) { return sum(softplus(t)); }, a),
       kOpLimit);
  push("sigmoid",
       grad_check([](const Tensor& t) { return sum(sigmoid(t)); }, a),
       kOpLimit);

  push("sum", grad_check([](const Tensor& t) { return sum(mul(t, t)); }, a),
       kOpLimit);
  push("mean", grad_check([](const Tensor& t) { return mean(mul(t, t)); }, a),
       kOpLimit);

  const Tensor c = Tensor::randn({2, 3, 4}, rng);
  const Tensor probe_c = Tensor::randn({2, 3, 4}, rng);
  push("reshape",
       grad_check(
           [&](const Tensor& t) {
             return probed(reshape(t, {4, 6}), reshape(probe_c, {4, 6}));
           },
           c),
       kOpLimit);
  push("permute",
       grad_check(
           [&](const Tensor& t) {
             return probed(permute(t, {2, 0, 1}),
                           permute(probe_c, {2, 0, 1}));
           },
           c),
       kOpLimit);

  const Tensor part = Tensor::randn({2, 3}, rng);
  const Tensor probe_cat = Tensor::randn({2, 6}, rng);
  push("concat",
       std::max(
           grad_check(
               [&](const Tensor& t) {
                 return probed(concat({t, part}, 1), probe_cat);
               },
               part),
           grad_check(
               [&](const Tensor& t) {
                 return probed(concat({part, t}, 1), probe_cat);
               },
               part)),
       kOpLimit);
  push("split",
       grad_check(
           [&](const Tensor& t) {
             const auto parts = split(t, 1, 2);
             return add(probed(parts[0], slice(probe_cat, 1, 0, 3)),
                        probed(parts[1], slice(probe_cat, 1, 3, 3)));
           },
           probe_cat),
       kOpLimit);
  const Tensor sl = Tensor::randn({4, 5}, rng);
  const Tensor probe_sl = Tensor::randn({4, 3}, rng);
  push("slice",
       grad_check(
           [&](const Tensor& t) { return probed(slice(t, 1, 1, 3), probe_sl); },
           sl),
       kOpLimit);
  const Tensor gr = Tensor::randn({5, 3}, rng);
  const Tensor probe_gr = Tensor::randn({5, 3}, rng);
  const std::vector<int64_t> order{4, 0, 2, 2, 1};  // repeat checks fan-in
  push("gather_rows",
       grad_check(
           [&](const Tensor& t) {
             return probed(gather_rows(t, order), probe_gr);
           },
           gr),
       kOpLimit);

  const Tensor sd = Tensor::randn({4, 4, 4}, rng);
  const Tensor probe_sd = Tensor::randn({2, 2, 16}, rng);
  push("space_to_depth2",
       grad_check(
           [&](const Tensor& t) {
             return probed(space_to_depth2(t), probe_sd);
           },
           sd),
       kOpLimit);
  const Tensor ds = Tensor::randn({2, 2, 8}, rng);
  const Tensor probe_ds = Tensor::randn({4, 4, 2}, rng);
  push("depth_to_space2",
       grad_check(
           [&](const Tensor& t) {
             return probed(depth_to_space2(t), probe_ds);
           },
           ds),
       kOpLimit);

  const Tensor ma = Tensor::randn({3, 4}, rng);
  const Tensor mb = Tensor::randn({4, 2}, rng);
  const Tensor probe_mm = Tensor::randn({3, 2}, rng);
  push("matmul",
       std::max(grad_check(
                    [&](const Tensor& t) { return probed(matmul(t, mb), probe_mm); },
                    ma),
                grad_check(
                    [&](const Tensor& t) { return probed(matmul(ma, t), probe_mm); },
                    mb)),
       kOpLimit);

  const Tensor lx = Tensor::randn({2, 3, 4}, rng);
  const Tensor lw = Tensor::randn({4, 5}, rng);
  const Tensor lb = Tensor::randn({5}, rng);
  push("linear",
       std::max({grad_check(
                     [&](const Tensor& t) { return sum(silu(linear(t, lw, lb))); },
                     lx),
                 grad_check(
                     [&](const Tensor& t) { return sum(silu(linear(lx, t, lb))); },
                     lw),
                 grad_check(
                     [&](const Tensor& t) { return sum(silu(linear(lx, lw, t))); },
                     lb)}),
       kOpLimit);

  const Tensor cx = Tensor::randn({5, 5, 3}, rng);
  const Tensor ck = Tensor::randn({3, 3, 3, 4}, rng, 0.5);
  const Tensor cb = Tensor::randn({4}, rng);
  push("conv2d",
       std::max({grad_check(
                     [&](const Tensor& t) {
                       return sum(silu(conv2d(t, ck, cb, 2, 1)));
                     },
                     cx),
                 grad_check(
                     [&](const Tensor& t) {
                       return sum(silu(conv2d(cx, t, cb, 1, 1)));
                     },
                     ck),
                 grad_check(
                     [&](const Tensor& t) {
                       return sum(silu(conv2d(cx, ck, t, 1, 1)));
                     },
                     cb)}),
       kOpLimit);
  const Tensor dk = Tensor::randn({3, 3, 3}, rng, 0.5);
  push("depthwise_conv2d",
       std::max(grad_check(
                    [&](const Tensor& t) {
                      return sum(silu(depthwise_conv2d(t, dk)));
                    },
                    cx),
                grad_check(
                    [&](const Tensor& t) {
                      return sum(silu(depthwise_conv2d(cx, t)));
                    },
                    dk)),
       kOpLimit);
  const Tensor bias_c = Tensor::randn({4}, rng);
  push("add_channel_bias",
       std::max(grad_check(
                    [&](const Tensor& t) {
                      return sum(silu(add_channel_bias(t, bias_c)));
                    },
                    c),
                grad_check(
                    [&](const Tensor& t) {
                      return sum(silu(add_channel_bias(c, t)));
                    },
                    bias_c)),
       kOpLimit);

  const Tensor nx = Tensor::randn({3, 4}, rng);
  const Tensor ng = uniform_tensor({4}, rng, 0.5, 1.5);
  const Tensor nb = Tensor::randn({4}, rng);
  push("group_norm",
       std::max({grad_check(
                     [&](const Tensor& t) {
                       return sum(silu(group_norm(t, 2, ng, nb, 1e-5)));
                     },
                     nx),
                 grad_check(
                     [&](const Tensor& t) {
                       return sum(silu(group_norm(nx, 2, t, nb, 1e-5)));
                     },
                     ng),
                 grad_check(
                     [&](const Tensor& t) {
                       return sum(silu(group_norm(nx, 2, ng, t, 1e-5)));
                     },
                     nb)}),
       kOpLimit);
  push("layer_norm",
       std::max({grad_check(
                     [&](const Tensor& t) {
                       return sum(silu(layer_norm(t, ng, nb, 1e-6)));
                     },
                     nx),
                 grad_check(
                     [&](const Tensor& t) {
                       return sum(silu(layer_norm(nx, t, nb, 1e-6)));
                     },
                     ng),
                 grad_check(
                     [&](const Tensor& t) {
                       return sum(silu(layer_norm(nx, ng, t, 1e-6)));
                     },
                     nb)}),
       kOpLimit);

  const Tensor sm = Tensor::randn({3, 5}, rng);
  const Tensor probe_sm = Tensor::randn({3, 5}, rng);
  push("softmax_lastdim",
       grad_check(
           [&](const Tensor& t) {
             return probed(softmax_lastdim(t), probe_sm);
           },
           sm),
       kOpLimit);
  const std::vector<int> labels{0, 2, 1, 1, 0, 2};
  const Tensor logits = Tensor::randn({6, 3}, rng);
  push("cross_entropy_mean",
       grad_check(
           [&](const Tensor& t) { return cross_entropy_mean(t, labels); },
           logits),
       kOpLimit);

  const Tensor rx = Tensor::randn({3, 4, 2}, rng);
  const Tensor probe_up = Tensor::randn({5, 7, 2}, rng);
  const Tensor probe_down = Tensor::randn({2, 3, 2}, rng);
  push("resize2d_nearest",
       grad_check(
           [&](const Tensor& t) {
             return probed(resize2d(t, 5, 7, ResizeMode::kNearest), probe_up);
           },
           rx),
       kOpLimit);
  push("resize2d_bilinear",
       std::max(
           grad_check(
               [&](const Tensor& t) {
                 return probed(resize2d(t, 5, 7, ResizeMode::kBilinear),
                               probe_up);
               },
               rx),
           grad_check(
               [&](const Tensor& t) {
                 return probed(resize2d(t, 2, 3, ResizeMode::kBilinear),
                               probe_down);
               },
               rx)),
       kOpLimit);

  const Tensor fx = Tensor::randn({4, 4, 2}, rng);
  const Tensor fw_re = uniform_tensor({4, 4, 2}, rng, 0.5, 1.5);
  const Tensor fw_im = Tensor::randn({4, 4, 2}, rng, 0.3);
  const Tensor probe_f = Tensor::randn({4, 4, 2}, rng);
  const AxisPair hw_axes{0, 1};
  push("spectral_filter",
       std::max({grad_check(
                     [&](const Tensor& t) {
                       return probed(spectral_filter(t, fw_re, fw_im, hw_axes),
                                     probe_f);
                     },
                     fx),
                 grad_check(
                     [&](const Tensor& t) {
                       return probed(spectral_filter(fx, t, fw_im, hw_axes),
                                     probe_f);
                     },
                     fw_re),
                 grad_check(
                     [&](const Tensor& t) {
                       return probed(spectral_filter(fx, fw_re, t, hw_axes),
                                     probe_f);
                     },
                     fw_im)}),
       kOpLimit);

  const int64_t L = 5, d_inner = 3, d_state = 2;
  const Tensor su = Tensor::randn({L, d_inner}, rng);
  const Tensor sdelta = Tensor::randn({L, d_inner}, rng);
  const Tensor sb = Tensor::randn({L, d_state}, rng, 0.5);
  const Tensor sc = Tensor::randn({L, d_state}, rng, 0.5);
  const Tensor sa = uniform_tensor({d_inner, d_state}, rng, -0.5, 0.7);
  const Tensor sskip = Tensor::randn({d_inner}, rng);
  const Tensor probe_scan = Tensor::randn({L, d_inner}, rng);
  const auto scan_with = [&](const Tensor& u, const Tensor& d, const Tensor& bb,
                             const Tensor& cc, const Tensor& al,
                             const Tensor& ds2) {
    return probed(selective_scan_core(u, d, bb, cc, al, ds2), probe_scan);
  };
  push("selective_scan_core",
       std::max({grad_check([&](const Tensor& t) { return scan_with(t, sdelta, sb, sc, sa, sskip); }, su),
                 grad_check([&](const Tensor& t) { return scan_with(su, t, sb, sc, sa, sskip); }, sdelta),
                 grad_check([&](const Tensor& t) { return scan_with(su, sdelta, t, sc, sa, sskip); }, sb),
                 grad_check([&](const Tensor& t) { return scan_with(su, sdelta, sb, t, sa, sskip); }, sc),
                 grad_check([&](const Tensor& t) { return scan_with(su, sdelta, sb, sc, t, sskip); }, sa),
                 grad_check([&](const Tensor& t) { return scan_with(su, sdelta, sb, sc, sa, t); }, sskip)}),
       kOpLimit);

  SsmDirectionParams dir = init_ssm_direction(4, 3, 2, rng);
  const Tensor du = Tensor::randn({6, 4}, rng);
  const Tensor probe_du = Tensor::randn({6, 4}, rng);
  double dir_err = grad_check(
      [&](const Tensor& t) { return probed(selective_scan(t, dir), probe_du); },
      du);
  const std::vector<Tensor SsmDirectionParams::*> dir_fields{
      &SsmDirectionParams::x_proj_w, &SsmDirectionParams::dt_proj_w,
      &SsmDirectionParams::dt_proj_b, &SsmDirectionParams::a_log,
      &SsmDirectionParams::d_skip};
  for (const auto field : dir_fields) {
    dir_err = std::max(
        dir_err, grad_check(
                     [&](const Tensor& t) {
                       SsmDirectionParams p = dir;
                       p.*field = t;
                       return probed(selective_scan(du, p), probe_du);
                     },
                     dir.*field));
  }
  push("selective_scan", dir_err, kOpLimit);

  std::array<SsmDirectionParams, 4> dirs{
      init_ssm_direction(4, 2, 1, rng), init_ssm_direction(4, 2, 1, rng),
      init_ssm_direction(4, 2, 1, rng), init_ssm_direction(4, 2, 1, rng)};
  const Tensor sx = Tensor::randn({3, 3, 4}, rng);
  const Tensor probe_sx = Tensor::randn({3, 3, 4}, rng);
  push("ss2d",
       grad_check(
           [&](const Tensor& t) { return probed(ss2d(t, dirs), probe_sx); },
           sx),
       kOpLimit);

  VssBlockParams vss = init_vss_block(4, 2, rng);
  const Tensor vx = Tensor::randn({3, 3, 4}, rng, 0.5);
  const Tensor probe_vx = Tensor::randn({3, 3, 4}, rng);
  push("vss_block",
       grad_check(
           [&](const Tensor& t) { return probed(vss_block(t, vss), probe_vx); },
           vx),
       kOpLimit);

  MfeWeights mfe = init_mfe(4, 4, 8, rng, 1e-3);
  const Tensor mx = Tensor::randn({4, 4, 8}, rng, 0.5);
  const Tensor probe_mx = Tensor::randn({4, 4, 8}, rng);
  double mfe_err = grad_check(
      [&](const Tensor& t) { return probed(mfe_forward(t, mfe), probe_mx); },
      mx);
  const std::vector<Tensor MfeWeights::*> mfe_fields{
      &MfeWeights::w_hw_re, &MfeWeights::w_cw_im, &MfeWeights::dw_kernel,
      &MfeWeights::ffn_w1};
  for (const auto field : mfe_fields) {
    mfe_err = std::max(
        mfe_err, grad_check(
                     [&](const Tensor& t) {
                       MfeWeights w = mfe;
                       w.*field = t;
                       return probed(mfe_forward(mx, w), probe_mx);
                     },
                     mfe.*field));
  }
  push("mfe_forward", mfe_err, kOpLimit);

  ModelConfig pcfg;
  pcfg.input_h = 16;
  pcfg.input_w = 16;
  pcfg.stage_depths = {1, 1};
  pcfg.stage_dims = {8, 16};
  pcfg.d_state = 2;
  pcfg.validate();
  ModelWeights pw = init_model(pcfg, seed ^ 0x5eedull);
  const Tensor px = Tensor::randn({16, 16, 3}, rng, 0.5);
  const Tensor probe_pe = Tensor::randn({4, 4, 8}, rng);
  push("patch_embed",
       std::max(grad_check(
                    [&](const Tensor& t) {
                      return probed(patch_embed(t, pw.embed, 4), probe_pe);
                    },
                    px),
                grad_check(
                    [&](const Tensor& t) {
                      PatchEmbedWeights e = pw.embed;
                      e.kernel = t;
                      return probed(patch_embed(px, e, 4), probe_pe);
                    },
                    pw.embed.kernel)),
       kOpLimit);
  const Tensor mgx = Tensor::randn({4, 4, 8}, rng, 0.5);
  const Tensor probe_mg = Tensor::randn({2, 2, 16}, rng);
  push("patch_merge",
       grad_check(
           [&](const Tensor& t) {
             return probed(patch_merge(t, pw.merges[0]), probe_mg);
           },
           mgx),
       kOpLimit);
  const Tensor pex = Tensor::randn({2, 2, 16}, rng, 0.5);
  const Tensor probe_px2 = Tensor::randn({4, 4, 8}, rng);
  push("patch_expand",
       grad_check(
           [&](const Tensor& t) {
             return probed(patch_expand(t, pw.dec[0].expand), probe_px2);
           },
           pex),
       kOpLimit);

  // End to end: gradients reaching parameters at both ends of the 32x32
  // network traverse windowless input, embed, encoder, skips, decoder, head.
  ModelConfig ecfg;
  ecfg.input_h = 32;
  ecfg.input_w = 32;
  ecfg.stage_depths = {1, 1};
  ecfg.stage_dims = {8, 16};
  ecfg.d_state = 2;
  ecfg.validate();
  ModelWeights ew = init_model(ecfg, seed ^ 0xe2eull);
  Tensor ex3;
  {
    NoGradGuard ngg;
    const Tensor hu = uniform_tensor({32, 32}, rng, -200.0, 250.0);
    ex3 = tri_window_stack(hu, ecfg.windows);
  }
  const Tensor probe_e2e = Tensor::randn({32, 32, 3}, rng);
  const auto e2e_err = [&](const std::string& pname) {
    Tensor start;
    visit_params(ew, [&](const std::string& n, Tensor& t) {
      if (n == pname) start = t;
    });
    if (!start.defined())
      throw UsageError("grad suite: no parameter named " + pname);
    // eps below the per-op default: the scan exponentials give the composed
    // network steep third derivatives along input-side parameters, so 1e-4
    // central differences are truncation-limited (error falls as eps^2).
    return grad_check(
        [&](const Tensor& t) {
          ModelWeights wc = clone_weights(ew);
          visit_params(wc, [&](const std::string& n, Tensor& p) {
            if (n == pname) p = t;
          });
          return probed(forward_windowed(ex3, ecfg, wc), probe_e2e);
        },
        start, 1e-5);
  };
  push("network_32x32_embed_bias", e2e_err("embed.bias"), kEndToEndLimit);
  push("network_32x32_head_bias", e2e_err("head.bias"), kEndToEndLimit);
  std::string deep_dt, mfe_gamma;
  visit_params(ew, [&](const std::string& n, Tensor&) {
    if (deep_dt.empty() && n.find("dec.") == 0 &&
        n.find("dt_proj.b") != std::string::npos)
      deep_dt = n;
    if (mfe_gamma.empty() && n.find("mfe.") == 0 &&
        n.find("norm1.gamma") != std::string::npos)
      mfe_gamma = n;
  });
  if (deep_dt.empty() || mfe_gamma.empty())
    throw UsageError("grad suite: expected decoder scan and skip-filter names");
  push("network_32x32_decoder_scan_bias", e2e_err(deep_dt), kEndToEndLimit);
  push("network_32x32_skip_filter_norm", e2e_err(mfe_gamma), kEndToEndLimit);

  return out;
}

}  // namespace wemf
