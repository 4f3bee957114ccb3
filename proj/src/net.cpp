#include "wemf/net.hpp"

#include <cmath>
#include <utility>

#include "wemf/error.hpp"
#include "wemf/ops.hpp"

namespace wemf {

namespace {

constexpr double kLnEps = 1e-5;

Tensor scaled_randn(Shape shape, double std, Rng& rng) {
  return Tensor::randn(std::move(shape), rng, std, true);
}

int64_t stage_h(const ModelConfig& cfg, int64_t s) {
  return cfg.input_h / (cfg.patch_size << s);
}

int64_t stage_w(const ModelConfig& cfg, int64_t s) {
  return cfg.input_w / (cfg.patch_size << s);
}

}  // namespace

void ModelConfig::validate() const {
  if (in_channels < 1) throw UsageError("model config: in_channels < 1");
  if (num_classes < 2) throw UsageError("model config: num_classes < 2");
  if (patch_size != 4)
    throw UsageError(
        "model config: patch_size must be 4; the two-stage expansion head "
        "restores exactly 4x");
  if (stage_depths.empty())
    throw UsageError("model config: no stages configured");
  if (stage_depths.size() != stage_dims.size())
    throw UsageError("model config: stage_depths and stage_dims differ");
  for (int64_t d : stage_depths)
    if (d < 1) throw UsageError("model config: stage depth < 1");
  for (size_t s = 0; s < stage_dims.size(); ++s) {
    if (stage_dims[s] < 4 || stage_dims[s] % 4 != 0)
      throw UsageError("model config: stage dims must be multiples of 4");
    if (s + 1 < stage_dims.size() && stage_dims[s + 1] != 2 * stage_dims[s])
      throw UsageError("model config: stage dims must double per stage");
  }
  if (d_state < 1) throw UsageError("model config: d_state < 1");
  const int64_t grain = patch_size << (stages() - 1);
  if (input_h < grain || input_h % grain != 0 || input_w < grain ||
      input_w % grain != 0)
    throw UsageError(
        "model config: input dims must be divisible by patch_size * "
        "2^(stages-1)");
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper_scale() {
  ModelConfig cfg;
  cfg.input_h = 224;
  cfg.input_w = 224;
  cfg.stage_depths = {2, 2, 9, 2};
  cfg.stage_dims = {96, 192, 384, 768};
  cfg.d_state = 16;
  return cfg;
}

Tensor patch_embed(const Tensor& x, const PatchEmbedWeights& w, int64_t p) {
  Tensor y = conv2d(x, w.kernel, w.bias, p, 0);
  return layer_norm(y, w.ln_gamma, w.ln_beta, kLnEps);
}

Tensor patch_merge(const Tensor& x, const PatchMergeWeights& w) {
  Tensor y = linear(space_to_depth2(x), w.w, Tensor());
  return layer_norm(y, w.ln_gamma, w.ln_beta, kLnEps);
}

Tensor patch_expand(const Tensor& x, const PatchExpandWeights& w) {
  Tensor y = depth_to_space2(linear(x, w.w, Tensor()));
  return layer_norm(y, w.ln_gamma, w.ln_beta, kLnEps);
}

Tensor forward_windowed(const Tensor& x3, const ModelConfig& cfg,
                        const ModelWeights& w) {
  cfg.validate();
  if (x3.ndim() != 3 || x3.shape()[0] != cfg.input_h ||
      x3.shape()[1] != cfg.input_w || x3.shape()[2] != cfg.in_channels)
    throw UsageError("forward: input shape does not match configuration");
  const int64_t S = cfg.stages();

  Tensor x = patch_embed(x3, w.embed, cfg.patch_size);
  std::vector<Tensor> skips;
  for (int64_t s = 0; s < S; ++s) {
    for (const auto& blk : w.enc_blocks[static_cast<size_t>(s)])
      x = vss_block(x, blk);
    if (s < S - 1) {
      skips.push_back(x);
      x = patch_merge(x, w.merges[static_cast<size_t>(s)]);
    }
  }

  for (int64_t d = 0; d < S - 1; ++d) {
    const int64_t s = S - 2 - d;
    const auto& stage = w.dec[static_cast<size_t>(d)];
    x = patch_expand(x, stage.expand);
    Tensor skip = skips[static_cast<size_t>(s)];
    if (cfg.mfe_enabled) skip = mfe_forward(skip, w.mfe[static_cast<size_t>(s)]);
    x = add(x, skip);
    for (const auto& blk : stage.blocks) x = vss_block(x, blk);
  }

  x = patch_expand(x, w.final0);
  x = patch_expand(x, w.final1);
  return conv2d(x, w.head_kernel, w.head_bias, 1, 0);
}

Tensor forward(const Tensor& hu_slice, const ModelConfig& cfg,
               const ModelWeights& w) {
  if (cfg.in_channels != 3)
    throw UsageError("forward: windowed entry point expects in_channels == 3");
  return forward_windowed(tri_window_stack(hu_slice, cfg.windows), cfg, w);
}

ModelWeights init_model(const ModelConfig& cfg, uint64_t seed,
                        double mfe_dw_noise_std) {
  cfg.validate();
  Rng rng(seed);
  const int64_t S = cfg.stages();
  const int64_t d0 = cfg.stage_dims[0];
  ModelWeights w;

  w.embed.kernel = scaled_randn(
      {cfg.patch_size, cfg.patch_size, cfg.in_channels, d0},
      1.0 / std::sqrt(static_cast<double>(cfg.patch_size * cfg.patch_size *
                                          cfg.in_channels)),
      rng);
  w.embed.bias = Tensor::zeros({d0}, true);
  w.embed.ln_gamma = Tensor::full({d0}, 1.0, true);
  w.embed.ln_beta = Tensor::zeros({d0}, true);

  for (int64_t s = 0; s < S; ++s) {
    const int64_t c = cfg.stage_dims[static_cast<size_t>(s)];
    std::vector<VssBlockParams> blocks;
    for (int64_t i = 0; i < cfg.stage_depths[static_cast<size_t>(s)]; ++i)
      blocks.push_back(init_vss_block(c, cfg.d_state, rng));
    w.enc_blocks.push_back(std::move(blocks));
    if (s < S - 1) {
      PatchMergeWeights m;
      m.w = scaled_randn({4 * c, 2 * c},
                         1.0 / std::sqrt(static_cast<double>(4 * c)), rng);
      m.ln_gamma = Tensor::full({2 * c}, 1.0, true);
      m.ln_beta = Tensor::zeros({2 * c}, true);
      w.merges.push_back(std::move(m));
      w.mfe.push_back(
          init_mfe(stage_h(cfg, s), stage_w(cfg, s), c, rng, mfe_dw_noise_std));
    }
  }

  auto make_expand = [&rng](int64_t c) {
    PatchExpandWeights e;
    e.w = scaled_randn({c, 2 * c}, 1.0 / std::sqrt(static_cast<double>(c)),
                       rng);
    e.ln_gamma = Tensor::full({c / 2}, 1.0, true);
    e.ln_beta = Tensor::zeros({c / 2}, true);
    return e;
  };

  for (int64_t d = 0; d < S - 1; ++d) {
    const int64_t s = S - 2 - d;
    const int64_t c = cfg.stage_dims[static_cast<size_t>(s)];
    DecoderStageWeights stage;
    stage.expand = make_expand(2 * c);
    for (int64_t i = 0; i < cfg.stage_depths[static_cast<size_t>(s)]; ++i)
      stage.blocks.push_back(init_vss_block(c, cfg.d_state, rng));
    w.dec.push_back(std::move(stage));
  }

  w.final0 = make_expand(d0);
  w.final1 = make_expand(d0 / 2);
  w.head_kernel =
      scaled_randn({1, 1, d0 / 4, cfg.num_classes},
                   1.0 / std::sqrt(static_cast<double>(d0 / 4)), rng);
  w.head_bias = Tensor::zeros({cfg.num_classes}, true);
  return w;
}

namespace {

using ParamFn = std::function<void(const std::string&, Tensor&)>;

void visit_ssm_dir(const std::string& p, SsmDirectionParams& d,
                   const ParamFn& fn) {
  fn(p + "x_proj.w", d.x_proj_w);
  fn(p + "dt_proj.w", d.dt_proj_w);
  fn(p + "dt_proj.b", d.dt_proj_b);
  fn(p + "a_log", d.a_log);
  fn(p + "d_skip", d.d_skip);
}

void visit_vss(const std::string& p, VssBlockParams& b, const ParamFn& fn) {
  fn(p + "ln.gamma", b.ln_gamma);
  fn(p + "ln.beta", b.ln_beta);
  fn(p + "in_proj.w", b.in_proj_w);
  fn(p + "conv.kernel", b.conv_kernel);
  fn(p + "conv.bias", b.conv_bias);
  for (size_t d = 0; d < 4; ++d)
    visit_ssm_dir(p + "dir." + std::to_string(d) + ".", b.dirs[d], fn);
  fn(p + "scan_ln.gamma", b.scan_ln_gamma);
  fn(p + "scan_ln.beta", b.scan_ln_beta);
  fn(p + "out_proj.w", b.out_proj_w);
}

void visit_mfe(const std::string& p, MfeWeights& m, const ParamFn& fn) {
  fn(p + "w_hw.re", m.w_hw_re);
  fn(p + "w_hw.im", m.w_hw_im);
  fn(p + "w_cw.re", m.w_cw_re);
  fn(p + "w_cw.im", m.w_cw_im);
  fn(p + "w_ch.re", m.w_ch_re);
  fn(p + "w_ch.im", m.w_ch_im);
  fn(p + "dw.kernel", m.dw_kernel);
  fn(p + "norm1.gamma", m.norm1_gamma);
  fn(p + "norm1.beta", m.norm1_beta);
  fn(p + "norm2.gamma", m.norm2_gamma);
  fn(p + "norm2.beta", m.norm2_beta);
  fn(p + "ffn.w1", m.ffn_w1);
  fn(p + "ffn.b1", m.ffn_b1);
  fn(p + "ffn.w2", m.ffn_w2);
  fn(p + "ffn.b2", m.ffn_b2);
}

void visit_expand(const std::string& p, PatchExpandWeights& e,
                  const ParamFn& fn) {
  fn(p + "w", e.w);
  fn(p + "ln.gamma", e.ln_gamma);
  fn(p + "ln.beta", e.ln_beta);
}

}  // namespace

void visit_params(ModelWeights& w, const ParamFn& fn) {
  fn("embed.kernel", w.embed.kernel);
  fn("embed.bias", w.embed.bias);
  fn("embed.ln.gamma", w.embed.ln_gamma);
  fn("embed.ln.beta", w.embed.ln_beta);
  for (size_t s = 0; s < w.enc_blocks.size(); ++s)
    for (size_t i = 0; i < w.enc_blocks[s].size(); ++i)
      visit_vss("enc." + std::to_string(s) + ".block." + std::to_string(i) +
                    ".",
                w.enc_blocks[s][i], fn);
  for (size_t s = 0; s < w.merges.size(); ++s) {
    const std::string p = "merge." + std::to_string(s) + ".";
    fn(p + "w", w.merges[s].w);
    fn(p + "ln.gamma", w.merges[s].ln_gamma);
    fn(p + "ln.beta", w.merges[s].ln_beta);
  }
  for (size_t s = 0; s < w.mfe.size(); ++s)
    visit_mfe("mfe." + std::to_string(s) + ".", w.mfe[s], fn);
  for (size_t d = 0; d < w.dec.size(); ++d) {
    const std::string p = "dec." + std::to_string(d) + ".";
    visit_expand(p + "expand.", w.dec[d].expand, fn);
    for (size_t i = 0; i < w.dec[d].blocks.size(); ++i)
      visit_vss(p + "block." + std::to_string(i) + ".", w.dec[d].blocks[i], fn);
  }
  visit_expand("final.0.", w.final0, fn);
  visit_expand("final.1.", w.final1, fn);
  fn("head.kernel", w.head_kernel);
  fn("head.bias", w.head_bias);
}

std::vector<std::pair<std::string, Tensor>> named_params(ModelWeights& w) {
  std::vector<std::pair<std::string, Tensor>> out;
  visit_params(w, [&out](const std::string& name, Tensor& t) {
    out.emplace_back(name, t);
  });
  return out;
}

int64_t count_params(ModelWeights& w) {
  int64_t n = 0;
  visit_params(w, [&n](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

namespace {

int64_t ssm_dir_params(int64_t di, int64_t ds, int64_t dr) {
  return di * (dr + 2 * ds) + dr * di + di + di * ds + di;
}

int64_t vss_params(int64_t c, int64_t ds) {
  const int64_t di = 2 * c;
  const int64_t dr = std::max<int64_t>(1, di / 16);
  return 2 * c + c * 2 * di + 9 * di + di + 4 * ssm_dir_params(di, ds, dr) +
         2 * di + di * c;
}

int64_t expand_params(int64_t c) { return c * 2 * c + c; }

int64_t mfe_params(int64_t h, int64_t w, int64_t c) {
  const int64_t q = c / 4;
  return 6 * h * w * q + 9 * q + 4 * c + (c * 4 * c + 4 * c + 4 * c * c + c);
}

}  // namespace

int64_t count_params_analytic(const ModelConfig& cfg) {
  cfg.validate();
  const int64_t S = cfg.stages();
  const int64_t d0 = cfg.stage_dims[0];
  int64_t n = cfg.patch_size * cfg.patch_size * cfg.in_channels * d0 + d0 +
              2 * d0;
  for (int64_t s = 0; s < S; ++s) {
    const int64_t c = cfg.stage_dims[static_cast<size_t>(s)];
    n += cfg.stage_depths[static_cast<size_t>(s)] * vss_params(c, cfg.d_state);
    if (s < S - 1) {
      n += 4 * c * 2 * c + 2 * (2 * c);
      n += mfe_params(stage_h(cfg, s), stage_w(cfg, s), c);
      // mirrored decoder stage: expand from 2c plus the same block stack
      n += expand_params(2 * c) +
           cfg.stage_depths[static_cast<size_t>(s)] * vss_params(c, cfg.d_state);
    }
  }
  n += expand_params(d0) + expand_params(d0 / 2);
  n += (d0 / 4) * cfg.num_classes + cfg.num_classes;
  return n;
}

namespace {

double transform_flops(int64_t numel, int64_t na, int64_t nb) {
  return 5.0 * static_cast<double>(numel) *
         (std::log2(static_cast<double>(na)) +
          std::log2(static_cast<double>(nb)));
}

double vss_flops(int64_t h, int64_t w, int64_t c, int64_t ds) {
  const int64_t di = 2 * c;
  const int64_t dr = std::max<int64_t>(1, di / 16);
  const double L = static_cast<double>(h * w);
  double f = 2.0 * L * c * (2 * di);          // in_proj
  f += 2.0 * 9.0 * L * di;                    // depthwise conv
  f += 4.0 * (2.0 * L * di * (dr + 2 * ds) +  // x_proj
              2.0 * L * dr * di +             // dt_proj
              9.0 * L * di * ds);             // scan updates
  f += 2.0 * L * di * c;                      // out_proj
  return f;
}

double mfe_flops(int64_t h, int64_t w, int64_t c) {
  const int64_t q = c / 4;
  const double numel = static_cast<double>(h * w * q);
  double f = 0.0;
  // three spectral branches: forward + inverse transforms plus the complex
  // elementwise product, each over the branch's own axis pair
  f += 2.0 * transform_flops(h * w * q, h, w) + 6.0 * numel;
  f += 2.0 * transform_flops(h * w * q, q, w) + 6.0 * numel;
  f += 2.0 * transform_flops(h * w * q, q, h) + 6.0 * numel;
  f += 2.0 * 9.0 * numel;  // local branch depthwise conv
  f += 2.0 * static_cast<double>(h * w) * (c * 4.0 * c + 4.0 * c * c);  // FFN
  return f;
}

}  // namespace

int64_t estimate_flops(const ModelConfig& cfg) {
  cfg.validate();
  const int64_t S = cfg.stages();
  const int64_t d0 = cfg.stage_dims[0];
  double f = 2.0 * static_cast<double>(stage_h(cfg, 0) * stage_w(cfg, 0)) *
             cfg.patch_size * cfg.patch_size * cfg.in_channels * d0;
  for (int64_t s = 0; s < S; ++s) {
    const int64_t c = cfg.stage_dims[static_cast<size_t>(s)];
    const int64_t h = stage_h(cfg, s), w = stage_w(cfg, s);
    const double depth =
        static_cast<double>(cfg.stage_depths[static_cast<size_t>(s)]);
    f += depth * vss_flops(h, w, c, cfg.d_state);
    if (s < S - 1) {
      f += 2.0 * static_cast<double>((h / 2) * (w / 2)) * (4 * c) * (2 * c);
      if (cfg.mfe_enabled) f += mfe_flops(h, w, c);
      f += 2.0 * static_cast<double>((h / 2) * (w / 2)) * (2 * c) * (4 * c);
      f += depth * vss_flops(h, w, c, cfg.d_state);
    }
  }
  f += 2.0 * static_cast<double>(stage_h(cfg, 0) * stage_w(cfg, 0)) * d0 *
       (2 * d0);
  f += 2.0 * static_cast<double>(2 * stage_h(cfg, 0) * 2 * stage_w(cfg, 0)) *
       (d0 / 2) * d0;
  f += 2.0 * static_cast<double>(cfg.input_h * cfg.input_w) * (d0 / 4) *
       cfg.num_classes;
  return static_cast<int64_t>(f);
}

}  // namespace wemf
