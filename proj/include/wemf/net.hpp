#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wemf/mfe.hpp"
#include "wemf/rng.hpp"
#include "wemf/ssm.hpp"
#include "wemf/tensor.hpp"
#include "wemf/windowing.hpp"

namespace wemf {

struct ModelConfig {
  int64_t in_channels = 3;
  int64_t num_classes = 3;  // background, tumor, cyst
  int64_t patch_size = 4;
  int64_t input_h = 64;
  int64_t input_w = 64;
  std::vector<int64_t> stage_depths{2, 2, 2};
  std::vector<int64_t> stage_dims{32, 64, 128};
  int64_t d_state = 8;
  bool mfe_enabled = true;
  TriWindowConfig windows = TriWindowConfig::defaults();

  int64_t stages() const { return static_cast<int64_t>(stage_depths.size()); }
  // depths/dims aligned; dims double per stage (patch merging forces 2x) and
  // stay divisible by 4; input dims divisible by patch_size * 2^(stages-1).
  void validate() const;

  static ModelConfig desk();
  // Larger reference configuration for the informational parameter count.
  static ModelConfig paper_scale();
};

struct PatchEmbedWeights {
  Tensor kernel;  // [p, p, in_channels, dims0]
  Tensor bias;    // [dims0]
  Tensor ln_gamma, ln_beta;
};

struct PatchMergeWeights {
  Tensor w;  // [4c, 2c], no bias; norm affine supplies the shift
  Tensor ln_gamma, ln_beta;  // [2c]
};

struct PatchExpandWeights {
  Tensor w;  // [c, 2c], no bias; rearranged to (2h, 2w, c/2)
  Tensor ln_gamma, ln_beta;  // [c/2]
};

struct DecoderStageWeights {
  PatchExpandWeights expand;
  std::vector<VssBlockParams> blocks;
};

struct ModelWeights {
  PatchEmbedWeights embed;
  std::vector<std::vector<VssBlockParams>> enc_blocks;  // one list per stage
  std::vector<PatchMergeWeights> merges;                // stages-1
  std::vector<MfeWeights> mfe;                          // stages-1 skip paths
  std::vector<DecoderStageWeights> dec;                 // stages-1, deep first
  PatchExpandWeights final0, final1;                    // 4x upsampling head
  Tensor head_kernel;  // [1, 1, dims0/4, num_classes]
  Tensor head_bias;    // [num_classes]
};

Tensor patch_embed(const Tensor& x, const PatchEmbedWeights& w, int64_t p);
Tensor patch_merge(const Tensor& x, const PatchMergeWeights& w);
Tensor patch_expand(const Tensor& x, const PatchExpandWeights& w);

// HU slice [H,W] -> logits [H,W,num_classes]: window stack, embed, encoder
// with merges, decoder with expanded features fused additively against
// (optionally MFE-enhanced) skips, 4x expansion, 1x1 head.
Tensor forward(const Tensor& hu_slice, const ModelConfig& cfg,
               const ModelWeights& w);

// Same network downstream of the windowing stage.
Tensor forward_windowed(const Tensor& x3, const ModelConfig& cfg,
                        const ModelWeights& w);

ModelWeights init_model(const ModelConfig& cfg, uint64_t seed,
                        double mfe_dw_noise_std = 1e-3);

// Stable dotted parameter paths; visitation order is fixed and sorted-free
// (struct order), names unique. The visitor may replace tensors wholesale.
void visit_params(ModelWeights& w,
                  const std::function<void(const std::string&, Tensor&)>& fn);
std::vector<std::pair<std::string, Tensor>> named_params(ModelWeights& w);

int64_t count_params(ModelWeights& w);
// Closed-form count for a config without allocating weights; must agree with
// count_params(init_model(cfg, seed)) exactly.
int64_t count_params_analytic(const ModelConfig& cfg);

// Forward-pass flop estimate under documented conventions: 2 flops per MAC
// for linear/conv layers; 5*N*log2(N) per length-N transform axis pass
// (forward and inverse both counted); 6 flops per complex elementwise
// multiply; 9 flops per (step, state, channel) scan update; elementwise
// adds/activations/normalizations excluded.
int64_t estimate_flops(const ModelConfig& cfg);

}  // namespace wemf
