#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wemf/checkpoint.hpp"
#include "wemf/dataset.hpp"
#include "wemf/net.hpp"
#include "wemf/tensor.hpp"

namespace wemf {

struct TrainConfig {
  double lr0 = 1e-4;
  int64_t t_max = 100;   // cosine annealing period, in epochs
  double eta_min = 0.0;
  int64_t epochs = 20;
  int64_t batch_size = 4;
  double weight_decay = 0.01;
  double w_dice = 1.0;
  double w_ce = 1.0;
  uint64_t seed = 0;
  // Stop once validation mean foreground DSC reaches this; 0 disables.
  double target_val_dsc = 0.0;

  void validate() const;
};

// eta_min + (lr0 - eta_min) * (1 + cos(pi * t / T_max)) / 2, with t clamped
// at T_max. Stepped once per epoch.
double cosine_lr(int64_t t, const TrainConfig& cfg);

// w_ce * mean cross-entropy + w_dice * (1 - soft dice averaged over the
// foreground classes), smoothing 1e-5. logits [H, W, C], labels row-major
// class ids below C.
Tensor dice_ce_loss(const Tensor& logits, const std::vector<uint8_t>& labels,
                    double w_dice, double w_ce);

// One AdamW step over all parameters: decoupled decay (p *= 1 - lr*wd)
// before the bias-corrected moment update. Parameters without an accumulated
// gradient decay but keep zero moments. Mutates tensors in place, off-tape.
void adamw_step(const std::vector<std::pair<std::string, Tensor>>& params,
                AdamWState& state, double lr, double wd, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

// Dice per foreground class from confusion counts pooled over all slices
// (argmax predictions), averaged over classes 1 and 2.
double mean_foreground_dsc(const ModelConfig& cfg, const ModelWeights& w,
                           const std::vector<SliceSample>& slices);

// Fresh tensors with copied values; gradients are not carried over.
ModelWeights clone_weights(ModelWeights& w);

struct TrainOutput {
  Checkpoint last;            // state after the final epoch
  ModelWeights best_weights;  // highest validation DSC (last weights if no val)
  // False when validation never improved during this call (a resumed run
  // whose best lies in an earlier segment); callers keep their stored best.
  bool best_improved = false;
  std::string log_jsonl;      // one JSON object per step, plus epoch summaries
  std::vector<double> epoch_losses;
  int64_t steps_run = 0;
};

// Deterministic given the seed: the per-epoch shuffle stream derives from
// (seed, epoch), so a run resumed from a checkpoint continues bit-exactly.
// A dry-run forward surfaces data/model shape mismatches before step 1.
TrainOutput train(const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::vector<SliceSample>& train_slices,
                  const std::vector<SliceSample>& val_slices);

// Continues from a checkpoint until tcfg.epochs total epochs are done.
TrainOutput train_resume(const ModelConfig& mcfg, const TrainConfig& tcfg,
                         const std::vector<SliceSample>& train_slices,
                         const std::vector<SliceSample>& val_slices,
                         Checkpoint resume);

}  // namespace wemf
