#include "wemf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "wemf/error.hpp"
#include "wemf/ops.hpp"
#include "wemf/rng.hpp"

namespace wemf {

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw UsageError("train config: lr0 must be positive");
  if (t_max < 1) throw UsageError("train config: T_max must be at least 1");
  if (eta_min < 0.0 || eta_min > lr0)
    throw UsageError("train config: eta_min must lie in [0, lr0]");
  if (epochs < 1) throw UsageError("train config: epochs must be at least 1");
  if (batch_size < 1)
    throw UsageError("train config: batch size must be at least 1");
  if (weight_decay < 0.0)
    throw UsageError("train config: weight decay must be non-negative");
  if (w_dice < 0.0 || w_ce < 0.0)
    throw UsageError("train config: loss weights must be non-negative");
  if (w_dice == 0.0 && w_ce == 0.0)
    throw UsageError("train config: loss weights must not both be zero");
  if (target_val_dsc < 0.0 || target_val_dsc > 1.0)
    throw UsageError("train config: target DSC must lie in [0, 1]");
}

double cosine_lr(int64_t t, const TrainConfig& cfg) {
  if (t < 0) throw UsageError("cosine_lr: negative step");
  const int64_t tc = std::min(t, cfg.t_max);
  const double phase = M_PI * static_cast<double>(tc) /
                       static_cast<double>(cfg.t_max);
  return cfg.eta_min +
         (cfg.lr0 - cfg.eta_min) * (1.0 + std::cos(phase)) / 2.0;
}

Tensor dice_ce_loss(const Tensor& logits, const std::vector<uint8_t>& labels,
                    double w_dice, double w_ce) {
  if (logits.ndim() != 3)
    throw UsageError("dice_ce_loss: logits must be [H, W, C]");
  const int64_t h = logits.shape()[0], wd = logits.shape()[1],
                c = logits.shape()[2];
  if (c < 2) throw UsageError("dice_ce_loss: need at least two classes");
  const int64_t hw = h * wd;
  if (static_cast<int64_t>(labels.size()) != hw)
    throw UsageError("dice_ce_loss: label count does not match logits");
  for (uint8_t l : labels)
    if (l >= c) throw DataError("dice_ce_loss: label out of range");

  const Tensor flat = reshape(logits, {hw, c});
  std::vector<int> ids(labels.begin(), labels.end());
  const Tensor ce = cross_entropy_mean(flat, ids);

  constexpr double kSmooth = 1e-5;
  const Tensor probs = softmax_lastdim(flat);
  Tensor dice_sum = Tensor::scalar(0.0);
  for (int64_t cls = 1; cls < c; ++cls) {
    std::vector<double> onehot(static_cast<size_t>(hw), 0.0);
    double ref_sum = 0.0;
    for (int64_t i = 0; i < hw; ++i)
      if (labels[static_cast<size_t>(i)] == cls) {
        onehot[static_cast<size_t>(i)] = 1.0;
        ref_sum += 1.0;
      }
    const Tensor y = Tensor::from_data({hw, 1}, std::move(onehot));
    const Tensor p = slice(probs, 1, cls, 1);
    const Tensor inter = sum(mul(p, y));
    const Tensor num = add_scalar(mul_scalar(inter, 2.0), kSmooth);
    const Tensor den = add_scalar(sum(p), ref_sum + kSmooth);
    dice_sum = add(dice_sum, div(num, den));
  }
  const Tensor dice_mean = mul_scalar(dice_sum, 1.0 / static_cast<double>(c - 1));
  const Tensor dice_term = add_scalar(neg(dice_mean), 1.0);
  return add(mul_scalar(ce, w_ce), mul_scalar(dice_term, w_dice));
}

void adamw_step(const std::vector<std::pair<std::string, Tensor>>& params,
                AdamWState& state, double lr, double wd, double beta1,
                double beta2, double eps) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (const auto& [name, t] : params) {
    auto& data = t.impl()->data;
    const size_t n = data.size();
    auto& [m, v] = state.moments[name];
    if (m.size() != n) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
    const std::vector<double>* g = t.has_grad() ? &t.grad() : nullptr;
    for (size_t i = 0; i < n; ++i) {
      const double gi = g ? (*g)[i] : 0.0;
      data[i] *= 1.0 - lr * wd;
      m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
      v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
      data[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
}

double mean_foreground_dsc(const ModelConfig& cfg, const ModelWeights& w,
                           const std::vector<SliceSample>& slices) {
  if (slices.empty())
    throw UsageError("mean_foreground_dsc: no slices");
  NoGradGuard ng;
  int64_t tp[2] = {0, 0}, fp[2] = {0, 0}, fn[2] = {0, 0};
  for (const SliceSample& s : slices) {
    const Tensor logits = forward(s.hu, cfg, w);
    const int64_t hw = logits.shape()[0] * logits.shape()[1];
    const int64_t c = logits.shape()[2];
    const std::vector<double>& d = logits.data();
    for (int64_t i = 0; i < hw; ++i) {
      int64_t best = 0;
      for (int64_t k = 1; k < c; ++k)
        if (d[static_cast<size_t>(i * c + k)] >
            d[static_cast<size_t>(i * c + best)])
          best = k;
      const int64_t ref = s.labels[static_cast<size_t>(i)];
      for (int64_t cls = 1; cls <= 2; ++cls) {
        const bool p = best == cls, r = ref == cls;
        if (p && r)
          ++tp[cls - 1];
        else if (p)
          ++fp[cls - 1];
        else if (r)
          ++fn[cls - 1];
      }
    }
  }
  double acc = 0.0;
  for (int k = 0; k < 2; ++k) {
    const int64_t den = 2 * tp[k] + fp[k] + fn[k];
    acc += den == 0 ? 1.0 : 2.0 * static_cast<double>(tp[k]) /
                                static_cast<double>(den);
  }
  return acc / 2.0;
}

ModelWeights clone_weights(ModelWeights& w) {
  ModelWeights c = w;
  visit_params(c, [](const std::string&, Tensor& t) {
    t = Tensor::from_data(t.shape(), t.data(), t.requires_grad());
  });
  return c;
}

namespace {

uint64_t epoch_stream_seed(uint64_t seed, int64_t epoch) {
  return seed ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(epoch + 1));
}

TrainOutput run_train(const ModelConfig& mcfg, const TrainConfig& tcfg,
                      const std::vector<SliceSample>& train_slices,
                      const std::vector<SliceSample>& val_slices,
                      Checkpoint start) {
  mcfg.validate();
  tcfg.validate();
  if (train_slices.empty()) throw UsageError("train: no training slices");
  if (start.state.epochs_done > tcfg.epochs)
    throw UsageError("train: checkpoint is past the requested epoch count");

  const int64_t hw = mcfg.input_h * mcfg.input_w;
  const auto check_slices = [&](const std::vector<SliceSample>& ss,
                                const char* split) {
    for (const SliceSample& s : ss) {
      if (static_cast<int64_t>(s.labels.size()) != hw)
        throw DataError(std::string("train: ") + split +
                        " slice labels do not match the model input");
      for (uint8_t l : s.labels)
        if (l >= mcfg.num_classes)
          throw DataError(std::string("train: ") + split +
                          " slice label out of range");
    }
  };
  check_slices(train_slices, "train");
  check_slices(val_slices, "val");

  // Shape mismatches surface here, before any optimizer step.
  {
    NoGradGuard ng;
    (void)forward(train_slices[0].hu, mcfg, start.weights);
  }

  TrainOutput out;
  out.last = std::move(start);
  Checkpoint& ck = out.last;
  ck.state.seed = tcfg.seed;
  auto params = named_params(ck.weights);

  bool have_best = false;
  std::ostringstream log;
  const int64_t n = static_cast<int64_t>(train_slices.size());

  for (int64_t epoch = ck.state.epochs_done; epoch < tcfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, tcfg);
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(epoch_stream_seed(tcfg.seed, epoch));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    int64_t batches = 0;
    for (int64_t b0 = 0; b0 < n; b0 += tcfg.batch_size) {
      const int64_t bsz = std::min(tcfg.batch_size, n - b0);
      double batch_loss = 0.0;
      for (int64_t j = 0; j < bsz; ++j) {
        const SliceSample& s = train_slices[static_cast<size_t>(order[b0 + j])];
        const Tensor loss = dice_ce_loss(forward(s.hu, mcfg, ck.weights),
                                         s.labels, tcfg.w_dice, tcfg.w_ce);
        const Tensor scaled =
            mul_scalar(loss, 1.0 / static_cast<double>(bsz));
        scaled.backward();
        batch_loss += loss.value() / static_cast<double>(bsz);
      }
      adamw_step(params, ck.opt, lr, tcfg.weight_decay);
      for (auto& [name, t] : params) t.zero_grad();
      ++ck.state.global_step;
      ++out.steps_run;
      epoch_loss += batch_loss;
      ++batches;

      nlohmann::ordered_json line;
      line["epoch"] = epoch;
      line["step"] = ck.state.global_step;
      line["loss"] = batch_loss;
      line["lr"] = lr;
      log << line.dump() << "\n";
    }
    epoch_loss /= static_cast<double>(batches);
    out.epoch_losses.push_back(epoch_loss);
    ck.state.epochs_done = epoch + 1;

    double val_dsc = -1.0;
    if (!val_slices.empty())
      val_dsc = mean_foreground_dsc(mcfg, ck.weights, val_slices);

    nlohmann::ordered_json line;
    line["epoch"] = epoch;
    line["step"] = ck.state.global_step;
    line["loss"] = epoch_loss;
    line["lr"] = lr;
    if (val_dsc >= 0.0)
      line["val_dsc"] = val_dsc;
    else
      line["val_dsc"] = nullptr;
    log << line.dump() << "\n";

    if (val_dsc >= 0.0 && val_dsc > ck.state.best_val_dsc) {
      ck.state.best_val_dsc = val_dsc;
      ck.state.best_epoch = epoch;
      out.best_weights = clone_weights(ck.weights);
      have_best = true;
      out.best_improved = true;
    }
    if (tcfg.target_val_dsc > 0.0 && val_dsc >= tcfg.target_val_dsc) break;
  }

  if (!have_best) out.best_weights = clone_weights(ck.weights);
  out.log_jsonl = log.str();
  return out;
}

}  // namespace

TrainOutput train(const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::vector<SliceSample>& train_slices,
                  const std::vector<SliceSample>& val_slices) {
  Checkpoint start;
  start.weights = init_model(mcfg, tcfg.seed);
  start.state.seed = tcfg.seed;
  return run_train(mcfg, tcfg, train_slices, val_slices, std::move(start));
}

TrainOutput train_resume(const ModelConfig& mcfg, const TrainConfig& tcfg,
                         const std::vector<SliceSample>& train_slices,
                         const std::vector<SliceSample>& val_slices,
                         Checkpoint resume) {
  return run_train(mcfg, tcfg, train_slices, val_slices, std::move(resume));
}

}  // namespace wemf
