#include "wemf/run_config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "wemf/error.hpp"

namespace wemf {

namespace {

void reject_unknown(const nlohmann::json& obj,
                    const std::vector<std::string>& known,
                    const std::string& where) {
  if (!obj.is_object())
    throw DataError("config: section " + where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw DataError("config: unknown key \"" + it.key() + "\" in " + where);
}

template <typename T>
void take(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).template get<T>();
}

}  // namespace

TriWindowConfig WindowsConfig::resolve() const {
  if (preset == "tri") return windows;
  if (preset == "single") return TriWindowConfig::replicated(windows.windows[0]);
  throw DataError("config: unknown windows preset \"" + preset + "\"");
}

ModelConfig RunConfig::resolved_model() const {
  ModelConfig m = model;
  m.windows = windows.resolve();
  return m;
}

void RunConfig::validate() const {
  double sum = 0.0;
  for (double r : data.split_ratios) {
    if (r < 0.0 || r > 1.0)
      throw DataError("config: data.split_ratios outside [0, 1]");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw DataError("config: data.split_ratios must sum to 1");
  if (eval.tau_mm <= 0.0) throw DataError("config: eval.tau_mm must be > 0");
  if (eval.split != "train" && eval.split != "val" && eval.split != "test")
    throw DataError("config: eval.split must be train, val, or test");
  resolved_model().validate();
  train.validate();
}

std::string RunConfig::to_json() const {
  const TriWindowConfig tw = windows.resolve();
  nlohmann::ordered_json j;
  j["data"] = {{"dir", data.dir},
               {"split_ratios", data.split_ratios},
               {"split_seed", data.split_seed}};
  j["windows"] = {
      {"preset", windows.preset},
      {"level",
       {tw.windows[0].level, tw.windows[1].level, tw.windows[2].level}},
      {"width",
       {tw.windows[0].width, tw.windows[1].width, tw.windows[2].width}}};
  j["model"] = {{"num_classes", model.num_classes},
                {"patch_size", model.patch_size},
                {"input_h", model.input_h},
                {"input_w", model.input_w},
                {"stage_depths", model.stage_depths},
                {"stage_dims", model.stage_dims},
                {"d_state", model.d_state},
                {"mfe_enabled", model.mfe_enabled}};
  j["train"] = {{"lr0", train.lr0},
                {"t_max", train.t_max},
                {"eta_min", train.eta_min},
                {"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"weight_decay", train.weight_decay},
                {"w_dice", train.w_dice},
                {"w_ce", train.w_ce},
                {"seed", train.seed},
                {"target_val_dsc", train.target_val_dsc}};
  j["eval"] = {{"tau_mm", eval.tau_mm}, {"split", eval.split}};
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("config: parse failure: ") + e.what());
  }
  reject_unknown(j, {"data", "windows", "model", "train", "eval"}, "document");

  RunConfig c;
  try {
    if (j.contains("data")) {
      const auto& d = j.at("data");
      reject_unknown(d, {"dir", "split_ratios", "split_seed"}, "data");
      take(d, "dir", c.data.dir);
      take(d, "split_ratios", c.data.split_ratios);
      take(d, "split_seed", c.data.split_seed);
    }
    if (j.contains("windows")) {
      const auto& w = j.at("windows");
      reject_unknown(w, {"preset", "level", "width"}, "windows");
      take(w, "preset", c.windows.preset);
      std::array<double, 3> level{}, width{};
      for (int i = 0; i < 3; ++i) {
        level[i] = c.windows.windows.windows[i].level;
        width[i] = c.windows.windows.windows[i].width;
      }
      take(w, "level", level);
      take(w, "width", width);
      try {
        c.windows.windows =
            TriWindowConfig{{WindowSpec(level[0], width[0]),
                             WindowSpec(level[1], width[1]),
                             WindowSpec(level[2], width[2])}};
      } catch (const std::invalid_argument& e) {
        throw DataError(std::string("config: windows: ") + e.what());
      }
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      reject_unknown(m,
                     {"num_classes", "patch_size", "input_h", "input_w",
                      "stage_depths", "stage_dims", "d_state", "mfe_enabled"},
                     "model");
      take(m, "num_classes", c.model.num_classes);
      take(m, "patch_size", c.model.patch_size);
      take(m, "input_h", c.model.input_h);
      take(m, "input_w", c.model.input_w);
      take(m, "stage_depths", c.model.stage_depths);
      take(m, "stage_dims", c.model.stage_dims);
      take(m, "d_state", c.model.d_state);
      take(m, "mfe_enabled", c.model.mfe_enabled);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      reject_unknown(t,
                     {"lr0", "t_max", "eta_min", "epochs", "batch_size",
                      "weight_decay", "w_dice", "w_ce", "seed",
                      "target_val_dsc"},
                     "train");
      take(t, "lr0", c.train.lr0);
      take(t, "t_max", c.train.t_max);
      take(t, "eta_min", c.train.eta_min);
      take(t, "epochs", c.train.epochs);
      take(t, "batch_size", c.train.batch_size);
      take(t, "weight_decay", c.train.weight_decay);
      take(t, "w_dice", c.train.w_dice);
      take(t, "w_ce", c.train.w_ce);
      take(t, "seed", c.train.seed);
      take(t, "target_val_dsc", c.train.target_val_dsc);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      reject_unknown(e, {"tau_mm", "split"}, "eval");
      take(e, "tau_mm", c.eval.tau_mm);
      take(e, "split", c.eval.split);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("config: malformed value: ") + e.what());
  }
  if (c.windows.preset != "tri" && c.windows.preset != "single")
    throw DataError("config: unknown windows preset \"" + c.windows.preset +
                    "\"");
  return c;
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  const std::string text = to_json();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("write failed: " + path);
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace wemf
