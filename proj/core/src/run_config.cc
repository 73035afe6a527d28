/* Copyright 2026 The kwsd2v Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "kwsd2v/run_config.h"

#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;
using nlohmann::json;

namespace kwsd2v {
namespace {

template <typename V>
void Read(const json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

const json& Section(const json& j, const char* key) {
  static const json kEmpty = json::object();
  return j.contains(key) ? j.at(key) : kEmpty;
}

}  // namespace

std::string ToString(Task task) {
  switch (task) {
    case Task::kPretrain: return "pretrain";
    case Task::kFinetune: return "finetune";
    case Task::kEvaluate: return "evaluate";
    default: return "train";
  }
}

Task TaskFromString(const std::string& s) {
  if (s == "pretrain") return Task::kPretrain;
  if (s == "finetune") return Task::kFinetune;
  if (s == "train") return Task::kTrain;
  if (s == "evaluate") return Task::kEvaluate;
  throw std::invalid_argument("unknown task '" + s + "'");
}

RunConfig RunConfig::Defaults(Task task) {
  RunConfig c;
  c.task = task;
  if (task == Task::kPretrain) {
    c.epochs = 200;
    c.optimizer.weight_decay = 0.1;
    c.optimizer.decoupled = false;
    c.schedule.kind = LrSchedule::Kind::kOneCycle;
    c.clip_grad_norm = 5.0;
    c.augment = false;
  } else {
    c.epochs = 140;
    c.optimizer.weight_decay = 0.1;
    c.optimizer.decoupled = true;
    c.schedule.kind = LrSchedule::Kind::kWarmupCosine;
    c.schedule.warmup_epochs = 10;
  }
  c.schedule.eta_max = 1e-3;
  c.schedule.total_epochs = c.epochs;
  c.schedule.batch_size = c.batch_size;
  return c;
}

void RunConfig::Validate(bool check_paths) const {
  model.Validate();
  mfcc.Validate();
  if (model.feature_dim != mfcc.n_mfcc) {
    throw std::invalid_argument("model feature_dim must equal mfcc.n_mfcc");
  }
  if (model.seq_len != mfcc.NumFrames(kClipSamples)) {
    throw std::invalid_argument("model seq_len must equal the MFCC frame count (" +
                                std::to_string(mfcc.NumFrames(kClipSamples)) + ")");
  }
  if (epochs <= 0 || batch_size <= 0 || micro_batch <= 0) {
    throw std::invalid_argument("epochs, batch_size and micro_batch must be positive");
  }
  LrSchedule s = schedule;
  s.total_epochs = epochs;
  s.Validate();
  if (task == Task::kPretrain) {
    data2vec.tau.Validate();
    if (data2vec.top_k < 1 || data2vec.top_k > model.n_blocks) {
      throw std::invalid_argument("data2vec.top_k must lie in [1, n_blocks]");
    }
    if (data2vec.span < 1 || data2vec.span > model.seq_len) {
      throw std::invalid_argument("data2vec.span must lie in [1, seq_len]");
    }
    if (!(data2vec.p_mask >= 0.0 && data2vec.p_mask <= 1.0)) {
      throw std::invalid_argument("data2vec.p_mask must lie in [0, 1]");
    }
  }
  if (spec_augment.max_time_mask > model.seq_len ||
      spec_augment.max_freq_mask > model.feature_dim) {
    throw std::invalid_argument("SpecAugment masks exceed the feature matrix");
  }
  if (!check_paths) return;
  auto need = [](const std::string& path, const char* what) {
    if (path.empty()) throw std::invalid_argument(std::string(what) + " is required");
    if (!fs::exists(path)) {
      throw std::invalid_argument(std::string(what) + " '" + path + "' does not exist");
    }
  };
  if (task != Task::kEvaluate) need(train_manifest, "data.train");
  if (task == Task::kTrain || task == Task::kFinetune) {
    need(validation_manifest, "data.validation");
    if (!test_manifest.empty()) need(test_manifest, "data.test");
  }
  if (task == Task::kFinetune) need(init_from, "init_from");
  if (!resume_from.empty()) need(resume_from, "resume_from");
}

json ToJson(const KwtConfig& m) {
  return json{{"variant", m.name},         {"n_blocks", m.n_blocks},
              {"encoder_dim", m.encoder_dim}, {"n_heads", m.n_heads},
              {"mlp_dim", m.mlp_dim},       {"n_classes", m.n_classes},
              {"seq_len", m.seq_len},       {"feature_dim", m.feature_dim}};
}

KwtConfig KwtConfigFromJson(const json& j) {
  KwtConfig m = KwtConfig::FromName(j.value("variant", std::string("kwt-1")));
  Read(j, "n_blocks", m.n_blocks);
  Read(j, "encoder_dim", m.encoder_dim);
  Read(j, "n_heads", m.n_heads);
  Read(j, "mlp_dim", m.mlp_dim);
  Read(j, "n_classes", m.n_classes);
  Read(j, "seq_len", m.seq_len);
  Read(j, "feature_dim", m.feature_dim);
  m.Validate();
  return m;
}

json ToJson(const RunConfig& c) {
  json j;
  j["task"] = ToString(c.task);
  j["seed"] = c.seed;
  j["model"] = ToJson(c.model);
  j["data"] = {{"train", c.train_manifest},
               {"validation", c.validation_manifest},
               {"test", c.test_manifest},
               {"feature_cache_dir", c.feature_cache_dir}};
  j["output_dir"] = c.output_dir;
  j["init_from"] = c.init_from;
  j["resume_from"] = c.resume_from;
  j["training"] = {{"epochs", c.epochs},
                   {"batch_size", c.batch_size},
                   {"micro_batch", c.micro_batch},
                   {"stop_after", c.stop_after},
                   {"label_smoothing", c.label_smoothing},
                   {"clip_grad_norm", c.clip_grad_norm}};
  j["optimizer"] = {{"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps},
                    {"weight_decay", c.optimizer.weight_decay},
                    {"decoupled", c.optimizer.decoupled}};
  j["schedule"] = {{"kind", ToString(c.schedule.kind)},
                   {"eta_max", c.schedule.eta_max},
                   {"warmup_epochs", c.schedule.warmup_epochs},
                   {"pct_start", c.schedule.pct_start},
                   {"div_factor", c.schedule.div_factor},
                   {"final_div_factor", c.schedule.final_div_factor}};
  j["spec_augment"] = {{"enabled", c.augment},
                       {"n_time_masks", c.spec_augment.n_time_masks},
                       {"max_time_mask", c.spec_augment.max_time_mask},
                       {"min_time_mask", c.spec_augment.min_time_mask},
                       {"n_freq_masks", c.spec_augment.n_freq_masks},
                       {"max_freq_mask", c.spec_augment.max_freq_mask},
                       {"min_freq_mask", c.spec_augment.min_freq_mask},
                       {"mask_value", c.spec_augment.mask_value}};
  j["data2vec"] = {{"p_mask", c.data2vec.p_mask},
                   {"span", c.data2vec.span},
                   {"mask_rule", ToString(c.data2vec.mask_rule)},
                   {"top_k", c.data2vec.top_k},
                   {"tau0", c.data2vec.tau.tau0},
                   {"tau_end", c.data2vec.tau.tau_end},
                   {"n_tau", c.data2vec.tau.n_tau}};
  j["mfcc"] = {{"window_length", c.mfcc.window_length},
               {"hop_length", c.mfcc.hop_length},
               {"n_mfcc", c.mfcc.n_mfcc},
               {"n_fft", c.mfcc.n_fft},
               {"n_mels", c.mfcc.n_mels},
               {"fmin", c.mfcc.fmin},
               {"fmax", c.mfcc.fmax},
               {"log_floor", c.mfcc.log_floor}};
  return j;
}

RunConfig RunConfigFromJson(const json& j) {
  if (!j.contains("seed")) throw std::invalid_argument("config must set 'seed'");
  RunConfig c = RunConfig::Defaults(TaskFromString(j.value("task", std::string("train"))));
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("model")) c.model = KwtConfigFromJson(j.at("model"));

  const json& data = Section(j, "data");
  Read(data, "train", c.train_manifest);
  Read(data, "validation", c.validation_manifest);
  Read(data, "test", c.test_manifest);
  Read(data, "feature_cache_dir", c.feature_cache_dir);
  Read(j, "output_dir", c.output_dir);
  Read(j, "init_from", c.init_from);
  Read(j, "resume_from", c.resume_from);

  const json& tr = Section(j, "training");
  Read(tr, "epochs", c.epochs);
  Read(tr, "batch_size", c.batch_size);
  Read(tr, "micro_batch", c.micro_batch);
  Read(tr, "stop_after", c.stop_after);
  Read(tr, "label_smoothing", c.label_smoothing);
  Read(tr, "clip_grad_norm", c.clip_grad_norm);

  const json& opt = Section(j, "optimizer");
  Read(opt, "beta1", c.optimizer.beta1);
  Read(opt, "beta2", c.optimizer.beta2);
  Read(opt, "eps", c.optimizer.eps);
  Read(opt, "weight_decay", c.optimizer.weight_decay);
  Read(opt, "decoupled", c.optimizer.decoupled);

  const json& sch = Section(j, "schedule");
  if (sch.contains("kind")) c.schedule.kind = LrKindFromString(sch.at("kind").get<std::string>());
  Read(sch, "eta_max", c.schedule.eta_max);
  Read(sch, "warmup_epochs", c.schedule.warmup_epochs);
  Read(sch, "pct_start", c.schedule.pct_start);
  Read(sch, "div_factor", c.schedule.div_factor);
  Read(sch, "final_div_factor", c.schedule.final_div_factor);
  c.schedule.total_epochs = c.epochs;
  c.schedule.batch_size = c.batch_size;

  const json& sa = Section(j, "spec_augment");
  Read(sa, "enabled", c.augment);
  Read(sa, "n_time_masks", c.spec_augment.n_time_masks);
  Read(sa, "max_time_mask", c.spec_augment.max_time_mask);
  Read(sa, "min_time_mask", c.spec_augment.min_time_mask);
  Read(sa, "n_freq_masks", c.spec_augment.n_freq_masks);
  Read(sa, "max_freq_mask", c.spec_augment.max_freq_mask);
  Read(sa, "min_freq_mask", c.spec_augment.min_freq_mask);
  Read(sa, "mask_value", c.spec_augment.mask_value);

  const json& dv = Section(j, "data2vec");
  Read(dv, "p_mask", c.data2vec.p_mask);
  Read(dv, "span", c.data2vec.span);
  if (dv.contains("mask_rule")) {
    c.data2vec.mask_rule = MaskRuleFromString(dv.at("mask_rule").get<std::string>());
  }
  Read(dv, "top_k", c.data2vec.top_k);
  Read(dv, "tau0", c.data2vec.tau.tau0);
  Read(dv, "tau_end", c.data2vec.tau.tau_end);
  Read(dv, "n_tau", c.data2vec.tau.n_tau);

  const json& mf = Section(j, "mfcc");
  Read(mf, "window_length", c.mfcc.window_length);
  Read(mf, "hop_length", c.mfcc.hop_length);
  Read(mf, "n_mfcc", c.mfcc.n_mfcc);
  Read(mf, "n_fft", c.mfcc.n_fft);
  Read(mf, "n_mels", c.mfcc.n_mels);
  Read(mf, "fmin", c.mfcc.fmin);
  Read(mf, "fmax", c.mfcc.fmax);
  Read(mf, "log_floor", c.mfcc.log_floor);
  return c;
}

RunConfig LoadRunConfig(const fs::path& path, std::optional<Task> task) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  if (task) {
    if (j.contains("task") && TaskFromString(j.at("task").get<std::string>()) != *task) {
      throw std::invalid_argument(path.string() + ": config task '" +
                                  j.at("task").get<std::string>() + "' conflicts with '" +
                                  ToString(*task) + "'");
    }
    j["task"] = ToString(*task);
  }
  return RunConfigFromJson(j);
}

}  // namespace kwsd2v
