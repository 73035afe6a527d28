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

#include "kwsd2v/pipeline.h"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <ostream>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

#include "kwsd2v/objectives.h"

namespace fs = std::filesystem;

namespace kwsd2v {
namespace {

using Clock = std::chrono::steady_clock;

// Sets flush-to-zero and denormals-are-zero for the calling thread. Decayed
// optimizer moments otherwise drift into the denormal range, where float
// arithmetic is two orders of magnitude slower.
class ScopedFlushDenormals {
 public:
  ScopedFlushDenormals() {
#if defined(__SSE__)
    saved_ = _mm_getcsr();
    _mm_setcsr(saved_ | 0x8040);
#endif
  }
  ~ScopedFlushDenormals() {
#if defined(__SSE__)
    _mm_setcsr(saved_);
#endif
  }
  ScopedFlushDenormals(const ScopedFlushDenormals&) = delete;
  ScopedFlushDenormals& operator=(const ScopedFlushDenormals&) = delete;

 private:
  unsigned int saved_ = 0;
};

struct DataSet {
  Manifest manifest;
  FeatureBank bank;
};

// Micro-batches of one epoch in order. The next micro-batch is gathered on
// a worker thread while the caller computes on the current one; gathers run
// strictly one after another, so augmentation draws keep their order.
class MicroBatchStream {
 public:
  MicroBatchStream(const DataSet& data, const std::vector<std::vector<std::size_t>>& batches,
                   int micro_batch, const FeatureStats& stats,
                   const SpecAugmentParams* augment = nullptr, std::mt19937_64* rng = nullptr)
      : data_(data), stats_(stats), augment_(augment), rng_(rng) {
    for (std::size_t b = 0; b < batches.size(); ++b) {
      for (std::size_t i = 0; i < batches[b].size(); i += micro_batch) {
        const std::size_t n = std::min<std::size_t>(micro_batch, batches[b].size() - i);
        spans_.emplace_back(batches[b].data() + i, n);
      }
    }
    Launch();
  }

  // Rows of the micro-batch Next() returns next.
  std::size_t NextSize() const { return spans_[next_].size(); }

  Batch Next() {
    Batch b = pending_.get();
    ++next_;
    Launch();
    return b;
  }

 private:
  void Launch() {
    if (next_ >= spans_.size()) return;
    pending_ = std::async(std::launch::async, [this, rows = spans_[next_]] {
      const ScopedFlushDenormals flush;
      return GatherBatch(data_.manifest, data_.bank, rows, stats_, augment_, rng_);
    });
  }

  const DataSet& data_;
  const FeatureStats& stats_;
  const SpecAugmentParams* augment_;
  std::mt19937_64* rng_;
  std::vector<std::span<const std::size_t>> spans_;
  std::size_t next_ = 0;
  std::future<Batch> pending_;
};

DataSet LoadData(const std::string& csv, const RunConfig& cfg, std::ostream& log) {
  DataSet d;
  d.manifest = LoadManifest(csv);
  if (d.manifest.empty()) throw std::invalid_argument("manifest '" + csv + "' is empty");
  std::optional<fs::path> cache;
  if (!cfg.feature_cache_dir.empty()) {
    fs::create_directories(cfg.feature_cache_dir);
    cache = fs::path(cfg.feature_cache_dir) / (fs::path(csv).stem().string() + ".feat");
  }
  const auto t0 = Clock::now();
  d.bank = FeatureBank::Build(d.manifest, cfg.mfcc, cache);
  log << "loaded " << d.manifest.size() << " rows from " << csv << " ("
      << std::chrono::duration<double>(Clock::now() - t0).count() << " s)\n";
  return d;
}

std::string FormatNumber(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::uint64_t Fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::string> ResolveClassMap(const Manifest& m) {
  if (!m.class_map.empty()) return m.class_map;
  int max_label = -1;
  for (const auto& r : m.rows) max_label = std::max(max_label, r.label);
  std::vector<std::string> names;
  for (int i = 0; i <= max_label; ++i) names.push_back(std::to_string(i));
  return names;
}

void RequireSameClasses(const std::vector<std::string>& expected, const Manifest& m,
                        const std::string& what) {
  if (!m.class_map.empty() && m.class_map != expected) {
    throw std::invalid_argument(what + " manifest class map differs from the model's");
  }
  for (const auto& r : m.rows) {
    if (r.label < 0 || r.label >= static_cast<int>(expected.size())) {
      throw std::invalid_argument(what + " row '" + r.id + "' has no valid label");
    }
  }
}

bool SameEncoderShape(const KwtConfig& a, const KwtConfig& b) {
  return a.n_blocks == b.n_blocks && a.encoder_dim == b.encoder_dim && a.n_heads == b.n_heads &&
         a.mlp_dim == b.mlp_dim && a.seq_len == b.seq_len && a.feature_dim == b.feature_dim;
}

std::vector<std::size_t> Iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

struct EvalStats {
  double loss = 0.0;
  int correct = 0;
  int count = 0;
  std::vector<int> predictions;
};

EvalStats EvalLoop(const KwtModel<float>& model, const ParamStore<float>& params,
                   const DataSet& data, const FeatureStats& stats, double smoothing,
                   int micro_batch) {
  EvalStats out;
  const auto rows = Iota(data.manifest.size());
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < rows.size(); i += micro_batch) {
    const std::size_t n = std::min<std::size_t>(micro_batch, rows.size() - i);
    const Batch b = GatherBatch(data.manifest, data.bank,
                                std::span<const std::size_t>(rows.data() + i, n), stats);
    const auto enc = model.Encode(params, b.features, static_cast<int>(n));
    const Mat<float> logits = model.Classify(params, enc);
    loss_sum += SmoothedCrossEntropy<float>(logits, b.labels, smoothing) * static_cast<double>(n);
    const auto pred = Argmax(logits);
    for (std::size_t k = 0; k < n; ++k) {
      out.correct += pred[k] == b.labels[k];
      out.predictions.push_back(pred[k]);
    }
    out.count += static_cast<int>(n);
  }
  out.loss = loss_sum / out.count;
  return out;
}

std::optional<double> WallSeconds(Clock::time_point start) {
  if (DeterministicMode()) return std::nullopt;
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Checkpoint MakeCheckpoint(const std::string& kind, const KwtConfig& model,
                          const nlohmann::json& snapshot,
                          const std::vector<std::string>& class_map, std::int64_t epoch,
                          std::int64_t step, const FeatureStats& stats,
                          const ParamStore<float>& params, const OptimizerState<float>& opt) {
  Checkpoint c;
  c.kind = kind;
  c.model = model;
  c.config = snapshot;
  c.class_map = class_map;
  c.epoch = epoch;
  c.global_step = step;
  c.feature_stats = stats;
  c.student = params;
  c.optimizer = opt;
  return c;
}

LrSchedule ResolveSchedule(const RunConfig& cfg, std::size_t num_rows) {
  LrSchedule s = cfg.schedule;
  s.total_epochs = cfg.epochs;
  s.batch_size = cfg.batch_size;
  s.steps_per_epoch =
      static_cast<std::int64_t>((num_rows + cfg.batch_size - 1) / cfg.batch_size);
  s.Validate();
  return s;
}

void ResetMetrics(const fs::path& path, bool resuming) {
  if (!resuming && fs::exists(path)) fs::remove(path);
}

// Shared by the baseline and fine-tuning workflows; they differ only in
// `pretrained`.
RunResult RunSupervised(const RunConfig& cfg, const Checkpoint* pretrained, std::ostream& log) {
  const ScopedFlushDenormals flush;
  cfg.Validate();
  const fs::path out_dir = cfg.output_dir;
  fs::create_directories(out_dir);

  const DataSet train = LoadData(cfg.train_manifest, cfg, log);
  const DataSet val = LoadData(cfg.validation_manifest, cfg, log);
  std::optional<DataSet> test;
  if (!cfg.test_manifest.empty()) test = LoadData(cfg.test_manifest, cfg, log);

  const auto class_map = ResolveClassMap(train.manifest);
  RequireSameClasses(class_map, train.manifest, "train");
  RequireSameClasses(class_map, val.manifest, "validation");
  if (test) RequireSameClasses(class_map, test->manifest, "test");

  KwtConfig mc = cfg.model;
  mc.n_classes = static_cast<int>(class_map.size());
  if (pretrained != nullptr) {
    if (pretrained->kind != "pretrain") {
      throw std::invalid_argument("init_from must be a pretraining checkpoint");
    }
    if (!SameEncoderShape(pretrained->model, mc)) {
      throw std::invalid_argument("model variant '" + mc.name +
                                  "' does not match the pretrained checkpoint ('" +
                                  pretrained->model.name + "')");
    }
    CheckCompatible(*pretrained, mc, /*encoder_only=*/true);
  }
  const KwtModel<float> model(mc);

  RunConfig snap_cfg = cfg;
  snap_cfg.model = mc;
  const nlohmann::json snapshot = ToJson(snap_cfg);
  {
    std::ofstream(out_dir / "config.json") << snapshot.dump(2) << '\n';
  }

  FeatureStats stats = pretrained != nullptr ? pretrained->feature_stats
                                             : FeatureStats::Compute(train.bank.frames());
  auto init_rng = SubstreamEngine(cfg.seed, "init");
  auto aug_rng = SubstreamEngine(cfg.seed, "augmentation");
  const std::uint64_t data_seed = SubstreamEngine(cfg.seed, "data")();

  ParamStore<float> params = InitialSupervisedParams(model, pretrained, init_rng);
  OptimizerState<float> opt = cfg.optimizer;
  opt.Resize(params.Flat().size());
  opt.step = 0;
  const LrSchedule schedule = ResolveSchedule(cfg, train.manifest.size());

  RunResult result;
  result.best_val_accuracy = -1.0;
  int start_epoch = 0;
  std::int64_t global_step = 0;
  if (!cfg.resume_from.empty()) {
    const Checkpoint ck = LoadCheckpoint(cfg.resume_from);
    CheckCompatible(ck, mc);
    if (!ck.optimizer) throw CheckpointError("resume checkpoint has no optimizer state");
    params = ck.student;
    opt = *ck.optimizer;
    stats = ck.feature_stats;
    start_epoch = static_cast<int>(ck.epoch);
    global_step = ck.global_step;
    RestoreEngine(aug_rng, ck.rng_states.at("augmentation"));
    result.best_val_accuracy = ck.metrics.value("best_val_accuracy", -1.0);
    result.best_epoch = ck.metrics.value("best_epoch", 0);
    log << "resuming at epoch " << start_epoch << "\n";
  }

  const fs::path metrics_path = out_dir / "metrics.csv";
  ResetMetrics(metrics_path, !cfg.resume_from.empty());
  result.last_checkpoint = out_dir / "ckpt-last.bin";
  result.best_checkpoint = out_dir / "ckpt-best.bin";

  ParamStore<float> grads(params.shared_layout());
  const int end_epoch = cfg.stop_after >= 0 ? std::min(cfg.epochs, cfg.stop_after) : cfg.epochs;
  for (int epoch = start_epoch; epoch < end_epoch; ++epoch) {
    const auto t0 = Clock::now();
    const auto batches = EpochBatches(train.manifest.size(), cfg.batch_size, data_seed, epoch);
    double loss_sum = 0.0;
    int correct = 0, seen = 0;
    double lr = 0.0;
    MicroBatchStream stream(train, batches, cfg.micro_batch, stats,
                            cfg.augment ? &cfg.spec_augment : nullptr, &aug_rng);
    for (const auto& rows : batches) {
      grads.SetZero();
      const auto total = static_cast<float>(rows.size());
      for (std::size_t i = 0; i < rows.size(); i += cfg.micro_batch) {
        const std::size_t n = stream.NextSize();
        const Batch b = stream.Next();
        Mat<float> logits;
        const float loss = SupervisedObjective<float>(
            model, params, b.features, b.labels, cfg.label_smoothing, &grads,
            static_cast<float>(n) / total, &logits);
        if (!std::isfinite(loss)) {
          throw NonFiniteError("non-finite training loss in epoch " + std::to_string(epoch + 1) +
                               "; " + result.last_checkpoint.string() +
                               " holds the last good epoch");
        }
        loss_sum += static_cast<double>(loss) * static_cast<double>(n);
        const auto pred = Argmax(logits);
        for (std::size_t k = 0; k < n; ++k) correct += pred[k] == b.labels[k];
        seen += static_cast<int>(n);
      }
      if (cfg.clip_grad_norm > 0.0) ClipGlobalNorm(grads, cfg.clip_grad_norm);
      lr = schedule.At(global_step);
      AdamWStep(params, grads, opt, lr);
      ++global_step;
    }

    MetricsRow train_row{epoch + 1, "train", loss_sum / seen,
                         static_cast<double>(correct) / seen, lr, std::nullopt, std::nullopt,
                         WallSeconds(t0)};
    const EvalStats v = EvalLoop(model, params, val, stats, cfg.label_smoothing, cfg.micro_batch);
    const double val_acc = static_cast<double>(v.correct) / v.count;
    MetricsRow val_row{epoch + 1, "val", v.loss, val_acc, std::nullopt, std::nullopt,
                       std::nullopt, WallSeconds(t0)};
    const bool improved = val_acc > result.best_val_accuracy;
    if (improved) {
      result.best_val_accuracy = val_acc;
      result.best_epoch = epoch + 1;
    }

    Checkpoint ck = MakeCheckpoint("supervised", mc, snapshot, class_map, epoch + 1,
                                   global_step, stats, params, opt);
    ck.rng_states["augmentation"] = EngineState(aug_rng);
    ck.metrics = {{"best_val_accuracy", result.best_val_accuracy},
                  {"best_epoch", result.best_epoch},
                  {"val_accuracy", val_acc}};
    SaveCheckpoint(ck, result.last_checkpoint);
    if (improved) SaveCheckpoint(ck, result.best_checkpoint);

    log << "epoch " << epoch + 1 << "/" << cfg.epochs << " train_loss " << train_row.loss
        << " train_acc " << *train_row.accuracy << " val_loss " << v.loss << " val_acc "
        << val_acc << " lr " << lr << "\n";
    AppendMetrics(metrics_path, {train_row, val_row});
    result.metrics.push_back(train_row);
    result.metrics.push_back(val_row);
  }

  if (test && end_epoch == cfg.epochs && fs::exists(result.best_checkpoint)) {
    const Checkpoint best = LoadCheckpoint(result.best_checkpoint);
    const EvalReport report = Evaluate(best, test->manifest, std::nullopt, cfg.micro_batch);
    (void)report;
    const EvalStats t = EvalLoop(model, best.student, *test, best.feature_stats,
                                 cfg.label_smoothing, cfg.micro_batch);
    const double acc = static_cast<double>(t.correct) / t.count;
    result.test_accuracy = acc;
    MetricsRow test_row{result.best_epoch, "test", t.loss, acc, std::nullopt, std::nullopt,
                        std::nullopt, std::nullopt};
    AppendMetrics(metrics_path, {test_row});
    result.metrics.push_back(test_row);
    WriteClassReport(report, out_dir / "test_per_class.csv");
    log << "test accuracy (best epoch " << result.best_epoch << "): " << acc << "\n";
  }
  return result;
}

}  // namespace

bool DeterministicMode() {
  const char* v = std::getenv("KWSD2V_DETERMINISTIC");
  if (v == nullptr) return true;
  const std::string s(v);
  return !(s == "0" || s == "false" || s == "off");
}

std::string FormatMetricsRow(const MetricsRow& row) {
  auto opt = [](const std::optional<double>& v) { return v ? FormatNumber(*v) : std::string(); };
  return std::to_string(row.epoch) + "," + row.phase + "," + FormatNumber(row.loss) + "," +
         opt(row.accuracy) + "," + opt(row.lr) + "," + opt(row.tau) + "," +
         opt(row.target_variance) + "," + opt(row.wall_seconds);
}

void AppendMetrics(const fs::path& path, const std::vector<MetricsRow>& rows) {
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error(path.string() + ": cannot write metrics");
  if (fresh) out << kMetricsHeader << '\n';
  for (const auto& r : rows) out << FormatMetricsRow(r) << '\n';
}

std::mt19937_64 SubstreamEngine(std::uint64_t seed, const std::string& purpose) {
  const std::uint64_t tag = Fnv1a(purpose);
  std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                   static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  return std::mt19937_64(ss);
}

ParamStore<float> InitialSupervisedParams(const KwtModel<float>& model,
                                          const Checkpoint* pretrained,
                                          std::mt19937_64& init_rng) {
  ParamStore<float> params = model.Init(init_rng);
  if (pretrained != nullptr) {
    const ParamLayout& enc = *model.encoder_layout();
    for (int i = 0; i < enc.num_tensors(); ++i) {
      const auto src = pretrained->student.Flat(pretrained->student.layout().Require(enc[i].name));
      auto dst = params.Flat(i);
      if (src.size() != dst.size()) {
        throw CheckpointError("shape mismatch for '" + enc[i].name + "'");
      }
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  return params;
}

RunResult TrainSupervised(const RunConfig& config, std::ostream& log) {
  if (!config.init_from.empty()) {
    throw std::invalid_argument("train starts from random init; use finetune for init_from");
  }
  return RunSupervised(config, nullptr, log);
}

RunResult Finetune(const RunConfig& config, std::ostream& log) {
  if (config.init_from.empty()) throw std::invalid_argument("finetune requires init_from");
  const Checkpoint pretrained = LoadCheckpoint(config.init_from);
  return RunSupervised(config, &pretrained, log);
}

RunResult Pretrain(const RunConfig& cfg, std::ostream& log) {
  const ScopedFlushDenormals flush;
  cfg.Validate();
  const fs::path out_dir = cfg.output_dir;
  fs::create_directories(out_dir);
  const DataSet data = LoadData(cfg.train_manifest, cfg, log);

  KwtConfig mc = cfg.model;
  if (!data.manifest.class_map.empty()) {
    mc.n_classes = static_cast<int>(data.manifest.class_map.size());
  }
  const KwtModel<float> model(mc);
  const int S = mc.seq_len;

  RunConfig snap_cfg = cfg;
  snap_cfg.model = mc;
  const nlohmann::json snapshot = ToJson(snap_cfg);
  {
    std::ofstream(out_dir / "config.json") << snapshot.dump(2) << '\n';
  }

  FeatureStats stats = FeatureStats::Compute(data.bank.frames());
  auto init_rng = SubstreamEngine(cfg.seed, "init");
  auto mask_rng = SubstreamEngine(cfg.seed, "masking");
  const std::uint64_t data_seed = SubstreamEngine(cfg.seed, "data")();

  ParamStore<float> params = model.Init(init_rng);
  TeacherState<float> teacher = TeacherState<float>::FromStudent(params, model.encoder_layout());
  OptimizerState<float> opt = cfg.optimizer;
  opt.Resize(params.Flat().size());
  opt.step = 0;
  const LrSchedule schedule = ResolveSchedule(cfg, data.manifest.size());

  RunResult result;
  int start_epoch = 0;
  std::int64_t global_step = 0;
  int low_variance_streak = 0;
  if (!cfg.resume_from.empty()) {
    const Checkpoint ck = LoadCheckpoint(cfg.resume_from);
    CheckCompatible(ck, mc);
    if (!ck.optimizer || !ck.teacher) {
      throw CheckpointError("resume checkpoint lacks optimizer or teacher state");
    }
    params = ck.student;
    opt = *ck.optimizer;
    teacher = *ck.teacher;
    stats = ck.feature_stats;
    start_epoch = static_cast<int>(ck.epoch);
    global_step = ck.global_step;
    RestoreEngine(mask_rng, ck.rng_states.at("masking"));
    low_variance_streak = ck.metrics.value("low_variance_streak", 0);
    log << "resuming at epoch " << start_epoch << "\n";
  }

  const fs::path metrics_path = out_dir / "metrics.csv";
  ResetMetrics(metrics_path, !cfg.resume_from.empty());
  result.last_checkpoint = out_dir / "ckpt-last.bin";

  ParamStore<float> grads(params.shared_layout());
  std::vector<MaskSpec> masks;
  const int end_epoch = cfg.stop_after >= 0 ? std::min(cfg.epochs, cfg.stop_after) : cfg.epochs;
  for (int epoch = start_epoch; epoch < end_epoch; ++epoch) {
    const auto t0 = Clock::now();
    const auto batches = EpochBatches(data.manifest.size(), cfg.batch_size, data_seed, epoch);
    double loss_sum = 0.0, variance_sum = 0.0;
    int seen = 0, variance_count = 0;
    double lr = 0.0, tau = 0.0;
    MicroBatchStream stream(data, batches, cfg.micro_batch, stats);
    for (const auto& rows : batches) {
      grads.SetZero();
      const auto total = static_cast<float>(rows.size());
      for (std::size_t i = 0; i < rows.size(); i += cfg.micro_batch) {
        const std::size_t n = stream.NextSize();
        const int nb = static_cast<int>(n);
        const Batch b = stream.Next();

        const auto teacher_out = model.Encode(teacher.weights, b.features, nb);
        const auto targets =
            BuildTargets<float>(teacher_out.hiddens, cfg.data2vec.top_k);
        if (nb >= 2) {
          variance_sum += ComputeTargetStats(targets.targets, S).mean_variance;
          ++variance_count;
        }

        masks.clear();
        for (int k = 0; k < nb; ++k) {
          masks.push_back(SampleMask(S, cfg.data2vec.p_mask, cfg.data2vec.span, mask_rng,
                                     cfg.data2vec.mask_rule));
        }
        const float loss = MaskedPredictionObjective<float>(
            model, params, b.features, masks, targets.targets, &grads,
            static_cast<float>(n) / total);
        if (!std::isfinite(loss)) {
          throw NonFiniteError("non-finite pretraining loss in epoch " +
                               std::to_string(epoch + 1));
        }
        loss_sum += static_cast<double>(loss) * static_cast<double>(n);
        seen += nb;
      }
      if (cfg.clip_grad_norm > 0.0) ClipGlobalNorm(grads, cfg.clip_grad_norm);
      lr = schedule.At(global_step);
      AdamWStep(params, grads, opt, lr);
      tau = TauAt(teacher.update_count, cfg.data2vec.tau);
      EmaUpdate(teacher, params, tau);
      ++global_step;
    }

    const double variance = variance_count > 0 ? variance_sum / variance_count : 0.0;
    low_variance_streak = variance < kCollapseThreshold ? low_variance_streak + 1 : 0;
    if (low_variance_streak >= 3) {
      ++result.collapse_warnings;
      log << "WARNING: target variance " << variance << " below " << kCollapseThreshold
          << " for " << low_variance_streak << " consecutive epochs (possible collapse)\n";
    }
    MetricsRow row{epoch + 1, "train", loss_sum / seen, std::nullopt, lr, tau, variance,
                   WallSeconds(t0)};

    Checkpoint ck = MakeCheckpoint("pretrain", mc, snapshot, ResolveClassMap(data.manifest),
                                   epoch + 1, global_step, stats, params, opt);
    ck.teacher = teacher;
    ck.rng_states["masking"] = EngineState(mask_rng);
    ck.metrics = {{"loss", row.loss}, {"low_variance_streak", low_variance_streak}};
    SaveCheckpoint(ck, result.last_checkpoint);

    log << "epoch " << epoch + 1 << "/" << cfg.epochs << " loss " << row.loss << " lr " << lr
        << " tau " << tau << " target_var " << variance << "\n";
    AppendMetrics(metrics_path, {row});
    result.metrics.push_back(row);
  }
  return result;
}

RunResult RunTask(const RunConfig& config, std::ostream& log) {
  switch (config.task) {
    case Task::kPretrain: return Pretrain(config, log);
    case Task::kFinetune: return Finetune(config, log);
    case Task::kTrain: return TrainSupervised(config, log);
    default: throw std::invalid_argument("evaluate runs from a checkpoint, not a config");
  }
}

EvalReport Evaluate(const Checkpoint& ckpt, const Manifest& manifest,
                    const std::optional<fs::path>& feature_cache, int micro_batch) {
  const ScopedFlushDenormals flush;
  if (ckpt.kind != "supervised") {
    throw std::invalid_argument("evaluation needs a supervised checkpoint");
  }
  if (manifest.empty()) throw std::invalid_argument("evaluation manifest is empty");
  RequireSameClasses(ckpt.class_map, manifest, "evaluation");
  const KwtModel<float> model(ckpt.model);
  CheckCompatible(ckpt, ckpt.model);

  MfccConfig mfcc;
  if (ckpt.config.contains("mfcc")) {
    const auto& m = ckpt.config.at("mfcc");
    mfcc.window_length = m.at("window_length");
    mfcc.hop_length = m.at("hop_length");
    mfcc.n_mfcc = m.at("n_mfcc");
    mfcc.n_fft = m.at("n_fft");
    mfcc.n_mels = m.at("n_mels");
    mfcc.fmin = m.at("fmin");
    mfcc.fmax = m.at("fmax");
    mfcc.log_floor = m.at("log_floor");
  }
  DataSet data{manifest, FeatureBank::Build(manifest, mfcc, feature_cache)};
  const EvalStats s = EvalLoop(model, ckpt.student, data, ckpt.feature_stats, 0.0, micro_batch);

  EvalReport report;
  report.count = s.count;
  report.loss = s.loss;
  report.accuracy = static_cast<double>(s.correct) / s.count;
  report.predictions = s.predictions;
  report.per_class.resize(ckpt.class_map.size());
  for (std::size_t c = 0; c < ckpt.class_map.size(); ++c) {
    report.per_class[c].keyword = ckpt.class_map[c];
  }
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    auto& cls = report.per_class[manifest.rows[i].label];
    ++cls.count;
    cls.correct += s.predictions[i] == manifest.rows[i].label;
  }
  for (auto& cls : report.per_class) {
    cls.accuracy = cls.count > 0 ? static_cast<double>(cls.correct) / cls.count : 0.0;
  }
  return report;
}

void WriteClassReport(const EvalReport& report, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot write report");
  out << "class,keyword,count,correct,accuracy\n";
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const auto& r = report.per_class[c];
    out << c << ',' << r.keyword << ',' << r.count << ',' << r.correct << ','
        << FormatNumber(r.accuracy) << '\n';
  }
  out << "all,," << report.count << ','
      << static_cast<int>(std::lround(report.accuracy * report.count)) << ','
      << FormatNumber(report.accuracy) << '\n';
}

}  // namespace kwsd2v
