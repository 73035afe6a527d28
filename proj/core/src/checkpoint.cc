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

#include "kwsd2v/checkpoint.h"

#include <fstream>
#include <sstream>

#include <zlib.h>

#include "binary_io.h"
#include "kwsd2v/run_config.h"

namespace kwsd2v {
namespace {

constexpr char kMagic[8] = {'K', 'W', 'S', 'D', '2', 'V', 'C', 'K'};

std::uint32_t Crc(const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

struct Entry {
  std::string name;
  int rows, cols;
  std::span<const float> data;
};

void AddStore(std::vector<Entry>& out, const std::string& prefix, const ParamStore<float>& p) {
  const auto& layout = p.layout();
  for (int i = 0; i < layout.num_tensors(); ++i) {
    out.push_back({prefix + layout[i].name, layout[i].rows, layout[i].cols, p.Flat(i)});
  }
}

void AddMoments(std::vector<Entry>& out, const std::string& prefix, const ParamLayout& layout,
                const std::vector<float>& values) {
  for (int i = 0; i < layout.num_tensors(); ++i) {
    const auto& t = layout[i];
    out.push_back({prefix + t.name, t.rows, t.cols,
                   std::span<const float>(values.data() + t.offset, t.size())});
  }
}

}  // namespace

std::string EngineState(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void RestoreEngine(std::mt19937_64& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw CheckpointError("malformed random engine state");
}

std::vector<char> SerializeCheckpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["kind"] = ckpt.kind;
  header["model"] = ToJson(ckpt.model);
  header["config"] = ckpt.config;
  header["class_map"] = ckpt.class_map;
  header["epoch"] = ckpt.epoch;
  header["global_step"] = ckpt.global_step;
  header["rng_states"] = ckpt.rng_states;
  header["metrics"] = ckpt.metrics;
  if (ckpt.optimizer) {
    const auto& o = *ckpt.optimizer;
    header["optimizer"] = {{"step", o.step},         {"beta1", o.beta1},
                           {"beta2", o.beta2},       {"eps", o.eps},
                           {"weight_decay", o.weight_decay}, {"decoupled", o.decoupled}};
  }
  if (ckpt.teacher) header["teacher"] = {{"update_count", ckpt.teacher->update_count}};

  std::vector<Entry> entries;
  AddStore(entries, "student/", ckpt.student);
  if (ckpt.optimizer) {
    if (ckpt.optimizer->m.size() != ckpt.student.Flat().size() ||
        ckpt.optimizer->v.size() != ckpt.student.Flat().size()) {
      throw CheckpointError("optimizer moments do not match the student parameters");
    }
    AddMoments(entries, "optimizer.m/", ckpt.student.layout(), ckpt.optimizer->m);
    AddMoments(entries, "optimizer.v/", ckpt.student.layout(), ckpt.optimizer->v);
  }
  if (ckpt.teacher) AddStore(entries, "teacher/", ckpt.teacher->weights);
  if (!ckpt.feature_stats.empty()) {
    const int f = static_cast<int>(ckpt.feature_stats.mean.size());
    entries.push_back({"features/mean", 1, f, ckpt.feature_stats.mean});
    entries.push_back({"features/stddev", 1, f, ckpt.feature_stats.stddev});
  }

  internal::ByteWriter w;
  w.Bytes(std::string_view(kMagic, 8));
  w.U32(kCheckpointVersion);
  const std::string header_text = header.dump();
  w.U64(header_text.size());
  w.Bytes(header_text);
  w.U32(Crc(header_text.data(), header_text.size()));

  const std::size_t tensors_begin = w.buffer().size();
  w.U32(static_cast<std::uint32_t>(entries.size()));
  std::uint64_t total = 0;
  for (const auto& e : entries) {
    w.Str(e.name);
    w.U32(static_cast<std::uint32_t>(e.rows));
    w.U32(static_cast<std::uint32_t>(e.cols));
    total += e.data.size();
  }
  w.U64(total);
  for (const auto& e : entries) w.Floats(e.data);
  const auto& buf = w.buffer();
  const std::uint32_t crc = Crc(buf.data() + tensors_begin, buf.size() - tensors_begin);
  w.U32(crc);
  return std::move(w.buffer());
}

void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = SerializeCheckpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write-then-rename so an interrupted save never clobbers a good file.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(path.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint DeserializeCheckpoint(std::span<const char> bytes) {
  internal::ByteReader r(bytes);
  Checkpoint ckpt;
  try {
    if (r.Bytes(8) != std::string_view(kMagic, 8)) throw CheckpointError("not a checkpoint file");
    const std::uint32_t version = r.U32();
    if (version != kCheckpointVersion) {
      throw CheckpointError("checkpoint format version " + std::to_string(version) +
                            " is not supported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint64_t header_len = r.U64();
    const std::string header_text = r.Bytes(header_len);
    if (r.U32() != Crc(header_text.data(), header_text.size())) {
      throw CheckpointError("header checksum mismatch");
    }

    const std::size_t tensors_begin = r.position();
    const std::uint32_t count = r.U32();
    struct Desc {
      std::string name;
      int rows, cols;
    };
    std::vector<Desc> descs;
    std::uint64_t expected_total = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
      Desc d;
      d.name = r.Str();
      d.rows = static_cast<int>(r.U32());
      d.cols = static_cast<int>(r.U32());
      expected_total += static_cast<std::uint64_t>(d.rows) * d.cols;
      descs.push_back(std::move(d));
    }
    const std::uint64_t total = r.U64();
    if (total != expected_total) throw CheckpointError("tensor table is inconsistent");
    std::vector<float> data(total);
    r.Floats(data);
    const std::size_t tensors_end = r.position();
    if (r.U32() != Crc(bytes.data() + tensors_begin, tensors_end - tensors_begin)) {
      throw CheckpointError("tensor section checksum mismatch");
    }

    nlohmann::json header;
    try {
      header = nlohmann::json::parse(header_text);
    } catch (const nlohmann::json::parse_error& e) {
      throw CheckpointError(std::string("malformed header: ") + e.what());
    }
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.model = KwtConfigFromJson(header.at("model"));
    ckpt.config = header.at("config");
    ckpt.class_map = header.at("class_map").get<std::vector<std::string>>();
    ckpt.epoch = header.at("epoch").get<std::int64_t>();
    ckpt.global_step = header.at("global_step").get<std::int64_t>();
    ckpt.rng_states = header.at("rng_states").get<std::map<std::string, std::string>>();
    ckpt.metrics = header.at("metrics");

    // Group tensors by section.
    std::map<std::string, std::vector<std::pair<std::string, std::size_t>>> sections;
    std::map<std::string, Desc> by_name;
    std::size_t offset = 0;
    for (const auto& d : descs) {
      const auto slash = d.name.find('/');
      if (slash == std::string::npos) throw CheckpointError("unnamed section for '" + d.name + "'");
      if (!by_name.emplace(d.name, d).second) {
        throw CheckpointError("duplicate tensor name '" + d.name + "'");
      }
      sections[d.name.substr(0, slash)].push_back({d.name.substr(slash + 1), offset});
      offset += static_cast<std::size_t>(d.rows) * d.cols;
    }
    auto build_store = [&](const std::string& section) {
      auto layout = std::make_shared<ParamLayout>();
      for (const auto& [name, off] : sections[section]) {
        const Desc& d = by_name.at(section + "/" + name);
        layout->Add(name, d.rows, d.cols);
      }
      ParamStore<float> store(std::move(layout));
      std::size_t k = 0;
      for (const auto& [name, off] : sections[section]) {
        auto dst = store.Flat(static_cast<int>(k++));
        std::copy(data.begin() + off, data.begin() + off + dst.size(), dst.begin());
      }
      return store;
    };
    ckpt.student = build_store("student");
    if (header.contains("optimizer")) {
      const auto& o = header.at("optimizer");
      OptimizerState<float> opt;
      opt.step = o.at("step").get<std::int64_t>();
      opt.beta1 = o.at("beta1").get<double>();
      opt.beta2 = o.at("beta2").get<double>();
      opt.eps = o.at("eps").get<double>();
      opt.weight_decay = o.at("weight_decay").get<double>();
      opt.decoupled = o.at("decoupled").get<bool>();
      const auto m = build_store("optimizer.m");
      const auto v = build_store("optimizer.v");
      if (!(m.layout() == ckpt.student.layout()) || !(v.layout() == ckpt.student.layout())) {
        throw CheckpointError("optimizer moments do not match the student tensors");
      }
      opt.m.assign(m.Flat().begin(), m.Flat().end());
      opt.v.assign(v.Flat().begin(), v.Flat().end());
      ckpt.optimizer = std::move(opt);
    }
    if (header.contains("teacher")) {
      TeacherState<float> t;
      t.weights = build_store("teacher");
      t.update_count = header.at("teacher").at("update_count").get<std::int64_t>();
      ckpt.teacher = std::move(t);
    }
    if (sections.count("features") != 0) {
      const auto f = build_store("features");
      auto mean = f.Flat(f.layout().Require("mean"));
      auto sd = f.Flat(f.layout().Require("stddev"));
      ckpt.feature_stats.mean.assign(mean.begin(), mean.end());
      ckpt.feature_stats.stddev.assign(sd.begin(), sd.end());
    }
  } catch (const internal::TruncatedError&) {
    throw CheckpointError("checkpoint is truncated");
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed header: ") + e.what());
  }
  return ckpt;
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(path.string() + ": cannot open checkpoint");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
  try {
    return DeserializeCheckpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

void CheckCompatible(const Checkpoint& ckpt, const KwtConfig& expected, bool encoder_only) {
  const KwtModel<float> model(expected);
  const ParamLayout& want = encoder_only ? *model.encoder_layout() : *model.layout();
  const ParamLayout& have = ckpt.student.layout();
  std::string problems;
  for (const auto& t : want.tensors()) {
    const int i = have.Find(t.name);
    if (i < 0) {
      problems += "\n  " + t.name + ": missing";
    } else if (have[i].rows != t.rows || have[i].cols != t.cols) {
      problems += "\n  " + t.name + ": expected " + std::to_string(t.rows) + "x" +
                  std::to_string(t.cols) + ", found " + std::to_string(have[i].rows) + "x" +
                  std::to_string(have[i].cols);
    }
  }
  if (!problems.empty()) {
    throw CheckpointError("checkpoint (" + ckpt.model.name + ") does not fit model '" +
                          expected.name + "':" + problems);
  }
}

}  // namespace kwsd2v
