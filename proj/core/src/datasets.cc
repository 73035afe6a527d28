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

#include "kwsd2v/datasets.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "kwsd2v/wav.h"

namespace fs = std::filesystem;

namespace kwsd2v {
namespace {

constexpr const char* kSidecar = "dataset.json";

std::string FormatDouble(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> ParseCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string StripExtension(const std::string& rel) {
  const auto dot = rel.rfind('.');
  const auto slash = rel.rfind('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return rel;
  return rel.substr(0, dot);
}

std::set<std::string> ReadList(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IngestionError(file.string() + ": missing split list");
  std::set<std::string> entries;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) entries.insert(line);
  }
  return entries;
}

// Speech Commands names files "<speaker>_nohash_<n>.wav".
std::string SpeakerOf(const std::string& path) {
  const auto slash = path.rfind('/');
  const std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
  const auto cut = name.find("_nohash_");
  return cut == std::string::npos ? StripExtension(name) : name.substr(0, cut);
}

std::mt19937_64 SeededEngine(std::initializer_list<std::uint64_t> words) {
  std::vector<std::uint32_t> seq;
  for (std::uint64_t w : words) {
    seq.push_back(static_cast<std::uint32_t>(w));
    seq.push_back(static_cast<std::uint32_t>(w >> 32));
  }
  std::seed_seq ss(seq.begin(), seq.end());
  return std::mt19937_64(ss);
}

Manifest Subset(const Manifest& src, const std::vector<std::size_t>& rows, bool strip) {
  Manifest out;
  out.class_map = src.class_map;
  out.data_root = src.data_root;
  out.rows.reserve(rows.size());
  for (std::size_t r : rows) {
    out.rows.push_back(src.rows[r]);
    if (strip) out.rows.back().label = kNoLabel;
  }
  return out;
}

}  // namespace

int Manifest::ClassIndex(const std::string& keyword) const {
  auto it = std::find(class_map.begin(), class_map.end(), keyword);
  return it == class_map.end() ? -1 : static_cast<int>(it - class_map.begin());
}

AudioRef ResolveAudio(const Manifest& manifest, const ManifestRow& row) {
  AudioRef ref;
  std::string rel = row.path;
  const auto hash = rel.rfind('#');
  if (hash != std::string::npos) {
    ref.offset = std::stoull(rel.substr(hash + 1));
    rel.resize(hash);
  }
  ref.file = manifest.data_root / rel;
  return ref;
}

void SaveManifest(const Manifest& manifest, const fs::path& csv_path) {
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw std::runtime_error(csv_path.string() + ": cannot write manifest");
  out << "id,path,label,duration\n";
  for (const auto& r : manifest.rows) {
    out << CsvField(r.id) << ',' << CsvField(r.path) << ',';
    if (r.label != kNoLabel) out << r.label;
    out << ',' << FormatDouble(r.duration) << '\n';
  }
  nlohmann::json meta;
  meta["classes"] = manifest.class_map;
  meta["data_root"] = fs::absolute(manifest.data_root).lexically_normal().generic_string();
  std::ofstream side(csv_path.parent_path() / kSidecar, std::ios::binary);
  side << meta.dump(2) << '\n';
}

Manifest LoadManifest(const fs::path& csv_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw std::runtime_error(csv_path.string() + ": cannot open manifest");
  Manifest m;
  m.data_root = csv_path.parent_path();
  const fs::path side = csv_path.parent_path() / kSidecar;
  if (fs::exists(side)) {
    std::ifstream s(side);
    const auto meta = nlohmann::json::parse(s);
    m.class_map = meta.value("classes", std::vector<std::string>{});
    if (meta.contains("data_root")) m.data_root = meta["data_root"].get<std::string>();
  }
  std::string line;
  if (!std::getline(in, line) || line != "id,path,label,duration") {
    throw std::runtime_error(csv_path.string() + ": bad manifest header");
  }
  std::unordered_set<std::string> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto f = ParseCsvLine(line);
    if (f.size() != 4) {
      throw std::runtime_error(csv_path.string() + ":" + std::to_string(line_no) +
                               ": expected 4 fields");
    }
    ManifestRow row;
    row.id = f[0];
    row.path = f[1];
    row.label = f[2].empty() ? kNoLabel : std::stoi(f[2]);
    std::from_chars(f[3].data(), f[3].data() + f[3].size(), row.duration);
    if (!seen.insert(row.id).second) {
      throw std::runtime_error(csv_path.string() + ": duplicate id '" + row.id + "'");
    }
    if (row.label != kNoLabel && !m.class_map.empty() &&
        (row.label < 0 || row.label >= static_cast<int>(m.class_map.size()))) {
      throw std::runtime_error(csv_path.string() + ": label out of range for '" + row.id + "'");
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

SpeechCommandsSplits IngestSpeechCommands(const fs::path& root) {
  if (!fs::is_directory(root)) throw IngestionError(root.string() + ": not a directory");
  std::vector<std::string> keywords;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.empty() || name[0] == '_' || name[0] == '.') continue;
    keywords.push_back(name);
  }
  if (keywords.empty()) throw IngestionError(root.string() + ": no keyword folders");
  std::sort(keywords.begin(), keywords.end());

  const auto validation = ReadList(root / "validation_list.txt");
  const auto testing = ReadList(root / "testing_list.txt");
  for (const auto& f : validation) {
    if (testing.count(f) != 0) {
      throw IngestionError(root.string() + ": '" + f +
                           "' is listed for both validation and testing");
    }
  }

  SpeechCommandsSplits out;
  for (Manifest* m : {&out.train, &out.validation, &out.test}) {
    m->class_map = keywords;
    m->data_root = root;
  }
  std::size_t matched_val = 0, matched_test = 0;
  for (int label = 0; label < static_cast<int>(keywords.size()); ++label) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(root / keywords[label])) {
      if (entry.is_regular_file() && entry.path().extension() == ".wav") {
        files.push_back(keywords[label] + "/" + entry.path().filename().string());
      }
    }
    if (files.empty()) {
      throw IngestionError((root / keywords[label]).string() + ": empty keyword folder");
    }
    std::sort(files.begin(), files.end());
    for (const auto& rel : files) {
      const WavInfo info = ReadWavInfo(root / rel);
      ManifestRow row{StripExtension(rel), rel, label,
                      info.sample_rate > 0
                          ? static_cast<double>(info.num_frames) / info.sample_rate
                          : 0.0};
      if (validation.count(rel) != 0) {
        out.validation.rows.push_back(std::move(row));
        ++matched_val;
      } else if (testing.count(rel) != 0) {
        out.test.rows.push_back(std::move(row));
        ++matched_test;
      } else {
        out.train.rows.push_back(std::move(row));
      }
    }
  }
  if (matched_val != validation.size() || matched_test != testing.size()) {
    throw IngestionError(root.string() + ": split lists name files that do not exist");
  }
  return out;
}

std::string ToString(SplitMode mode) {
  switch (mode) {
    case SplitMode::kGlobal: return "global";
    case SplitMode::kSpeaker: return "speaker";
    default: return "stratified";
  }
}

SplitMode SplitModeFromString(const std::string& s) {
  if (s == "stratified") return SplitMode::kStratified;
  if (s == "global") return SplitMode::kGlobal;
  if (s == "speaker") return SplitMode::kSpeaker;
  throw std::invalid_argument("unknown split mode '" + s + "'");
}

LabelDeficientSplit SplitLabelDeficient(const Manifest& train, const SplitSpec& spec) {
  if (!(spec.fraction_pretrain >= 0.0 && spec.fraction_pretrain <= 1.0)) {
    throw std::invalid_argument("split fraction must lie in [0, 1]");
  }
  const std::size_t n = train.size();
  const auto target = static_cast<std::size_t>(std::llround(spec.fraction_pretrain * n));
  auto rng = SeededEngine({spec.seed, 0x5EED5E17ULL});
  std::vector<std::uint8_t> to_pretrain(n, 0);

  if (spec.mode == SplitMode::kGlobal) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < target; ++i) to_pretrain[order[i]] = 1;
  } else if (spec.mode == SplitMode::kStratified) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[train.rows[i].label].push_back(i);
    struct Share {
      int label;
      std::size_t take;
      double remainder;
    };
    std::vector<Share> shares;
    std::size_t assigned = 0;
    for (const auto& [label, rows] : by_class) {
      const double ideal = spec.fraction_pretrain * static_cast<double>(rows.size());
      const auto take = static_cast<std::size_t>(std::floor(ideal));
      shares.push_back({label, take, ideal - static_cast<double>(take)});
      assigned += take;
    }
    std::vector<std::size_t> order(shares.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&shares](std::size_t a, std::size_t b) {
      return shares[a].remainder > shares[b].remainder;
    });
    for (std::size_t k = 0; assigned < target && k < order.size(); ++k) {
      ++shares[order[k]].take;
      ++assigned;
    }
    for (const auto& share : shares) {
      auto rows = by_class[share.label];
      std::shuffle(rows.begin(), rows.end(), rng);
      for (std::size_t i = 0; i < share.take; ++i) to_pretrain[rows[i]] = 1;
    }
  } else {
    std::map<std::string, std::vector<std::size_t>> by_speaker;
    for (std::size_t i = 0; i < n; ++i) by_speaker[SpeakerOf(train.rows[i].path)].push_back(i);
    std::vector<const std::vector<std::size_t>*> groups;
    for (const auto& [speaker, rows] : by_speaker) groups.push_back(&rows);
    std::shuffle(groups.begin(), groups.end(), rng);
    std::size_t assigned = 0;
    for (const auto* rows : groups) {
      if (assigned >= target) break;
      for (std::size_t r : *rows) to_pretrain[r] = 1;
      assigned += rows->size();
    }
  }

  std::vector<std::size_t> pre, lab;
  for (std::size_t i = 0; i < n; ++i) (to_pretrain[i] ? pre : lab).push_back(i);
  return {Subset(train, pre, /*strip=*/true), Subset(train, lab, /*strip=*/false)};
}

SegmentResult SegmentCorpus(const fs::path& root, double clip_seconds, double hop_seconds) {
  if (!(clip_seconds > 0.0)) throw std::invalid_argument("clip length must be positive");
  if (hop_seconds <= 0.0) hop_seconds = clip_seconds;
  const auto clip = static_cast<std::uint64_t>(std::llround(clip_seconds * kSampleRate));
  const auto hop = static_cast<std::uint64_t>(std::llround(hop_seconds * kSampleRate));

  SegmentResult result;
  result.manifest.data_root = root;
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext == ".wav" || ext == ".flac") {
      files.push_back(fs::relative(entry.path(), root).generic_string());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& rel : files) {
    WavInfo info;
    try {
      info = ReadWavInfo(root / rel);
      if (info.sample_rate != kSampleRate || info.channels != 1 || info.bits_per_sample != 16) {
        throw IngestionError((root / rel).string() + ": expected 16 kHz 16-bit mono");
      }
    } catch (const IngestionError& e) {
      ++result.skipped;
      result.warnings.push_back(e.what());
      continue;
    }
    if (info.num_frames < clip) continue;
    const std::uint64_t count = (info.num_frames - clip) / hop + 1;
    const std::string stem = StripExtension(rel);
    for (std::uint64_t k = 0; k < count; ++k) {
      result.manifest.rows.push_back({stem + "#" + std::to_string(k),
                                      rel + "#" + std::to_string(k * hop), kNoLabel,
                                      clip_seconds});
    }
  }
  return result;
}

std::vector<std::vector<std::size_t>> EpochBatches(std::size_t num_rows, int batch_size,
                                                   std::uint64_t seed, std::int64_t epoch) {
  if (batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  std::vector<std::size_t> order(num_rows);
  std::iota(order.begin(), order.end(), 0);
  auto rng = SeededEngine({seed, static_cast<std::uint64_t>(epoch), 0xDA7AULL});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < num_rows; i += batch_size) {
    const std::size_t end = std::min(num_rows, i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + i, order.begin() + end);
  }
  return batches;
}

FeatureBank FeatureBank::Build(const Manifest& manifest, const MfccConfig& config,
                               const std::optional<fs::path>& cache_path) {
  std::unordered_map<std::string, MfccFrames> cached;
  if (cache_path && fs::exists(*cache_path)) {
    for (auto& e : LoadFeatureCache(*cache_path)) cached.emplace(e.id, std::move(e.frames));
  }
  const MfccExtractor extractor(config);
  const int expected_rows = config.NumFrames(kClipSamples);
  FeatureBank bank;
  bank.frames_.reserve(manifest.size());
  bool computed = false;
  for (const auto& row : manifest.rows) {
    auto hit = cached.find(row.id);
    if (hit != cached.end() && hit->second.rows() == expected_rows &&
        hit->second.cols() == config.n_mfcc) {
      bank.frames_.push_back(hit->second);
      continue;
    }
    const AudioRef ref = ResolveAudio(manifest, row);
    AudioClip clip;
    try {
      clip = LoadClip(ref.file, kClipSamples, ref.offset);
    } catch (const IngestionError& e) {
      throw IngestionError("row '" + row.id + "': " + e.what());
    }
    bank.frames_.push_back(extractor.Compute(clip.samples));
    computed = true;
  }
  if (cache_path && computed) {
    std::vector<FeatureCacheEntry> entries;
    entries.reserve(manifest.size());
    for (std::size_t i = 0; i < manifest.size(); ++i) {
      entries.push_back({manifest.rows[i].id, bank.frames_[i]});
    }
    SaveFeatureCache(*cache_path, entries);
  }
  return bank;
}

Batch GatherBatch(const Manifest& manifest, const FeatureBank& bank,
                  std::span<const std::size_t> rows, const FeatureStats& stats,
                  const SpecAugmentParams* augment, std::mt19937_64* rng) {
  Batch batch;
  if (rows.empty()) return batch;
  const auto t = bank[rows.front()].rows();
  const auto f = bank[rows.front()].cols();
  batch.features.resize(static_cast<Eigen::Index>(rows.size()) * t, f);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    MfccFrames frames = bank[r];
    stats.Apply(frames);
    if (augment != nullptr && rng != nullptr) frames = SpecAugment(frames, *augment, *rng);
    batch.features.middleRows(static_cast<Eigen::Index>(i) * t, t) = frames;
    batch.rows.push_back(r);
    batch.ids.push_back(manifest.rows[r].id);
    batch.labels.push_back(manifest.rows[r].label);
  }
  return batch;
}

}  // namespace kwsd2v
