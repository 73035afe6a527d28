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

#include "kwsd2v/synthetic_corpus.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <stdexcept>

#include "kwsd2v/audio_features.h"
#include "kwsd2v/wav.h"

namespace fs = std::filesystem;

namespace kwsd2v {
namespace {

struct Unit {
  bool voiced;
  double f1, f2, f3;          // voiced formants
  double noise_center, noise_bw;  // frication band
  double base_ms;
};

// Vowels a e i o u, fricatives s sh f.
const std::map<std::string, Unit>& Inventory() {
  static const std::map<std::string, Unit> units = {
      {"a", {true, 730, 1090, 2440, 0, 0, 170}},
      {"e", {true, 530, 1840, 2480, 0, 0, 150}},
      {"i", {true, 270, 2290, 3010, 0, 0, 150}},
      {"o", {true, 570, 840, 2410, 0, 0, 170}},
      {"u", {true, 300, 870, 2240, 0, 0, 160}},
      {"s", {false, 0, 0, 0, 5500, 2000, 120}},
      {"sh", {false, 0, 0, 0, 2800, 1000, 120}},
      {"f", {false, 0, 0, 0, 1600, 2600, 100}},
  };
  return units;
}

struct KeywordDef {
  const char* name;
  std::vector<std::string> units;
};

const std::vector<KeywordDef>& Keywords() {
  static const std::vector<KeywordDef> defs = {
      {"asi", {"a", "s", "i"}},  {"isa", {"i", "s", "a"}},   {"usa", {"u", "s", "a"}},
      {"ashu", {"a", "sh", "u"}}, {"ofe", {"o", "f", "e"}},   {"esho", {"e", "sh", "o"}},
      {"ifu", {"i", "f", "u"}},  {"osa", {"o", "s", "a"}},   {"ushi", {"u", "sh", "i"}},
      {"afo", {"a", "f", "o"}},
  };
  return defs;
}

// Two-pole resonator with unity DC gain.
class Resonator {
 public:
  double Step(double x, double freq, double bw) {
    const double t = 1.0 / kSampleRate;
    const double r = std::exp(-std::numbers::pi * bw * t);
    const double c = -r * r;
    const double b = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq * t);
    const double a = 1.0 - b - c;
    const double y = a * x + b * y1_ + c * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double y1_ = 0.0, y2_ = 0.0;
};

double Rms(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / std::max<std::size_t>(x.size(), 1));
}

// Renders the word alone; length depends on speaking rate.
std::vector<double> RenderWord(int keyword, const SyntheticSpeaker& spk, std::mt19937_64& rng) {
  const auto& def = Keywords().at(keyword);
  std::uniform_real_distribution<double> unit01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  struct Seg {
    Unit unit;
    int begin, end;
  };
  std::vector<Seg> segs;
  int cursor = 0;
  for (const auto& name : def.units) {
    Unit u = Inventory().at(name);
    const double jitter = 0.8 + 0.4 * unit01(rng);
    const int len = static_cast<int>(u.base_ms * 1e-3 * kSampleRate * jitter / spk.rate);
    // Per-utterance formant wobble keeps units from being exact templates.
    const double wobble = 1.0 + 0.06 * gauss(rng);
    u.f1 *= spk.formant_scale * wobble;
    u.f2 *= spk.formant_scale * (1.0 + 0.06 * gauss(rng));
    u.f3 *= spk.formant_scale;
    u.noise_center *= spk.formant_scale * (1.0 + 0.05 * gauss(rng));
    segs.push_back({u, cursor, cursor + len});
    cursor += len;
  }
  const int total = cursor;
  const int ramp = kSampleRate / 100;  // 10 ms edges, 30 ms formant glides
  const int glide = 3 * ramp;

  std::vector<double> out(total, 0.0);
  Resonator r1, r2, r3, fric;
  double phase = 0.0;
  const double f0_start = spk.f0 * (1.05 + 0.1 * unit01(rng));
  const double f0_end = spk.f0 * (0.85 + 0.1 * unit01(rng));
  std::size_t seg = 0;
  for (int n = 0; n < total; ++n) {
    while (n >= segs[seg].end) ++seg;
    const Seg& cur = segs[seg];
    // Nearest voiced targets for formant glides across unit boundaries.
    Unit target = cur.unit;
    if (!target.voiced) {
      const Seg& nb = seg + 1 < segs.size() ? segs[seg + 1] : segs[seg - 1];
      target.f1 = nb.unit.f1;
      target.f2 = nb.unit.f2;
      target.f3 = nb.unit.f3;
    }
    double f1 = target.f1, f2 = target.f2, f3 = target.f3;
    if (seg > 0 && segs[seg - 1].unit.voiced && n - cur.begin < glide && cur.unit.voiced) {
      const double w = static_cast<double>(n - cur.begin) / glide;
      f1 = (1 - w) * segs[seg - 1].unit.f1 + w * f1;
      f2 = (1 - w) * segs[seg - 1].unit.f2 + w * f2;
      f3 = (1 - w) * segs[seg - 1].unit.f3 + w * f3;
    }

    const double progress = static_cast<double>(n) / total;
    const double f0 = (f0_start + (f0_end - f0_start) * progress) * (1.0 + 0.01 * gauss(rng));
    phase += f0 / kSampleRate;
    double source = 0.0;
    if (phase >= 1.0) {
      phase -= 1.0;
      source = 1.0;
    }
    source += spk.breathiness * 0.05 * gauss(rng);

    // Voicing and frication gates with short ramps at unit edges.
    const double into = std::min(n - cur.begin, cur.end - n) / static_cast<double>(ramp);
    const double edge = std::clamp(into, 0.0, 1.0);
    const double voice_gain = cur.unit.voiced ? 1.0 : 0.0;
    const double fric_gain = cur.unit.voiced ? 0.0 : edge;

    double v = r1.Step(source * voice_gain, f1, 80.0);
    v = r2.Step(v, f2, 100.0);
    v = r3.Step(v, f3, 150.0);
    const double fr = fric.Step(gauss(rng), cur.unit.noise_center, cur.unit.noise_bw);
    out[n] = v * 40.0 + fr * 0.8 * fric_gain;
  }
  // Word-level attack/decay.
  const int fade = std::min(total / 4, 2 * ramp);
  for (int n = 0; n < fade; ++n) {
    const double w = static_cast<double>(n) / fade;
    out[n] *= w;
    out[total - 1 - n] *= w;
  }
  return out;
}

void AddAt(std::vector<double>& clip, const std::vector<double>& word, int start, double gain) {
  for (std::size_t i = 0; i < word.size(); ++i) {
    const std::size_t j = static_cast<std::size_t>(start) + i;
    if (j < clip.size()) clip[j] += gain * word[i];
  }
}

std::mt19937_64 Engine(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::seed_seq ss{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                   static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(c)};
  return std::mt19937_64(ss);
}

}  // namespace

std::vector<std::string> SyntheticKeywords(int n_keywords) {
  if (n_keywords < 1 || n_keywords > static_cast<int>(Keywords().size())) {
    throw std::invalid_argument("synthetic corpus supports 1.." +
                                std::to_string(Keywords().size()) + " keywords");
  }
  std::vector<std::string> names;
  for (int i = 0; i < n_keywords; ++i) names.emplace_back(Keywords()[i].name);
  return names;
}

SyntheticSpeaker DrawSpeaker(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SyntheticSpeaker s;
  s.f0 = 90.0 + 170.0 * u(rng);
  s.formant_scale = 0.85 + 0.35 * u(rng);
  s.rate = 0.75 + 0.55 * u(rng);
  s.breathiness = 0.5 * u(rng);
  return s;
}

std::vector<float> SynthesizeUtterance(int keyword, const SyntheticSpeaker& speaker,
                                       const SyntheticCorpusSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> clip(kClipSamples, 0.0);

  auto word = RenderWord(keyword, speaker, rng);
  if (static_cast<int>(word.size()) > kClipSamples) word.resize(kClipSamples);
  const double level = 0.05 + 0.15 * u(rng);
  const double word_rms = Rms(word);
  const int slack = kClipSamples - static_cast<int>(word.size());
  AddAt(clip, word, static_cast<int>(u(rng) * slack), level / std::max(word_rms, 1e-9));

  if (spec.distractor_level > 0.0 && u(rng) < 0.5) {
    int other = static_cast<int>(u(rng) * spec.n_keywords);
    if (other == keyword) other = (other + 1) % spec.n_keywords;
    auto distractor = RenderWord(other, DrawSpeaker(rng), rng);
    if (static_cast<int>(distractor.size()) > kClipSamples) distractor.resize(kClipSamples);
    const int room = kClipSamples - static_cast<int>(distractor.size());
    AddAt(clip, distractor, static_cast<int>(u(rng) * room),
          spec.distractor_level * level / std::max(Rms(distractor), 1e-9));
  }

  // Low-passed noise floor at a random SNR relative to the keyword level.
  const double snr_db = spec.min_snr_db + (spec.max_snr_db - spec.min_snr_db) * u(rng);
  const double noise_rms = level / std::pow(10.0, snr_db / 20.0);
  std::vector<double> noise(kClipSamples);
  double state = 0.0;
  const double tilt = 0.3 + 0.6 * u(rng);
  for (double& n : noise) {
    state = tilt * state + gauss(rng);
    n = state;
  }
  const double scale = noise_rms / std::max(Rms(noise), 1e-12);
  std::vector<float> out(kClipSamples);
  for (int i = 0; i < kClipSamples; ++i) {
    out[i] = static_cast<float>(std::clamp(clip[i] + scale * noise[i], -1.0, 1.0));
  }
  return out;
}

void WriteSyntheticSpeechCommands(const fs::path& root, const SyntheticCorpusSpec& spec) {
  const auto names = SyntheticKeywords(spec.n_keywords);
  if (spec.n_speakers < 3) throw std::invalid_argument("need at least 3 speakers");

  auto speaker_rng = Engine(spec.seed, 0, 0);
  std::vector<SyntheticSpeaker> speakers;
  std::vector<std::string> speaker_ids;
  for (int s = 0; s < spec.n_speakers; ++s) {
    speakers.push_back(DrawSpeaker(speaker_rng));
    char id[9];
    std::snprintf(id, sizeof(id), "%08x", static_cast<unsigned>(speaker_rng() & 0xFFFFFFFFu));
    speaker_ids.emplace_back(id);
  }
  const int n_val = std::max(1, spec.n_speakers / 10);
  const int n_test = std::max(1, spec.n_speakers / 10);
  const int n_train = spec.n_speakers - n_val - n_test;
  struct Range {
    int first, count, per_class;
  };
  const Range ranges[3] = {{0, n_train, spec.train_per_class},
                           {n_train, n_val, spec.validation_per_class},
                           {n_train + n_val, n_test, spec.test_per_class}};

  fs::create_directories(root);
  std::vector<std::string> lists[3];
  for (int k = 0; k < spec.n_keywords; ++k) {
    fs::create_directories(root / names[k]);
    for (int split = 0; split < 3; ++split) {
      auto rng = Engine(spec.seed, static_cast<std::uint64_t>(k) + 1,
                        static_cast<std::uint64_t>(split) + 1);
      std::map<int, int> per_speaker;
      for (int i = 0; i < ranges[split].per_class; ++i) {
        const int s = ranges[split].first +
                      static_cast<int>(rng() % static_cast<std::uint64_t>(ranges[split].count));
        const int n = per_speaker[s]++;
        const std::string rel =
            names[k] + "/" + speaker_ids[s] + "_nohash_" + std::to_string(n) + ".wav";
        const auto samples = SynthesizeUtterance(k, speakers[s], spec, rng);
        WriteWavPcm16(root / rel, samples, kSampleRate);
        if (split > 0) lists[split].push_back(rel);
      }
    }
  }
  for (int split = 1; split < 3; ++split) {
    std::sort(lists[split].begin(), lists[split].end());
    std::ofstream out(root / (split == 1 ? "validation_list.txt" : "testing_list.txt"),
                      std::ios::binary);
    for (const auto& rel : lists[split]) out << rel << '\n';
  }
}

}  // namespace kwsd2v
