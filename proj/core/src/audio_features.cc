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

#include "kwsd2v/audio_features.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "binary_io.h"
#include "kwsd2v/wav.h"

namespace kwsd2v {
namespace {

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

constexpr char kCacheMagic[8] = {'K', 'W', 'S', 'F', 'E', 'A', 'T', '1'};

}  // namespace

AudioClip MakeClip(std::vector<float> samples, int target_len) {
  samples.resize(static_cast<std::size_t>(target_len), 0.0f);
  return AudioClip{std::move(samples), kSampleRate};
}

AudioClip LoadClip(const std::filesystem::path& path, int target_len,
                   std::uint64_t offset) {
  const WavInfo info = ReadWavInfo(path);
  if (info.sample_rate != kSampleRate) {
    throw IngestionError(path.string() + ": expected 16000 Hz, got " +
                         std::to_string(info.sample_rate) + " Hz");
  }
  auto samples = ReadWavPcm16(path, offset, static_cast<std::uint64_t>(target_len));
  return MakeClip(std::move(samples), target_len);
}

void MfccConfig::Validate() const {
  if (hop_length <= 0) throw std::invalid_argument("hop_length must be positive");
  if (window_length <= 0 || window_length > n_fft) {
    throw std::invalid_argument("window_length must be in (0, n_fft]");
  }
  if (n_mfcc <= 0 || n_mfcc > n_mels) {
    throw std::invalid_argument("n_mfcc must be in (0, n_mels]");
  }
  if (!(fmin >= 0.0 && fmin < fmax)) {
    throw std::invalid_argument("require 0 <= fmin < fmax");
  }
  if (!(log_floor > 0.0)) throw std::invalid_argument("log_floor must be positive");
}

int MfccConfig::NumFrames(int num_samples) const {
  if (num_samples < window_length) return 0;
  return (num_samples - window_length) / hop_length + 1;
}

MfccExtractor::MfccExtractor(const MfccConfig& config) : config_(config) {
  config_.Validate();
  const int win = config_.window_length;
  const int n_fft = config_.n_fft;
  const int n_bins = n_fft / 2 + 1;
  const double pi = std::numbers::pi;

  // Periodic Hann window folded into the real/imaginary DFT basis.
  dft_.resize(win, 2 * n_bins);
  for (int n = 0; n < win; ++n) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * pi * n / win);
    for (int k = 0; k < n_bins; ++k) {
      const double phase = 2.0 * pi * static_cast<double>(k) * n / n_fft;
      dft_(n, k) = w * std::cos(phase);
      dft_(n, n_bins + k) = -w * std::sin(phase);
    }
  }

  const int n_mels = config_.n_mels;
  const double mel_lo = HzToMel(config_.fmin);
  const double mel_hi = HzToMel(config_.fmax);
  std::vector<double> edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[i] = MelToHz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  }
  mel_.setZero(n_bins, n_mels);
  for (int k = 0; k < n_bins; ++k) {
    const double f = static_cast<double>(k) * kSampleRate / n_fft;
    for (int m = 0; m < n_mels; ++m) {
      const double lower = (f - edges[m]) / (edges[m + 1] - edges[m]);
      const double upper = (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1]);
      mel_(k, m) = std::max(0.0, std::min(lower, upper));
    }
  }

  const int n_mfcc = config_.n_mfcc;
  dct_.resize(n_mels, n_mfcc);
  for (int n = 0; n < n_mels; ++n) {
    for (int k = 0; k < n_mfcc; ++k) {
      const double scale = k == 0 ? std::sqrt(1.0 / n_mels) : std::sqrt(2.0 / n_mels);
      dct_(n, k) = scale * std::cos(pi * k * (2.0 * n + 1.0) / (2.0 * n_mels));
    }
  }
}

MfccFrames MfccExtractor::Compute(std::span<const float> samples) const {
  const int n = static_cast<int>(samples.size());
  const int frames = config_.NumFrames(n);
  if (frames <= 0) {
    throw std::invalid_argument("clip shorter than one analysis window");
  }
  const int win = config_.window_length;
  const int hop = config_.hop_length;
  const int n_bins = config_.n_fft / 2 + 1;

  Mat<double> framed(frames, win);
  for (int t = 0; t < frames; ++t) {
    for (int i = 0; i < win; ++i) framed(t, i) = samples[t * hop + i];
  }
  const Mat<double> spec = framed * dft_;
  const Mat<double> power =
      spec.leftCols(n_bins).array().square() + spec.rightCols(n_bins).array().square();
  Mat<double> logmel = power * mel_;
  logmel = logmel.array().max(config_.log_floor).log();
  const Mat<double> mfcc = logmel * dct_;
  return mfcc.cast<float>();
}

MfccFrames ComputeMfcc(const AudioClip& clip, const MfccConfig& config) {
  return MfccExtractor(config).Compute(clip.samples);
}

MfccFrames SpecAugment(const MfccFrames& frames, const SpecAugmentParams& params,
                       std::mt19937_64& rng) {
  MfccFrames out = frames;
  const int num_frames = static_cast<int>(frames.rows());
  const int num_bins = static_cast<int>(frames.cols());
  auto stripe = [&rng](int lo, int hi, int extent) {
    hi = std::min(hi, extent);
    lo = std::min(lo, hi);
    const int width = std::uniform_int_distribution<int>(lo, hi)(rng);
    const int start = std::uniform_int_distribution<int>(0, extent - width)(rng);
    return std::pair{start, width};
  };
  for (int i = 0; i < params.n_time_masks; ++i) {
    auto [start, width] = stripe(params.min_time_mask, params.max_time_mask, num_frames);
    out.middleRows(start, width).setConstant(params.mask_value);
  }
  for (int i = 0; i < params.n_freq_masks; ++i) {
    auto [start, width] = stripe(params.min_freq_mask, params.max_freq_mask, num_bins);
    out.middleCols(start, width).setConstant(params.mask_value);
  }
  return out;
}

FeatureStats FeatureStats::Compute(std::span<const MfccFrames> frames) {
  if (frames.empty()) throw std::invalid_argument("no frames for feature statistics");
  const int f = static_cast<int>(frames.front().cols());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(f);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(f);
  double count = 0.0;
  for (const auto& m : frames) {
    if (m.cols() != f) throw std::invalid_argument("inconsistent feature width");
    const Mat<double> md = m.cast<double>();
    sum += md.colwise().sum().transpose();
    sum_sq += md.array().square().colwise().sum().matrix().transpose();
    count += static_cast<double>(m.rows());
  }
  FeatureStats stats;
  stats.mean.resize(f);
  stats.stddev.resize(f);
  for (int j = 0; j < f; ++j) {
    const double mu = sum(j) / count;
    const double var = std::max(sum_sq(j) / count - mu * mu, 0.0);
    stats.mean[j] = static_cast<float>(mu);
    stats.stddev[j] = static_cast<float>(std::sqrt(var + 1e-8));
  }
  return stats;
}

FeatureStats FeatureStats::Identity(int n_features) {
  return FeatureStats{std::vector<float>(n_features, 0.0f),
                      std::vector<float>(n_features, 1.0f)};
}

void FeatureStats::Apply(MfccFrames& frames) const {
  if (static_cast<std::size_t>(frames.cols()) != mean.size()) {
    throw std::invalid_argument("feature statistics width mismatch");
  }
  for (Eigen::Index j = 0; j < frames.cols(); ++j) {
    frames.col(j) = (frames.col(j).array() - mean[j]) / stddev[j];
  }
}

void SaveFeatureCache(const std::filesystem::path& path,
                      std::span<const FeatureCacheEntry> entries) {
  internal::ByteWriter w;
  w.Bytes(std::string_view(kCacheMagic, 8));
  const int rows = entries.empty() ? 0 : static_cast<int>(entries.front().frames.rows());
  const int cols = entries.empty() ? 0 : static_cast<int>(entries.front().frames.cols());
  w.U32(static_cast<std::uint32_t>(rows));
  w.U32(static_cast<std::uint32_t>(cols));
  w.U64(entries.size());
  for (const auto& e : entries) {
    if (e.frames.rows() != rows || e.frames.cols() != cols) {
      throw std::invalid_argument("feature cache entries must share one shape");
    }
    w.Str(e.id);
    w.Floats(std::span<const float>(e.frames.data(), e.frames.size()));
  }
  std::ofstream out(path, std::ios::binary);
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw std::runtime_error(path.string() + ": cannot write feature cache");
}

std::vector<FeatureCacheEntry> LoadFeatureCache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open feature cache");
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), {});
  internal::ByteReader r(buf);
  try {
    if (r.Bytes(8) != std::string_view(kCacheMagic, 8)) {
      throw std::runtime_error(path.string() + ": not a feature cache");
    }
    const int rows = static_cast<int>(r.U32());
    const int cols = static_cast<int>(r.U32());
    const std::uint64_t n = r.U64();
    std::vector<FeatureCacheEntry> entries;
    entries.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      FeatureCacheEntry e;
      e.id = r.Str();
      e.frames.resize(rows, cols);
      r.Floats(std::span<float>(e.frames.data(), e.frames.size()));
      entries.push_back(std::move(e));
    }
    return entries;
  } catch (const internal::TruncatedError&) {
    throw std::runtime_error(path.string() + ": truncated feature cache");
  }
}

}  // namespace kwsd2v
