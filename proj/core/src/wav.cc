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

#include "kwsd2v/wav.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

namespace kwsd2v {
namespace {

std::uint32_t ReadU32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t ReadU16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void PutU32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void PutU16(std::ofstream& out, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v),
                              static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

[[noreturn]] void Fail(const std::filesystem::path& path,
                       const std::string& what) {
  throw IngestionError(path.string() + ": " + what);
}

}  // namespace

WavInfo ReadWavInfo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(path, "cannot open file");

  unsigned char riff[12];
  if (!in.read(reinterpret_cast<char*>(riff), 12)) Fail(path, "truncated header");
  if (std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(riff + 8, "WAVE", 4) != 0) {
    Fail(path, "not a RIFF/WAVE file");
  }

  WavInfo info;
  bool have_fmt = false;
  while (true) {
    unsigned char chunk[8];
    if (!in.read(reinterpret_cast<char*>(chunk), 8)) {
      Fail(path, "no data chunk");
    }
    const std::uint32_t size = ReadU32(chunk + 4);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) Fail(path, "malformed fmt chunk");
      std::vector<unsigned char> fmt(size);
      if (!in.read(reinterpret_cast<char*>(fmt.data()), size)) {
        Fail(path, "truncated fmt chunk");
      }
      const std::uint16_t format = ReadU16(fmt.data());
      if (format != 1 && format != 0xFFFE) Fail(path, "not PCM audio");
      info.channels = ReadU16(fmt.data() + 2);
      info.sample_rate = static_cast<int>(ReadU32(fmt.data() + 4));
      info.bits_per_sample = ReadU16(fmt.data() + 14);
      have_fmt = true;
      if (size % 2 == 1) in.ignore(1);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) Fail(path, "data chunk precedes fmt chunk");
      if (info.channels <= 0 || info.bits_per_sample <= 0) {
        Fail(path, "invalid fmt chunk");
      }
      info.data_offset = static_cast<std::uint64_t>(in.tellg());
      info.num_frames =
          size / (static_cast<std::uint64_t>(info.channels) * info.bits_per_sample / 8);
      return info;
    } else {
      in.ignore(size + (size % 2));
    }
  }
}

std::vector<float> ReadWavPcm16(const std::filesystem::path& path,
                                std::uint64_t first, std::uint64_t count) {
  const WavInfo info = ReadWavInfo(path);
  if (info.bits_per_sample != 16) Fail(path, "expected 16-bit PCM");
  if (info.channels != 1) {
    Fail(path, "expected mono audio, got " + std::to_string(info.channels) +
                   " channels");
  }
  if (first > info.num_frames) first = info.num_frames;
  std::uint64_t n = info.num_frames - first;
  if (count != 0) n = std::min(n, count);

  std::ifstream in(path, std::ios::binary);
  in.seekg(static_cast<std::streamoff>(info.data_offset + 2 * first));
  std::vector<unsigned char> raw(2 * n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  const std::uint64_t got = static_cast<std::uint64_t>(in.gcount()) / 2;

  std::vector<float> samples(got);
  for (std::uint64_t i = 0; i < got; ++i) {
    const auto v = static_cast<std::int16_t>(ReadU16(raw.data() + 2 * i));
    samples[i] = static_cast<float>(v) / 32768.0f;
  }
  return samples;
}

void WriteWavPcm16(const std::filesystem::path& path,
                   std::span<const float> samples, int sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError(path.string() + ": cannot open for writing");
  const auto data_bytes = static_cast<std::uint32_t>(2 * samples.size());
  out.write("RIFF", 4);
  PutU32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  PutU32(out, 16);
  PutU16(out, 1);
  PutU16(out, 1);
  PutU32(out, static_cast<std::uint32_t>(sample_rate));
  PutU32(out, static_cast<std::uint32_t>(sample_rate) * 2);
  PutU16(out, 2);
  PutU16(out, 16);
  out.write("data", 4);
  PutU32(out, data_bytes);
  std::vector<unsigned char> raw(2 * samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const float s = std::clamp(samples[i], -1.0f, 1.0f);
    const auto v = static_cast<std::int16_t>(
        std::lrint(std::min(s * 32768.0f, 32767.0f)));
    raw[2 * i] = static_cast<unsigned char>(v & 0xFF);
    raw[2 * i + 1] = static_cast<unsigned char>((v >> 8) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw IngestionError(path.string() + ": write failed");
}

}  // namespace kwsd2v
