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

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "kwsd2v/synthetic_corpus.h"
#include "kwsd2v/wav.h"
#include "test_util.h"

namespace kwsd2v {
namespace {

namespace fs = std::filesystem;
using ::kwsd2v::testing::ReadText;
using ::kwsd2v::testing::TempDir;
using ::kwsd2v::testing::WriteHeaderOnlyWav;
using ::kwsd2v::testing::WriteRawWav;
using ::kwsd2v::testing::WriteText;
using ::testing::HasSubstr;

// Three keywords with `per_class` files from speakers s0..s9 each; the
// first file of each keyword goes to validation and the second to test.
void WriteMiniLayout(const fs::path& root, int per_class) {
  std::string val, test;
  for (const std::string kw : {"zeta", "alpha", "mid"}) {
    fs::create_directories(root / kw);
    for (int i = 0; i < per_class; ++i) {
      const std::string name = "s" + std::to_string(i % 10) + "_nohash_" + std::to_string(i) + ".wav";
      WriteHeaderOnlyWav(root / kw / name, 16000);
      if (i == 0) val += kw + "/" + name + "\n";
      if (i == 1) test += kw + "/" + name + "\n";
    }
  }
  fs::create_directories(root / "_background_noise_");
  WriteHeaderOnlyWav(root / "_background_noise_" / "noise.wav", 160000);
  WriteText(root / "validation_list.txt", val);
  WriteText(root / "testing_list.txt", test);
}

std::set<std::string> Ids(const Manifest& m) {
  std::set<std::string> ids;
  for (const auto& r : m.rows) ids.insert(r.id);
  return ids;
}

TEST(IngestTest, AssignsRowsByListFiles) {
  TempDir dir;
  WriteMiniLayout(dir.path(), 12);
  const auto splits = IngestSpeechCommands(dir.path());
  EXPECT_THAT(splits.train.class_map, ::testing::ElementsAre("alpha", "mid", "zeta"));
  EXPECT_EQ(splits.train.size(), 30u);
  EXPECT_EQ(splits.validation.size(), 3u);
  EXPECT_EQ(splits.test.size(), 3u);
  for (const auto& r : splits.validation.rows) EXPECT_THAT(r.path, HasSubstr("_nohash_0.wav"));
  for (const auto& r : splits.train.rows) {
    EXPECT_NE(r.label, kNoLabel);
    EXPECT_DOUBLE_EQ(r.duration, 1.0);
    EXPECT_THAT(r.path, ::testing::Not(HasSubstr("_background_noise_")));
  }
  const auto& row = splits.test.rows.front();
  EXPECT_EQ(row.id, "alpha/s1_nohash_1");
  EXPECT_EQ(row.label, 0);
  EXPECT_EQ(ResolveAudio(splits.test, row).file, dir.path() / "alpha" / "s1_nohash_1.wav");
}

TEST(IngestTest, LayoutErrors) {
  TempDir empty;
  EXPECT_THROW(IngestSpeechCommands(empty.path()), IngestionError);

  TempDir no_lists;
  WriteMiniLayout(no_lists.path(), 4);
  fs::remove(no_lists / "testing_list.txt");
  EXPECT_THAT([&] { IngestSpeechCommands(no_lists.path()); },
              ::testing::ThrowsMessage<IngestionError>(HasSubstr("testing_list.txt")));

  TempDir overlap;
  WriteMiniLayout(overlap.path(), 4);
  WriteText(overlap / "testing_list.txt", "alpha/s0_nohash_0.wav\n");
  EXPECT_THAT([&] { IngestSpeechCommands(overlap.path()); },
              ::testing::ThrowsMessage<IngestionError>(HasSubstr("both")));

  TempDir hollow;
  WriteMiniLayout(hollow.path(), 4);
  fs::create_directories(hollow / "empty_kw");
  EXPECT_THAT([&] { IngestSpeechCommands(hollow.path()); },
              ::testing::ThrowsMessage<IngestionError>(HasSubstr("empty keyword folder")));
}

Manifest BalancedTrain(int classes, int per_class) {
  Manifest m;
  for (int c = 0; c < classes; ++c) m.class_map.push_back("k" + std::to_string(c));
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      const std::string id = "k" + std::to_string(c) + "/sp" + std::to_string(i % 17) +
                             "_nohash_" + std::to_string(i);
      m.rows.push_back({id, id + ".wav", c, 1.0});
    }
  }
  return m;
}

class SplitTest : public ::testing::TestWithParam<SplitMode> {};

TEST_P(SplitTest, DisjointExhaustiveAndDeterministic) {
  const Manifest train = BalancedTrain(7, 103);
  SplitSpec spec;
  spec.mode = GetParam();
  spec.seed = 11;
  const auto a = SplitLabelDeficient(train, spec);
  const auto b = SplitLabelDeficient(train, spec);
  EXPECT_EQ(a.pretrain, b.pretrain);
  EXPECT_EQ(a.labelled, b.labelled);

  std::set<std::string> pre = Ids(a.pretrain), lab = Ids(a.labelled), all = Ids(train);
  std::set<std::string> both;
  std::set_intersection(pre.begin(), pre.end(), lab.begin(), lab.end(),
                        std::inserter(both, both.begin()));
  EXPECT_TRUE(both.empty());
  pre.insert(lab.begin(), lab.end());
  EXPECT_EQ(pre, all);
  for (const auto& r : a.pretrain.rows) EXPECT_EQ(r.label, kNoLabel);
  for (const auto& r : a.labelled.rows) EXPECT_NE(r.label, kNoLabel);

  spec.seed = 12;
  const auto c = SplitLabelDeficient(train, spec);
  EXPECT_NE(Ids(c.pretrain), Ids(a.pretrain));
  if (GetParam() != SplitMode::kSpeaker) {
    EXPECT_EQ(a.pretrain.size(), static_cast<std::size_t>(std::llround(0.8 * 721)));
    EXPECT_EQ(c.pretrain.size(), a.pretrain.size());
  }
}

INSTANTIATE_TEST_SUITE_P(Modes, SplitTest,
                         ::testing::Values(SplitMode::kStratified, SplitMode::kGlobal,
                                           SplitMode::kSpeaker),
                         [](const auto& info) { return ToString(info.param); });

TEST(SplitTest, FullTrainSetSizes) {
  const Manifest train = BalancedTrain(1, 84663);
  const auto s = SplitLabelDeficient(train, SplitSpec{});
  EXPECT_NEAR(static_cast<double>(s.pretrain.size()), 67731.0, 1.0);
  EXPECT_NEAR(static_cast<double>(s.labelled.size()), 16932.0, 1.0);
  EXPECT_EQ(s.pretrain.size() + s.labelled.size(), 84663u);
}

TEST(SplitTest, FractionEndpoints) {
  const Manifest train = BalancedTrain(3, 10);
  SplitSpec spec;
  spec.fraction_pretrain = 0.0;
  auto s = SplitLabelDeficient(train, spec);
  EXPECT_TRUE(s.pretrain.empty());
  EXPECT_EQ(s.labelled, train);
  spec.fraction_pretrain = 1.0;
  s = SplitLabelDeficient(train, spec);
  EXPECT_TRUE(s.labelled.empty());
  spec.fraction_pretrain = 1.5;
  EXPECT_THROW(SplitLabelDeficient(train, spec), std::invalid_argument);
}

TEST(SplitTest, StratifiedKeepsEveryKeyword) {
  Manifest train = BalancedTrain(35, 60);
  // Unbalance a few classes.
  std::erase_if(train.rows, [](const ManifestRow& r) {
    return r.label % 5 == 0 && r.id.back() % 2 == 0;
  });
  std::map<int, int> original;
  for (const auto& r : train.rows) ++original[r.label];
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = SplitLabelDeficient(train, SplitSpec{0.8, seed, SplitMode::kStratified});
    std::map<int, int> kept;
    for (const auto& r : s.labelled.rows) ++kept[r.label];
    for (const auto& [label, count] : original) {
      EXPECT_GE(kept[label], 0.1 * count) << "seed " << seed << " label " << label;
      EXPECT_NEAR(kept[label], 0.2 * count, 1.0);
    }
  }
}

TEST(SplitTest, SpeakerModeKeepsSpeakersTogether) {
  const Manifest train = BalancedTrain(4, 85);
  const auto s = SplitLabelDeficient(train, SplitSpec{0.8, 5, SplitMode::kSpeaker});
  auto speaker = [](const ManifestRow& r) {
    const auto slash = r.id.find('/');
    return r.id.substr(slash + 1, r.id.find("_nohash_") - slash - 1);
  };
  std::set<std::string> pre, lab;
  for (const auto& r : s.pretrain.rows) pre.insert(speaker(r));
  for (const auto& r : s.labelled.rows) lab.insert(speaker(r));
  for (const auto& sp : pre) EXPECT_EQ(lab.count(sp), 0u) << sp;
  EXPECT_GE(s.pretrain.size(), static_cast<std::size_t>(0.8 * 340));
}

TEST(ManifestTest, RoundTripsLosslessly) {
  TempDir dir;
  Manifest m;
  m.class_map = {"a", "b,c"};
  m.data_root = dir.path() / "root";
  m.rows = {{"x/1", "x/1.wav", 0, 1.0},
            {"y,\"q\"", "y/q.wav", 1, 0.123456789012345},
            {"long#3", "long.wav#48000", kNoLabel, 1.0}};
  SaveManifest(m, dir / "m.csv");
  const std::string text = ReadText(dir / "m.csv");
  EXPECT_EQ(text.rfind("id,path,label,duration\n", 0), 0u);
  EXPECT_EQ(text.find('\r'), std::string::npos);
  EXPECT_THAT(text, HasSubstr("long#3,long.wav#48000,,1\n"));
  const Manifest back = LoadManifest(dir / "m.csv");
  EXPECT_EQ(back, m);
  SaveManifest(back, dir / "m2.csv");
  EXPECT_EQ(ReadText(dir / "m2.csv"), text);

  const AudioRef ref = ResolveAudio(back, back.rows[2]);
  EXPECT_EQ(ref.file, m.data_root / "long.wav");
  EXPECT_EQ(ref.offset, 48000u);
}

TEST(ManifestTest, RejectsMalformedFiles) {
  TempDir dir;
  Manifest m;
  m.class_map = {"a"};
  m.data_root = dir.path();
  m.rows = {{"x", "x.wav", 0, 1.0}};
  SaveManifest(m, dir / "m.csv");
  WriteText(dir / "m.csv", "id,path,label\nx,x.wav,0\n");
  EXPECT_THROW(LoadManifest(dir / "m.csv"), std::runtime_error);
  WriteText(dir / "m.csv", "id,path,label,duration\nx,x.wav,3,1\n");
  EXPECT_THROW(LoadManifest(dir / "m.csv"), std::runtime_error);
  WriteText(dir / "m.csv", "id,path,label,duration\nx,x.wav,0,1\nx,y.wav,0,1\n");
  EXPECT_THROW(LoadManifest(dir / "m.csv"), std::runtime_error);
  EXPECT_THROW(LoadManifest(dir / "missing.csv"), std::runtime_error);
}

TEST(SegmentTest, CutsFullSecondsAndDropsRemainders) {
  TempDir dir;
  fs::create_directories(dir / "spk");
  WriteRawWav(dir / "spk" / "long.wav", std::vector<std::int16_t>(56000, 100), 16000, 1);
  WriteRawWav(dir / "short.wav", std::vector<std::int16_t>(14400, 100), 16000, 1);
  WriteRawWav(dir / "stereo.wav", std::vector<std::int16_t>(64000, 100), 16000, 2);
  WriteText(dir / "broken.wav", "not a wav");

  const SegmentResult r = SegmentCorpus(dir.path());
  ASSERT_EQ(r.manifest.size(), 3u);
  EXPECT_EQ(r.skipped, 2);
  EXPECT_EQ(r.warnings.size(), 2u);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& row = r.manifest.rows[k];
    EXPECT_EQ(row.label, kNoLabel);
    EXPECT_EQ(ResolveAudio(r.manifest, row).offset, 16000u * k);
  }

  const SegmentResult overlap = SegmentCorpus(dir.path(), 1.0, 0.5);
  EXPECT_EQ(overlap.manifest.size(), 6u);  // starts 0, 0.5, ..., 2.5 s
}

TEST(SegmentTest, SegmentsLoadAsClips) {
  TempDir dir;
  std::vector<std::int16_t> pcm(48000);
  for (std::size_t i = 0; i < pcm.size(); ++i) pcm[i] = static_cast<std::int16_t>(i / 16000 * 1000);
  WriteRawWav(dir / "a.wav", pcm, 16000, 1);
  const SegmentResult r = SegmentCorpus(dir.path());
  ASSERT_EQ(r.manifest.size(), 3u);
  const FeatureBank bank = FeatureBank::Build(r.manifest, MfccConfig{});
  ASSERT_EQ(bank.size(), 3u);
  // Segment 0 is silence; the others carry a constant offset and so differ.
  EXPECT_FALSE(bank[0].isApprox(bank[1]));
}

TEST(BatchesTest, SizesOrderAndExhaustiveness) {
  const auto b = EpochBatches(1030, 512, 9, 0);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0].size(), 512u);
  EXPECT_EQ(b[1].size(), 512u);
  EXPECT_EQ(b[2].size(), 6u);
  EXPECT_EQ(EpochBatches(1030, 512, 9, 0), b);
  EXPECT_NE(EpochBatches(1030, 512, 9, 1), b);
  EXPECT_NE(EpochBatches(1030, 512, 10, 0), b);
  std::vector<std::size_t> seen;
  for (const auto& batch : b) seen.insert(seen.end(), batch.begin(), batch.end());
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 0; i < seen.size(); ++i) ASSERT_EQ(seen[i], i);
  EXPECT_THROW(EpochBatches(10, 0, 0, 0), std::invalid_argument);
}

TEST(FeatureBankTest, MissingAudioNamesRow) {
  TempDir dir;
  Manifest m;
  m.class_map = {"a"};
  m.data_root = dir.path();
  m.rows = {{"gone/clip", "gone/clip.wav", 0, 1.0}};
  EXPECT_THAT([&] { FeatureBank::Build(m, MfccConfig{}); },
              ::testing::ThrowsMessage<IngestionError>(HasSubstr("gone/clip")));
}

TEST(SyntheticCorpusTest, IngestsWithoutLeakage) {
  TempDir dir;
  SyntheticCorpusSpec spec;
  spec.n_keywords = 3;
  spec.train_per_class = 6;
  spec.validation_per_class = 2;
  spec.test_per_class = 2;
  spec.n_speakers = 12;
  WriteSyntheticSpeechCommands(dir.path(), spec);
  const auto splits = IngestSpeechCommands(dir.path());
  EXPECT_EQ(splits.train.size(), 18u);
  EXPECT_EQ(splits.validation.size(), 6u);
  EXPECT_EQ(splits.test.size(), 6u);
  const auto train = Ids(splits.train);
  for (const Manifest* held : {&splits.validation, &splits.test}) {
    for (const auto& id : Ids(*held)) EXPECT_EQ(train.count(id), 0u) << id;
  }
  const auto split = SplitLabelDeficient(splits.train, SplitSpec{0.5, 1});
  for (const Manifest* part : {&split.pretrain, &split.labelled}) {
    for (const Manifest* held : {&splits.validation, &splits.test}) {
      const auto ids = Ids(*held);
      for (const auto& r : part->rows) EXPECT_EQ(ids.count(r.id), 0u);
    }
  }
  const FeatureBank bank = FeatureBank::Build(splits.train, MfccConfig{});
  const auto stats = FeatureStats::Compute(bank.frames());
  const std::vector<std::size_t> rows = {3, 0, 7};
  const Batch batch = GatherBatch(splits.train, bank, rows, stats);
  EXPECT_EQ(batch.features.rows(), 3 * 98);
  EXPECT_EQ(batch.features.cols(), 40);
  EXPECT_EQ(batch.ids[1], splits.train.rows[0].id);
  EXPECT_EQ(batch.labels[2], splits.train.rows[7].label);
  EXPECT_TRUE(batch.features.allFinite());
}

}  // namespace
}  // namespace kwsd2v
