// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "segalign/dataset.hpp"
#include "segalign/io_util.hpp"
#include "segalign/synth_corpus.hpp"
#include "test_util.hpp"

using namespace segalign;

TEST(Dataset, LineFormat) {
  DatasetRecord r;
  r.id = "a";
  r.raw_text = "a person walks, then runs";
  r.text_segments = {"a person walks", "a person runs"};
  r.motion_path = "motions/a.sgmo";
  EXPECT_EQ(encode_dataset({r}),
            R"({"id":"a","text":"a person walks, then runs","segments":["a person walks","a person runs"],"motion":"motions/a.sgmo"})"
            "\n");
  r.embeddings = std::vector<std::vector<double>>{{0.5, -1.0}, {0.25, 2.0}};
  EXPECT_NE(encode_dataset({r}).find(R"("embeddings":[[0.5,-1.0],[0.25,2.0]])"), std::string::npos);
}

TEST(Dataset, RoundTripIsByteExact) {
  CorpusSpec spec;
  spec.sequences = 25;
  spec.noise_std = 0.3;
  spec.jitter_frames = 3;
  spec.seed = 9;
  std::vector<DatasetRecord> records;
  for (auto& s : generate_corpus(spec).sequences) records.push_back(s.record);
  segalign::testing::TempDir dir;
  save_dataset(records, dir / "d.jsonl");
  const std::string first = io::read_file(dir / "d.jsonl");
  const auto back = load_dataset(dir / "d.jsonl");
  ASSERT_EQ(back.size(), records.size());
  EXPECT_EQ(back[3].embeddings->at(1), records[3].embeddings->at(1));
  EXPECT_EQ(encode_dataset(back), first);
}

TEST(Dataset, ValidationErrors) {
  EXPECT_THROW(decode_dataset("{not json}\n"), Error);
  EXPECT_THROW(decode_dataset(R"({"id":"x","text":"t","segments":[],"motion":"m"})"), Error);
  EXPECT_THROW(decode_dataset(R"({"id":"x","text":"t","segments":["a","b","c","d","e","f"],"motion":"m"})"), Error);
  EXPECT_THROW(decode_dataset(R"({"id":"x","text":"t","segments":["a"],"motion":"m","embeddings":[[1,2],[3]]})"),
               Error);
  EXPECT_THROW(decode_dataset(R"({"id":"x","segments":["a"],"motion":"m"})"), Error);
}

TEST(Corpus, DeterministicAndConsistent) {
  CorpusSpec spec;
  spec.sequences = 30;
  spec.jitter_frames = 5;
  spec.noise_std = 0.2;
  spec.seed = 3;
  const auto a = generate_corpus(spec), b = generate_corpus(spec);
  for (std::size_t i = 0; i < a.sequences.size(); ++i) {
    const auto& s = a.sequences[i];
    EXPECT_EQ(s.motion.frames, b.sequences[i].motion.frames);
    EXPECT_EQ(s.record.text_segments.size(), s.frame_boundaries.size() + 1);
    EXPECT_EQ(s.token_truth.count(), static_cast<int>(s.record.text_segments.size()));
    s.token_truth.validate(s.motion.num_frames() / spec.ratio);
  }
}

TEST(Corpus, RejectsSegmentLimit) {
  CorpusSpec spec;
  spec.max_segments = 6;
  EXPECT_THROW(generate_corpus(spec), Error);
}

TEST(Corpus, TokenTruthRounding) {
  const auto b = token_truth_from_frames({6, 10}, 16, 4);
  EXPECT_EQ(b.cuts(), (std::vector<int>{2, 3}));  // 1.5 -> 2, 2.5 -> 3
}
