#include <set>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tpt/data.hpp"
#include "tpt/error.hpp"

using namespace tpt;
using namespace tpt::data;

TEST(Vocab, ReservedIdsThenFrequency) {
  const auto v = Vocab::build("a b a", 4);
  ASSERT_EQ(v.size(), 4u);
  EXPECT_EQ(v.token_of(0), "<pad>");
  EXPECT_EQ(v.token_of(1), "<unk>");
  EXPECT_EQ(v.id_of("a"), 2);
  EXPECT_EQ(v.id_of("b"), 3);
  EXPECT_EQ(v.encode("a b a"), (std::vector<TokenId>{2, 3, 2}));
  EXPECT_EQ(v.encode("zebra"), (std::vector<TokenId>{kUnkId}));
}

TEST(Vocab, CapacityPushesRareWordsToUnk) {
  const auto v = Vocab::build("a b a", 3);
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(v.encode("a b"), (std::vector<TokenId>{2, kUnkId}));
}

TEST(Vocab, TiesBreakLexicographically) {
  const auto v = Vocab::build("y x", 10);
  EXPECT_EQ(v.id_of("x"), 2);
  EXPECT_EQ(v.id_of("y"), 3);
}

TEST(Vocab, NeverEmitsPad) {
  const auto v = Vocab::build("<pad> a", 10);
  for (TokenId id : v.encode("<pad> a <unk>")) EXPECT_NE(id, kPadId);
}

TEST(Vocab, Errors) {
  EXPECT_THROW(Vocab::build("   \n ", 10), DomainError);
  EXPECT_THROW(Vocab::build("a", 2), ConfigError);
}

TEST(Vocab, JsonAndFileRoundTrip) {
  const auto v = Vocab::build(generate_toy_corpus(3000, 1), 50);
  EXPECT_EQ(Vocab::from_json(v.to_json()), v);
  support::TempDir dir("vocab");
  v.save(dir / "vocab.json");
  EXPECT_EQ(Vocab::load(dir / "vocab.json"), v);
  EXPECT_THROW(Vocab::load(dir / "missing.json"), IoError);
}

TEST(BytesPerToken, CountsSeparators) {
  EXPECT_DOUBLE_EQ(bytes_per_token("ab ab"), 2.5);
  EXPECT_DOUBLE_EQ(bytes_per_token("  abc\n"), 3.0);
  EXPECT_THROW(bytes_per_token(" "), DomainError);
}

TEST(Windows, InputAndShiftedTarget) {
  const std::vector<TokenId> ids = {2, 3, 4, 5};
  EXPECT_EQ(window_count(ids.size(), 3), 1u);
  const std::vector<std::size_t> w = {0};
  const auto [in, tgt] = gather_windows(ids, 3, w);
  EXPECT_EQ(in.ids, (std::vector<TokenId>{2, 3, 4}));
  EXPECT_EQ(tgt.ids, (std::vector<TokenId>{3, 4, 5}));
}

TEST(Sampler, SameSeedSameOrderAndFullEpochs) {
  std::vector<TokenId> ids(200);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<TokenId>(2 + i % 50);
  WindowSampler a(ids, 8, 3, 42), b(ids, 8, 3, 42), c(ids, 8, 3, 43);
  EXPECT_EQ(a.epoch_order(), b.epoch_order());
  EXPECT_NE(a.epoch_order(), c.epoch_order());
  const std::set<std::size_t> seen(a.epoch_order().begin(), a.epoch_order().end());
  EXPECT_EQ(seen.size(), a.n_windows());
  for (int i = 0; i < 30; ++i) EXPECT_EQ(a.next(), b.next());  // wraps several epochs
}

TEST(Sampler, StateRoundTripReplays) {
  std::vector<TokenId> ids(100, 2);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<TokenId>(2 + i);
  WindowSampler a(ids, 4, 5, 1);
  for (int i = 0; i < 7; ++i) a.next();
  WindowSampler b(ids, 4, 5, 99);
  b.set_state(a.state());
  for (int i = 0; i < 12; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Sampler, TooShortThrows) {
  const std::vector<TokenId> ids = {2, 3, 4};
  EXPECT_THROW(WindowSampler(ids, 8, 1, 0), DomainError);
}

TEST(Corpus, ToyCorpusDeterministicAndSized) {
  const auto a = generate_toy_corpus(100000, 7);
  EXPECT_EQ(a, generate_toy_corpus(100000, 7));
  EXPECT_NE(a, generate_toy_corpus(100000, 8));
  EXPECT_GT(a.size(), 95000u);
  EXPECT_LT(a.size(), 105000u);
}

TEST(Corpus, SplitTakesTheTail) {
  const auto text = generate_toy_corpus(20000, 3);
  const auto c = prepare_corpus(text, 200, 0.05);
  const auto all = c.vocab.encode(text);
  ASSERT_EQ(c.train.size() + c.val.size(), all.size());
  EXPECT_TRUE(std::equal(c.val.begin(), c.val.end(), all.end() - static_cast<std::ptrdiff_t>(c.val.size())));
  EXPECT_NEAR(double(c.val.size()) / all.size(), 0.05, 0.001);
  EXPECT_DOUBLE_EQ(c.bytes_per_token, bytes_per_token(text));
}

TEST(Corpus, MissingFileIsIoError) {
  DataConfig c;
  c.corpus_path = "/nonexistent/corpus.txt";
  EXPECT_THROW(load_corpus(c), IoError);
}

TEST(Corpus, ConfigStrictJson) {
  EXPECT_THROW(data_config_from_json({{"unknown", 1}}), ConfigError);
  DataConfig bad;
  bad.val_fraction = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
}
