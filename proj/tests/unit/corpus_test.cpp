#include <cmath>
#include <set>
#include <sstream>
#include <string>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "refit/corpus.hpp"
#include "refit/error.hpp"

using namespace refit;
using ::testing::HasSubstr;

namespace {

Corpus parse(const std::string& text) {
  std::istringstream in(text);
  return parse_corpus(in, "fixture");
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(LoadCorpus, ThreeLinesInferSortedLabels) {
  const auto c = parse(
      R"({"id":"1","text_a":"a b","text_b":"c","label":"zeta"})"
      "\n"
      R"({"id":"2","text_a":"d","text_b":null,"label":"alpha"})"
      "\n"
      R"({"id":"3","text_a":"e","label":"zeta"})"
      "\n");
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c.label_names(), (std::vector<std::string>{"alpha", "zeta"}));
  EXPECT_EQ(c[0].id, "1");
  EXPECT_EQ(*c[0].text_b, "c");
  EXPECT_FALSE(c[1].text_b.has_value());
  EXPECT_FALSE(c[2].text_b.has_value());
}

TEST(LoadCorpus, EmptyInputIsAnError) {
  EXPECT_EQ(error_of([] { parse(""); }), "empty corpus");
  EXPECT_EQ(error_of([] { parse("# header only\n\n"); }), "empty corpus");
}

TEST(LoadCorpus, MissingLabelNamesTheLine) {
  const auto msg = error_of([] {
    parse(R"({"id":"1","text_a":"x","label":"p"})"
          "\n"
          R"({"id":"2","text_a":"y"})"
          "\n");
  });
  EXPECT_THAT(msg, HasSubstr("schema error"));
  EXPECT_THAT(msg, HasSubstr("fixture:2"));
  EXPECT_THAT(msg, HasSubstr("label"));
}

TEST(LoadCorpus, WrongLabelTypeIsSchemaError) {
  EXPECT_THAT(error_of([] { parse(R"({"id":"1","text_a":"x","label":3})"); }),
              HasSubstr("schema error"));
}

TEST(LoadCorpus, DuplicateIdAndMalformedLine) {
  EXPECT_THAT(error_of([] {
                parse(R"({"id":"1","text_a":"x","label":"p"})"
                      "\n"
                      R"({"id":"1","text_a":"y","label":"p"})");
              }),
              HasSubstr("duplicate id"));
  EXPECT_THAT(error_of([] { parse("{not json\n"); }), HasSubstr("malformed line fixture:1"));
}

TEST(LoadCorpus, ErrorsAreDataIntegrity) {
  try {
    parse("");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDataIntegrity);
  }
}

TEST(LoadCorpus, WriteThenParseRoundTrips) {
  const auto c = gen_synthetic(50, 0.1, 3);
  std::ostringstream out;
  write_corpus(out, c, synthetic_header(3));
  EXPECT_EQ(out.str().rfind("#refit-synthetic v1 seed=3\n", 0), 0u);
  std::istringstream in(out.str());
  EXPECT_EQ(parse_corpus(in), c);
}

TEST(Corpus, ValidatesLabelsAndIds) {
  EXPECT_THROW(Corpus({{"1", "x", std::nullopt, "q"}}, {"p"}), Error);
  EXPECT_THROW(Corpus({{"1", "x", std::nullopt, "p"}, {"1", "y", std::nullopt, "p"}}, {"p"}),
               Error);
  EXPECT_THROW(Corpus({}, {"p", "p"}), Error);
}

TEST(Featurize, DeterministicForIdenticalTexts) {
  const LabeledExample a{"1", "The cat sat", std::string("on the mat"), "p"};
  const LabeledExample b{"2", "The cat sat", std::string("on the mat"), "q"};
  EXPECT_EQ(featurize(a, {}), featurize(b, {}));
}

TEST(Featurize, SingleTextHasOnlyAFeatures) {
  const LabeledExample ex{"1", "x", std::nullopt, "p"};
  const auto strings = feature_strings(ex, {});
  ASSERT_EQ(strings.size(), 1u);
  EXPECT_EQ(strings.begin()->first, "a:x");
}

TEST(Featurize, HandTraceOnTwoTokenTexts) {
  const LabeledExample ex{"1", "X y", std::string("y z"), "p"};
  const FeaturizerConfig cfg;
  const std::vector<std::string> expected = {"a:x", "a:y", "a:x y", "b:y", "b:z", "b:y z",
                                             "both:y"};
  const auto strings = feature_strings(ex, cfg);
  ASSERT_EQ(strings.size(), expected.size());
  for (const auto& s : expected) EXPECT_EQ(strings.at(s), 1.0) << s;

  std::set<std::uint32_t> indices;
  for (const auto& s : expected) indices.insert(static_cast<std::uint32_t>(fnv1a64(s) & (cfg.dim - 1)));
  ASSERT_EQ(indices.size(), expected.size());  // no collisions for this trace
  const auto v = featurize(ex, cfg);
  ASSERT_EQ(v.entries.size(), expected.size());
  auto it = indices.begin();
  for (const auto& [index, value] : v.entries) {
    EXPECT_EQ(index, *it++);
    EXPECT_NEAR(value, 1.0 / std::sqrt(7.0), 1e-15);
  }
}

TEST(Featurize, SwappingFieldsSwapsPrefixesKeepsIntersection) {
  const LabeledExample ab{"1", "red fox", std::string("fox ran"), "p"};
  const LabeledExample ba{"1", "fox ran", std::string("red fox"), "p"};
  const auto fa = feature_strings(ab, {});
  const auto fb = feature_strings(ba, {});
  for (const auto& [key, count] : fa) {
    std::string swapped = key;
    if (key.rfind("a:", 0) == 0) swapped = "b:" + key.substr(2);
    if (key.rfind("b:", 0) == 0) swapped = "a:" + key.substr(2);
    ASSERT_TRUE(fb.contains(swapped)) << swapped;
    EXPECT_EQ(fb.at(swapped), count);
  }
  EXPECT_EQ(fa.size(), fb.size());
  EXPECT_EQ(fa.at("both:fox"), 1.0);
  EXPECT_NE(featurize(ab, {}), featurize(ba, {}));
}

TEST(Featurize, ConcatModeHasNoIntersectionFeatures) {
  FeaturizerConfig cfg;
  cfg.pair_mode = PairMode::kConcatFields;
  for (const auto& [key, _] : feature_strings({"1", "a b", std::string("b c"), "p"}, cfg)) {
    EXPECT_NE(key.rfind("both:", 0), 0u);
  }
}

TEST(Featurize, UnigramOnlyAndCaseSensitive) {
  FeaturizerConfig cfg;
  cfg.ngram_max = 1;
  cfg.lowercase = false;
  const auto s = feature_strings({"1", "A a", std::nullopt, "p"}, cfg);
  EXPECT_EQ(s.size(), 2u);
  EXPECT_TRUE(s.contains("a:A"));
}

TEST(Featurize, RepeatedTokensCount) {
  const auto s = feature_strings({"1", "go go go", std::nullopt, "p"}, {});
  EXPECT_EQ(s.at("a:go"), 3.0);
  EXPECT_EQ(s.at("a:go go"), 2.0);
}

TEST(Featurize, EmptyTextGivesEmptyVector) {
  EXPECT_TRUE(featurize({"1", "   ", std::nullopt, "p"}, {}).empty());
}

TEST(Featurize, IndicesInRangeAndUnitNorm) {
  const auto c = gen_synthetic(300, 0.1, 4);
  FeaturizerConfig cfg;
  cfg.dim = 1024;
  for (const auto& ex : c.examples()) {
    const auto v = featurize(ex, cfg);
    double norm = 0.0;
    std::uint32_t prev = 0;
    bool first = true;
    for (const auto& [i, x] : v.entries) {
      ASSERT_LT(i, cfg.dim);
      if (!first) ASSERT_GT(i, prev);
      prev = i;
      first = false;
      norm += x * x;
    }
    ASSERT_NEAR(norm, 1.0, 1e-12);
  }
}

TEST(FeaturizerConfig, Validation) {
  FeaturizerConfig cfg;
  cfg.dim = 1000;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.dim = 512;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.dim = 2048;
  cfg.ngram_max = 3;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Split, HalfOfHundred) {
  const auto c = gen_synthetic(100, 0.0, 1);
  const auto [train, dev] = split(c, 0.5, 9);
  EXPECT_EQ(train.size(), 50u);
  EXPECT_EQ(dev.size(), 50u);
}

TEST(Split, DeterministicPerSeedAndSeedSensitive) {
  const auto c = gen_synthetic(100, 0.0, 1);
  EXPECT_EQ(split(c, 0.3, 1), split(c, 0.3, 1));
  EXPECT_NE(split(c, 0.3, 1).second.ids(), split(c, 0.3, 2).second.ids());
}

TEST(Split, DisjointAndExhaustive) {
  const auto c = gen_synthetic(137, 0.2, 5);
  const auto [train, dev] = split(c, 0.25, 3);
  std::multiset<std::string> all;
  for (const auto& id : train.ids()) all.insert(id);
  for (const auto& id : dev.ids()) all.insert(id);
  const auto original = c.ids();
  EXPECT_EQ(all, std::multiset<std::string>(original.begin(), original.end()));
  const auto dev_list = dev.ids();
  std::set<std::string> dev_ids(dev_list.begin(), dev_list.end());
  for (const auto& id : train.ids()) EXPECT_FALSE(dev_ids.contains(id));
  EXPECT_EQ(train.label_names(), c.label_names());
}

TEST(Split, DegenerateAndOutOfRange) {
  const auto c = gen_synthetic(10, 0.0, 1);
  EXPECT_THAT(error_of([&] { split(c, 0.01, 1); }), HasSubstr("degenerate split"));
  EXPECT_THROW(split(c, 0.0, 1), Error);
  EXPECT_THROW(split(c, 1.0, 1), Error);
}

TEST(Synthetic, NoiseZeroMatchesRule) {
  const auto s = gen_synthetic_with_truth(500, 0.0, 2);
  for (std::size_t i = 0; i < s.corpus.size(); ++i) EXPECT_EQ(s.corpus[i].label, s.clean_labels[i]);
}

TEST(Synthetic, ByteIdenticalAcrossRuns) {
  std::ostringstream a, b;
  write_corpus(a, gen_synthetic(400, 0.1, 7), synthetic_header(7));
  write_corpus(b, gen_synthetic(400, 0.1, 7), synthetic_header(7));
  EXPECT_EQ(a.str(), b.str());
  std::ostringstream c;
  write_corpus(c, gen_synthetic(400, 0.1, 8));
  EXPECT_NE(a.str(), c.str());
}

TEST(Synthetic, FlipCountWithinBinomialBound) {
  // sd of Binomial(1000, 0.1) is sqrt(90).
  const auto s = gen_synthetic_with_truth(1000, 0.1, 11);
  std::size_t flips = 0;
  for (std::size_t i = 0; i < s.corpus.size(); ++i) flips += s.corpus[i].label != s.clean_labels[i];
  EXPECT_LE(std::abs(static_cast<double>(flips) - 100.0), 3.0 * std::sqrt(90.0));
}

TEST(Synthetic, BalancedBinaryPairs) {
  const auto c = gen_synthetic(2000, 0.0, 12);
  EXPECT_EQ(c.label_names(), (std::vector<std::string>{kNotParaphrase, kParaphrase}));
  std::size_t pos = 0;
  for (const auto& ex : c.examples()) {
    ASSERT_TRUE(ex.text_b.has_value());
    pos += ex.label == kParaphrase;
  }
  EXPECT_NEAR(static_cast<double>(pos), 1000.0, 3.0 * std::sqrt(500.0));
}

TEST(Synthetic, Validation) {
  EXPECT_EQ(error_of([] { gen_synthetic(100, 0.6, 1); }), "noise must be < 0.5");
  EXPECT_THROW(gen_synthetic(9, 0.1, 1), Error);
}
