#include <set>
#include <sstream>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "refit/behavior.hpp"
#include "refit/error.hpp"
#include "refit/update.hpp"

using namespace refit;
using ::testing::HasSubstr;

namespace {

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

BehaviorTemplate pronoun_template() {
  BehaviorTemplate t;
  t.name = "coref";
  t.capability = "Coref";
  t.template_a = "If {first_name} and {second_name} were alone, do you think he would reject her?";
  t.template_b = "If {first_name} and {second_name} were alone, do you think she would reject him?";
  t.lexicons = {{"first_name", {"Shannon"}}, {"second_name", {"Samantha"}}};
  t.expected_label = kNotParaphrase;
  return t;
}

std::vector<bool> flags(std::size_t n, std::set<std::size_t> on) {
  std::vector<bool> v(n, false);
  for (auto i : on) v[i - 1] = true;
  return v;
}

Ensemble trained_model(std::uint64_t seed) {
  static const Corpus data = gen_synthetic(800, 0.1, 3);
  FeaturizerConfig f;
  f.dim = 1024;
  UpdateConfig cfg;
  cfg.seed = seed;
  cfg.epochs = 4;
  cfg.hidden_dims = {8};
  return Ensemble(train(cfg, data, f).model);
}

}  // namespace

TEST(Expand, SingleWordLexiconsGiveOneCase) {
  const auto t = pronoun_template();
  const auto e = expand_template(t, 1, 0);
  ASSERT_EQ(e.cases.size(), 1u);
  EXPECT_FALSE(e.warning.has_value());
  EXPECT_EQ(e.cases[0].id, "beh:coref:0");
  EXPECT_EQ(e.cases[0].text_a,
            "If Shannon and Samantha were alone, do you think he would reject her?");
  EXPECT_EQ(*e.cases[0].text_b,
            "If Shannon and Samantha were alone, do you think she would reject him?");
  EXPECT_EQ(e.cases[0].label, kNotParaphrase);
}

TEST(Expand, TooFewCombinationsWarnsAndRepeats) {
  const auto e = expand_template(pronoun_template(), 5, 0);
  ASSERT_EQ(e.cases.size(), 5u);
  ASSERT_TRUE(e.warning.has_value());
  EXPECT_THAT(*e.warning, HasSubstr("only 1 distinct"));
  for (const auto& c : e.cases) EXPECT_EQ(c.text_a, e.cases[0].text_a);
}

TEST(Expand, SamplesWithoutReplacementAndSkipsRepeatedWords) {
  BehaviorTemplate t;
  t.name = "pair";
  t.template_a = "{x} meets {y}";
  t.template_b = "{y} meets {x}";
  const std::vector<std::string> names = {"a", "b", "c", "d", "e"};
  t.lexicons = {{"x", names}, {"y", names}};
  t.expected_label = "p";
  const auto e = expand_template(t, 20, 9);
  EXPECT_FALSE(e.warning.has_value());
  std::set<std::string> seen;
  for (const auto& c : e.cases) {
    seen.insert(c.text_a);
    EXPECT_NE(c.text_a.substr(0, 1), c.text_a.substr(c.text_a.size() - 1));
  }
  EXPECT_EQ(seen.size(), 20u);
  const auto over = expand_template(t, 21, 9);
  EXPECT_TRUE(over.warning.has_value());
}

TEST(Expand, DeterministicPerSeed) {
  const auto suite = default_suite();
  const auto a = expand_template(suite[0], 50, 3);
  const auto b = expand_template(suite[0], 50, 3);
  const auto c = expand_template(suite[0], 50, 4);
  EXPECT_EQ(a.cases, b.cases);
  EXPECT_NE(a.cases, c.cases);
}

TEST(Expand, FieldSelectors) {
  BehaviorTemplate t;
  t.name = "syn";
  t.template_a = "{p} is {adj:0}";
  t.template_b = "{p} is {adj:1}";
  t.lexicons = {{"p", {"Ann"}}, {"adj", {"brave|courageous"}}};
  t.expected_label = "p";
  const auto e = expand_template(t, 1, 0);
  EXPECT_EQ(e.cases[0].text_a, "Ann is brave");
  EXPECT_EQ(*e.cases[0].text_b, "Ann is courageous");
  t.template_b = "{p} is {adj}";
  EXPECT_EQ(*expand_template(t, 1, 0).cases[0].text_b, "Ann is brave");
  t.template_b = "{p} is {adj:2}";
  EXPECT_THROW(expand_template(t, 1, 0), Error);
}

TEST(Expand, UnboundSlot) {
  auto t = pronoun_template();
  t.template_a += " {missing}";
  EXPECT_EQ(error_of([&] { expand_template(t, 1, 0); }), "unbound slot missing");
}

TEST(Expand, HugeSpacesUseRejectionSampling) {
  BehaviorTemplate t;
  t.name = "big";
  t.template_a = "{a} {b} {c} {d}";
  t.template_b = "{d} {c} {b} {a}";
  std::vector<std::string> words;
  for (int i = 0; i < 60; ++i) words.push_back("w" + std::to_string(i));
  t.lexicons = {{"a", words}, {"b", words}, {"c", words}, {"d", words}};
  t.expected_label = "p";
  const auto e = expand_template(t, 300, 1);
  std::set<std::string> seen;
  for (const auto& c : e.cases) seen.insert(c.text_a);
  EXPECT_EQ(seen.size(), 300u);
  EXPECT_EQ(expand_template(t, 300, 1).cases, e.cases);
}

TEST(Score, HandFixture) {
  const auto r = score_test("t", "cap", flags(4, {1, 2, 3}), flags(4, {2, 4}));
  EXPECT_EQ(r.n_cases, 4u);
  EXPECT_DOUBLE_EQ(r.old_pass_rate, 0.75);
  EXPECT_DOUBLE_EQ(r.new_pass_rate, 0.5);
  EXPECT_DOUBLE_EQ(r.nfr, 0.5);
}

TEST(Score, BoundsOnRandomFlags) {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<bool> o(n), nw(n);
    for (std::size_t i = 0; i < n; ++i) {
      o[i] = rng.bernoulli(0.6);
      nw[i] = rng.bernoulli(0.6);
    }
    const auto r = score_test("t", "c", o, nw);
    ASSERT_LE(r.nfr, r.old_pass_rate + 1e-15);
    ASSERT_LE(r.nfr, 1.0 - r.new_pass_rate + 1e-15);
    ASSERT_EQ(score_test("t", "c", o, o).nfr, 0.0);
  }
  EXPECT_THROW(score_test("t", "c", flags(2, {}), flags(3, {})), Error);
}

TEST(Suite, DefaultExpandsWithoutWarnings) {
  const auto suite = default_suite();
  EXPECT_EQ(suite.size(), 10u);
  std::vector<std::string> warnings;
  const auto corpus = expand_suite(suite, 500, 42, &warnings);
  EXPECT_TRUE(warnings.empty()) << warnings.front();
  EXPECT_EQ(corpus.size(), 5000u);
  EXPECT_EQ(expand_suite(suite, 500, 42), corpus);
  for (const auto& t : suite) {
    EXPECT_TRUE(t.expected_label == kParaphrase || t.expected_label == kNotParaphrase) << t.name;
  }
}

TEST(Suite, JsonRoundTrip) {
  const auto suite = default_suite();
  const auto back = parse_suite(serialize_suite(suite));
  ASSERT_EQ(back.size(), suite.size());
  for (std::size_t k = 0; k < suite.size(); ++k) {
    EXPECT_EQ(back[k].name, suite[k].name);
    EXPECT_EQ(back[k].template_a, suite[k].template_a);
    EXPECT_EQ(back[k].template_b, suite[k].template_b);
    EXPECT_EQ(back[k].lexicons, suite[k].lexicons);
    EXPECT_EQ(back[k].expected_label, suite[k].expected_label);
  }
  EXPECT_THROW(parse_suite("{}"), Error);
  EXPECT_THROW(parse_suite("[{\"name\": 1}]"), Error);
  EXPECT_THROW(parse_suite("[oops"), Error);
}

TEST(Run, SameModelHasNoFlips) {
  const auto m = trained_model(1);
  FeaturizerConfig f;
  f.dim = 1024;
  const auto report = run_behavior_suite(m, m, default_suite(), 100, 7, f);
  ASSERT_EQ(report.records.size(), 10u);
  for (const auto& r : report.records) {
    EXPECT_EQ(r.n_cases, 100u);
    EXPECT_EQ(r.nfr, 0.0) << r.name;
    EXPECT_EQ(r.old_pass_rate, r.new_pass_rate);
  }
}

TEST(Run, SeedChangeFlipsSomething) {
  FeaturizerConfig f;
  f.dim = 1024;
  const auto report = run_behavior_suite(trained_model(1), trained_model(2), default_suite(), 200, 7, f);
  double worst = 0.0;
  for (const auto& r : report.records) worst = std::max(worst, r.nfr);
  EXPECT_GT(worst, 0.0);
}

TEST(Run, ChecksLabelsAndFeaturizer) {
  const auto m = trained_model(1);
  FeaturizerConfig f;
  f.dim = 1024;
  auto suite = default_suite();
  suite[0].expected_label = "maybe";
  EXPECT_THAT(error_of([&] { run_behavior_suite(m, m, suite, 5, 0, f); }),
              HasSubstr("label mismatch in template"));
  EXPECT_EQ(error_of([&] { run_behavior_suite(m, m, default_suite(), 5, 0, FeaturizerConfig{}); }),
            "feature dim mismatch");
}

TEST(Report, MarkdownAndCsv) {
  BehaviorReport report;
  report.records.push_back({"srl_paraphrase", "SRL", 500, 0.9, 0.85, 0.07});
  report.warnings.push_back("careful");
  std::ostringstream md, csv;
  write_behavior_markdown(md, report, "old vs new");
  write_behavior_csv(csv, report);
  EXPECT_THAT(md.str(), HasSubstr("### old vs new"));
  EXPECT_THAT(md.str(), HasSubstr("| srl_paraphrase | SRL | 90.00 | 85.00 | 7.00 |"));
  EXPECT_THAT(md.str(), HasSubstr("> warning: careful"));
  EXPECT_EQ(csv.str(),
            "test,capability,n_cases,old_pass_rate,new_pass_rate,nfr\n"
            "srl_paraphrase,\"SRL\",500,0.900000,0.850000,0.070000\n");
}
