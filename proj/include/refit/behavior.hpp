#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "refit/analysis.hpp"
#include "refit/corpus.hpp"

namespace refit {

// A sentence-pair template. Placeholders are "{slot}" or "{slot:k}"; the
// latter selects the k-th '|'-separated field of the lexicon entry, so one
// draw can fill related words in both sentences (e.g. "brave|courageous").
struct BehaviorTemplate {
  std::string name;
  std::string capability;
  std::string template_a;
  std::string template_b;
  std::map<std::string, std::vector<std::string>> lexicons;
  std::string expected_label;
};

struct Expansion {
  std::vector<LabeledExample> cases;
  std::optional<std::string> warning;
};

// Samples n slot combinations uniformly without replacement (with
// replacement, plus a warning, when fewer than n exist). Combinations that
// give two slots the same word are skipped while others remain. Case ids are
// "beh:<name>:<k>".
Expansion expand_template(const BehaviorTemplate& t, std::size_t n, std::uint64_t seed);

struct BehaviorRecord {
  std::string name;
  std::string capability;
  std::size_t n_cases = 0;
  double old_pass_rate = 0.0;
  double new_pass_rate = 0.0;
  double nfr = 0.0;
};

struct BehaviorReport {
  std::vector<BehaviorRecord> records;
  std::vector<std::string> warnings;
};

// Pass rates and flip rate of one test from per-case pass flags.
BehaviorRecord score_test(const std::string& name, const std::string& capability,
                          const std::vector<bool>& old_pass, const std::vector<bool>& new_pass);

// Test k expands with derive_seed(seed, behaviour role, k).
BehaviorReport run_behavior_suite(const Ensemble& old_model, const Ensemble& new_model,
                                  const std::vector<BehaviorTemplate>& suite,
                                  std::size_t n_per_test, std::uint64_t seed,
                                  const FeaturizerConfig& featurizer);

// Expanded cases of every test, concatenated in suite order.
Corpus expand_suite(const std::vector<BehaviorTemplate>& suite, std::size_t n_per_test,
                    std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

// Ten paraphrase-task tests over the synthetic lexicons: pronoun swap,
// modifier insertion, more/less swap, synonym swap, "according to"
// reordering, asymmetric order, three active/passive variants and
// before/after.
std::vector<BehaviorTemplate> default_suite();

std::vector<BehaviorTemplate> load_suite(const std::filesystem::path& path);
std::vector<BehaviorTemplate> parse_suite(const std::string& json_text);
std::string serialize_suite(const std::vector<BehaviorTemplate>& suite);

void write_behavior_markdown(std::ostream& out, const BehaviorReport& report,
                             const std::string& title = "");
void write_behavior_csv(std::ostream& out, const BehaviorReport& report);

}  // namespace refit
