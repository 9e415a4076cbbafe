#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "refit/numerics.hpp"

namespace refit {

struct LabeledExample {
  std::string id;
  std::string text_a;
  std::optional<std::string> text_b;
  std::string label;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

class Corpus {
 public:
  Corpus() = default;
  // Validates unique ids, unique label names, and label membership.
  Corpus(std::vector<LabeledExample> examples, std::vector<std::string> label_names);

  // Builds a corpus whose label set is the sorted set of labels seen.
  static Corpus with_inferred_labels(std::vector<LabeledExample> examples);

  const std::vector<LabeledExample>& examples() const noexcept { return examples_; }
  const std::vector<std::string>& label_names() const noexcept { return label_names_; }
  std::size_t size() const noexcept { return examples_.size(); }
  bool empty() const noexcept { return examples_.empty(); }
  const LabeledExample& operator[](std::size_t i) const { return examples_[i]; }

  // Throws "label mismatch" for unknown labels.
  std::size_t label_index(const std::string& label) const;
  std::vector<std::size_t> gold_indices() const;
  std::vector<std::string> ids() const;

  // Contiguous sub-range [begin, end), keeping the label set.
  Corpus slice(std::size_t begin, std::size_t end) const;

  friend bool operator==(const Corpus&, const Corpus&) = default;

 private:
  std::vector<LabeledExample> examples_;
  std::vector<std::string> label_names_;
};

enum class PairMode { kConcatFields, kPlusIntersection };

struct FeaturizerConfig {
  std::uint32_t dim = 1u << 12;
  int ngram_max = 2;
  bool lowercase = true;
  PairMode pair_mode = PairMode::kPlusIntersection;

  // Throws on dim not a power of two >= 2^10 or ngram_max outside {1, 2}.
  void validate() const;

  friend bool operator==(const FeaturizerConfig&, const FeaturizerConfig&) = default;
};

std::string to_string(PairMode mode);
PairMode parse_pair_mode(const std::string& text);

// Sorted by index, unique indices.
struct SparseVector {
  std::vector<std::pair<std::uint32_t, double>> entries;

  bool empty() const noexcept { return entries.empty(); }
  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

// Prefixed n-gram strings with counts, before hashing ("a:", "b:", "both:").
std::map<std::string, double> feature_strings(const LabeledExample& ex,
                                              const FeaturizerConfig& cfg);

// FNV-1a 64 hash of each prefixed n-gram modulo dim, count-valued, then
// L2-normalised.
SparseVector featurize(const LabeledExample& ex, const FeaturizerConfig& cfg);
std::vector<SparseVector> featurize_all(const Corpus& corpus, const FeaturizerConfig& cfg);

// Reads corpus JSONL. Lines starting with '#' and blank lines are skipped.
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::istream& in, const std::string& source_name = "<stream>");

void write_corpus(std::ostream& out, const Corpus& corpus,
                  const std::optional<std::string>& header_comment = std::nullopt);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus,
                 const std::optional<std::string>& header_comment = std::nullopt);

// Fisher-Yates shuffle seeded by `seed`, then the first
// round(dev_fraction * n) examples become dev. Returns (train, dev).
std::pair<Corpus, Corpus> split(const Corpus& corpus, double dev_fraction, std::uint64_t seed);

inline const std::string kParaphrase = "paraphrase";
inline const std::string kNotParaphrase = "not_paraphrase";

struct SyntheticCorpus {
  Corpus corpus;
  // Labels produced by the generating rule, before noise.
  std::vector<std::string> clean_labels;
};

// Paraphrase-style sentence pairs from built-in lexicons. Positive pairs come
// from synonym substitution, modifier insertion, symmetric reordering and
// active/passive restatement; negative pairs from argument swaps of
// asymmetric verbs and antonym substitution. Each gold label is flipped
// independently with probability `noise`.
SyntheticCorpus gen_synthetic_with_truth(std::size_t n, double noise, std::uint64_t seed);
Corpus gen_synthetic(std::size_t n, double noise, std::uint64_t seed);

std::string synthetic_header(std::uint64_t seed);

// Lexicons shared by the generator and the bundled behaviour suite.
namespace lexicon {
const std::vector<std::string>& names();
const std::vector<std::string>& jobs();
const std::vector<std::string>& groups();
const std::vector<std::string>& things();
const std::vector<std::string>& modifiers();
// "adjective|synonym"
const std::vector<std::string>& synonym_pairs();
// "adjective|antonym"
const std::vector<std::string>& antonym_pairs();
// Asymmetric relations between two people, e.g. "is proposing to".
const std::vector<std::string>& asymmetric_relations();
// Symmetric relations: "X and Y are <relation>".
const std::vector<std::string>& symmetric_relations();
// "present|past participle" for person-to-person transitive verbs.
const std::vector<std::string>& person_verbs();
// "past|passive participle" for person-to-thing verbs.
const std::vector<std::string>& thing_verbs();
}  // namespace lexicon

}  // namespace refit
