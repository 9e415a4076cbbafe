#include "refit/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "refit/error.hpp"

namespace refit {

using nlohmann::json;

Corpus::Corpus(std::vector<LabeledExample> examples, std::vector<std::string> label_names)
    : examples_(std::move(examples)), label_names_(std::move(label_names)) {
  std::set<std::string> labels(label_names_.begin(), label_names_.end());
  if (labels.size() != label_names_.size()) throw_data("duplicate label name");
  std::set<std::string> ids;
  for (const auto& ex : examples_) {
    if (ex.id.empty()) throw_data("empty example id");
    if (!ids.insert(ex.id).second) throw_data("duplicate id: " + ex.id);
    if (!labels.contains(ex.label)) throw_data("label mismatch: " + ex.label);
  }
}

Corpus Corpus::with_inferred_labels(std::vector<LabeledExample> examples) {
  std::set<std::string> labels;
  for (const auto& ex : examples) labels.insert(ex.label);
  return Corpus(std::move(examples), std::vector<std::string>(labels.begin(), labels.end()));
}

std::size_t Corpus::label_index(const std::string& label) const {
  auto it = std::find(label_names_.begin(), label_names_.end(), label);
  if (it == label_names_.end()) throw_data("label mismatch: " + label);
  return static_cast<std::size_t>(it - label_names_.begin());
}

std::vector<std::size_t> Corpus::gold_indices() const {
  std::vector<std::size_t> out;
  out.reserve(examples_.size());
  for (const auto& ex : examples_) out.push_back(label_index(ex.label));
  return out;
}

std::vector<std::string> Corpus::ids() const {
  std::vector<std::string> out;
  out.reserve(examples_.size());
  for (const auto& ex : examples_) out.push_back(ex.id);
  return out;
}

Corpus Corpus::slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, examples_.size());
  begin = std::min(begin, end);
  return Corpus(std::vector<LabeledExample>(examples_.begin() + begin, examples_.begin() + end),
                label_names_);
}

void FeaturizerConfig::validate() const {
  if (dim < (1u << 10) || (dim & (dim - 1)) != 0) {
    throw_invalid("featurizer dim must be a power of two >= 1024");
  }
  if (ngram_max != 1 && ngram_max != 2) throw_invalid("ngram_max must be 1 or 2");
}

std::string to_string(PairMode mode) {
  return mode == PairMode::kConcatFields ? "concat_fields" : "plus_intersection";
}

PairMode parse_pair_mode(const std::string& text) {
  if (text == "concat_fields") return PairMode::kConcatFields;
  if (text == "plus_intersection") return PairMode::kPlusIntersection;
  throw_invalid("unknown pair mode: " + text);
}

namespace {

std::vector<std::string> tokenize(const std::string& text, bool lowercase) {
  std::vector<std::string> tokens;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    if (lowercase) {
      std::transform(tok.begin(), tok.end(), tok.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    }
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

void add_ngrams(std::map<std::string, double>& out, const std::string& prefix,
                const std::vector<std::string>& tokens, int ngram_max) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out[prefix + tokens[i]] += 1.0;
    if (ngram_max >= 2 && i + 1 < tokens.size()) {
      out[prefix + tokens[i] + " " + tokens[i + 1]] += 1.0;
    }
  }
}

}  // namespace

std::map<std::string, double> feature_strings(const LabeledExample& ex,
                                              const FeaturizerConfig& cfg) {
  std::map<std::string, double> out;
  const auto tokens_a = tokenize(ex.text_a, cfg.lowercase);
  add_ngrams(out, "a:", tokens_a, cfg.ngram_max);
  if (!ex.text_b) return out;
  const auto tokens_b = tokenize(*ex.text_b, cfg.lowercase);
  add_ngrams(out, "b:", tokens_b, cfg.ngram_max);
  if (cfg.pair_mode == PairMode::kPlusIntersection) {
    const std::set<std::string> in_a(tokens_a.begin(), tokens_a.end());
    const std::set<std::string> in_b(tokens_b.begin(), tokens_b.end());
    for (const auto& tok : in_a) {
      if (in_b.contains(tok)) out["both:" + tok] = 1.0;
    }
  }
  return out;
}

SparseVector featurize(const LabeledExample& ex, const FeaturizerConfig& cfg) {
  cfg.validate();
  std::map<std::uint32_t, double> buckets;
  for (const auto& [feature, count] : feature_strings(ex, cfg)) {
    const auto index = static_cast<std::uint32_t>(fnv1a64(feature) & (cfg.dim - 1));
    buckets[index] += count;
  }
  SparseVector v;
  v.entries.assign(buckets.begin(), buckets.end());
  double norm = 0.0;
  for (const auto& [_, value] : v.entries) norm += value * value;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (auto& [_, value] : v.entries) value /= norm;
  }
  return v;
}

std::vector<SparseVector> featurize_all(const Corpus& corpus, const FeaturizerConfig& cfg) {
  std::vector<SparseVector> out;
  out.reserve(corpus.size());
  for (const auto& ex : corpus.examples()) out.push_back(featurize(ex, cfg));
  return out;
}

Corpus parse_corpus(std::istream& in, const std::string& source_name) {
  std::vector<LabeledExample> examples;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const std::string where = source_name + ":" + std::to_string(line_no);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error&) {
      throw_data("malformed line " + where);
    }
    if (!record.is_object()) throw_data("schema error at line " + where + ": not an object");
    for (const char* field : {"id", "text_a", "label"}) {
      if (!record.contains(field)) {
        throw_data("schema error at line " + where + ": missing \"" + field + "\"");
      }
      if (!record[field].is_string()) {
        throw_data("schema error at line " + where + ": \"" + field + "\" must be a string");
      }
    }
    LabeledExample ex;
    ex.id = record["id"].get<std::string>();
    ex.text_a = record["text_a"].get<std::string>();
    ex.label = record["label"].get<std::string>();
    if (record.contains("text_b") && !record["text_b"].is_null()) {
      if (!record["text_b"].is_string()) {
        throw_data("schema error at line " + where + ": \"text_b\" must be a string or null");
      }
      ex.text_b = record["text_b"].get<std::string>();
    }
    if (ex.id.empty()) throw_data("schema error at line " + where + ": empty id");
    if (!ids.insert(ex.id).second) throw_data("duplicate id at line " + where + ": " + ex.id);
    examples.push_back(std::move(ex));
  }
  if (examples.empty()) throw_data("empty corpus");
  return Corpus::with_inferred_labels(std::move(examples));
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_invalid("cannot open corpus file: " + path.string());
  return parse_corpus(in, path.string());
}

void write_corpus(std::ostream& out, const Corpus& corpus,
                  const std::optional<std::string>& header_comment) {
  if (header_comment) out << *header_comment << '\n';
  for (const auto& ex : corpus.examples()) {
    nlohmann::ordered_json record;
    record["id"] = ex.id;
    record["text_a"] = ex.text_a;
    record["text_b"] = ex.text_b ? nlohmann::ordered_json(*ex.text_b) : nullptr;
    record["label"] = ex.label;
    out << record.dump() << '\n';
  }
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus,
                 const std::optional<std::string>& header_comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_invalid("cannot write corpus file: " + path.string());
  write_corpus(out, corpus, header_comment);
}

std::pair<Corpus, Corpus> split(const Corpus& corpus, double dev_fraction, std::uint64_t seed) {
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) {
    throw_invalid("dev fraction must be in (0, 1)");
  }
  std::vector<LabeledExample> shuffled = corpus.examples();
  Rng rng(seed);
  for (std::size_t i = shuffled.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(shuffled[i - 1], shuffled[j]);
  }
  const auto n_dev = static_cast<std::size_t>(
      std::llround(dev_fraction * static_cast<double>(shuffled.size())));
  if (n_dev == 0 || n_dev >= shuffled.size()) throw_invalid("degenerate split");
  std::vector<LabeledExample> dev(shuffled.begin(), shuffled.begin() + n_dev);
  std::vector<LabeledExample> train(shuffled.begin() + n_dev, shuffled.end());
  return {Corpus(std::move(train), corpus.label_names()),
          Corpus(std::move(dev), corpus.label_names())};
}

namespace lexicon {

const std::vector<std::string>& names() {
  static const std::vector<std::string> v = {
      "Shannon", "Samantha", "Charles", "Jessica", "Wendy",  "Kevin",  "Jeremy", "Christian",
      "Alyssa",  "Sara",     "Noah",    "Emma",    "Liam",   "Olivia", "Mason",  "Sophia",
      "Lucas",   "Mia",      "Ethan",   "Ava",     "Logan",  "Chloe",  "Owen",   "Grace",
      "Caleb",   "Lily",     "Henry",   "Zoe",     "Isaac",  "Nora",   "Adam",   "Ruby",
      "Dylan",   "Clara",    "Felix",   "Hazel",   "Julian", "Iris",   "Oscar",  "Maya"};
  return v;
}

const std::vector<std::string>& jobs() {
  static const std::vector<std::string> v = {"architect", "surgeon", "teacher", "pilot",
                                             "lawyer",    "chef",    "nurse",   "engineer",
                                             "painter",   "farmer",  "writer",  "banker",
                                             "dancer",    "singer",  "baker",   "judge"};
  return v;
}

const std::vector<std::string>& groups() {
  static const std::vector<std::string> v = {"conservatives", "liberals", "doctors", "students",
                                             "critics",       "fans",     "experts", "locals"};
  return v;
}

const std::vector<std::string>& things() {
  static const std::vector<std::string> v = {"game",  "castle", "letter", "train", "exam",
                                             "match", "prize",  "book",   "bridge", "city"};
  return v;
}

const std::vector<std::string>& modifiers() {
  static const std::vector<std::string> v = {"truly", "really",    "very",
                                             "quite", "extremely", "genuinely"};
  return v;
}

const std::vector<std::string>& synonym_pairs() {
  static const std::vector<std::string> v = {
      "courageous|brave", "happy|glad",        "smart|clever",    "rich|wealthy",
      "quick|fast",       "calm|peaceful",     "kind|nice",       "big|large",
      "tired|exhausted",  "honest|truthful",   "polite|courteous", "quiet|silent",
      "strange|odd",      "famous|renowned",   "friendly|amiable", "sad|unhappy",
      "cheerful|joyful",  "strong|powerful",   "lazy|idle",       "generous|giving"};
  return v;
}

const std::vector<std::string>& antonym_pairs() {
  static const std::vector<std::string> v = {
      "brave|cowardly", "happy|sad",         "smart|stupid",    "rich|poor",
      "quick|slow",     "calm|anxious",      "kind|cruel",      "big|small",
      "tired|energetic", "honest|dishonest", "polite|rude",     "quiet|loud",
      "strange|normal", "famous|unknown",    "friendly|hostile", "cheerful|gloomy",
      "strong|weak",    "lazy|hardworking",  "generous|selfish", "passive|active"};
  return v;
}

const std::vector<std::string>& asymmetric_relations() {
  static const std::vector<std::string> v = {
      "is proposing to", "is taller than", "is older than", "is richer than", "reports to",
      "owes money to",   "is teaching",    "is hiring",     "is following",   "is waiting for"};
  return v;
}

const std::vector<std::string>& symmetric_relations() {
  static const std::vector<std::string> v = {"friends",     "neighbors",  "cousins",
                                             "married",     "classmates", "colleagues",
                                             "partners",    "siblings"};
  return v;
}

const std::vector<std::string>& person_verbs() {
  static const std::vector<std::string> v = {
      "remembers|remembered", "trusts|trusted", "admires|admired", "helps|helped",
      "hates|hated",          "loves|loved",    "visits|visited",  "calls|called"};
  return v;
}

const std::vector<std::string>& thing_verbs() {
  static const std::vector<std::string> v = {"missed|missed", "took|taken",   "won|won",
                                             "built|built",   "read|read",    "wrote|written",
                                             "lost|lost",     "sold|sold"};
  return v;
}

}  // namespace lexicon

namespace {

const std::string& pick(Rng& rng, const std::vector<std::string>& v) {
  return v[static_cast<std::size_t>(rng.below(v.size()))];
}

std::pair<std::string, std::string> pick_pair(Rng& rng, const std::vector<std::string>& v) {
  const std::string& entry = pick(rng, v);
  const auto bar = entry.find('|');
  return {entry.substr(0, bar), entry.substr(bar + 1)};
}

std::pair<std::string, std::string> two_names(Rng& rng) {
  const auto& names = lexicon::names();
  const auto i = static_cast<std::size_t>(rng.below(names.size()));
  auto j = static_cast<std::size_t>(rng.below(names.size() - 1));
  if (j >= i) ++j;
  return {names[i], names[j]};
}

// Sentence frames holding one adjective; shared by positive and negative
// families so frame words carry no label signal.
std::string adjective_frame(std::size_t frame, const std::string& adj, const std::string& p,
                            const std::string& q) {
  switch (frame) {
    case 0: return p + " is " + adj + ".";
    case 1: return "I can become more " + adj + ".";
    case 2: return p + " seems " + adj + " to " + q + ".";
    default: return p + " was " + adj + " yesterday.";
  }
}
constexpr std::size_t kAdjectiveFrames = 4;

using Pair = std::pair<std::string, std::string>;

Pair synonym_substitution(Rng& rng) {
  auto [adj, syn] = pick_pair(rng, lexicon::synonym_pairs());
  auto [p, q] = two_names(rng);
  const auto frame = static_cast<std::size_t>(rng.below(kAdjectiveFrames));
  if (rng.bernoulli(0.5)) std::swap(adj, syn);
  return {adjective_frame(frame, adj, p, q), adjective_frame(frame, syn, p, q)};
}

Pair modifier_insertion(Rng& rng) {
  const auto& adj = pick_pair(rng, lexicon::synonym_pairs()).first;
  const auto& mod = pick(rng, lexicon::modifiers());
  auto [p, q] = two_names(rng);
  Pair out = rng.bernoulli(0.5)
                 ? Pair{p + " is " + adj + " to " + q + ".", p + " is " + mod + " " + adj + " to " + q + "."}
                 : Pair{p + " is " + adj + ".", p + " is " + mod + " " + adj + "."};
  if (rng.bernoulli(0.5)) std::swap(out.first, out.second);
  return out;
}

Pair symmetric_reorder(Rng& rng) {
  const auto& rel = pick(rng, lexicon::symmetric_relations());
  auto [p, q] = two_names(rng);
  return {p + " and " + q + " are " + rel + ".", q + " and " + p + " are " + rel + "."};
}

Pair active_passive(Rng& rng) {
  if (rng.bernoulli(0.5)) {
    auto [past, participle] = pick_pair(rng, lexicon::thing_verbs());
    const auto& p = pick(rng, lexicon::names());
    const auto& thing = pick(rng, lexicon::things());
    return {p + " " + past + " the " + thing + ".",
            "The " + thing + " was " + participle + " by " + p + "."};
  }
  auto [present, participle] = pick_pair(rng, lexicon::person_verbs());
  auto [p, q] = two_names(rng);
  return {p + " " + present + " " + q + ".", q + " is " + participle + " by " + p + "."};
}

Pair according_to(Rng& rng) {
  const auto& group = pick(rng, lexicon::groups());
  const auto& adj = pick_pair(rng, lexicon::synonym_pairs()).first;
  const auto& job = pick(rng, lexicon::jobs());
  return {"Who do " + group + " think is the " + adj + " " + job + " in the world ?",
          "Who is the " + adj + " " + job + " in the world according to " + group + " ?"};
}

Pair asymmetric_swap(Rng& rng) {
  const auto& rel = pick(rng, lexicon::asymmetric_relations());
  auto [p, q] = two_names(rng);
  return {p + " " + rel + " " + q + ".", q + " " + rel + " " + p + "."};
}

Pair antonym_substitution(Rng& rng) {
  const auto kind = rng.below(4);
  if (kind == 0) {
    const auto& adj = pick_pair(rng, lexicon::antonym_pairs()).first;
    Pair out{"I can become more " + adj + ".", "I can become less " + adj + "."};
    if (rng.bernoulli(0.5)) std::swap(out.first, out.second);
    return out;
  }
  if (kind == 1) {
    const auto& p = pick(rng, lexicon::names());
    const auto& job = pick(rng, lexicon::jobs());
    Pair out{"What was " + p + " 's life before becoming a " + job + " ?",
             "What was " + p + " 's life after becoming a " + job + " ?"};
    if (rng.bernoulli(0.5)) std::swap(out.first, out.second);
    return out;
  }
  auto [adj, ant] = pick_pair(rng, lexicon::antonym_pairs());
  auto [p, q] = two_names(rng);
  const auto frame = static_cast<std::size_t>(rng.below(kAdjectiveFrames));
  if (rng.bernoulli(0.5)) std::swap(adj, ant);
  return {adjective_frame(frame, adj, p, q), adjective_frame(frame, ant, p, q)};
}

Pair wrong_passive(Rng& rng) {
  auto [past, participle] = pick_pair(rng, lexicon::thing_verbs());
  const auto& p = pick(rng, lexicon::names());
  const auto& thing = pick(rng, lexicon::things());
  return {p + " " + past + " the " + thing + ".",
          p + " was " + participle + " by the " + thing + "."};
}

Pair pronoun_swap(Rng& rng) {
  static const std::vector<std::string> verbs = {"reject", "help", "call", "trust", "forgive",
                                                 "ignore"};
  auto [p, q] = two_names(rng);
  const auto& verb = pick(rng, verbs);
  const std::string lead = "If " + p + " and " + q + " were alone , do you think ";
  return {lead + "he would " + verb + " her ?", lead + "she would " + verb + " him ?"};
}

}  // namespace

SyntheticCorpus gen_synthetic_with_truth(std::size_t n, double noise, std::uint64_t seed) {
  if (n < 10) throw_invalid("synthetic corpus needs n >= 10");
  if (!(noise >= 0.0 && noise < 0.5)) throw_invalid("noise must be < 0.5");

  using Family = Pair (*)(Rng&);
  static constexpr Family kPositive[] = {synonym_substitution, modifier_insertion,
                                         symmetric_reorder, active_passive, according_to};
  static constexpr Family kNegative[] = {asymmetric_swap, antonym_substitution, wrong_passive,
                                         pronoun_swap};

  Rng rng(seed);
  SyntheticCorpus out;
  std::vector<LabeledExample> examples;
  examples.reserve(n);
  out.clean_labels.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const bool positive = rng.bernoulli(0.5);
    const Pair texts = positive ? kPositive[rng.below(std::size(kPositive))](rng)
                                : kNegative[rng.below(std::size(kNegative))](rng);
    const std::string& clean = positive ? kParaphrase : kNotParaphrase;
    // The flip draw is always consumed so noise does not perturb the texts.
    const bool flip = rng.uniform() < noise;
    const std::string& label = flip ? (positive ? kNotParaphrase : kParaphrase) : clean;
    examples.push_back({"syn-" + std::to_string(k), texts.first, texts.second, label});
    out.clean_labels.push_back(clean);
  }
  out.corpus = Corpus(std::move(examples), {kNotParaphrase, kParaphrase});
  return out;
}

Corpus gen_synthetic(std::size_t n, double noise, std::uint64_t seed) {
  return gen_synthetic_with_truth(n, noise, seed).corpus;
}

std::string synthetic_header(std::uint64_t seed) {
  return "#refit-synthetic v1 seed=" + std::to_string(seed);
}

}  // namespace refit
