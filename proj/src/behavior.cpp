#include "refit/behavior.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>
#include <variant>

#include <json.hpp>

#include "refit/error.hpp"

namespace refit {

namespace {

constexpr std::uint64_t kBehaviorRole = 0x4245'4841'5649'4f52ULL;
constexpr std::uint64_t kEnumerateLimit = 2'000'000;

struct Placeholder {
  std::string slot;
  std::optional<std::size_t> field;
};

// Splits a template into literal text and placeholders.
std::vector<std::variant<std::string, Placeholder>> parse_template(const std::string& text) {
  std::vector<std::variant<std::string, Placeholder>> parts;
  std::string literal;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') {
      literal += text[i];
      continue;
    }
    const auto close = text.find('}', i);
    if (close == std::string::npos) throw_invalid("unterminated placeholder in: " + text);
    if (!literal.empty()) parts.emplace_back(std::move(literal));
    literal.clear();
    std::string body = text.substr(i + 1, close - i - 1);
    Placeholder ph;
    const auto colon = body.find(':');
    if (colon != std::string::npos) {
      try {
        ph.field = static_cast<std::size_t>(std::stoul(body.substr(colon + 1)));
      } catch (const std::exception&) {
        throw_invalid("bad placeholder field in: " + text);
      }
      body.resize(colon);
    }
    ph.slot = std::move(body);
    parts.emplace_back(std::move(ph));
    i = close;
  }
  if (!literal.empty()) parts.emplace_back(std::move(literal));
  return parts;
}

std::string field_of(const std::string& entry, std::optional<std::size_t> field) {
  if (!field) return entry.substr(0, entry.find('|'));
  std::size_t start = 0;
  for (std::size_t k = 0; k < *field; ++k) {
    const auto bar = entry.find('|', start);
    if (bar == std::string::npos) throw_invalid("lexicon entry '" + entry + "' lacks field");
    start = bar + 1;
  }
  return entry.substr(start, entry.find('|', start) - start);
}

std::string render(const std::vector<std::variant<std::string, Placeholder>>& parts,
                   const std::map<std::string, const std::string*>& fill) {
  std::string out;
  for (const auto& part : parts) {
    if (const auto* lit = std::get_if<std::string>(&part)) {
      out += *lit;
    } else {
      const auto& ph = std::get<Placeholder>(part);
      out += field_of(*fill.at(ph.slot), ph.field);
    }
  }
  return out;
}

}  // namespace

Expansion expand_template(const BehaviorTemplate& t, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw_invalid("expand_template needs n >= 1");
  const auto parts_a = parse_template(t.template_a);
  const auto parts_b = parse_template(t.template_b);

  std::vector<std::string> slots;
  for (const auto* parts : {&parts_a, &parts_b}) {
    for (const auto& part : *parts) {
      if (const auto* ph = std::get_if<Placeholder>(&part)) {
        if (std::find(slots.begin(), slots.end(), ph->slot) == slots.end()) slots.push_back(ph->slot);
      }
    }
  }
  std::vector<const std::vector<std::string>*> lex;
  for (const auto& s : slots) {
    auto it = t.lexicons.find(s);
    if (it == t.lexicons.end()) throw_invalid("unbound slot " + s);
    if (it->second.empty()) throw_invalid("empty lexicon for slot " + s);
    lex.push_back(&it->second);
  }

  std::uint64_t total = 1;
  bool huge = false;
  for (const auto* l : lex) {
    if (total > kEnumerateLimit) {
      huge = true;
      break;
    }
    total *= l->size();
  }
  huge = huge || total > kEnumerateLimit;

  auto decode = [&](std::uint64_t index) {
    std::vector<const std::string*> values(lex.size());
    for (std::size_t s = lex.size(); s-- > 0;) {
      values[s] = &(*lex[s])[index % lex[s]->size()];
      index /= lex[s]->size();
    }
    return values;
  };
  auto distinct = [&](const std::vector<const std::string*>& values) {
    for (std::size_t a = 0; a < values.size(); ++a) {
      for (std::size_t b = a + 1; b < values.size(); ++b) {
        if (*values[a] == *values[b]) return false;
      }
    }
    return true;
  };

  Rng rng(seed);
  Expansion out;
  std::vector<std::uint64_t> chosen;
  chosen.reserve(n);
  if (!huge) {
    std::vector<std::uint64_t> valid;
    for (std::uint64_t i = 0; i < total; ++i) {
      if (distinct(decode(i))) valid.push_back(i);
    }
    if (valid.empty()) {
      valid.resize(total);
      std::iota(valid.begin(), valid.end(), std::uint64_t{0});
    }
    if (valid.size() >= n) {
      for (std::size_t k = 0; k < n; ++k) {
        const auto j = k + static_cast<std::size_t>(rng.below(valid.size() - k));
        std::swap(valid[k], valid[j]);
        chosen.push_back(valid[k]);
      }
    } else {
      out.warning = "template " + t.name + " has only " + std::to_string(valid.size()) +
                    " distinct cases; sampling " + std::to_string(n) + " with replacement";
      for (std::size_t k = 0; k < n; ++k) chosen.push_back(valid[rng.below(valid.size())]);
    }
  } else {
    std::unordered_set<std::string> seen;
    while (chosen.size() < n) {
      std::vector<const std::string*> values(lex.size());
      std::string key;
      for (std::size_t s = 0; s < lex.size(); ++s) {
        const auto pick = rng.below(lex[s]->size());
        values[s] = &(*lex[s])[pick];
        key += std::to_string(pick) + ",";
      }
      if (!distinct(values) || !seen.insert(key).second) continue;
      std::uint64_t index = 0;
      for (std::size_t s = 0; s < lex.size(); ++s) {
        index = index * lex[s]->size() +
                static_cast<std::uint64_t>(values[s] - lex[s]->data());
      }
      chosen.push_back(index);
    }
  }

  out.cases.reserve(n);
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    const auto values = decode(chosen[k]);
    std::map<std::string, const std::string*> fill;
    for (std::size_t s = 0; s < slots.size(); ++s) fill[slots[s]] = values[s];
    out.cases.push_back({"beh:" + t.name + ":" + std::to_string(k), render(parts_a, fill),
                         render(parts_b, fill), t.expected_label});
  }
  return out;
}

Corpus expand_suite(const std::vector<BehaviorTemplate>& suite, std::size_t n_per_test,
                    std::uint64_t seed, std::vector<std::string>* warnings) {
  std::vector<LabeledExample> all;
  for (std::size_t k = 0; k < suite.size(); ++k) {
    auto e = expand_template(suite[k], n_per_test, derive_seed(seed, kBehaviorRole, k));
    if (e.warning && warnings) warnings->push_back(*e.warning);
    all.insert(all.end(), std::make_move_iterator(e.cases.begin()),
               std::make_move_iterator(e.cases.end()));
  }
  return Corpus::with_inferred_labels(std::move(all));
}

BehaviorRecord score_test(const std::string& name, const std::string& capability,
                          const std::vector<bool>& old_pass, const std::vector<bool>& new_pass) {
  if (old_pass.size() != new_pass.size()) throw_invalid("misaligned inputs");
  if (old_pass.empty()) throw_invalid("empty regression set");
  std::size_t o = 0, nw = 0, flips = 0;
  for (std::size_t i = 0; i < old_pass.size(); ++i) {
    o += old_pass[i];
    nw += new_pass[i];
    flips += old_pass[i] && !new_pass[i];
  }
  const double total = static_cast<double>(old_pass.size());
  return {name, capability, old_pass.size(), static_cast<double>(o) / total,
          static_cast<double>(nw) / total, static_cast<double>(flips) / total};
}

BehaviorReport run_behavior_suite(const Ensemble& old_model, const Ensemble& new_model,
                                  const std::vector<BehaviorTemplate>& suite,
                                  std::size_t n_per_test, std::uint64_t seed,
                                  const FeaturizerConfig& featurizer) {
  if (old_model.size() == 0 || new_model.size() == 0) throw_invalid("empty ensemble");
  const auto& labels = old_model.label_names();
  if (new_model.label_names() != labels) throw_invalid("incompatible old model");
  if (!(old_model.featurizer() == featurizer) || !(new_model.featurizer() == featurizer)) {
    throw_invalid("feature dim mismatch");
  }
  BehaviorReport report;
  for (std::size_t k = 0; k < suite.size(); ++k) {
    const auto& t = suite[k];
    auto it = std::find(labels.begin(), labels.end(), t.expected_label);
    if (it == labels.end()) throw_invalid("label mismatch in template " + t.name);
    const auto expected = static_cast<std::size_t>(it - labels.begin());

    auto e = expand_template(t, n_per_test, derive_seed(seed, kBehaviorRole, k));
    if (e.warning) report.warnings.push_back(*e.warning);
    std::vector<bool> old_pass, new_pass;
    for (const auto& ex : e.cases) {
      const auto x = featurize(ex, featurizer);
      old_pass.push_back(argmax(ensemble_predict(old_model, x)) == expected);
      new_pass.push_back(argmax(ensemble_predict(new_model, x)) == expected);
    }
    report.records.push_back(score_test(t.name, t.capability, old_pass, new_pass));
  }
  return report;
}

namespace {

std::vector<std::string> firsts(const std::vector<std::string>& pairs) {
  std::vector<std::string> out;
  for (const auto& p : pairs) out.push_back(p.substr(0, p.find('|')));
  return out;
}

}  // namespace

std::vector<BehaviorTemplate> default_suite() {
  namespace lx = lexicon;
  const auto& names = lx::names();
  return {
      {"coref_he_she", "Coref - He/She",
       "If {p1} and {p2} were alone , do you think he would {verb} her ?",
       "If {p1} and {p2} were alone , do you think she would {verb} him ?",
       {{"p1", names}, {"p2", names},
        {"verb", {"reject", "help", "call", "trust", "forgive", "ignore"}}},
       kNotParaphrase},
      {"vocab_people", "Vocab - People", "{p1} is {adj} to {p2}.",
       "{p1} is {mod} {adj} to {p2}.",
       {{"p1", names}, {"p2", names}, {"adj", firsts(lx::synonym_pairs())},
        {"mod", lx::modifiers()}},
       kParaphrase},
      {"vocab_more_less", "Vocab - More/Less", "{p} can become more {adj}.",
       "{p} can become less {adj}.", {{"p", names}, {"adj", firsts(lx::antonym_pairs())}}, kNotParaphrase},
      {"taxonomy_synonym", "Taxonomy - Synonym", "{p} can become more {adj:0}.",
       "{p} can become more {adj:1}.", {{"p", names}, {"adj", lx::synonym_pairs()}}, kParaphrase},
      {"srl_paraphrase", "SRL - Paraphrase",
       "Who do {group} think is the {adj} {job} in the world ?",
       "Who is the {adj} {job} in the world according to {group} ?",
       {{"group", lx::groups()}, {"adj", firsts(lx::synonym_pairs())}, {"job", lx::jobs()}},
       kParaphrase},
      {"srl_asymmetric_order", "SRL - Asymmetric Order", "{p1} {rel} {p2}.", "{p2} {rel} {p1}.",
       {{"p1", names}, {"p2", names}, {"rel", lx::asymmetric_relations()}}, kNotParaphrase},
      {"srl_active_passive_1", "SRL - Active/Passive 1", "{p} {verb:0} the {thing}.",
       "The {thing} was {verb:1} by {p}.",
       {{"p", names}, {"thing", lx::things()}, {"verb", lx::thing_verbs()}}, kParaphrase},
      {"srl_active_passive_2", "SRL - Active/Passive 2", "{p1} {verb:0} {p2}.",
       "{p2} is {verb:1} by {p1}.",
       {{"p1", names}, {"p2", names}, {"verb", lx::person_verbs()}}, kParaphrase},
      {"srl_active_passive_3", "SRL - Active/Passive 3", "{p} {verb:0} the {thing}.",
       "{p} was {verb:1} by the {thing}.",
       {{"p", names}, {"thing", lx::things()}, {"verb", lx::thing_verbs()}}, kNotParaphrase},
      {"temporal_before_after", "Temporal - Before/After",
       "What was {p} 's life before becoming a {job} ?",
       "What was {p} 's life after becoming a {job} ?", {{"p", names}, {"job", lx::jobs()}},
       kNotParaphrase},
  };
}

std::vector<BehaviorTemplate> parse_suite(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw_data(std::string("malformed suite file: ") + e.what());
  }
  if (!j.is_array()) throw_data("suite file must be a JSON array");
  std::vector<BehaviorTemplate> suite;
  for (const auto& item : j) {
    try {
      BehaviorTemplate t;
      t.name = item.at("name").get<std::string>();
      t.capability = item.value("capability", std::string());
      t.template_a = item.at("template_a").get<std::string>();
      t.template_b = item.at("template_b").get<std::string>();
      t.lexicons = item.value("lexicons", std::map<std::string, std::vector<std::string>>{});
      t.expected_label = item.at("expected_label").get<std::string>();
      suite.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw_data(std::string("schema error in suite file: ") + e.what());
    }
  }
  return suite;
}

std::vector<BehaviorTemplate> load_suite(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_invalid("cannot open suite: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_suite(buf.str());
}

std::string serialize_suite(const std::vector<BehaviorTemplate>& suite) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& t : suite) {
    nlohmann::ordered_json item;
    item["name"] = t.name;
    item["capability"] = t.capability;
    item["template_a"] = t.template_a;
    item["template_b"] = t.template_b;
    item["lexicons"] = t.lexicons;
    item["expected_label"] = t.expected_label;
    arr.push_back(std::move(item));
  }
  return arr.dump(2) + "\n";
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
  return buf;
}

}  // namespace

void write_behavior_markdown(std::ostream& out, const BehaviorReport& report,
                             const std::string& title) {
  if (!title.empty()) out << "### " << title << "\n\n";
  out << "| test | capability | old pass % | new pass % | NFR % |\n";
  out << "|---|---|---:|---:|---:|\n";
  for (const auto& r : report.records) {
    out << "| " << r.name << " | " << r.capability << " | " << pct(r.old_pass_rate) << " | "
        << pct(r.new_pass_rate) << " | " << pct(r.nfr) << " |\n";
  }
  for (const auto& w : report.warnings) out << "\n> warning: " << w << "\n";
}

void write_behavior_csv(std::ostream& out, const BehaviorReport& report) {
  out << "test,capability,n_cases,old_pass_rate,new_pass_rate,nfr\n";
  for (const auto& r : report.records) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6f", r.n_cases, r.old_pass_rate,
                  r.new_pass_rate, r.nfr);
    out << r.name << ",\"" << r.capability << "\"," << buf << '\n';
  }
}

}  // namespace refit
