// refit: command-line front end for the update-regression toolkit.
//
// Exit codes: 0 success, 2 usage or validation error, 3 data-integrity error.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "refit/analysis.hpp"
#include "refit/behavior.hpp"
#include "refit/corpus.hpp"
#include "refit/error.hpp"
#include "refit/experiment.hpp"
#include "refit/metrics.hpp"
#include "refit/model.hpp"
#include "refit/update.hpp"

namespace {

using namespace refit;

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_invalid("cannot write " + path);
  return out;
}

// Gold indices in the label space of `labels`, checking id alignment.
std::vector<std::size_t> gold_for(const Corpus& gold, const PredictionSet& preds) {
  if (gold.ids() != preds.example_ids()) throw_data("misaligned prediction sets");
  std::vector<std::size_t> out;
  const auto& labels = preds.label_names();
  for (const auto& ex : gold.examples()) {
    auto it = std::find(labels.begin(), labels.end(), ex.label);
    if (it == labels.end()) throw_data("label mismatch");
    out.push_back(static_cast<std::size_t>(it - labels.begin()));
  }
  return out;
}

Ensemble load_ensemble(const std::vector<std::string>& paths) {
  std::vector<std::shared_ptr<const Classifier>> members;
  for (const auto& p : paths) members.push_back(std::make_shared<const Classifier>(load_model(p)));
  return Ensemble(std::move(members));
}

std::vector<std::size_t> parse_dims(const std::string& text) {
  std::vector<std::size_t> dims;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      dims.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw_invalid("invalid architecture: " + text);
    }
  }
  if (dims.empty()) throw_invalid("invalid architecture: " + text);
  return dims;
}

// Square matrix in the pairwise CSV layout: header "old\new,id...", then
// "id,v,..." rows.
Matrix read_pairwise_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_invalid("cannot open " + path);
  std::string line;
  std::vector<std::vector<double>> rows;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(cell == "-" || cell.empty() ? 0.0 : std::stod(cell));
      } catch (const std::exception&) {
        throw_data("malformed pairwise matrix " + path);
      }
    }
    rows.push_back(std::move(row));
  }
  Matrix m(rows.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size()) throw_data("pairwise matrix is not square");
    for (std::size_t j = 0; j < rows.size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

struct TrainArgs {
  std::string data;
  double dev_frac = 0.0;
  std::uint64_t split_seed = 0;
  std::string dims = "16";
  std::uint64_t seed = 0;
  int epochs = 8;
  double lr = 0.1;
  std::size_t batch_size = 16;
  double momentum = 0.9;
  std::string old_path;
  double alpha = 0.0;
  std::string proxy = "kl";
  std::string policy = "all_train";
  std::string projection = "learned";
  bool squared = false;
  double c = 0.0;
  std::string out;
  std::string log;
  std::uint32_t feature_dim = FeaturizerConfig{}.dim;
};

int run_train(const TrainArgs& a) {
  UpdateConfig cfg;
  cfg.hidden_dims = parse_dims(a.dims);
  cfg.seed = a.seed;
  cfg.epochs = a.epochs;
  cfg.learning_rate = a.lr;
  cfg.batch_size = a.batch_size;
  cfg.momentum = a.momentum;
  cfg.alpha = a.alpha;
  cfg.c_constant = a.c;
  cfg.proxy = parse_proxy(a.proxy);
  cfg.policy = parse_policy(a.policy);
  cfg.projection = parse_projection(a.projection);
  cfg.squared_l2 = a.squared;
  cfg.validate();
  if (cfg.alpha > 0.0 && a.old_path.empty()) throw_invalid("--alpha > 0 requires --old");

  FeaturizerConfig featurizer;
  featurizer.dim = a.feature_dim;
  featurizer.validate();

  std::optional<Classifier> old_model;
  if (!a.old_path.empty()) {
    old_model = load_model(a.old_path);
    featurizer = old_model->featurizer();
  }
  Corpus data = load_corpus(a.data);
  Corpus train_corpus = data;
  if (a.dev_frac > 0.0) train_corpus = split(data, a.dev_frac, a.split_seed).first;

  const auto result = train(cfg, train_corpus, featurizer, old_model ? &*old_model : nullptr);
  save_model(result.model, a.out);
  const std::string log_path = a.log.empty() ? a.out + ".log.jsonl" : a.log;
  auto log = open_out(log_path);
  write_training_log(log, cfg, result);
  std::cout << "model " << a.out << " checksum " << hex64(result.model.checksum()) << "\n";
  return 0;
}

int run_compare(const std::string& old_path, const std::string& new_path,
                const std::string& gold_path, bool as_json) {
  const auto old_set = load_predictions(old_path);
  const auto new_set = load_predictions(new_path);
  const auto gold_corpus = load_corpus(gold_path);
  if (old_set.label_names() != new_set.label_names()) throw_data("incompatible label sets");
  if (old_set.example_ids() != new_set.example_ids()) throw_data("misaligned prediction sets");
  const auto gold = gold_for(gold_corpus, old_set);
  const auto fm = flip_matrix(old_set, new_set, gold);
  const double nfr = negative_flip_rate(fm), pfr = positive_flip_rate(fm);
  const double acc_old = accuracy(old_set.preds(), gold), acc_new = accuracy(new_set.preds(), gold);
  if (as_json) {
    nlohmann::ordered_json j;
    j["both_correct"] = fm.both_correct;
    j["negative_flips"] = fm.negative_flips;
    j["positive_flips"] = fm.positive_flips;
    j["both_wrong"] = fm.both_wrong;
    j["total"] = fm.total;
    j["nfr"] = nfr;
    j["pfr"] = pfr;
    j["acc_old"] = acc_old;
    j["acc_new"] = acc_new;
    std::cout << j.dump() << "\n";
    return 0;
  }
  std::cout << "| quantity | value |\n|---|---:|\n"
            << "| both correct | " << fm.both_correct << " |\n"
            << "| negative flips | " << fm.negative_flips << " |\n"
            << "| positive flips | " << fm.positive_flips << " |\n"
            << "| both wrong | " << fm.both_wrong << " |\n"
            << "| total | " << fm.total << " |\n"
            << "| old accuracy | " << fixed4(acc_old) << " |\n"
            << "| new accuracy | " << fixed4(acc_new) << " |\n"
            << "| NFR | " << fixed4(nfr) << " |\n"
            << "| PFR | " << fixed4(pfr) << " |\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"refit: measure and reduce regressions in classifier updates"};
  app.require_subcommand(1);

  // gen-data
  std::size_t gen_n = 5000;
  double gen_noise = 0.1;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic paraphrase corpus");
  gen->add_option("--n", gen_n, "Number of pairs");
  gen->add_option("--noise", gen_noise, "Label-flip probability");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output JSONL")->required();

  // train
  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a baseline or regression-constrained model");
  tr->add_option("--data", ta.data, "Training corpus JSONL")->required();
  tr->add_option("--dev-frac", ta.dev_frac, "Hold out this fraction before training");
  tr->add_option("--split-seed", ta.split_seed, "Seed of the train/dev split");
  tr->add_option("--dims", ta.dims, "Hidden widths, comma separated");
  tr->add_option("--seed", ta.seed, "Initialisation and shuffling seed");
  tr->add_option("--epochs", ta.epochs);
  tr->add_option("--lr", ta.lr);
  tr->add_option("--batch-size", ta.batch_size);
  tr->add_option("--momentum", ta.momentum);
  tr->add_option("--feature-dim", ta.feature_dim, "Hashed feature width (power of two)");
  tr->add_option("--old", ta.old_path, "Frozen old model");
  tr->add_option("--alpha", ta.alpha, "Penalty weight");
  tr->add_option("--proxy", ta.proxy, "kl | l2-final | l2-all");
  tr->add_option("--policy", ta.policy, "all-train | old-correct | old-better | neg-flip");
  tr->add_option("--projection", ta.projection, "learned | identity");
  tr->add_flag("--squared", ta.squared, "Squared distance in the representation proxy");
  tr->add_option("--c", ta.c, "Constraint threshold reported in the log");
  tr->add_option("--out", ta.out, "Model file")->required();
  tr->add_option("--log", ta.log, "Training log (default <out>.log.jsonl)");

  // predict
  std::string pr_model, pr_data, pr_out;
  auto* pr = app.add_subcommand("predict", "Write a prediction dump");
  pr->add_option("--model", pr_model)->required();
  pr->add_option("--data", pr_data)->required();
  pr->add_option("--out", pr_out)->required();

  // compare
  std::string cmp_old, cmp_new, cmp_gold;
  bool cmp_json = false;
  auto* cmp = app.add_subcommand("compare", "Flip report between two prediction dumps");
  cmp->add_option("--old-preds", cmp_old)->required();
  cmp->add_option("--new-preds", cmp_new)->required();
  cmp->add_option("--gold", cmp_gold, "Corpus with gold labels")->required();
  cmp->add_flag("--json", cmp_json, "Print JSON instead of Markdown");

  // experiment
  std::string plan_path;
  auto* exp = app.add_subcommand("experiment", "Run an experiment plan");
  exp->add_option("--plan", plan_path)->required();

  // ensemble
  std::vector<std::string> ens_models;
  std::string ens_data, ens_out;
  auto* ens = app.add_subcommand("ensemble", "Prediction dump of an averaged ensemble");
  ens->add_option("--models", ens_models)->required();
  ens->add_option("--data", ens_data)->required();
  ens->add_option("--out", ens_out)->required();

  // centric
  std::vector<std::string> cen_preds;
  std::string cen_gold, cen_matrix;
  auto* cen = app.add_subcommand("centric", "Select the model with lowest average pairwise NFR");
  auto* cen_preds_opt = cen->add_option("--preds", cen_preds, "Candidate prediction dumps");
  cen->add_option("--gold", cen_gold, "Corpus with gold labels");
  auto* cen_matrix_opt = cen->add_option("--pairwise", cen_matrix, "Pairwise NFR matrix CSV");
  cen_preds_opt->excludes(cen_matrix_opt);

  // behav
  auto* behav = app.add_subcommand("behav", "Template behaviour suites");
  behav->require_subcommand(1);
  std::string bs_out;
  auto* bsuite = behav->add_subcommand("suite", "Write the bundled suite as JSON");
  bsuite->add_option("--out", bs_out)->required();
  std::string bg_suite, bg_out;
  std::size_t bg_n = 500;
  std::uint64_t bg_seed = 0;
  auto* bgen = behav->add_subcommand("gen", "Expand a suite into a corpus");
  bgen->add_option("--suite", bg_suite, "Suite JSON (default: bundled)");
  bgen->add_option("--n", bg_n, "Cases per test");
  bgen->add_option("--seed", bg_seed);
  bgen->add_option("--out", bg_out)->required();
  std::vector<std::string> br_old, br_new;
  std::string br_suite, br_out, br_csv;
  std::size_t br_n = 500;
  std::uint64_t br_seed = 0;
  auto* brun = behav->add_subcommand("run", "Pass rates and flips of an update on a suite");
  brun->add_option("--old", br_old, "Old model file(s)")->required();
  brun->add_option("--new", br_new, "New model file(s)")->required();
  brun->add_option("--suite", br_suite, "Suite JSON (default: bundled)");
  brun->add_option("--n", br_n, "Cases per test");
  brun->add_option("--seed", br_seed);
  brun->add_option("--out", br_out, "Markdown report (default: stdout)");
  brun->add_option("--csv", br_csv, "CSV report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      const Corpus c = gen_synthetic(gen_n, gen_noise, gen_seed);
      save_corpus(gen_out, c, synthetic_header(gen_seed));
      return 0;
    }
    if (tr->parsed()) return run_train(ta);
    if (pr->parsed()) {
      const Classifier model = load_model(pr_model);
      const Corpus data = load_corpus(pr_data);
      save_predictions(pr_out, predict(model, data));
      return 0;
    }
    if (cmp->parsed()) return run_compare(cmp_old, cmp_new, cmp_gold, cmp_json);
    if (exp->parsed()) {
      const auto plan = load_plan(plan_path);
      const auto result = run_experiment(plan);
      std::cout << "wrote " << plan.output_dir.string() << "/summary.md\n";
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
      return 0;
    }
    if (ens->parsed()) {
      const Ensemble e = load_ensemble(ens_models);
      const Corpus data = load_corpus(ens_data);
      save_predictions(ens_out, predict(e, data, featurize_all(data, e.featurizer())));
      return 0;
    }
    if (cen->parsed()) {
      CentricSelection sel;
      std::vector<std::string> names;
      if (!cen_matrix.empty()) {
        sel = centric_from_matrix(read_pairwise_csv(cen_matrix));
        for (std::size_t k = 0; k < sel.avg_nfr.size(); ++k) names.push_back(std::to_string(k));
      } else {
        if (cen_gold.empty()) throw_invalid("--preds requires --gold");
        std::vector<PredictionSet> sets;
        for (const auto& p : cen_preds) sets.push_back(load_predictions(p));
        if (sets.empty()) throw_invalid("need >=2 candidates");
        const auto gold = gold_for(load_corpus(cen_gold), sets.front());
        sel = centric_select(sets, gold);
        names = cen_preds;
      }
      std::cout << "| candidate | average NFR |\n|---|---:|\n";
      for (std::size_t k = 0; k < sel.avg_nfr.size(); ++k) {
        std::cout << "| " << names[k] << " | " << fixed4(sel.avg_nfr[k]) << " |\n";
      }
      std::cout << "centric index " << sel.index << "\n";
      return 0;
    }
    if (bsuite->parsed()) {
      auto out = open_out(bs_out);
      out << serialize_suite(default_suite());
      return 0;
    }
    if (bgen->parsed()) {
      const auto suite = bg_suite.empty() ? default_suite() : load_suite(bg_suite);
      std::vector<std::string> warnings;
      const Corpus c = expand_suite(suite, bg_n, bg_seed, &warnings);
      save_corpus(bg_out, c);
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
      return 0;
    }
    if (brun->parsed()) {
      const auto suite = br_suite.empty() ? default_suite() : load_suite(br_suite);
      const Ensemble old_model = load_ensemble(br_old);
      const Ensemble new_model = load_ensemble(br_new);
      const auto report =
          run_behavior_suite(old_model, new_model, suite, br_n, br_seed, old_model.featurizer());
      if (br_out.empty()) {
        write_behavior_markdown(std::cout, report);
      } else {
        auto out = open_out(br_out);
        write_behavior_markdown(out, report);
      }
      if (!br_csv.empty()) {
        auto out = open_out(br_csv);
        write_behavior_csv(out, report);
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::kInvalidArgument ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
