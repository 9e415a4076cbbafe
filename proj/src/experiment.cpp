#include "refit/experiment.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "refit/error.hpp"
#include "refit/metrics.hpp"
#include "refit/parallel.hpp"
#include "refit/serialization.hpp"

namespace refit {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void ExperimentPlan::validate() const {
  if (corpus_path.has_value() == synthetic.has_value()) {
    throw_invalid("plan needs exactly one corpus source");
  }
  if (n_old_seeds < 1 || n_new_seeds < 1) throw_invalid("seed counts must be >= 1");
  if (variants.empty()) throw_invalid("plan has no variants");
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) throw_invalid("dev_fraction must be in (0, 1)");
  if (ensemble_count > 0 && ensemble_size < 1) throw_invalid("ensemble size must be >= 1");
  if (centric && n_singles < 2) throw_invalid("centric selection needs >= 2 singles");
  featurizer.validate();
  old_config.validate();
  single_config.validate();
  for (const auto& v : variants) {
    if (v.name.empty()) throw_invalid("variant without a name");
    v.config.validate();
  }
}

ExperimentPlan parse_plan(const std::string& json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw_invalid(std::string("malformed plan: ") + e.what());
  }
  if (!j.is_object()) throw_invalid("plan must be a JSON object");
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };

  ExperimentPlan plan;
  try {
    const auto& corpus = j.at("corpus");
    if (corpus.contains("path")) plan.corpus_path = resolve(corpus["path"].get<std::string>());
    if (corpus.contains("synthetic")) {
      const auto& s = corpus["synthetic"];
      SyntheticSpec spec;
      spec.n = s.value("n", spec.n);
      spec.noise = s.value("noise", spec.noise);
      spec.seed = s.value("seed", spec.seed);
      plan.synthetic = spec;
    }
    plan.dev_fraction = j.value("dev_fraction", plan.dev_fraction);
    plan.split_seed = j.value("split_seed", plan.split_seed);
    if (j.contains("featurizer")) plan.featurizer = featurizer_from_json(j["featurizer"]);
    plan.n_old_seeds = j.value("n_old_seeds", plan.n_old_seeds);
    plan.n_new_seeds = j.value("n_new_seeds", plan.n_new_seeds);

    const UpdateConfig base = update_config_from_json(j.value("train", json::object()));
    plan.old_config = update_config_from_json(j.value("old", json::object()), base);
    for (const auto& v : j.at("variants")) {
      plan.variants.push_back({v.at("name").get<std::string>(), update_config_from_json(v, base)});
    }
    if (j.contains("ensemble")) {
      const auto& e = j["ensemble"];
      plan.ensemble_count = e.value("count", std::size_t{0});
      plan.ensemble_size = e.value("size", plan.ensemble_size);
      plan.n_singles = e.value("singles", plan.ensemble_count);
      plan.single_config = update_config_from_json(e.value("train", json::object()), base);
    } else {
      plan.single_config = base;
    }
    plan.centric = j.value("centric", false);
    if (j.contains("behavior")) plan.behavior_n_per_test = j["behavior"].value("n_per_test", 0);
    plan.write_predictions = j.value("write_predictions", true);
    plan.seed = j.value("seed", plan.seed);
    plan.output_dir = resolve(j.value("output_dir", std::string("out")));
  } catch (const json::exception& e) {
    throw_invalid(std::string("plan: ") + e.what());
  }
  plan.validate();
  return plan;
}

ExperimentPlan load_plan(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw_invalid("cannot open plan: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_plan(buf.str(), path.parent_path());
}

namespace {

struct Job {
  UpdateConfig cfg;
  std::size_t old_index = 0;
  bool penalised = false;
};

std::vector<Classifier> train_all(const std::vector<Job>& jobs, const Corpus& train_corpus,
                                  const FeaturizerConfig& featurizer,
                                  const std::vector<Classifier>& old_models) {
  std::vector<std::optional<Classifier>> slots(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t k) {
    const Classifier* old = jobs[k].penalised ? &old_models[jobs[k].old_index] : nullptr;
    slots[k] = train(jobs[k].cfg, train_corpus, featurizer, old).model;
  });
  std::vector<Classifier> out;
  out.reserve(jobs.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

std::vector<PredictionSet> predict_all(const std::vector<Ensemble>& models, const Corpus& dev,
                                       const std::vector<SparseVector>& features) {
  std::vector<PredictionSet> out(models.size());
  parallel_for(models.size(), [&](std::size_t k) { out[k] = predict(models[k], dev, features); });
  return out;
}

double nfr_of(const PredictionSet& old_set, const PredictionSet& new_set,
              const std::vector<std::size_t>& gold) {
  return negative_flip_rate(flip_matrix(old_set.preds(), new_set.preds(), gold));
}

double std_of(const std::vector<double>& v) { return std::sqrt(sample_variance(v)); }

void finish(RowSummary& row) {
  row.acc_mean = mean(row.accuracies);
  row.acc_std = std_of(row.accuracies);
  row.nfr_mean = mean(row.nfrs);
  row.nfr_std = std_of(row.nfrs);
}

struct Series {
  std::string name;
  std::vector<std::string> old_ids;
  std::vector<std::string> new_ids;
  std::vector<double> nfrs;
  std::vector<std::string> col_ids;  // row-major n_old x |col_ids| layout of nfrs
};

std::string file_stem(const std::string& name) {
  std::string out;
  for (char c : name) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string pm(double mean_value, double std_value) {
  return fixed(100.0 * mean_value, 2) + " ± " + fixed(100.0 * std_value, 2);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_invalid("cannot write " + path.string());
  out << text;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentPlan& plan) {
  plan.validate();
  ExperimentResult result;

  const Corpus corpus = plan.corpus_path
                            ? load_corpus(*plan.corpus_path)
                            : gen_synthetic(plan.synthetic->n, plan.synthetic->noise,
                                            plan.synthetic->seed);
  auto [train_corpus, dev] = split(corpus, plan.dev_fraction, plan.split_seed);
  result.train_size = train_corpus.size();
  result.dev_size = dev.size();
  const auto dev_features = featurize_all(dev, plan.featurizer);
  const auto gold = dev.gold_indices();

  // Everything that does not depend on an old model trains in one batch.
  std::vector<Job> jobs;
  auto add_job = [&](UpdateConfig cfg, std::uint64_t seed) {
    cfg.seed = seed;
    jobs.push_back({std::move(cfg), 0, false});
    return jobs.size() - 1;
  };
  const std::size_t old_begin = jobs.size();
  for (std::size_t i = 0; i < plan.n_old_seeds; ++i) {
    UpdateConfig cfg = plan.old_config;
    cfg.alpha = 0.0;
    add_job(cfg, derive_seed(plan.seed, kOldModelRole, i));
  }
  std::vector<std::optional<std::size_t>> variant_begin(plan.variants.size());
  for (std::size_t v = 0; v < plan.variants.size(); ++v) {
    if (plan.variants[v].config.alpha > 0.0) continue;
    variant_begin[v] = jobs.size();
    for (std::size_t j = 0; j < plan.n_new_seeds; ++j) {
      add_job(plan.variants[v].config, derive_seed(plan.seed, kNewModelRole, j));
    }
  }
  const std::size_t singles_begin = jobs.size();
  for (std::size_t k = 0; k < plan.n_singles; ++k) {
    add_job(plan.single_config, derive_seed(plan.seed, kSingleModelRole, k));
  }
  const std::size_t members_begin = jobs.size();
  for (std::size_t k = 0; k < plan.ensemble_count * plan.ensemble_size; ++k) {
    add_job(plan.single_config, derive_seed(plan.seed, kEnsembleMemberRole, k));
  }
  std::vector<Classifier> first = train_all(jobs, train_corpus, plan.featurizer, {});
  std::vector<Classifier> old_models(first.begin() + static_cast<std::ptrdiff_t>(old_begin),
                                     first.begin() + static_cast<std::ptrdiff_t>(old_begin + plan.n_old_seeds));

  // Penalised variants: one cell per (old, new) seed pair.
  std::vector<Job> cells;
  std::vector<std::optional<std::size_t>> cell_begin(plan.variants.size());
  for (std::size_t v = 0; v < plan.variants.size(); ++v) {
    if (plan.variants[v].config.alpha <= 0.0) continue;
    cell_begin[v] = cells.size();
    for (std::size_t i = 0; i < plan.n_old_seeds; ++i) {
      for (std::size_t j = 0; j < plan.n_new_seeds; ++j) {
        UpdateConfig cfg = plan.variants[v].config;
        cfg.seed = derive_seed(plan.seed, kNewModelRole, j);
        cells.push_back({std::move(cfg), i, true});
      }
    }
  }
  std::vector<Classifier> second = train_all(cells, train_corpus, plan.featurizer, old_models);

  // Predictions on dev, old models first.
  std::vector<Ensemble> predictors;
  std::vector<std::string> ids;
  std::vector<ModelTag> tags;
  auto add_predictor = [&](Ensemble e, std::string id, ModelTag tag) {
    predictors.push_back(std::move(e));
    ids.push_back(std::move(id));
    tags.push_back(tag);
    return predictors.size() - 1;
  };
  for (std::size_t i = 0; i < plan.n_old_seeds; ++i) {
    add_predictor(Ensemble(first[old_begin + i]), "old-" + std::to_string(i), ModelTag::kOld);
  }
  std::vector<std::size_t> variant_pred(plan.variants.size());
  for (std::size_t v = 0; v < plan.variants.size(); ++v) {
    const auto& name = plan.variants[v].name;
    variant_pred[v] = predictors.size();
    if (variant_begin[v]) {
      for (std::size_t j = 0; j < plan.n_new_seeds; ++j) {
        add_predictor(Ensemble(first[*variant_begin[v] + j]), name + "-n" + std::to_string(j),
                      ModelTag::kNewSingle);
      }
    } else {
      for (std::size_t c = 0; c < plan.n_old_seeds * plan.n_new_seeds; ++c) {
        const auto i = c / plan.n_new_seeds, j = c % plan.n_new_seeds;
        add_predictor(Ensemble(second[*cell_begin[v] + c]),
                      name + "-o" + std::to_string(i) + "-n" + std::to_string(j),
                      ModelTag::kNewSingle);
      }
    }
  }
  const std::size_t singles_pred = predictors.size();
  for (std::size_t k = 0; k < plan.n_singles; ++k) {
    add_predictor(Ensemble(first[singles_begin + k]), "single-" + std::to_string(k),
                  ModelTag::kNewSingle);
  }
  const std::size_t ensembles_pred = predictors.size();
  for (std::size_t e = 0; e < plan.ensemble_count; ++e) {
    std::vector<std::shared_ptr<const Classifier>> members;
    for (std::size_t m = 0; m < plan.ensemble_size; ++m) {
      members.push_back(std::make_shared<const Classifier>(
          std::move(first[members_begin + e * plan.ensemble_size + m])));
    }
    add_predictor(Ensemble(std::move(members)), "ensemble-" + std::to_string(e),
                  ModelTag::kNewEnsemble);
  }
  const auto preds = predict_all(predictors, dev, dev_features);

  std::vector<double> old_accs;
  for (std::size_t i = 0; i < plan.n_old_seeds; ++i) old_accs.push_back(accuracy(preds[i].preds(), gold));
  result.old_acc_mean = mean(old_accs);
  result.old_acc_std = std_of(old_accs);

  std::vector<Series> series;
  auto old_id = [&](std::size_t i) { return ids[i]; };
  for (std::size_t v = 0; v < plan.variants.size(); ++v) {
    RowSummary row;
    row.name = plan.variants[v].name;
    Series s{row.name, {}, {}, {}, {}};
    if (variant_begin[v]) {
      row.n_models = plan.n_new_seeds;
      for (std::size_t j = 0; j < plan.n_new_seeds; ++j) {
        row.accuracies.push_back(accuracy(preds[variant_pred[v] + j].preds(), gold));
        s.col_ids.push_back(ids[variant_pred[v] + j]);
      }
      for (std::size_t i = 0; i < plan.n_old_seeds; ++i) {
        for (std::size_t j = 0; j < plan.n_new_seeds; ++j) {
          const auto k = variant_pred[v] + j;
          row.nfrs.push_back(nfr_of(preds[i], preds[k], gold));
          s.old_ids.push_back(old_id(i));
          s.new_ids.push_back(ids[k]);
        }
      }
    } else {
      row.n_models = plan.n_old_seeds * plan.n_new_seeds;
      for (std::size_t j = 0; j < plan.n_new_seeds; ++j) s.col_ids.push_back(row.name + "-n" + std::to_string(j));
      for (std::size_t c = 0; c < row.n_models; ++c) {
        const auto k = variant_pred[v] + c;
        const auto i = c / plan.n_new_seeds;
        row.accuracies.push_back(accuracy(preds[k].preds(), gold));
        row.nfrs.push_back(nfr_of(preds[i], preds[k], gold));
        s.old_ids.push_back(old_id(i));
        s.new_ids.push_back(ids[k]);
      }
    }
    finish(row);
    s.nfrs = row.nfrs;
    series.push_back(std::move(s));
    result.rows.push_back(std::move(row));
  }

  auto pool_row = [&](const std::string& name, std::size_t begin, std::size_t count) {
    RowSummary row;
    row.name = name;
    row.n_models = count;
    Series s{name, {}, {}, {}, {}};
    for (std::size_t k = begin; k < begin + count; ++k) {
      row.accuracies.push_back(accuracy(preds[k].preds(), gold));
      s.col_ids.push_back(ids[k]);
    }
    for (std::size_t i = 0; i < plan.n_old_seeds; ++i) {
      for (std::size_t k = begin; k < begin + count; ++k) {
        row.nfrs.push_back(nfr_of(preds[i], preds[k], gold));
        s.old_ids.push_back(old_id(i));
        s.new_ids.push_back(ids[k]);
      }
    }
    finish(row);
    s.nfrs = row.nfrs;
    series.push_back(std::move(s));
    result.rows.push_back(std::move(row));
    return result.rows.size() - 1;
  };
  if (plan.n_singles > 0) result.singles_row = pool_row("single", singles_pred, plan.n_singles);
  if (plan.ensemble_count > 0) {
    result.ensemble_row = pool_row("ensemble-x" + std::to_string(plan.ensemble_size),
                                   ensembles_pred, plan.ensemble_count);
  }

  // Centric model among the singles, chosen on the first dev half and
  // scored on the second.
  std::optional<std::size_t> centric_pred;
  if (plan.centric) {
    const std::size_t half = dev.size() / 2;
    std::vector<PredictionSet> a, b;
    for (std::size_t k = 0; k < plan.n_singles; ++k) {
      a.push_back(preds[singles_pred + k].slice(0, half));
      b.push_back(preds[singles_pred + k].slice(half, dev.size()));
    }
    const std::vector<std::size_t> gold_a(gold.begin(), gold.begin() + static_cast<std::ptrdiff_t>(half));
    const std::vector<std::size_t> gold_b(gold.begin() + static_cast<std::ptrdiff_t>(half), gold.end());
    const auto sel = centric_select(a, gold_a);
    const auto held_out = centric_select(b, gold_b);
    CentricSummary c;
    c.index = sel.index;
    c.id = ids[singles_pred + sel.index];
    c.first_half_avg = sel.avg_nfr;
    c.second_half_avg = held_out.avg_nfr;
    c.centric_second_half = held_out.avg_nfr[sel.index];
    c.median_second_half = median(held_out.avg_nfr);
    result.centric = c;
    centric_pred = singles_pred + sel.index;
    pool_row("centric", *centric_pred, 1);
  }

  if (predictors.size() + (centric_pred ? 1 : 0) >= 3) {
    std::vector<PredictionSet> scatter_preds(preds.begin(), preds.end());
    std::vector<std::string> scatter_ids = ids;
    std::vector<ModelTag> scatter_tags = tags;
    if (centric_pred) {
      scatter_preds.push_back(preds[*centric_pred]);
      scatter_ids.push_back("centric");
      scatter_tags.push_back(ModelTag::kCentric);
    }
    result.scatter = pca_scatter(scatter_preds, scatter_ids, scatter_tags);
    if (result.scatter->warning) result.warnings.push_back(*result.scatter->warning);
  }

  if (plan.behavior_n_per_test > 0) {
    const auto suite = default_suite();
    const auto suite_seed = derive_seed(plan.seed, kBehaviorSuiteRole, 0);
    const Ensemble& old0 = predictors[0];
    for (std::size_t v = 0; v < plan.variants.size(); ++v) {
      result.behavior.emplace_back(
          plan.variants[v].name,
          run_behavior_suite(old0, predictors[variant_pred[v]], suite, plan.behavior_n_per_test,
                             suite_seed, plan.featurizer));
    }
    if (plan.ensemble_count > 0) {
      result.behavior.emplace_back(
          ids[ensembles_pred],
          run_behavior_suite(old0, predictors[ensembles_pred], suite, plan.behavior_n_per_test,
                             suite_seed, plan.featurizer));
    }
    for (const auto& [name, report] : result.behavior) {
      for (const auto& w : report.warnings) result.warnings.push_back(name + ": " + w);
    }
  }

  // Outputs.
  const fs::path dir = plan.output_dir;
  fs::create_directories(dir);

  std::optional<std::size_t> reference;
  for (std::size_t v = 0; v < plan.variants.size(); ++v) {
    if (plan.variants[v].config.alpha <= 0.0) {
      reference = v;
      break;
    }
  }

  std::ostringstream md;
  md << "# Experiment summary\n\n";
  md << "train " << result.train_size << " / dev " << result.dev_size << " examples, "
     << plan.n_old_seeds << " old x " << plan.n_new_seeds << " new seeds\n\n";
  md << "| model | models | pairs | accuracy % | NFR % | NFR reduction % |\n";
  md << "|---|---:|---:|---:|---:|---:|\n";
  md << "| old | " << plan.n_old_seeds << " | - | " << pm(result.old_acc_mean, result.old_acc_std)
     << " | - | - |\n";
  for (const auto& row : result.rows) {
    std::string reduction = "-";
    if (reference && result.rows[*reference].nfr_mean > 0.0 && &row != &result.rows[*reference]) {
      reduction = fixed(100.0 * (1.0 - row.nfr_mean / result.rows[*reference].nfr_mean), 1);
    }
    md << "| " << row.name << " | " << row.n_models << " | " << row.nfrs.size() << " | "
       << pm(row.acc_mean, row.acc_std) << " | " << pm(row.nfr_mean, row.nfr_std) << " | "
       << reduction << " |\n";
  }
  if (result.centric) {
    md << "\ncentric model: " << result.centric->id << ", held-out average NFR "
       << fixed(100.0 * result.centric->centric_second_half, 2) << "% (median single "
       << fixed(100.0 * result.centric->median_second_half, 2) << "%)\n";
  }
  if (result.scatter && result.ensemble_row && result.singles_row) {
    md << "\nscatter mean pairwise distance: singles "
       << fixed(mean_pairwise_distance(*result.scatter, ModelTag::kNewSingle), 6)
       << ", ensembles " << fixed(mean_pairwise_distance(*result.scatter, ModelTag::kNewEnsemble), 6)
       << "\n";
  }
  for (const auto& w : result.warnings) md << "\n> warning: " << w << "\n";
  write_file(dir / "summary.md", md.str());

  ordered_json summary;
  summary["train_size"] = result.train_size;
  summary["dev_size"] = result.dev_size;
  summary["old"] = {{"n_models", plan.n_old_seeds},
                    {"acc_mean", result.old_acc_mean},
                    {"acc_std", result.old_acc_std}};
  auto rows = ordered_json::array();
  for (const auto& row : result.rows) {
    rows.push_back({{"name", row.name},
                    {"n_models", row.n_models},
                    {"acc_mean", row.acc_mean},
                    {"acc_std", row.acc_std},
                    {"nfr_mean", row.nfr_mean},
                    {"nfr_std", row.nfr_std}});
  }
  summary["rows"] = std::move(rows);
  if (result.centric) {
    summary["centric"] = {{"id", result.centric->id},
                          {"held_out_avg_nfr", result.centric->centric_second_half},
                          {"median_single_avg_nfr", result.centric->median_second_half}};
  }
  summary["warnings"] = result.warnings;
  write_file(dir / "summary.json", summary.dump(2) + "\n");

  std::ostringstream pairwise, hist;
  pairwise << "series,old,new,nfr\n";
  hist << "series,bin_low,bin_high,count\n";
  for (const auto& s : series) {
    for (std::size_t k = 0; k < s.nfrs.size(); ++k) {
      pairwise << s.name << ',' << s.old_ids[k] << ',' << s.new_ids[k] << ','
               << fixed(s.nfrs[k], 6) << '\n';
    }
    for (const auto& bin : histogram(s.nfrs)) {
      hist << s.name << ',' << fixed(bin.low, 4) << ',' << fixed(bin.high, 4) << ','
           << bin.count << '\n';
    }
  }
  write_file(dir / "pairwise.csv", pairwise.str());
  std::vector<std::string> old_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(plan.n_old_seeds));
  for (const auto& s : series) {
    Matrix m(plan.n_old_seeds, s.col_ids.size(), s.nfrs);
    std::ostringstream csv;
    write_pairwise_csv(csv, old_ids, s.col_ids, m);
    write_file(dir / ("pairwise_" + file_stem(s.name) + ".csv"), csv.str());
  }
  write_file(dir / "hist.csv", hist.str());

  if (result.scatter) {
    std::ostringstream csv, svg;
    write_scatter_csv(csv, *result.scatter);
    write_scatter_svg(svg, *result.scatter);
    write_file(dir / "scatter.csv", csv.str());
    write_file(dir / "scatter.svg", svg.str());
  }

  if (!result.behavior.empty()) {
    std::ostringstream bmd, bcsv;
    bmd << "# Behavior suite\n\n";
    bool header = true;
    for (const auto& [name, report] : result.behavior) {
      write_behavior_markdown(bmd, report, "old-0 -> " + name);
      bmd << '\n';
      std::ostringstream one;
      write_behavior_csv(one, report);
      std::istringstream lines(one.str());
      std::string line;
      bool first_line = true;
      while (std::getline(lines, line)) {
        if (first_line) {
          first_line = false;
          if (!header) continue;
          bcsv << "section," << line << '\n';
          header = false;
          continue;
        }
        bcsv << name << ',' << line << '\n';
      }
    }
    write_file(dir / "behavior.md", bmd.str());
    write_file(dir / "behavior.csv", bcsv.str());
  }

  if (plan.write_predictions) {
    const fs::path pdir = dir / "predictions";
    fs::create_directories(pdir);
    std::ostringstream dev_text;
    write_corpus(dev_text, dev);
    write_file(dir / "dev.jsonl", dev_text.str());
    for (std::size_t k = 0; k < preds.size(); ++k) {
      std::ostringstream p;
      write_predictions(p, preds[k]);
      write_file(pdir / (ids[k] + ".jsonl"), p.str());
    }
  }
  return result;
}

}  // namespace refit
