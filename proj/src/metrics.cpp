#include "refit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "refit/error.hpp"

namespace refit {

using nlohmann::json;

PredictionSet::PredictionSet(std::vector<std::string> example_ids, Matrix probs,
                             std::vector<std::string> label_names)
    : ids_(std::move(example_ids)), probs_(std::move(probs)), labels_(std::move(label_names)) {
  if (probs_.rows() != ids_.size()) throw_data("prediction rows do not match ids");
  if (probs_.cols() != labels_.size()) throw_data("prediction columns do not match labels");
  if (labels_.empty()) throw_data("prediction set has no labels");
  std::set<std::string> unique(ids_.begin(), ids_.end());
  if (unique.size() != ids_.size()) throw_data("duplicate id in prediction set");
  preds_.reserve(ids_.size());
  for (std::size_t r = 0; r < probs_.rows(); ++r) {
    const auto row = probs_.row(r);
    double sum = 0.0;
    for (double p : row) {
      if (!std::isfinite(p) || p < 0.0) throw_data("invalid probability for " + ids_[r]);
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw_data("probabilities do not sum to 1 for " + ids_[r]);
    preds_.push_back(argmax(row));
  }
}

PredictionSet PredictionSet::slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, ids_.size());
  begin = std::min(begin, end);
  Matrix sub(end - begin, probs_.cols());
  for (std::size_t r = begin; r < end; ++r) {
    std::copy(probs_.row(r).begin(), probs_.row(r).end(), sub.row(r - begin).begin());
  }
  return PredictionSet(std::vector<std::string>(ids_.begin() + begin, ids_.begin() + end),
                       std::move(sub), labels_);
}

FlipMatrix flip_matrix(std::span<const std::size_t> old_preds,
                       std::span<const std::size_t> new_preds,
                       std::span<const std::size_t> gold) {
  if (old_preds.size() != gold.size() || new_preds.size() != gold.size()) {
    throw_data("misaligned prediction sets");
  }
  FlipMatrix fm;
  fm.total = gold.size();
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool old_ok = old_preds[i] == gold[i];
    const bool new_ok = new_preds[i] == gold[i];
    if (old_ok && new_ok) {
      ++fm.both_correct;
    } else if (old_ok) {
      ++fm.negative_flips;
    } else if (new_ok) {
      ++fm.positive_flips;
    } else {
      ++fm.both_wrong;
    }
  }
  return fm;
}

FlipMatrix flip_matrix(const PredictionSet& old_set, const PredictionSet& new_set,
                       std::span<const std::size_t> gold) {
  if (old_set.label_names() != new_set.label_names()) throw_data("incompatible label sets");
  if (old_set.example_ids() != new_set.example_ids()) throw_data("misaligned prediction sets");
  return flip_matrix(old_set.preds(), new_set.preds(), gold);
}

double negative_flip_rate(const FlipMatrix& fm) {
  if (fm.total == 0) throw_invalid("empty regression set");
  return static_cast<double>(fm.negative_flips) / static_cast<double>(fm.total);
}

double positive_flip_rate(const FlipMatrix& fm) {
  if (fm.total == 0) throw_invalid("empty regression set");
  return static_cast<double>(fm.positive_flips) / static_cast<double>(fm.total);
}

double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> gold) {
  if (gold.empty()) throw_invalid("empty regression set");
  if (preds.size() != gold.size()) throw_data("misaligned prediction sets");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += preds[i] == gold[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  double total = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (p[c] == 0.0) continue;
    const double lp = std::log(std::clamp(p[c], kProbabilityFloor, 1.0));
    const double lq = std::log(std::clamp(q[c], kProbabilityFloor, 1.0));
    total += p[c] * (lp - lq);
  }
  return total;
}

double kl_regression_proxy(const Matrix& old_probs, const Matrix& new_probs,
                           std::span<const double> weights) {
  if (old_probs.rows() != new_probs.rows() || old_probs.cols() != new_probs.cols()) {
    throw_data("misaligned prediction sets");
  }
  if (!weights.empty() && weights.size() != old_probs.rows()) {
    throw_data("misaligned prediction sets");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < old_probs.rows(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (w < 0.0) throw_invalid("negative regression weight");
    if (w == 0.0) continue;
    total += w * kl_divergence(old_probs.row(i), new_probs.row(i));
  }
  return total;
}

double kl_regression_proxy(const PredictionSet& old_set, const PredictionSet& new_set,
                           std::span<const double> weights) {
  if (old_set.example_ids() != new_set.example_ids()) throw_data("misaligned prediction sets");
  if (old_set.label_names() != new_set.label_names()) throw_data("incompatible label sets");
  return kl_regression_proxy(old_set.probs(), new_set.probs(), weights);
}

std::vector<double> project(std::span<const double> new_rep, const Matrix& projection) {
  if (projection.rows() != new_rep.size()) throw_invalid("representation dim mismatch");
  std::vector<double> out(projection.cols(), 0.0);
  for (std::size_t j = 0; j < new_rep.size(); ++j) {
    const double v = new_rep[j];
    if (v == 0.0) continue;
    const auto row = projection.row(j);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += v * row[k];
  }
  return out;
}

double l2_regression_proxy(const Matrix& old_reps, const Matrix& new_reps,
                           const Matrix& projection, std::span<const double> weights,
                           bool squared) {
  if (old_reps.rows() != new_reps.rows() || projection.rows() != new_reps.cols() ||
      projection.cols() != old_reps.cols()) {
    throw_invalid("representation dim mismatch");
  }
  if (!weights.empty() && weights.size() != old_reps.rows()) {
    throw_data("misaligned prediction sets");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < old_reps.rows(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (w < 0.0) throw_invalid("negative regression weight");
    if (w == 0.0) continue;
    const auto mapped = project(new_reps.row(i), projection);
    double sq = 0.0;
    const auto old_row = old_reps.row(i);
    for (std::size_t k = 0; k < mapped.size(); ++k) {
      const double d = old_row[k] - mapped[k];
      sq += d * d;
    }
    total += w * (squared ? sq : std::sqrt(sq));
  }
  return total;
}

void write_predictions(std::ostream& out, const PredictionSet& set) {
  out << json{{"labels", set.label_names()}}.dump() << '\n';
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto row = set.probs().row(i);
    nlohmann::ordered_json record;
    record["id"] = set.example_ids()[i];
    record["probs"] = std::vector<double>(row.begin(), row.end());
    record["pred"] = set.label_names()[set.preds()[i]];
    out << record.dump() << '\n';
  }
}

void save_predictions(const std::filesystem::path& path, const PredictionSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_invalid("cannot write predictions: " + path.string());
  write_predictions(out, set);
}

PredictionSet parse_predictions(std::istream& in, const std::string& source_name) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> labels;
  bool have_header = false;
  std::vector<std::string> ids;
  std::vector<double> probs;
  std::vector<std::string> stated_preds;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = source_name + ":" + std::to_string(line_no);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error&) {
      throw_data("malformed line " + where);
    }
    if (!have_header) {
      if (!record.is_object() || !record.contains("labels") || !record["labels"].is_array()) {
        throw_data("schema error at line " + where + ": expected {\"labels\": [...]} header");
      }
      labels = record["labels"].get<std::vector<std::string>>();
      have_header = true;
      continue;
    }
    if (!record.is_object() || !record.contains("id") || !record.contains("probs") ||
        !record["id"].is_string() || !record["probs"].is_array()) {
      throw_data("schema error at line " + where);
    }
    const auto row = record["probs"].get<std::vector<double>>();
    if (row.size() != labels.size()) throw_data("probability width mismatch at line " + where);
    ids.push_back(record["id"].get<std::string>());
    probs.insert(probs.end(), row.begin(), row.end());
    stated_preds.push_back(record.value("pred", std::string()));
  }
  if (!have_header) throw_data("empty prediction dump");
  const std::size_t n = ids.size();
  PredictionSet set(std::move(ids), Matrix(n, labels.size(), std::move(probs)), labels);
  for (std::size_t i = 0; i < n; ++i) {
    if (!stated_preds[i].empty() && stated_preds[i] != set.label_names()[set.preds()[i]]) {
      throw_data("stated pred disagrees with probs for " + set.example_ids()[i]);
    }
  }
  return set;
}

PredictionSet load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_invalid("cannot open predictions: " + path.string());
  return parse_predictions(in, path.string());
}

}  // namespace refit
