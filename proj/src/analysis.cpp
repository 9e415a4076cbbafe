#include "refit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "refit/error.hpp"
#include "refit/parallel.hpp"

namespace refit {

Ensemble::Ensemble(std::vector<std::shared_ptr<const Classifier>> members)
    : members_(std::move(members)) {
  if (members_.empty()) throw_invalid("empty ensemble");
  for (const auto& m : members_) {
    if (!m) throw_invalid("empty ensemble");
    if (m->label_names() != members_.front()->label_names() ||
        !(m->featurizer() == members_.front()->featurizer())) {
      throw_invalid("ensemble members disagree on label set or featurizer");
    }
  }
}

Ensemble::Ensemble(Classifier model)
    : members_{std::make_shared<const Classifier>(std::move(model))} {}

std::vector<double> average_distributions(std::span<const std::vector<double>> members) {
  if (members.empty()) throw_invalid("empty ensemble");
  std::vector<double> out(members.front().size(), 0.0);
  for (const auto& p : members) {
    if (p.size() != out.size()) throw_invalid("ensemble members disagree on label count");
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += p[c];
  }
  const double k = static_cast<double>(members.size());
  for (double& v : out) v /= k;
  return out;
}

std::vector<double> ensemble_predict(const Ensemble& ensemble, const SparseVector& x) {
  if (ensemble.size() == 0) throw_invalid("empty ensemble");
  std::vector<std::vector<double>> probs;
  probs.reserve(ensemble.size());
  for (const auto& m : ensemble.members()) probs.push_back(forward(*m, x).probs);
  return average_distributions(probs);
}

PredictionSet predict(const Ensemble& ensemble, const Corpus& corpus,
                      std::span<const SparseVector> features) {
  if (ensemble.size() == 0) throw_invalid("empty ensemble");
  if (features.size() != corpus.size()) throw_invalid("features do not match corpus");
  Matrix probs(corpus.size(), ensemble.label_names().size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto p = ensemble_predict(ensemble, features[i]);
    std::copy(p.begin(), p.end(), probs.row(i).begin());
  }
  return PredictionSet(corpus.ids(), std::move(probs), ensemble.label_names());
}

std::string to_string(ModelTag tag) {
  switch (tag) {
    case ModelTag::kOld: return "old";
    case ModelTag::kNewSingle: return "new_single";
    case ModelTag::kNewEnsemble: return "new_ensemble";
    case ModelTag::kCentric: return "centric";
  }
  return "?";
}

void ModelPool::validate(const std::string& error_message) const {
  if (entries.empty()) throw_invalid(error_message + ": empty pool");
  for (const auto& e : entries) {
    if (e.predictor.size() == 0) throw_invalid("empty ensemble");
    if (e.predictor.label_names() != entries.front().predictor.label_names() ||
        !(e.predictor.featurizer() == entries.front().predictor.featurizer())) {
      throw_invalid(error_message);
    }
  }
}

std::vector<PredictionSet> predict_pool(const ModelPool& pool, const Corpus& corpus,
                                        std::span<const SparseVector> features) {
  std::vector<PredictionSet> out(pool.size());
  parallel_for(pool.size(), [&](std::size_t i) {
    out[i] = predict(pool.entries[i].predictor, corpus, features);
  });
  return out;
}

PairwiseNfr pairwise_nfr(std::span<const PredictionSet> old_preds,
                         std::span<const PredictionSet> new_preds,
                         std::span<const std::size_t> gold) {
  if (old_preds.empty() || new_preds.empty()) throw_invalid("incompatible pools: empty pool");
  for (const auto& p : new_preds) {
    if (p.label_names() != old_preds.front().label_names()) throw_invalid("incompatible pools");
  }
  PairwiseNfr out;
  out.nfr = Matrix(old_preds.size(), new_preds.size());
  for (std::size_t i = 0; i < old_preds.size(); ++i) {
    for (std::size_t j = 0; j < new_preds.size(); ++j) {
      out.nfr(i, j) = negative_flip_rate(flip_matrix(old_preds[i], new_preds[j], gold));
    }
  }
  out.values.assign(out.nfr.data().begin(), out.nfr.data().end());
  return out;
}

PairwiseNfr pairwise_nfr(const ModelPool& pool_old, const ModelPool& pool_new, const Corpus& reg,
                         const FeaturizerConfig& featurizer) {
  pool_old.validate();
  pool_new.validate();
  if (pool_old.entries.front().predictor.label_names() !=
      pool_new.entries.front().predictor.label_names()) {
    throw_invalid("incompatible pools");
  }
  const auto features = featurize_all(reg, featurizer);
  const auto old_preds = predict_pool(pool_old, reg, features);
  const auto new_preds = predict_pool(pool_new, reg, features);
  return pairwise_nfr(old_preds, new_preds, reg.gold_indices());
}

CentricSelection centric_from_matrix(const Matrix& pairwise) {
  const std::size_t k = pairwise.rows();
  if (k < 2) throw_invalid("need >=2 candidates");
  if (pairwise.cols() != k) throw_invalid("centric selection needs a square matrix");
  CentricSelection out;
  out.avg_nfr.assign(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (i != j) sum += pairwise(i, j);
    }
    out.avg_nfr[j] = sum / static_cast<double>(k - 1);
  }
  for (std::size_t j = 1; j < k; ++j) {
    if (out.avg_nfr[j] < out.avg_nfr[out.index]) out.index = j;
  }
  return out;
}

CentricSelection centric_select(std::span<const PredictionSet> candidates,
                                std::span<const std::size_t> gold) {
  if (candidates.size() < 2) throw_invalid("need >=2 candidates");
  return centric_from_matrix(pairwise_nfr(candidates, candidates, gold).nfr);
}

CentricSelection centric_select(const ModelPool& candidates, const Corpus& dev_first_half,
                                const FeaturizerConfig& featurizer) {
  if (candidates.size() < 2) throw_invalid("need >=2 candidates");
  candidates.validate();
  const auto features = featurize_all(dev_first_half, featurizer);
  const auto preds = predict_pool(candidates, dev_first_half, features);
  return centric_select(preds, dev_first_half.gold_indices());
}

std::vector<double> prediction_embedding(const PredictionSet& preds, bool one_hot) {
  if (!one_hot) {
    return std::vector<double>(preds.probs().data().begin(), preds.probs().data().end());
  }
  std::vector<double> out(preds.size() * preds.num_classes(), 0.0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    out[i * preds.num_classes() + preds.preds()[i]] = 1.0;
  }
  return out;
}

std::vector<double> prediction_embedding(const Ensemble& model, const Corpus& dev,
                                         const FeaturizerConfig& featurizer, bool one_hot) {
  if (dev.empty()) throw_invalid("empty dev corpus");
  const auto features = featurize_all(dev, featurizer);
  return prediction_embedding(predict(model, dev, features), one_hot);
}

Scatter pca_scatter(std::span<const PredictionSet> preds, std::span<const std::string> ids,
                    std::span<const ModelTag> tags, bool one_hot) {
  if (preds.size() < 3) throw_invalid("pca scatter needs >= 3 models");
  if (ids.size() != preds.size() || tags.size() != preds.size()) {
    throw_invalid("pca scatter ids/tags do not match models");
  }
  const std::size_t width = preds.front().size() * preds.front().num_classes();
  Matrix points(preds.size(), width);
  for (std::size_t m = 0; m < preds.size(); ++m) {
    if (preds[m].example_ids() != preds.front().example_ids()) {
      throw_data("misaligned prediction sets");
    }
    const auto emb = prediction_embedding(preds[m], one_hot);
    std::copy(emb.begin(), emb.end(), points.row(m).begin());
  }
  const PcaResult pca = top2_pca(points);
  Scatter out;
  out.variances[0] = pca.variances[0];
  out.variances[1] = pca.variances[1];
  for (std::size_t m = 0; m < preds.size(); ++m) {
    out.points.push_back({ids[m], tags[m], pca.coords(m, 0), pca.coords(m, 1)});
  }
  if (pca.variances[0] == 0.0) {
    out.warning = "all models make identical predictions; scatter collapses to the origin";
  }
  return out;
}

Scatter pca_scatter(const ModelPool& pool, const Corpus& dev, const FeaturizerConfig& featurizer,
                    bool one_hot) {
  if (pool.size() < 3) throw_invalid("pca scatter needs >= 3 models");
  pool.validate();
  const auto features = featurize_all(dev, featurizer);
  const auto preds = predict_pool(pool, dev, features);
  std::vector<std::string> ids;
  std::vector<ModelTag> tags;
  for (const auto& e : pool.entries) {
    ids.push_back(e.id);
    tags.push_back(e.tag);
  }
  return pca_scatter(preds, ids, tags, one_hot);
}

double mean_pairwise_distance(const Scatter& scatter, ModelTag tag) {
  std::vector<const ScatterPoint*> pts;
  for (const auto& p : scatter.points) {
    if (p.tag == tag) pts.push_back(&p);
  }
  if (pts.size() < 2) return 0.0;
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < pts.size(); ++a) {
    for (std::size_t b = a + 1; b < pts.size(); ++b) {
      total += std::hypot(pts[a]->x - pts[b]->x, pts[a]->y - pts[b]->y);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

std::vector<HistogramBin> histogram(std::span<const double> values, double bin_width) {
  if (!(bin_width > 0.0)) throw_invalid("bin width must be positive");
  std::vector<HistogramBin> bins;
  if (values.empty()) return bins;
  auto bin_of = [&](double v) {
    // The epsilon keeps exact multiples such as 3/200 in their own bin.
    return static_cast<std::size_t>(std::floor(std::max(0.0, v) / bin_width + 1e-9));
  };
  std::size_t top = 0;
  for (double v : values) top = std::max(top, bin_of(v));
  bins.resize(top + 1);
  for (std::size_t k = 0; k <= top; ++k) {
    bins[k].low = static_cast<double>(k) * bin_width;
    bins[k].high = static_cast<double>(k + 1) * bin_width;
  }
  for (double v : values) ++bins[bin_of(v)].count;
  return bins;
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double s = 0.0;
  for (double v : values) s += (v - m) * (v - m);
  return s / static_cast<double>(values.size() - 1);
}

double median(std::vector<double> values) {
  if (values.empty()) throw_invalid("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

}  // namespace

void write_pairwise_csv(std::ostream& out, std::span<const std::string> row_ids,
                        std::span<const std::string> col_ids, const Matrix& matrix) {
  if (row_ids.size() != matrix.rows() || col_ids.size() != matrix.cols()) {
    throw_invalid("pairwise csv ids do not match matrix");
  }
  out << "old\\new";
  for (const auto& id : col_ids) out << ',' << id;
  out << '\n';
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    out << row_ids[i];
    for (std::size_t j = 0; j < matrix.cols(); ++j) out << ',' << fmt("%.6f", matrix(i, j));
    out << '\n';
  }
}

void write_histogram_csv(std::ostream& out, std::span<const HistogramBin> bins) {
  out << "bin_low,bin_high,count\n";
  for (const auto& b : bins) {
    out << fmt("%.4f", b.low) << ',' << fmt("%.4f", b.high) << ',' << b.count << '\n';
  }
}

void write_scatter_csv(std::ostream& out, const Scatter& scatter) {
  out << "model_id,tag,x,y\n";
  for (const auto& p : scatter.points) {
    out << p.id << ',' << to_string(p.tag) << ',' << fmt("%.9f", p.x) << ',' << fmt("%.9f", p.y)
        << '\n';
  }
}

void write_scatter_svg(std::ostream& out, const Scatter& scatter) {
  constexpr double kWidth = 800.0;
  constexpr double kHeight = 600.0;
  constexpr double kMargin = 50.0;
  double min_x = 0.0, max_x = 0.0, min_y = 0.0, max_y = 0.0;
  for (const auto& p : scatter.points) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double span_x = max_x - min_x > 0 ? max_x - min_x : 1.0;
  const double span_y = max_y - min_y > 0 ? max_y - min_y : 1.0;
  auto sx = [&](double x) { return kMargin + (x - min_x) / span_x * (kWidth - 2 * kMargin); };
  auto sy = [&](double y) {
    return kHeight - kMargin - (y - min_y) / span_y * (kHeight - 2 * kMargin);
  };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"600\" "
         "viewBox=\"0 0 800 600\">\n";
  out << "<rect width=\"800\" height=\"600\" fill=\"white\"/>\n";
  out << "<text x=\"400\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">PCA of dev-set predictions</text>\n";
  for (const auto& p : scatter.points) {
    const double x = sx(p.x);
    const double y = sy(p.y);
    out << "<g><title>" << p.id << "</title>";
    switch (p.tag) {
      case ModelTag::kNewSingle:
        out << "<circle cx=\"" << fmt("%.2f", x) << "\" cy=\"" << fmt("%.2f", y)
            << "\" r=\"6\" fill=\"#1f77b4\" fill-opacity=\"0.7\"/>";
        break;
      case ModelTag::kNewEnsemble:
        out << "<rect x=\"" << fmt("%.2f", x - 6) << "\" y=\"" << fmt("%.2f", y - 6)
            << "\" width=\"12\" height=\"12\" fill=\"#d62728\" fill-opacity=\"0.7\"/>";
        break;
      case ModelTag::kOld:
        out << "<polygon points=\"" << fmt("%.2f", x) << ',' << fmt("%.2f", y - 7) << ' '
            << fmt("%.2f", x + 7) << ',' << fmt("%.2f", y) << ' ' << fmt("%.2f", x) << ','
            << fmt("%.2f", y + 7) << ' ' << fmt("%.2f", x - 7) << ',' << fmt("%.2f", y)
            << "\" fill=\"#7f7f7f\" fill-opacity=\"0.7\"/>";
        break;
      case ModelTag::kCentric: {
        out << "<polygon points=\"";
        for (int k = 0; k < 10; ++k) {
          const double r = k % 2 == 0 ? 11.0 : 4.5;
          const double a = -M_PI / 2 + k * M_PI / 5;
          out << (k ? " " : "") << fmt("%.2f", x + r * std::cos(a)) << ','
              << fmt("%.2f", y + r * std::sin(a));
        }
        out << "\" fill=\"#ffbf00\" stroke=\"black\" stroke-width=\"1\"/>";
        break;
      }
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
}

}  // namespace refit
