#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "refit/corpus.hpp"
#include "refit/metrics.hpp"
#include "refit/model.hpp"
#include "refit/numerics.hpp"

namespace refit {

// Probability-averaging ensemble. A single-member ensemble reproduces its
// member exactly, so it doubles as the "model or ensemble" handle.
class Ensemble {
 public:
  Ensemble() = default;
  explicit Ensemble(std::vector<std::shared_ptr<const Classifier>> members);
  explicit Ensemble(Classifier model);

  const std::vector<std::shared_ptr<const Classifier>>& members() const noexcept {
    return members_;
  }
  std::size_t size() const noexcept { return members_.size(); }
  const std::vector<std::string>& label_names() const { return members_.front()->label_names(); }
  const FeaturizerConfig& featurizer() const { return members_.front()->featurizer(); }

 private:
  std::vector<std::shared_ptr<const Classifier>> members_;
};

// Arithmetic mean of equal-width distributions; throws "empty ensemble".
std::vector<double> average_distributions(std::span<const std::vector<double>> members);
std::vector<double> ensemble_predict(const Ensemble& ensemble, const SparseVector& x);

PredictionSet predict(const Ensemble& ensemble, const Corpus& corpus,
                      std::span<const SparseVector> features);

enum class ModelTag { kOld, kNewSingle, kNewEnsemble, kCentric };
std::string to_string(ModelTag tag);

struct PoolEntry {
  std::string id;
  Ensemble predictor;
  ModelTag tag = ModelTag::kNewSingle;
};

struct ModelPool {
  std::vector<PoolEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  // Non-empty, shared label set and featurizer; throws `error_message`.
  void validate(const std::string& error_message = "incompatible pools") const;
};

// Dev-set predictions for every pool entry, computed in parallel.
std::vector<PredictionSet> predict_pool(const ModelPool& pool, const Corpus& corpus,
                                        std::span<const SparseVector> features);

struct PairwiseNfr {
  Matrix nfr;                  // (i, j) = NFR(old_i -> new_j)
  std::vector<double> values;  // row-major flattening for histograms
};

PairwiseNfr pairwise_nfr(std::span<const PredictionSet> old_preds,
                         std::span<const PredictionSet> new_preds,
                         std::span<const std::size_t> gold);
PairwiseNfr pairwise_nfr(const ModelPool& pool_old, const ModelPool& pool_new, const Corpus& reg,
                         const FeaturizerConfig& featurizer);

struct CentricSelection {
  std::size_t index = 0;
  std::vector<double> avg_nfr;
};

// Column means of a square pairwise matrix excluding the diagonal; argmin
// with ties to the lowest index.
CentricSelection centric_from_matrix(const Matrix& pairwise);
CentricSelection centric_select(std::span<const PredictionSet> candidates,
                                std::span<const std::size_t> gold);
CentricSelection centric_select(const ModelPool& candidates, const Corpus& dev_first_half,
                                const FeaturizerConfig& featurizer);

// Row-major flattening of the N x C probability table (or its one-hot
// argmax form).
std::vector<double> prediction_embedding(const PredictionSet& preds, bool one_hot = false);
std::vector<double> prediction_embedding(const Ensemble& model, const Corpus& dev,
                                         const FeaturizerConfig& featurizer, bool one_hot = false);

struct ScatterPoint {
  std::string id;
  ModelTag tag = ModelTag::kNewSingle;
  double x = 0.0;
  double y = 0.0;
};

struct Scatter {
  std::vector<ScatterPoint> points;
  double variances[2] = {0, 0};
  std::optional<std::string> warning;
};

Scatter pca_scatter(std::span<const PredictionSet> preds, std::span<const std::string> ids,
                    std::span<const ModelTag> tags, bool one_hot = false);
Scatter pca_scatter(const ModelPool& pool, const Corpus& dev, const FeaturizerConfig& featurizer,
                    bool one_hot = false);

// Mean Euclidean distance over unordered pairs of points with the tag; 0
// with fewer than two points.
double mean_pairwise_distance(const Scatter& scatter, ModelTag tag);

struct HistogramBin {
  double low = 0.0;
  double high = 0.0;
  std::size_t count = 0;
};

inline constexpr double kHistogramBinWidth = 0.005;

// Bins [k w, (k + 1) w) from 0 up to the bin holding the largest value.
std::vector<HistogramBin> histogram(std::span<const double> values,
                                    double bin_width = kHistogramBinWidth);

double mean(std::span<const double> values);
// Unbiased sample variance; 0 for fewer than two values.
double sample_variance(std::span<const double> values);
double median(std::vector<double> values);

void write_pairwise_csv(std::ostream& out, std::span<const std::string> row_ids,
                        std::span<const std::string> col_ids, const Matrix& matrix);
void write_histogram_csv(std::ostream& out, std::span<const HistogramBin> bins);
void write_scatter_csv(std::ostream& out, const Scatter& scatter);
// 800 x 600; circles for singles, squares for ensembles, a star for the
// centric model, diamonds for old models.
void write_scatter_svg(std::ostream& out, const Scatter& scatter);

}  // namespace refit
