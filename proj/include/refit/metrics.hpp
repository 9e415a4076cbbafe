#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "refit/numerics.hpp"

namespace refit {

// Per-example class distributions of one model over one corpus.
class PredictionSet {
 public:
  PredictionSet() = default;
  // Validates row sums (1 +- 1e-9), unique ids and shapes; predictions are
  // the argmax of each row with ties to the lowest index.
  PredictionSet(std::vector<std::string> example_ids, Matrix probs,
                std::vector<std::string> label_names);

  const std::vector<std::string>& example_ids() const noexcept { return ids_; }
  const Matrix& probs() const noexcept { return probs_; }
  const std::vector<std::size_t>& preds() const noexcept { return preds_; }
  const std::vector<std::string>& label_names() const noexcept { return labels_; }
  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t num_classes() const noexcept { return labels_.size(); }

  // Rows [begin, end).
  PredictionSet slice(std::size_t begin, std::size_t end) const;

 private:
  std::vector<std::string> ids_;
  Matrix probs_;
  std::vector<std::size_t> preds_;
  std::vector<std::string> labels_;
};

struct FlipMatrix {
  std::size_t both_correct = 0;
  std::size_t negative_flips = 0;
  std::size_t positive_flips = 0;
  std::size_t both_wrong = 0;
  std::size_t total = 0;

  friend bool operator==(const FlipMatrix&, const FlipMatrix&) = default;
};

FlipMatrix flip_matrix(std::span<const std::size_t> old_preds,
                       std::span<const std::size_t> new_preds,
                       std::span<const std::size_t> gold);
// Checks id alignment ("misaligned prediction sets") and label spaces
// ("incompatible label sets").
FlipMatrix flip_matrix(const PredictionSet& old_set, const PredictionSet& new_set,
                       std::span<const std::size_t> gold);

double negative_flip_rate(const FlipMatrix& fm);
double positive_flip_rate(const FlipMatrix& fm);
double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> gold);

inline constexpr double kProbabilityFloor = 1e-12;

// sum_c p_c * (ln clamp(p_c) - ln clamp(q_c)); natural log, clamp to
// [1e-12, 1].
double kl_divergence(std::span<const double> p, std::span<const double> q);

// sum_i w_i * KL(p_old(.|x_i) || p_new(.|x_i)). Empty weights mean unit weights.
double kl_regression_proxy(const PredictionSet& old_set, const PredictionSet& new_set,
                           std::span<const double> weights = {});
double kl_regression_proxy(const Matrix& old_probs, const Matrix& new_probs,
                           std::span<const double> weights = {});

// Maps a new-model representation into the old space: out_k = sum_j v_j P(j, k)
// for P of shape new_dim x old_dim.
std::vector<double> project(std::span<const double> new_rep, const Matrix& projection);

// sum_i w_i * || old_i - project(new_i) ||_2 (squared when `squared`).
double l2_regression_proxy(const Matrix& old_reps, const Matrix& new_reps,
                           const Matrix& projection, std::span<const double> weights = {},
                           bool squared = false);

// Prediction dump: JSONL whose first record is {"labels": [...]}, followed by
// one {"id", "probs", "pred"} record per example.
void write_predictions(std::ostream& out, const PredictionSet& set);
void save_predictions(const std::filesystem::path& path, const PredictionSet& set);
PredictionSet parse_predictions(std::istream& in, const std::string& source_name = "<stream>");
PredictionSet load_predictions(const std::filesystem::path& path);

}  // namespace refit
