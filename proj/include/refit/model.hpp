#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "refit/corpus.hpp"
#include "refit/metrics.hpp"
#include "refit/numerics.hpp"

namespace refit {

// Affine layer y = x W + b with W stored input-major (fan_in x fan_out), so a
// sparse input reads contiguous rows.
struct DenseLayer {
  Matrix weights;
  std::vector<double> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Softmax over an optional stack of tanh hidden layers.
// layer_dims = [input_dim, h_1, ..., h_L, num_classes]; L = 0 is softmax
// regression.
class Classifier {
 public:
  Classifier() = default;

  // Glorot-uniform weights, s = sqrt(6 / (fan_in + fan_out)), drawn layer by
  // layer in row-major order from SplitMix64(seed); zero biases.
  static Classifier init(std::vector<std::size_t> layer_dims, std::uint64_t seed,
                         FeaturizerConfig featurizer = {},
                         std::vector<std::string> label_names = {});

  const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
  std::size_t input_dim() const noexcept { return dims_.front(); }
  std::size_t num_classes() const noexcept { return dims_.back(); }
  std::size_t num_hidden() const noexcept { return dims_.size() - 2; }
  std::size_t parameter_count() const noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  const FeaturizerConfig& featurizer() const noexcept { return featurizer_; }
  const std::vector<std::string>& label_names() const noexcept { return labels_; }

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& mutable_layers() noexcept { return layers_; }

  // Flattened as, per layer, row-major weights then bias.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);

  // FNV-1a 64 over the little-endian bytes of all weights then all biases.
  std::uint64_t checksum() const;

  friend bool operator==(const Classifier&, const Classifier&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<DenseLayer> layers_;
  std::uint64_t seed_ = 0;
  FeaturizerConfig featurizer_;
  std::vector<std::string> labels_;
};

struct ForwardTrace {
  std::vector<std::vector<double>> activations;  // one per hidden layer
  std::vector<double> logits;
  std::vector<double> probs;
};

ForwardTrace forward(const Classifier& model, const SparseVector& x);

// Same shapes as the classifier's layers.
struct Gradients {
  std::vector<DenseLayer> layers;

  static Gradients zeros_like(const Classifier& model);
  void set_zero();
  std::vector<double> flatten() const;
};

// Backpropagates dL/dlogits plus optional extra dL/dactivation terms per
// hidden layer (hidden_grads empty or one entry per hidden layer, entries may
// be empty), accumulating into `grads`.
void accumulate_gradients(const Classifier& model, const SparseVector& x,
                          const ForwardTrace& trace, std::span<const double> dlogits,
                          std::span<const std::vector<double>> hidden_grads, Gradients& grads);

struct BatchItem {
  const SparseVector* features = nullptr;
  std::size_t gold = 0;
};

struct LossAndGrads {
  double loss = 0.0;
  Gradients grads;
};

// Mean over the batch of -ln p(gold | x), with exact gradients.
LossAndGrads ce_loss_and_grads(const Classifier& model, std::span<const BatchItem> batch);

PredictionSet predict(const Classifier& model, const Corpus& corpus,
                      std::span<const SparseVector> features);
PredictionSet predict(const Classifier& model, const Corpus& corpus);

inline constexpr int kModelFormatVersion = 1;

void save_model(const Classifier& model, const std::filesystem::path& path);
std::string serialize_model(const Classifier& model);
// When `expected` is set, a differing featurizer config is a "feature dim
// mismatch" error.
Classifier load_model(const std::filesystem::path& path,
                      const std::optional<FeaturizerConfig>& expected = std::nullopt);
Classifier deserialize_model(const std::string& text,
                             const std::optional<FeaturizerConfig>& expected = std::nullopt);

std::string hex64(std::uint64_t value);

}  // namespace refit
