#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "refit/corpus.hpp"
#include "refit/model.hpp"
#include "refit/numerics.hpp"

namespace refit {

enum class ProxyKind { kKlLogits, kL2Final, kL2AllLayers };
enum class RegPolicy { kAllTrain, kOldCorrect, kOldBetter, kNegFlip };
enum class ProjectionMode { kIdentity, kLearned };

std::string to_string(ProxyKind kind);
std::string to_string(RegPolicy policy);
std::string to_string(ProjectionMode mode);
// Accepts the canonical names plus the CLI spellings ("kl", "l2-final",
// "l2-all", "old-better", ...).
ProxyKind parse_proxy(const std::string& text);
RegPolicy parse_policy(const std::string& text);
ProjectionMode parse_projection(const std::string& text);

struct UpdateConfig {
  double alpha = 0.0;
  // Threshold of the relaxed constraint; reported only, never differentiated.
  double c_constant = 0.0;
  ProxyKind proxy = ProxyKind::kKlLogits;
  RegPolicy policy = RegPolicy::kAllTrain;
  int epochs = 8;
  std::size_t batch_size = 16;
  double learning_rate = 0.1;
  double momentum = 0.9;
  ProjectionMode projection = ProjectionMode::kLearned;
  // Use squared Euclidean distance in the representation proxy.
  bool squared_l2 = false;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden_dims = {16};

  // Throws on alpha < 0, epochs < 1, learning_rate <= 0, batch_size == 0.
  void validate() const;
};

// 1-indexed (new hidden layer -> old hidden layer) pairs.
struct AlignmentMap {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;

  friend bool operator==(const AlignmentMap&, const AlignmentMap&) = default;
};

// L_new == 2 L_old pairs new layer 2i with old layer i; otherwise new layer j
// maps to old layer round(j * L_old / L_new) clamped to [1, L_old].
AlignmentMap layer_alignment(std::size_t old_depth, std::size_t new_depth);

// Per-example penalty scale for a gating policy (see RegPolicy).
std::vector<double> reg_weights(RegPolicy policy, double alpha, const Matrix& old_probs,
                                const Matrix& new_probs, std::span<const std::size_t> old_preds,
                                std::span<const std::size_t> new_preds,
                                std::span<const std::size_t> gold);

// new_dim x old_dim. Identity when mode is identity (dims must agree, else
// "projection required"); Glorot-uniform from `seed` otherwise.
Matrix projection_init(std::size_t old_dim, std::size_t new_dim, ProjectionMode mode,
                       std::uint64_t seed);

// Representation widths (old, new) the proxy compares; (0, 0) for the KL
// proxy.
std::pair<std::size_t, std::size_t> representation_dims(const Classifier& old_model,
                                                        const Classifier& new_model,
                                                        ProxyKind proxy,
                                                        const AlignmentMap& alignment);

// Concatenated hidden activations for the representation proxies.
std::vector<double> old_representation(const ForwardTrace& trace, ProxyKind proxy,
                                        const AlignmentMap& alignment);
std::vector<double> new_representation(const ForwardTrace& trace, ProxyKind proxy,
                                        const AlignmentMap& alignment);

// One example of the regression batch. `old_trace` may point at a cached
// forward pass of the frozen old model; it is computed when null.
struct RegItem {
  const SparseVector* features = nullptr;
  std::size_t gold = 0;
  const ForwardTrace* old_trace = nullptr;
};

struct ProjectionState {
  Matrix matrix;
  bool learned = false;
};

struct JointLoss {
  double loss = 0.0;        // mean CE + sum_i w_i proxy_i / |reg batch|
  double ce = 0.0;
  double penalty = 0.0;     // sum_i w_i proxy_i / |reg batch|
  double proxy_sum = 0.0;   // unweighted sum_i proxy_i over the regression batch
  bool constraint_ok = true;  // proxy_sum <= C
  std::vector<double> weights;
};

struct JointLossAndGrads {
  JointLoss value;
  Gradients grads;
  Matrix projection_grad;  // empty unless the projection is learned
};

// Objective with the regression penalty against a frozen old model. When
// `reg_batch` is empty the CE batch doubles as the regression batch. The
// constant -alpha * C term is omitted. alpha = 0 reproduces
// ce_loss_and_grads exactly.
JointLossAndGrads joint_loss_and_grads(const Classifier& new_model, const Classifier& old_model,
                                       std::span<const BatchItem> batch,
                                       std::span<const RegItem> reg_batch,
                                       const UpdateConfig& cfg, const ProjectionState& projection,
                                       const AlignmentMap& alignment);

// Accumulating form used by the trainer; `grads` and `projection_grad` must be
// zeroed by the caller.
JointLoss joint_loss_accumulate(const Classifier& new_model, const Classifier& old_model,
                                std::span<const BatchItem> batch,
                                std::span<const RegItem> reg_batch, const UpdateConfig& cfg,
                                const ProjectionState& projection, const AlignmentMap& alignment,
                                Gradients& grads, Matrix* projection_grad);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;       // mean training objective over the epoch's batches
  double acc = 0.0;        // training accuracy after the epoch
  double penalty = 0.0;    // mean penalty term over the epoch's batches
  double proxy = 0.0;      // unweighted proxy over the regression corpus
  bool constraint_ok = true;
};

struct TrainResult {
  Classifier model;
  std::vector<EpochLog> log;
  std::optional<AlignmentMap> alignment;
  std::optional<ProjectionState> projection;
};

// SGD with momentum over mini-batches reshuffled every epoch from
// derive_seed(cfg.seed, shuffle role, epoch). Without an old model (or with
// alpha = 0) this is plain CE training. The regression corpus defaults to the
// training corpus.
TrainResult train(const UpdateConfig& cfg, const Corpus& train_corpus,
                  const FeaturizerConfig& featurizer, const Classifier* old_model = nullptr,
                  const Corpus* reg_corpus = nullptr);

// Leading {"config": ...} record, then one record per epoch.
void write_training_log(std::ostream& out, const UpdateConfig& cfg, const TrainResult& result);

}  // namespace refit
