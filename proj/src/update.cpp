#include "refit/update.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string_view>

#include <json.hpp>

#include "refit/error.hpp"
#include "refit/metrics.hpp"
#include "refit/serialization.hpp"

namespace refit {

namespace {

constexpr std::uint64_t kShuffleRole = 0x5348'5546'464c'4531ULL;
constexpr std::uint64_t kRegShuffleRole = 0x5245'4753'4855'4631ULL;
constexpr std::uint64_t kProjectionRole = 0x5052'4f4a'4543'5431ULL;

}  // namespace

std::string to_string(ProxyKind kind) {
  switch (kind) {
    case ProxyKind::kKlLogits: return "kl_logits";
    case ProxyKind::kL2Final: return "l2_final";
    case ProxyKind::kL2AllLayers: return "l2_all_layers";
  }
  return "?";
}

std::string to_string(RegPolicy policy) {
  switch (policy) {
    case RegPolicy::kAllTrain: return "all_train";
    case RegPolicy::kOldCorrect: return "old_correct";
    case RegPolicy::kOldBetter: return "old_better";
    case RegPolicy::kNegFlip: return "neg_flip";
  }
  return "?";
}

std::string to_string(ProjectionMode mode) {
  return mode == ProjectionMode::kIdentity ? "identity" : "learned";
}

namespace {

std::string canonical(std::string text) {
  std::replace(text.begin(), text.end(), '-', '_');
  return text;
}

}  // namespace

ProxyKind parse_proxy(const std::string& text) {
  const std::string t = canonical(text);
  if (t == "kl_logits" || t == "kl") return ProxyKind::kKlLogits;
  if (t == "l2_final" || t == "l2") return ProxyKind::kL2Final;
  if (t == "l2_all_layers" || t == "l2_all") return ProxyKind::kL2AllLayers;
  throw_invalid("unknown proxy: " + text);
}

RegPolicy parse_policy(const std::string& text) {
  const std::string t = canonical(text);
  if (t == "all_train" || t == "all") return RegPolicy::kAllTrain;
  if (t == "old_correct" || t == "correct") return RegPolicy::kOldCorrect;
  if (t == "old_better" || t == "better") return RegPolicy::kOldBetter;
  if (t == "neg_flip") return RegPolicy::kNegFlip;
  throw_invalid("unknown policy: " + text);
}

ProjectionMode parse_projection(const std::string& text) {
  if (text == "identity") return ProjectionMode::kIdentity;
  if (text == "learned") return ProjectionMode::kLearned;
  throw_invalid("unknown projection mode: " + text);
}

void UpdateConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw_invalid("alpha must be >= 0");
  if (!(c_constant >= 0.0)) throw_invalid("C must be >= 0");
  if (epochs < 1) throw_invalid("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw_invalid("learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw_invalid("momentum must be in [0, 1)");
  if (batch_size == 0) throw_invalid("batch size must be >= 1");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw_invalid("invalid architecture");
  }
}

AlignmentMap layer_alignment(std::size_t old_depth, std::size_t new_depth) {
  if (old_depth < 1 || new_depth < 1) throw_invalid("layer alignment needs depths >= 1");
  AlignmentMap map;
  if (new_depth == 2 * old_depth) {
    for (std::size_t i = 1; i <= old_depth; ++i) map.pairs.emplace_back(2 * i, i);
    return map;
  }
  for (std::size_t j = 1; j <= new_depth; ++j) {
    const double target =
        static_cast<double>(j) * static_cast<double>(old_depth) / static_cast<double>(new_depth);
    const auto rounded = static_cast<std::size_t>(std::llround(target));
    map.pairs.emplace_back(j, std::clamp<std::size_t>(rounded, 1, old_depth));
  }
  return map;
}

std::vector<double> reg_weights(RegPolicy policy, double alpha, const Matrix& old_probs,
                                const Matrix& new_probs, std::span<const std::size_t> old_preds,
                                std::span<const std::size_t> new_preds,
                                std::span<const std::size_t> gold) {
  const std::size_t n = gold.size();
  if (old_probs.rows() != n || new_probs.rows() != n || old_preds.size() != n ||
      new_preds.size() != n || old_probs.cols() != new_probs.cols()) {
    throw_invalid("misaligned inputs");
  }
  std::vector<double> w(n, 0.0);
  if (alpha == 0.0) return w;
  for (std::size_t i = 0; i < n; ++i) {
    bool on = false;
    switch (policy) {
      case RegPolicy::kAllTrain:
        on = true;
        break;
      case RegPolicy::kOldCorrect:
        on = old_preds[i] == gold[i];
        break;
      case RegPolicy::kOldBetter:
        on = !(old_probs(i, gold[i]) < new_probs(i, gold[i]));
        break;
      case RegPolicy::kNegFlip:
        on = old_preds[i] == gold[i] && new_preds[i] != gold[i];
        break;
    }
    w[i] = on ? alpha : 0.0;
  }
  return w;
}

Matrix projection_init(std::size_t old_dim, std::size_t new_dim, ProjectionMode mode,
                       std::uint64_t seed) {
  if (old_dim < 1 || new_dim < 1) throw_invalid("projection dims must be >= 1");
  if (mode == ProjectionMode::kIdentity) {
    if (old_dim != new_dim) throw_invalid("projection required");
    return Matrix::identity(old_dim);
  }
  Matrix p(new_dim, old_dim);
  Rng rng(seed);
  const double s = std::sqrt(6.0 / static_cast<double>(old_dim + new_dim));
  for (double& v : p.data()) v = rng.uniform(-s, s);
  return p;
}

namespace {

void require_hidden(const Classifier& model, const char* which) {
  if (model.num_hidden() == 0) {
    throw_invalid(std::string("representation proxy needs a hidden layer in the ") + which +
                  " model");
  }
}

}  // namespace

std::pair<std::size_t, std::size_t> representation_dims(const Classifier& old_model,
                                                        const Classifier& new_model,
                                                        ProxyKind proxy,
                                                        const AlignmentMap& alignment) {
  if (proxy == ProxyKind::kKlLogits) return {0, 0};
  require_hidden(old_model, "old");
  require_hidden(new_model, "new");
  const auto& od = old_model.layer_dims();
  const auto& nd = new_model.layer_dims();
  if (proxy == ProxyKind::kL2Final) return {od[od.size() - 2], nd[nd.size() - 2]};
  std::size_t old_dim = 0;
  std::size_t new_dim = 0;
  for (const auto& [j, i] : alignment.pairs) {
    if (j < 1 || j > new_model.num_hidden() || i < 1 || i > old_model.num_hidden()) {
      throw_invalid("alignment index out of range");
    }
    new_dim += nd[j];
    old_dim += od[i];
  }
  return {old_dim, new_dim};
}

std::vector<double> old_representation(const ForwardTrace& trace, ProxyKind proxy,
                                        const AlignmentMap& alignment) {
  if (proxy == ProxyKind::kL2Final) return trace.activations.back();
  std::vector<double> out;
  for (const auto& [j, i] : alignment.pairs) {
    const auto& a = trace.activations[i - 1];
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

std::vector<double> new_representation(const ForwardTrace& trace, ProxyKind proxy,
                                        const AlignmentMap& alignment) {
  if (proxy == ProxyKind::kL2Final) return trace.activations.back();
  std::vector<double> out;
  for (const auto& [j, i] : alignment.pairs) {
    const auto& a = trace.activations[j - 1];
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

namespace {

void check_compatible(const Classifier& new_model, const Classifier& old_model) {
  if (new_model.label_names() != old_model.label_names() ||
      !(new_model.featurizer() == old_model.featurizer()) ||
      new_model.input_dim() != old_model.input_dim()) {
    throw_invalid("incompatible old model");
  }
}

double ce_accumulate(const Classifier& model, std::span<const BatchItem> batch, Gradients& grads) {
  if (batch.empty()) throw_invalid("empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  std::vector<double> dlogits(model.num_classes());
  for (const auto& item : batch) {
    if (item.gold >= model.num_classes()) throw_invalid("label mismatch");
    const ForwardTrace trace = forward(model, *item.features);
    loss -= std::log(std::max(trace.probs[item.gold], 1e-300));
    for (std::size_t c = 0; c < dlogits.size(); ++c) {
      dlogits[c] = scale * (trace.probs[c] - (c == item.gold ? 1.0 : 0.0));
    }
    accumulate_gradients(model, *item.features, trace, dlogits, {}, grads);
  }
  return loss * scale;
}

// Proxy value for one example and, when `scale` != 0, its gradient pieces.
struct ProxyTerm {
  double value = 0.0;
  std::vector<double> dlogits;          // KL proxy
  std::vector<double> drep;             // representation proxies, new space
  std::vector<double> dmapped;          // d value / d projected rep (old space)
  std::vector<double> new_rep;
};

ProxyTerm proxy_term(const ForwardTrace& old_trace, const ForwardTrace& new_trace,
                     const UpdateConfig& cfg, const Matrix& projection,
                     const AlignmentMap& alignment, bool want_grad) {
  ProxyTerm t;
  if (cfg.proxy == ProxyKind::kKlLogits) {
    const auto& p = old_trace.probs;
    const auto& q = new_trace.probs;
    t.value = kl_divergence(p, q);
    if (want_grad) {
      double mass = 0.0;
      std::vector<bool> live(p.size());
      for (std::size_t c = 0; c < p.size(); ++c) {
        live[c] = p[c] > 0.0 && q[c] >= kProbabilityFloor;
        if (live[c]) mass += p[c];
      }
      t.dlogits.resize(p.size());
      for (std::size_t k = 0; k < p.size(); ++k) {
        t.dlogits[k] = q[k] * mass - (live[k] ? p[k] : 0.0);
      }
    }
    return t;
  }
  const auto old_rep = old_representation(old_trace, cfg.proxy, alignment);
  t.new_rep = new_representation(new_trace, cfg.proxy, alignment);
  const auto mapped = project(t.new_rep, projection);
  std::vector<double> residual(mapped.size());
  double sq = 0.0;
  for (std::size_t k = 0; k < mapped.size(); ++k) {
    residual[k] = old_rep[k] - mapped[k];
    sq += residual[k] * residual[k];
  }
  const double dist = std::sqrt(sq);
  t.value = cfg.squared_l2 ? sq : dist;
  if (!want_grad) return t;
  t.dmapped.assign(mapped.size(), 0.0);
  if (cfg.squared_l2) {
    for (std::size_t k = 0; k < mapped.size(); ++k) t.dmapped[k] = -2.0 * residual[k];
  } else if (dist > 0.0) {
    for (std::size_t k = 0; k < mapped.size(); ++k) t.dmapped[k] = -residual[k] / dist;
  }
  t.drep.assign(t.new_rep.size(), 0.0);
  for (std::size_t j = 0; j < t.new_rep.size(); ++j) t.drep[j] = dot(projection.row(j), t.dmapped);
  return t;
}

// Splits a gradient over the concatenated new representation back onto the
// hidden layers it came from.
std::vector<std::vector<double>> scatter_hidden(const Classifier& model, const UpdateConfig& cfg,
                                                const AlignmentMap& alignment,
                                                std::span<const double> drep, double scale) {
  std::vector<std::vector<double>> hidden(model.num_hidden());
  const auto& dims = model.layer_dims();
  auto add = [&](std::size_t layer, std::size_t offset) {
    auto& h = hidden[layer - 1];
    if (h.empty()) h.assign(dims[layer], 0.0);
    for (std::size_t u = 0; u < dims[layer]; ++u) h[u] += scale * drep[offset + u];
  };
  if (cfg.proxy == ProxyKind::kL2Final) {
    add(model.num_hidden(), 0);
  } else {
    std::size_t offset = 0;
    for (const auto& [j, i] : alignment.pairs) {
      add(j, offset);
      offset += dims[j];
    }
  }
  return hidden;
}

}  // namespace

JointLoss joint_loss_accumulate(const Classifier& new_model, const Classifier& old_model,
                                std::span<const BatchItem> batch,
                                std::span<const RegItem> reg_batch, const UpdateConfig& cfg,
                                const ProjectionState& projection, const AlignmentMap& alignment,
                                Gradients& grads, Matrix* projection_grad) {
  check_compatible(new_model, old_model);
  JointLoss out;
  out.ce = ce_accumulate(new_model, batch, grads);
  out.loss = out.ce;

  std::vector<RegItem> own;
  if (reg_batch.empty()) {
    own.reserve(batch.size());
    for (const auto& item : batch) own.push_back({item.features, item.gold, nullptr});
    reg_batch = own;
  }
  const std::size_t n = reg_batch.size();
  const std::size_t classes = new_model.num_classes();

  std::vector<ForwardTrace> old_owned(n);
  std::vector<const ForwardTrace*> old_traces(n);
  std::vector<ForwardTrace> new_traces(n);
  Matrix old_probs(n, classes);
  Matrix new_probs(n, classes);
  std::vector<std::size_t> old_preds(n), new_preds(n), gold(n);
  for (std::size_t i = 0; i < n; ++i) {
    const RegItem& item = reg_batch[i];
    if (item.gold >= classes) throw_invalid("label mismatch");
    if (item.old_trace == nullptr) {
      old_owned[i] = forward(old_model, *item.features);
      old_traces[i] = &old_owned[i];
    } else {
      old_traces[i] = item.old_trace;
    }
    new_traces[i] = forward(new_model, *item.features);
    std::copy(old_traces[i]->probs.begin(), old_traces[i]->probs.end(), old_probs.row(i).begin());
    std::copy(new_traces[i].probs.begin(), new_traces[i].probs.end(), new_probs.row(i).begin());
    old_preds[i] = argmax(old_traces[i]->probs);
    new_preds[i] = argmax(new_traces[i].probs);
    gold[i] = item.gold;
  }
  out.weights = reg_weights(cfg.policy, cfg.alpha, old_probs, new_probs, old_preds, new_preds, gold);

  const double inv_n = 1.0 / static_cast<double>(n);
  double penalty = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = out.weights[i];
    const bool want_grad = w > 0.0;
    const ProxyTerm term = proxy_term(*old_traces[i], new_traces[i], cfg, projection.matrix,
                                      alignment, want_grad);
    out.proxy_sum += term.value;
    if (!want_grad) continue;
    penalty += w * term.value;
    const double scale = w * inv_n;
    if (cfg.proxy == ProxyKind::kKlLogits) {
      std::vector<double> dlogits(term.dlogits);
      for (double& d : dlogits) d *= scale;
      accumulate_gradients(new_model, *reg_batch[i].features, new_traces[i], dlogits, {}, grads);
      continue;
    }
    const std::vector<double> zero_logits(classes, 0.0);
    const auto hidden = scatter_hidden(new_model, cfg, alignment, term.drep, scale);
    accumulate_gradients(new_model, *reg_batch[i].features, new_traces[i], zero_logits, hidden,
                         grads);
    if (projection.learned && projection_grad != nullptr) {
      for (std::size_t j = 0; j < term.new_rep.size(); ++j) {
        if (term.new_rep[j] == 0.0) continue;
        auto row = projection_grad->row(j);
        for (std::size_t k = 0; k < row.size(); ++k) {
          row[k] += scale * term.new_rep[j] * term.dmapped[k];
        }
      }
    }
  }
  out.penalty = penalty * inv_n;
  out.loss = out.ce + out.penalty;
  out.constraint_ok = out.proxy_sum <= cfg.c_constant;
  return out;
}

JointLossAndGrads joint_loss_and_grads(const Classifier& new_model, const Classifier& old_model,
                                       std::span<const BatchItem> batch,
                                       std::span<const RegItem> reg_batch,
                                       const UpdateConfig& cfg, const ProjectionState& projection,
                                       const AlignmentMap& alignment) {
  JointLossAndGrads out;
  out.grads = Gradients::zeros_like(new_model);
  Matrix* pgrad = nullptr;
  if (projection.learned) {
    out.projection_grad = Matrix(projection.matrix.rows(), projection.matrix.cols());
    pgrad = &out.projection_grad;
  }
  out.value = joint_loss_accumulate(new_model, old_model, batch, reg_batch, cfg, projection,
                                    alignment, out.grads, pgrad);
  return out;
}

namespace {

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
  }
  return order;
}

void momentum_step(std::span<double> params, std::span<double> velocity,
                   std::span<const double> grad, double lr, double mu) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    velocity[k] = mu * velocity[k] + grad[k];
    params[k] -= lr * velocity[k];
  }
}

}  // namespace

TrainResult train(const UpdateConfig& cfg, const Corpus& train_corpus,
                  const FeaturizerConfig& featurizer, const Classifier* old_model,
                  const Corpus* reg_corpus) {
  cfg.validate();
  featurizer.validate();
  if (train_corpus.empty()) throw_invalid("empty training corpus");
  if (cfg.alpha > 0.0 && old_model == nullptr) {
    throw_invalid("an old model is required when alpha > 0");
  }

  std::vector<std::size_t> dims{featurizer.dim};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(train_corpus.label_names().size());

  TrainResult result;
  result.model = Classifier::init(dims, cfg.seed, featurizer, train_corpus.label_names());
  Classifier& model = result.model;
  if (old_model != nullptr) check_compatible(model, *old_model);

  const auto features = featurize_all(train_corpus, featurizer);
  const auto gold = train_corpus.gold_indices();

  const bool distinct_reg = reg_corpus != nullptr && reg_corpus != &train_corpus;
  std::vector<SparseVector> reg_features_owned;
  std::vector<std::size_t> reg_gold_owned;
  if (distinct_reg) {
    if (reg_corpus->empty()) throw_invalid("empty regression corpus");
    if (reg_corpus->label_names() != train_corpus.label_names()) {
      throw_invalid("regression corpus label set differs from training corpus");
    }
    reg_features_owned = featurize_all(*reg_corpus, featurizer);
    reg_gold_owned = reg_corpus->gold_indices();
  }
  const auto& reg_features = distinct_reg ? reg_features_owned : features;
  const auto& reg_gold = distinct_reg ? reg_gold_owned : gold;

  AlignmentMap alignment;
  ProjectionState projection;
  std::vector<ForwardTrace> old_cache;
  if (old_model != nullptr) {
    if (cfg.proxy == ProxyKind::kL2AllLayers) {
      require_hidden(*old_model, "old");
      require_hidden(model, "new");
      alignment = layer_alignment(old_model->num_hidden(), model.num_hidden());
      result.alignment = alignment;
    }
    const auto [old_dim, new_dim] = representation_dims(*old_model, model, cfg.proxy, alignment);
    if (cfg.proxy != ProxyKind::kKlLogits) {
      projection.learned = cfg.projection == ProjectionMode::kLearned;
      projection.matrix = projection_init(old_dim, new_dim, cfg.projection,
                                          derive_seed(cfg.seed, kProjectionRole, 0));
    }
    old_cache.reserve(reg_features.size());
    for (const auto& x : reg_features) old_cache.push_back(forward(*old_model, x));
  }
  const bool penalised = old_model != nullptr && cfg.alpha > 0.0;

  Gradients grads = Gradients::zeros_like(model);
  Gradients velocity = Gradients::zeros_like(model);
  Matrix proj_grad(projection.matrix.rows(), projection.matrix.cols());
  Matrix proj_velocity(projection.matrix.rows(), projection.matrix.cols());

  const std::size_t n = train_corpus.size();
  const std::size_t bs = cfg.batch_size;
  std::vector<BatchItem> batch;
  std::vector<RegItem> reg_batch;
  std::size_t reg_cursor = 0;
  std::vector<std::size_t> reg_order;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    try {
      const auto order = shuffled_order(n, derive_seed(cfg.seed, kShuffleRole, epoch));
      if (distinct_reg) {
        reg_order = shuffled_order(reg_features.size(), derive_seed(cfg.seed, kRegShuffleRole, epoch));
        reg_cursor = 0;
      }
      double loss_sum = 0.0;
      double penalty_sum = 0.0;
      std::size_t batches = 0;
      for (std::size_t start = 0; start < n; start += bs) {
        const std::size_t end = std::min(n, start + bs);
        batch.clear();
        reg_batch.clear();
        for (std::size_t k = start; k < end; ++k) {
          const std::size_t idx = order[k];
          batch.push_back({&features[idx], gold[idx]});
          if (penalised && !distinct_reg) reg_batch.push_back({&features[idx], gold[idx], &old_cache[idx]});
        }
        if (penalised && distinct_reg) {
          for (std::size_t k = 0; k < batch.size(); ++k) {
            const std::size_t idx = reg_order[reg_cursor];
            reg_cursor = (reg_cursor + 1) % reg_order.size();
            reg_batch.push_back({&reg_features[idx], reg_gold[idx], &old_cache[idx]});
          }
        }

        grads.set_zero();
        double loss = 0.0;
        if (penalised) {
          if (projection.learned) std::fill(proj_grad.data().begin(), proj_grad.data().end(), 0.0);
          const JointLoss value =
              joint_loss_accumulate(model, *old_model, batch, reg_batch, cfg, projection, alignment,
                                    grads, projection.learned ? &proj_grad : nullptr);
          loss = value.loss;
          penalty_sum += value.penalty;
        } else {
          loss = ce_accumulate(model, batch, grads);
        }
        if (!std::isfinite(loss)) {
          throw_data("training diverged at epoch " + std::to_string(epoch + 1));
        }
        loss_sum += loss;
        ++batches;

        auto& layers = model.mutable_layers();
        for (std::size_t l = 0; l < layers.size(); ++l) {
          momentum_step(layers[l].weights.data(), velocity.layers[l].weights.data(),
                        grads.layers[l].weights.data(), cfg.learning_rate, cfg.momentum);
          momentum_step(layers[l].bias, velocity.layers[l].bias, grads.layers[l].bias,
                        cfg.learning_rate, cfg.momentum);
        }
        if (penalised && projection.learned) {
          momentum_step(projection.matrix.data(), proj_velocity.data(), proj_grad.data(),
                        cfg.learning_rate, cfg.momentum);
        }
      }

      EpochLog record;
      record.epoch = epoch + 1;
      record.loss = loss_sum / static_cast<double>(batches);
      record.penalty = penalty_sum / static_cast<double>(batches);
      std::size_t hits = 0;
      for (std::size_t i = 0; i < n; ++i) {
        hits += argmax(forward(model, features[i]).probs) == gold[i] ? 1 : 0;
      }
      record.acc = static_cast<double>(hits) / static_cast<double>(n);
      if (old_model != nullptr) {
        double proxy = 0.0;
        for (std::size_t i = 0; i < reg_features.size(); ++i) {
          const ForwardTrace trace = forward(model, reg_features[i]);
          proxy += proxy_term(old_cache[i], trace, cfg, projection.matrix, alignment, false).value;
        }
        record.proxy = proxy;
        record.constraint_ok = proxy <= cfg.c_constant;
      }
      const bool finite = std::all_of(model.layers().begin(), model.layers().end(),
                                      [](const DenseLayer& l) { return l.weights.all_finite(); });
      if (!finite) throw_data("training diverged at epoch " + std::to_string(epoch + 1));
      result.log.push_back(record);
    } catch (const Error& e) {
      // overflowing weights surface as non-finite logits
      if (std::string_view(e.what()) != "non-finite input") throw;
      throw_data("training diverged at epoch " + std::to_string(epoch + 1));
    }
  }
  if (penalised && cfg.proxy != ProxyKind::kKlLogits) result.projection = projection;
  return result;
}

nlohmann::ordered_json update_config_to_json(const UpdateConfig& cfg) {
  nlohmann::ordered_json config;
  config["alpha"] = cfg.alpha;
  config["c"] = cfg.c_constant;
  config["proxy"] = to_string(cfg.proxy);
  config["policy"] = to_string(cfg.policy);
  config["projection"] = to_string(cfg.projection);
  config["squared_l2"] = cfg.squared_l2;
  config["epochs"] = cfg.epochs;
  config["batch_size"] = cfg.batch_size;
  config["learning_rate"] = cfg.learning_rate;
  config["momentum"] = cfg.momentum;
  config["seed"] = cfg.seed;
  config["hidden"] = cfg.hidden_dims;
  return config;
}

UpdateConfig update_config_from_json(const nlohmann::json& j, const UpdateConfig& base) {
  if (!j.is_object()) throw_invalid("update config must be an object");
  UpdateConfig cfg = base;
  try {
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.c_constant = j.value("c", cfg.c_constant);
    if (j.contains("proxy")) cfg.proxy = parse_proxy(j["proxy"].get<std::string>());
    if (j.contains("policy")) cfg.policy = parse_policy(j["policy"].get<std::string>());
    if (j.contains("projection")) {
      cfg.projection = parse_projection(j["projection"].get<std::string>());
    }
    cfg.squared_l2 = j.value("squared_l2", cfg.squared_l2);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.hidden_dims = j.value("hidden", cfg.hidden_dims);
  } catch (const nlohmann::json::exception& e) {
    throw_invalid(std::string("update config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void write_training_log(std::ostream& out, const UpdateConfig& cfg, const TrainResult& result) {
  auto config = update_config_to_json(cfg);
  config["dims"] = result.model.layer_dims();
  if (result.alignment) {
    auto pairs = nlohmann::ordered_json::array();
    for (const auto& [j, i] : result.alignment->pairs) pairs.push_back({j, i});
    config["alignment"] = std::move(pairs);
  }
  out << nlohmann::ordered_json{{"config", config}}.dump() << '\n';
  for (const auto& e : result.log) {
    nlohmann::ordered_json record;
    record["epoch"] = e.epoch;
    record["loss"] = e.loss;
    record["acc"] = e.acc;
    record["penalty"] = e.penalty;
    record["proxy"] = e.proxy;
    record["constraint_ok"] = e.constraint_ok;
    out << record.dump() << '\n';
  }
}

}  // namespace refit
