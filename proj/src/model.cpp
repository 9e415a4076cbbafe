#include "refit/model.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "refit/error.hpp"
#include "refit/serialization.hpp"

namespace refit {

using nlohmann::json;

nlohmann::json featurizer_to_json(const FeaturizerConfig& cfg) {
  nlohmann::ordered_json j;
  j["dim"] = cfg.dim;
  j["ngram_max"] = cfg.ngram_max;
  j["lowercase"] = cfg.lowercase;
  j["pair_mode"] = to_string(cfg.pair_mode);
  return json(j);
}

FeaturizerConfig featurizer_from_json(const nlohmann::json& j) {
  FeaturizerConfig cfg;
  if (!j.is_object()) throw_invalid("featurizer config must be an object");
  try {
    cfg.dim = j.value("dim", cfg.dim);
    cfg.ngram_max = j.value("ngram_max", cfg.ngram_max);
    cfg.lowercase = j.value("lowercase", cfg.lowercase);
    if (j.contains("pair_mode")) cfg.pair_mode = parse_pair_mode(j["pair_mode"].get<std::string>());
  } catch (const json::exception& e) {
    throw_invalid(std::string("featurizer config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

Classifier Classifier::init(std::vector<std::size_t> layer_dims, std::uint64_t seed,
                            FeaturizerConfig featurizer, std::vector<std::string> label_names) {
  if (layer_dims.size() < 2) throw_invalid("invalid architecture");
  for (std::size_t d : layer_dims) {
    if (d == 0) throw_invalid("invalid architecture");
  }
  if (!label_names.empty() && label_names.size() != layer_dims.back()) {
    throw_invalid("invalid architecture: label count differs from output width");
  }
  Classifier m;
  m.dims_ = std::move(layer_dims);
  m.seed_ = seed;
  m.featurizer_ = featurizer;
  m.labels_ = std::move(label_names);
  if (m.labels_.empty()) {
    for (std::size_t c = 0; c < m.dims_.back(); ++c) m.labels_.push_back(std::to_string(c));
  }
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < m.dims_.size(); ++l) {
    const std::size_t fan_in = m.dims_[l];
    const std::size_t fan_out = m.dims_[l + 1];
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer{Matrix(fan_in, fan_out), std::vector<double>(fan_out, 0.0)};
    for (double& w : layer.weights.data()) w = rng.uniform(-s, s);
    m.layers_.push_back(std::move(layer));
  }
  return m;
}

std::size_t Classifier::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weights.size() + layer.bias.size();
  return n;
}

std::vector<double> Classifier::parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& layer : layers_) {
    flat.insert(flat.end(), layer.weights.data().begin(), layer.weights.data().end());
    flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
  }
  return flat;
}

void Classifier::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw_invalid("parameter vector length mismatch");
  std::size_t k = 0;
  for (auto& layer : layers_) {
    for (double& w : layer.weights.data()) w = flat[k++];
    for (double& b : layer.bias) b = flat[k++];
  }
}

namespace {

void hash_doubles(std::uint64_t& h, std::span<const double> values) {
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
    h = fnv1a64(bytes, h);
  }
}

}  // namespace

std::uint64_t Classifier::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& layer : layers_) hash_doubles(h, layer.weights.data());
  for (const auto& layer : layers_) hash_doubles(h, layer.bias);
  return h;
}

ForwardTrace forward(const Classifier& model, const SparseVector& x) {
  const auto& layers = model.layers();
  ForwardTrace trace;
  std::vector<double> current;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const DenseLayer& layer = layers[l];
    std::vector<double> out = layer.bias;
    if (l == 0) {
      for (const auto& [index, value] : x.entries) {
        if (index >= model.input_dim()) throw_invalid("feature dim mismatch");
        const auto row = layer.weights.row(index);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += value * row[j];
      }
    } else {
      for (std::size_t i = 0; i < current.size(); ++i) {
        const double v = current[i];
        const auto row = layer.weights.row(i);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += v * row[j];
      }
    }
    if (l + 1 < layers.size()) {
      for (double& v : out) v = std::tanh(v);
      trace.activations.push_back(out);
      current = std::move(out);
    } else {
      trace.logits = std::move(out);
    }
  }
  trace.probs = softmax(trace.logits);
  return trace;
}

Gradients Gradients::zeros_like(const Classifier& model) {
  Gradients g;
  for (const auto& layer : model.layers()) {
    g.layers.push_back({Matrix(layer.weights.rows(), layer.weights.cols()),
                        std::vector<double>(layer.bias.size(), 0.0)});
  }
  return g;
}

void Gradients::set_zero() {
  for (auto& layer : layers) {
    std::fill(layer.weights.data().begin(), layer.weights.data().end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
}

std::vector<double> Gradients::flatten() const {
  std::vector<double> flat;
  for (const auto& layer : layers) {
    flat.insert(flat.end(), layer.weights.data().begin(), layer.weights.data().end());
    flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
  }
  return flat;
}

void accumulate_gradients(const Classifier& model, const SparseVector& x,
                          const ForwardTrace& trace, std::span<const double> dlogits,
                          std::span<const std::vector<double>> hidden_grads, Gradients& grads) {
  const auto& layers = model.layers();
  std::vector<double> delta(dlogits.begin(), dlogits.end());
  for (std::size_t l = layers.size(); l-- > 0;) {
    DenseLayer& g = grads.layers[l];
    for (std::size_t j = 0; j < delta.size(); ++j) g.bias[j] += delta[j];
    if (l == 0) {
      for (const auto& [index, value] : x.entries) {
        auto row = g.weights.row(index);
        for (std::size_t j = 0; j < delta.size(); ++j) row[j] += value * delta[j];
      }
      break;
    }
    const auto& input = trace.activations[l - 1];
    const Matrix& w = layers[l].weights;
    std::vector<double> upstream(input.size(), 0.0);
    for (std::size_t i = 0; i < input.size(); ++i) {
      auto grow = g.weights.row(i);
      const auto wrow = w.row(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < delta.size(); ++j) {
        grow[j] += input[i] * delta[j];
        acc += wrow[j] * delta[j];
      }
      upstream[i] = acc;
    }
    if (!hidden_grads.empty() && !hidden_grads[l - 1].empty()) {
      const auto& extra = hidden_grads[l - 1];
      for (std::size_t i = 0; i < upstream.size(); ++i) upstream[i] += extra[i];
    }
    for (std::size_t i = 0; i < upstream.size(); ++i) {
      upstream[i] *= 1.0 - input[i] * input[i];
    }
    delta = std::move(upstream);
  }
}

LossAndGrads ce_loss_and_grads(const Classifier& model, std::span<const BatchItem> batch) {
  if (batch.empty()) throw_invalid("empty batch");
  LossAndGrads out{0.0, Gradients::zeros_like(model)};
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<double> dlogits(model.num_classes());
  for (const auto& item : batch) {
    if (item.gold >= model.num_classes()) throw_invalid("label mismatch");
    const ForwardTrace trace = forward(model, *item.features);
    out.loss -= std::log(std::max(trace.probs[item.gold], 1e-300));
    for (std::size_t c = 0; c < dlogits.size(); ++c) {
      dlogits[c] = scale * (trace.probs[c] - (c == item.gold ? 1.0 : 0.0));
    }
    accumulate_gradients(model, *item.features, trace, dlogits, {}, out.grads);
  }
  out.loss *= scale;
  return out;
}

PredictionSet predict(const Classifier& model, const Corpus& corpus,
                      std::span<const SparseVector> features) {
  if (features.size() != corpus.size()) throw_invalid("features do not match corpus");
  Matrix probs(corpus.size(), model.num_classes());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto trace = forward(model, features[i]);
    std::copy(trace.probs.begin(), trace.probs.end(), probs.row(i).begin());
  }
  return PredictionSet(corpus.ids(), std::move(probs), model.label_names());
}

PredictionSet predict(const Classifier& model, const Corpus& corpus) {
  const auto features = featurize_all(corpus, model.featurizer());
  return predict(model, corpus, features);
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string serialize_model(const Classifier& model) {
  nlohmann::ordered_json j;
  j["version"] = kModelFormatVersion;
  j["dims"] = model.layer_dims();
  j["seed"] = model.seed();
  j["featurizer"] = featurizer_to_json(model.featurizer());
  j["labels"] = model.label_names();
  auto weights = nlohmann::ordered_json::array();
  auto biases = nlohmann::ordered_json::array();
  for (const auto& layer : model.layers()) {
    weights.push_back(std::vector<double>(layer.weights.data().begin(), layer.weights.data().end()));
    biases.push_back(layer.bias);
  }
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
  j["checksum"] = hex64(model.checksum());
  return j.dump() + "\n";
}

void save_model(const Classifier& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_invalid("cannot write model: " + path.string());
  out << serialize_model(model);
}

Classifier deserialize_model(const std::string& text,
                             const std::optional<FeaturizerConfig>& expected) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error&) {
    throw_data("corrupt model file");
  }
  if (!j.is_object() || !j.contains("version")) throw_data("corrupt model file");
  if (!j["version"].is_number_integer() || j["version"].get<int>() != kModelFormatVersion) {
    throw_data("unsupported model version");
  }
  Classifier model;
  try {
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    const auto featurizer = featurizer_from_json(j.at("featurizer"));
    auto labels = j.at("labels").get<std::vector<std::string>>();
    model = Classifier::init(dims, j.at("seed").get<std::uint64_t>(), featurizer, std::move(labels));
    const auto weights = j.at("weights").get<std::vector<std::vector<double>>>();
    const auto biases = j.at("biases").get<std::vector<std::vector<double>>>();
    auto& layers = model.mutable_layers();
    if (weights.size() != layers.size() || biases.size() != layers.size()) {
      throw_data("corrupt model file");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (weights[l].size() != layers[l].weights.size() ||
          biases[l].size() != layers[l].bias.size()) {
        throw_data("corrupt model file");
      }
      std::copy(weights[l].begin(), weights[l].end(), layers[l].weights.data().begin());
      layers[l].bias = biases[l];
    }
    if (j.at("checksum").get<std::string>() != hex64(model.checksum())) {
      throw_data("corrupt model file");
    }
  } catch (const json::exception&) {
    throw_data("corrupt model file");
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kDataIntegrity) throw;
    throw_data(std::string("corrupt model file: ") + e.what());
  }
  if (expected && !(model.featurizer() == *expected)) throw_invalid("feature dim mismatch");
  return model;
}

Classifier load_model(const std::filesystem::path& path,
                      const std::optional<FeaturizerConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_invalid("cannot open model: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str(), expected);
}

}  // namespace refit
