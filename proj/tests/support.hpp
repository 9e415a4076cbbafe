#pragma once

// Random models and batches for gradient checks, shared by the unit and
// acceptance suites.

#include <algorithm>
#include <map>
#include <vector>

#include "refit/model.hpp"
#include "refit/numerics.hpp"
#include "refit/update.hpp"

namespace test_support {

using namespace refit;

inline SparseVector random_sparse(Rng& rng, std::size_t dim, std::size_t nnz) {
  std::map<std::uint32_t, double> entries;
  while (entries.size() < nnz) {
    entries[static_cast<std::uint32_t>(rng.below(dim))] = rng.uniform(-1.0, 1.0);
  }
  SparseVector v;
  v.entries.assign(entries.begin(), entries.end());
  return v;
}

// Glorot weights from `seed` plus random biases, so no parameter sits at an
// initial zero.
inline Classifier random_model(std::vector<std::size_t> dims, Rng& rng) {
  Classifier m = Classifier::init(std::move(dims), rng.next());
  for (auto& layer : m.mutable_layers()) {
    for (double& b : layer.bias) b = rng.uniform(-0.5, 0.5);
  }
  return m;
}

struct GradCase {
  Classifier old_model;
  Classifier new_model;
  std::vector<SparseVector> xs;
  std::vector<BatchItem> batch;
  UpdateConfig cfg;
  ProjectionState projection;
  AlignmentMap alignment;
};

// Old and new models of different widths and depths over a shared input;
// gold labels mostly follow the old model so every gating policy has live
// examples.
inline GradCase make_grad_case(Rng& rng, ProxyKind proxy, RegPolicy policy) {
  GradCase g;
  const std::size_t input = 24, classes = 2 + rng.below(2);
  const std::size_t old_depth = 1 + rng.below(2), new_depth = 1 + rng.below(3);
  std::vector<std::size_t> od = {input}, nd = {input};
  for (std::size_t l = 0; l < old_depth; ++l) od.push_back(3 + rng.below(4));
  for (std::size_t l = 0; l < new_depth; ++l) nd.push_back(3 + rng.below(4));
  od.push_back(classes);
  nd.push_back(classes);
  g.old_model = random_model(od, rng);
  g.new_model = random_model(nd, rng);

  g.cfg.proxy = proxy;
  g.cfg.policy = policy;
  g.cfg.alpha = rng.uniform(0.5, 2.0);
  g.cfg.squared_l2 = rng.bernoulli(0.3);
  g.alignment = layer_alignment(old_depth, new_depth);

  const std::size_t n = 8;
  g.xs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) g.xs.push_back(random_sparse(rng, input, 5));
  for (std::size_t i = 0; i < n; ++i) {
    const auto old_pred = argmax(forward(g.old_model, g.xs[i]).probs);
    const std::size_t gold = rng.bernoulli(0.7) ? old_pred : rng.below(classes);
    g.batch.push_back({&g.xs[i], gold});
  }
  if (proxy != ProxyKind::kKlLogits) {
    const auto [od_rep, nd_rep] = representation_dims(g.old_model, g.new_model, proxy, g.alignment);
    g.projection.learned = true;
    g.projection.matrix = projection_init(od_rep, nd_rep, ProjectionMode::kLearned, rng.next());
  }
  return g;
}

// The penalty gates are piecewise constant in the parameters; they are held
// at their value at the base point, like the analytic gradient does.
inline double joint_grad_error(const GradCase& g) {
  const std::size_t n_model = g.new_model.parameter_count();
  std::vector<double> point = g.new_model.parameters();
  const bool learned = g.projection.learned;
  if (learned) point.insert(point.end(), g.projection.matrix.data().begin(), g.projection.matrix.data().end());

  auto unpack = [&](std::span<const double> flat, Classifier& m, ProjectionState& p) {
    m = g.new_model;
    m.set_parameters(flat.subspan(0, n_model));
    p = g.projection;
    if (learned) std::copy(flat.begin() + static_cast<std::ptrdiff_t>(n_model), flat.end(), p.matrix.data().begin());
  };
  const auto base = joint_loss_and_grads(g.new_model, g.old_model, g.batch, {}, g.cfg,
                                         g.projection, g.alignment);
  UpdateConfig frozen = g.cfg;
  auto loss = [&](std::span<const double> flat) {
    Classifier m;
    ProjectionState p;
    unpack(flat, m, p);
    // Re-evaluate with the base point's gating weights.
    double ce = ce_loss_and_grads(m, g.batch).loss;
    double penalty = 0.0;
    for (std::size_t i = 0; i < g.batch.size(); ++i) {
      const double w = base.value.weights[i];
      if (w == 0.0) continue;
      const auto to = forward(g.old_model, *g.batch[i].features);
      const auto tn = forward(m, *g.batch[i].features);
      double v = 0.0;
      if (frozen.proxy == ProxyKind::kKlLogits) {
        v = kl_divergence(to.probs, tn.probs);
      } else {
        const auto orep = old_representation(to, frozen.proxy, g.alignment);
        const auto mapped = project(new_representation(tn, frozen.proxy, g.alignment), p.matrix);
        double sq = 0.0;
        for (std::size_t k = 0; k < mapped.size(); ++k) sq += (orep[k] - mapped[k]) * (orep[k] - mapped[k]);
        v = frozen.squared_l2 ? sq : std::sqrt(sq);
      }
      penalty += w * v;
    }
    return ce + penalty / static_cast<double>(g.batch.size());
  };
  auto grad = [&](std::span<const double> flat) {
    Classifier m;
    ProjectionState p;
    unpack(flat, m, p);
    const auto r = joint_loss_and_grads(m, g.old_model, g.batch, {}, g.cfg, p, g.alignment);
    auto out = r.grads.flatten();
    if (learned) out.insert(out.end(), r.projection_grad.data().begin(), r.projection_grad.data().end());
    return out;
  };
  return grad_check(loss, grad, point);
}

inline double ce_grad_error(Rng& rng) {
  const std::size_t input = 24, classes = 2 + rng.below(3);
  std::vector<std::size_t> dims = {input};
  const std::size_t depth = rng.below(3);
  for (std::size_t l = 0; l < depth; ++l) dims.push_back(3 + rng.below(5));
  dims.push_back(classes);
  const Classifier model = random_model(dims, rng);
  std::vector<SparseVector> xs;
  for (int i = 0; i < 8; ++i) xs.push_back(random_sparse(rng, input, 5));
  std::vector<BatchItem> batch;
  for (const auto& x : xs) batch.push_back({&x, static_cast<std::size_t>(rng.below(classes))});
  auto loss = [&](std::span<const double> flat) {
    Classifier m = model;
    m.set_parameters(flat);
    return ce_loss_and_grads(m, batch).loss;
  };
  auto grad = [&](std::span<const double> flat) {
    Classifier m = model;
    m.set_parameters(flat);
    return ce_loss_and_grads(m, batch).grads.flatten();
  };
  return grad_check(loss, grad, model.parameters());
}

}  // namespace test_support
