#include <cmath>
#include <memory>
#include <sstream>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "oracles/jacobi.hpp"
#include "refit/analysis.hpp"
#include "refit/error.hpp"
#include "support.hpp"

using namespace refit;
using ::testing::HasSubstr;

namespace {

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

const std::vector<std::string> kLabels = {"a", "b"};

std::vector<std::string> ids_for(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("e" + std::to_string(i));
  return ids;
}

// Confident but not one-hot distributions around the given predictions.
PredictionSet from_preds(const std::vector<std::size_t>& preds, double confidence = 0.9) {
  Matrix p(preds.size(), 2);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    p(i, preds[i]) = confidence;
    p(i, 1 - preds[i]) = 1.0 - confidence;
  }
  return PredictionSet(ids_for(preds.size()), p, kLabels);
}

std::vector<std::size_t> random_preds(Rng& rng, std::size_t n) {
  std::vector<std::size_t> v(n);
  for (auto& x : v) x = rng.below(2);
  return v;
}

Ensemble random_ensemble(Rng& rng, std::size_t k) {
  std::vector<std::shared_ptr<const Classifier>> members;
  for (std::size_t i = 0; i < k; ++i) {
    members.push_back(std::make_shared<Classifier>(test_support::random_model({16, 4, 3}, rng)));
  }
  return Ensemble(std::move(members));
}

}  // namespace

TEST(Ensemble, AveragesDistributions) {
  const std::vector<std::vector<double>> members = {{0.8, 0.2}, {0.4, 0.6}};
  const auto avg = average_distributions(members);
  EXPECT_NEAR(avg[0], 0.6, 1e-15);
  EXPECT_NEAR(avg[1], 0.4, 1e-15);
  EXPECT_EQ(error_of([] { average_distributions(std::vector<std::vector<double>>{}); }),
            "empty ensemble");
  EXPECT_EQ(error_of([] { Ensemble(std::vector<std::shared_ptr<const Classifier>>{}); }),
            "empty ensemble");
}

TEST(Ensemble, SingleMemberReproducesModel) {
  Rng rng(1);
  const auto m = test_support::random_model({16, 4, 3}, rng);
  const Ensemble e(m);
  for (int i = 0; i < 20; ++i) {
    const auto x = test_support::random_sparse(rng, 16, 4);
    EXPECT_EQ(ensemble_predict(e, x), forward(m, x).probs);
  }
}

TEST(Ensemble, IdenticalMembersReproduceModel) {
  Rng rng(2);
  const auto m = std::make_shared<Classifier>(test_support::random_model({16, 4, 3}, rng));
  const Ensemble e(std::vector<std::shared_ptr<const Classifier>>(4, m));
  for (int i = 0; i < 20; ++i) {
    const auto x = test_support::random_sparse(rng, 16, 4);
    const auto p = ensemble_predict(e, x), q = forward(*m, x).probs;
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(p[c], q[c], 1e-15);
  }
}

TEST(Ensemble, OutputInsideMemberHull) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto e = random_ensemble(rng, 2 + rng.below(4));
    const auto x = test_support::random_sparse(rng, 16, 4);
    const auto p = ensemble_predict(e, x);
    for (std::size_t c = 0; c < 3; ++c) {
      double lo = 1.0, hi = 0.0;
      for (const auto& m : e.members()) {
        const double v = forward(*m, x).probs[c];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      EXPECT_GE(p[c], lo - 1e-15);
      EXPECT_LE(p[c], hi + 1e-15);
    }
  }
}

TEST(Ensemble, MembersMustAgree) {
  const auto a = std::make_shared<Classifier>(Classifier::init({16, 2}, 1, {}, {"x", "y"}));
  const auto b = std::make_shared<Classifier>(Classifier::init({16, 2}, 1, {}, {"y", "x"}));
  EXPECT_THROW(Ensemble({a, b}), Error);
}

TEST(Pairwise, DiagonalIsZeroAndMatchesBruteForce) {
  Rng rng(4);
  const std::size_t n = 50;
  std::vector<std::size_t> gold = random_preds(rng, n);
  std::vector<PredictionSet> sets;
  std::vector<std::vector<std::size_t>> raw;
  for (int k = 0; k < 4; ++k) {
    raw.push_back(random_preds(rng, n));
    sets.push_back(from_preds(raw.back()));
  }
  const auto p = pairwise_nfr(sets, sets, gold);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(p.nfr(i, i), 0.0);
    for (std::size_t j = 0; j < 4; ++j) {
      std::size_t nf = 0;
      for (std::size_t e = 0; e < n; ++e) nf += raw[i][e] == gold[e] && raw[j][e] != gold[e];
      EXPECT_DOUBLE_EQ(p.nfr(i, j), static_cast<double>(nf) / n);
      EXPECT_EQ(p.values[i * 4 + j], p.nfr(i, j));
    }
  }
}

TEST(Pairwise, AllWrongOldGivesZeroMatrix) {
  const std::vector<std::size_t> gold = {0, 1, 0, 1};
  const std::vector<PredictionSet> old_sets = {from_preds({1, 0, 1, 0}), from_preds({1, 0, 1, 0})};
  const std::vector<PredictionSet> new_sets = {from_preds({0, 0, 0, 0}), from_preds({1, 1, 0, 0})};
  const auto p = pairwise_nfr(old_sets, new_sets, gold);
  for (double v : p.values) EXPECT_EQ(v, 0.0);
}

TEST(Centric, FixtureMatrix) {
  Matrix m(3, 3, std::vector<double>{0.0, 0.1, 0.2, 0.0, 0.0, 0.3, 0.4, 0.1, 0.0});
  const auto sel = centric_from_matrix(m);
  ASSERT_EQ(sel.avg_nfr.size(), 3u);
  EXPECT_NEAR(sel.avg_nfr[0], 0.2, 1e-15);
  EXPECT_NEAR(sel.avg_nfr[1], 0.1, 1e-15);
  EXPECT_NEAR(sel.avg_nfr[2], 0.25, 1e-15);
  EXPECT_EQ(sel.index, 1u);
}

TEST(Centric, IdenticalCandidatesPickFirst) {
  const std::vector<std::size_t> gold = {0, 1, 1, 0};
  const std::vector<PredictionSet> c(3, from_preds({0, 1, 0, 0}));
  const auto sel = centric_select(c, gold);
  EXPECT_EQ(sel.index, 0u);
  for (double v : sel.avg_nfr) EXPECT_EQ(v, 0.0);
}

TEST(Centric, BruteForceOnRandomPools) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t k = 2 + rng.below(5), n = 40;
    const auto gold = random_preds(rng, n);
    std::vector<PredictionSet> sets;
    for (std::size_t i = 0; i < k; ++i) sets.push_back(from_preds(random_preds(rng, n)));
    const auto sel = centric_select(sets, gold);
    const auto p = pairwise_nfr(sets, sets, gold);
    std::size_t best = 0;
    double best_v = 1e9;
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i)
        if (i != j) s += p.nfr(i, j);
      s /= static_cast<double>(k - 1);
      EXPECT_NEAR(sel.avg_nfr[j], s, 1e-15);
      if (s < best_v) {
        best_v = s;
        best = j;
      }
    }
    EXPECT_EQ(sel.index, best);
  }
}

TEST(Centric, NeedsTwoCandidates) {
  const std::vector<std::size_t> gold = {0};
  const std::vector<PredictionSet> one = {from_preds({0})};
  EXPECT_EQ(error_of([&] { centric_select(one, gold); }), "need >=2 candidates");
  EXPECT_EQ(error_of([] { centric_from_matrix(Matrix(1, 1)); }), "need >=2 candidates");
}

TEST(Embedding, LengthAndOneHot) {
  const auto s = from_preds({0, 1, 1});
  const auto e = prediction_embedding(s);
  ASSERT_EQ(e.size(), 6u);
  EXPECT_DOUBLE_EQ(e[0], 0.9);
  EXPECT_DOUBLE_EQ(e[3], 0.9);
  EXPECT_EQ(prediction_embedding(s, true), (std::vector<double>{1, 0, 0, 1, 0, 1}));
}

TEST(Scatter, MatchesJacobiProjection) {
  Rng rng(6);
  const std::size_t models = 7, n = 5;
  std::vector<PredictionSet> sets;
  std::vector<std::string> ids;
  std::vector<ModelTag> tags;
  std::vector<std::vector<double>> rows;
  for (std::size_t m = 0; m < models; ++m) {
    Matrix p(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      p(i, 0) = rng.uniform(0.05, 0.95);
      p(i, 1) = 1.0 - p(i, 0);
    }
    sets.emplace_back(ids_for(n), p, kLabels);
    rows.push_back(prediction_embedding(sets.back()));
    ids.push_back("m" + std::to_string(m));
    tags.push_back(ModelTag::kNewSingle);
  }
  const auto sc = pca_scatter(sets, ids, tags);
  const auto eig = oracle::jacobi_eigen(oracle::covariance(rows));
  std::vector<double> mu(rows[0].size(), 0.0);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < r.size(); ++j) mu[j] += r[j] / models;
  for (int k = 0; k < 2; ++k) {
    EXPECT_NEAR(sc.variances[k], eig.values[k], 1e-8);
    double sign = 0.0;
    std::vector<double> proj(models, 0.0);
    for (std::size_t m = 0; m < models; ++m) {
      for (std::size_t j = 0; j < mu.size(); ++j) proj[m] += (rows[m][j] - mu[j]) * eig.vectors[k][j];
      const double got = k == 0 ? sc.points[m].x : sc.points[m].y;
      sign += got * proj[m];
    }
    const double s = sign < 0 ? -1.0 : 1.0;
    for (std::size_t m = 0; m < models; ++m) {
      const double got = k == 0 ? sc.points[m].x : sc.points[m].y;
      EXPECT_NEAR(got, s * proj[m], 1e-8);
    }
  }
  EXPECT_FALSE(sc.warning.has_value());
}

TEST(Scatter, DuplicatesCoincideAndIdenticalPoolWarns) {
  Rng rng(7);
  std::vector<PredictionSet> sets = {from_preds(random_preds(rng, 10)),
                                     from_preds(random_preds(rng, 10), 0.7)};
  sets.push_back(sets[0]);
  const std::vector<std::string> ids = {"a", "b", "a2"};
  const std::vector<ModelTag> tags(3, ModelTag::kNewSingle);
  const auto sc = pca_scatter(sets, ids, tags);
  EXPECT_EQ(sc.points[0].x, sc.points[2].x);
  EXPECT_EQ(sc.points[0].y, sc.points[2].y);

  const std::vector<PredictionSet> same(3, sets[0]);
  const auto flat = pca_scatter(same, ids, tags);
  ASSERT_TRUE(flat.warning.has_value());
  for (const auto& p : flat.points) {
    EXPECT_EQ(p.x, 0.0);
    EXPECT_EQ(p.y, 0.0);
  }
  EXPECT_THROW(pca_scatter(std::span(sets).first(2), std::span(ids).first(2),
                           std::span(tags).first(2)),
               Error);
}

TEST(Scatter, MeanPairwiseDistanceByTag) {
  Scatter sc;
  sc.points = {{"a", ModelTag::kNewSingle, 0, 0},
               {"b", ModelTag::kNewSingle, 3, 4},
               {"c", ModelTag::kNewSingle, 0, 4},
               {"d", ModelTag::kNewEnsemble, 1, 1}};
  EXPECT_NEAR(mean_pairwise_distance(sc, ModelTag::kNewSingle), (5.0 + 4.0 + 3.0) / 3.0, 1e-15);
  EXPECT_EQ(mean_pairwise_distance(sc, ModelTag::kNewEnsemble), 0.0);
}

TEST(Stats, HistogramBins) {
  const std::vector<double> v = {0.0, 0.004, 0.005, 0.015, 0.0149};
  const auto h = histogram(v);
  ASSERT_EQ(h.size(), 4u);
  EXPECT_EQ(h[0].count, 2u);
  EXPECT_EQ(h[1].count, 1u);
  EXPECT_EQ(h[2].count, 1u);
  EXPECT_EQ(h[3].count, 1u);
  EXPECT_DOUBLE_EQ(h[3].low, 0.015);
  EXPECT_TRUE(histogram(std::vector<double>{}).empty());
  std::size_t total = 0;
  for (const auto& b : h) total += b.count;
  EXPECT_EQ(total, v.size());
}

TEST(Stats, MeanVarianceMedian) {
  const std::vector<double> v = {1, 2, 3, 4};
  EXPECT_EQ(mean(v), 2.5);
  EXPECT_NEAR(sample_variance(v), 5.0 / 3.0, 1e-15);
  EXPECT_EQ(sample_variance(std::vector<double>{7}), 0.0);
  EXPECT_EQ(median(v), 2.5);
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_THROW(median({}), Error);
}

TEST(Csv, Formats) {
  std::ostringstream pw;
  const std::vector<std::string> r = {"o0"}, c = {"n0", "n1"};
  write_pairwise_csv(pw, r, c, Matrix(1, 2, std::vector<double>{0.01, 0.125}));
  EXPECT_EQ(pw.str(), "old\\new,n0,n1\no0,0.010000,0.125000\n");

  std::ostringstream h;
  const auto bins = histogram(std::vector<double>{0.001, 0.006});
  write_histogram_csv(h, bins);
  EXPECT_EQ(h.str(), "bin_low,bin_high,count\n0.0000,0.0050,1\n0.0050,0.0100,1\n");

  Scatter sc;
  sc.points = {{"single-0", ModelTag::kNewSingle, 0.5, -0.25}};
  std::ostringstream s;
  write_scatter_csv(s, sc);
  EXPECT_EQ(s.str(), "model_id,tag,x,y\nsingle-0,new_single,0.500000000,-0.250000000\n");

  sc.points.push_back({"centric", ModelTag::kCentric, 0.0, 0.0});
  sc.points.push_back({"ens", ModelTag::kNewEnsemble, 1.0, 0.0});
  sc.points.push_back({"old", ModelTag::kOld, 0.0, 1.0});
  std::ostringstream svg;
  write_scatter_svg(svg, sc);
  const auto text = svg.str();
  EXPECT_THAT(text, HasSubstr("<svg"));
  EXPECT_THAT(text, HasSubstr("<circle"));
  EXPECT_THAT(text, HasSubstr("<title>centric</title>"));
  EXPECT_THAT(text, HasSubstr("</svg>"));
}
