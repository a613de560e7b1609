#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "lftd/loss.hpp"
#include "lftd/training.hpp"
#include "support.hpp"

using namespace lftd;
using test::make_rng;
using test::rand_matrix;
using test::rand_vector;

namespace {

// Small in-memory dataset: `identities` prototypes, `tracks_per` tracks per
// identity, track k of every identity in video "v<k>".
TrackDataset toy_dataset(int identities, int tracks_per, Index frames, Index dim,
                         double noise, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  TrackDataset ds;
  ds.feature_dim = dim;
  int counter = 0;
  for (int i = 0; i < identities; ++i) {
    VecX proto = rand_vector(rng, dim);
    proto /= proto.norm();
    for (int k = 0; k < tracks_per; ++k) {
      TrackData td;
      td.meta.track_id = "t" + std::to_string(counter++);
      td.meta.identity = "id" + std::to_string(i);
      td.meta.session = "s0";
      td.meta.video = "v" + std::to_string(k);
      td.meta.camera = Camera::left;
      td.meta.feature_path = "unused";
      td.meta.frame_count = static_cast<int>(frames);
      td.features.resize(frames, dim);
      for (Index f = 0; f < frames; ++f) {
        VecX v = proto;
        for (Index d = 0; d < dim; ++d) v(d) += noise * normal(rng);
        td.features.row(f) = (v / v.norm()).transpose();
      }
      td.source_rows.assign(frames, 0);
      for (Index f = 0; f < frames; ++f) td.source_rows[f] = f;
      ds.tracks.push_back(std::move(td));
    }
  }
  return ds;
}

bool params_equal(const AggregatorParams& a, const AggregatorParams& b) {
  return a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2;
}

}  // namespace

TEST_CASE("contrastive loss values") {
  CHECK(contrastive_loss(0.0, 1, 2.0) == 0.0);
  CHECK(contrastive_loss(1.0, 1, 2.0) == 1.0);
  CHECK(contrastive_loss(0.5, 0, 2.0) == 2.25);
  CHECK(contrastive_loss(3.0, 0, 2.0) == 0.0);
  CHECK_THROWS_AS(contrastive_loss(-0.1, 1, 2.0), ValidationError);
  CHECK_THROWS_AS(contrastive_loss(1.0, 2, 2.0), ValidationError);
  CHECK_THROWS_AS(contrastive_loss(1.0, 1, 0.0), ValidationError);
}

TEST_CASE("contrastive loss gradient") {
  CHECK(contrastive_loss_grad(1.0, 1, 2.0) == 2.0);
  CHECK(contrastive_loss_grad(0.5, 0, 2.0) == -3.0);
  CHECK(contrastive_loss_grad(2.0, 0, 2.0) == 0.0);  // kink convention
  CHECK(contrastive_loss_grad(3.0, 0, 2.0) == 0.0);
}

TEST_CASE("init_params") {
  SUBCASE("deterministic in the seed") {
    const auto [p1, m1] = init_params(99, 12, 6, MetricKind::weighted_euclidean);
    const auto [p2, m2] = init_params(99, 12, 6, MetricKind::weighted_euclidean);
    CHECK(params_equal(p1, p2));
    CHECK(m1.w == m2.w);
    const auto [p3, m3] = init_params(100, 12, 6, MetricKind::weighted_euclidean);
    CHECK_FALSE(p1.w1 == p3.w1);
    (void)m3;
  }
  SUBCASE("weight initialization statistics") {
    // avg has no aggregator tensors, so the metric lives in N = 1e5 dims.
    const auto [p, m] = init_params(7, 100000, 1, MetricKind::weighted_euclidean,
                                    AggregatorVariant::avg);
    (void)p;
    CHECK(std::abs(m.w.mean() - 1.0) < 1e-2);
    CHECK(m.w.minCoeff() >= 0.0);
  }
  SUBCASE("variant shapes") {
    const auto [p, m] = init_params(1, 10, 4, MetricKind::euclidean);
    CHECK(p.w1.rows() == 4);
    CHECK(p.w1.cols() == 10);
    CHECK(p.b1.size() == 4);
    CHECK(p.b1.isZero(0));
    CHECK(p.w2.rows() == 4);
    CHECK(p.w2.cols() == 8);
    (void)m;

    const auto [pa, ma] =
        init_params(1, 10, 4, MetricKind::mahalanobis, AggregatorVariant::attention_only);
    CHECK(pa.w1.size() == 0);
    CHECK(pa.w2.rows() == 10);
    CHECK(pa.w2.cols() == 20);
    CHECK(ma.factor.rows() == 10);  // metric lives in N-dim space
  }
}

TEST_CASE("mine_hard_negatives") {
  std::vector<VecX> emb;
  for (const double x : {0.0, 0.2, 0.9, 0.5}) {
    VecX v(1);
    v << x;
    emb.push_back(v);
  }
  const std::vector<std::string> ids = {"a", "b", "c", "d"};
  MetricParams metric;  // euclidean

  SUBCASE("single candidate is selected") {
    EvalCase c;
    c.query = 0;
    c.positive = 3;
    c.negatives = {2};
    const MiningResult r = mine_hard_negatives(emb, {c}, metric, ids);
    REQUIRE(r.negatives.size() == 1);
    CHECK(r.negatives[0].gallery == 2);
    CHECK(r.negatives[0].label == 0);
  }
  SUBCASE("closest candidate wins") {
    EvalCase c;
    c.query = 0;
    c.positive = 3;
    c.negatives = {2, 1};  // distances 0.9 and 0.2
    const MiningResult r = mine_hard_negatives(emb, {c}, metric, ids);
    REQUIRE(r.negatives.size() == 1);
    CHECK(r.negatives[0].gallery == 1);
  }
  SUBCASE("tie breaks toward the smaller id") {
    std::vector<VecX> tied = emb;
    tied[2] = tied[1];  // ids "b" and "c" now equidistant
    EvalCase c;
    c.query = 0;
    c.positive = 3;
    c.negatives = {2, 1};
    const MiningResult r = mine_hard_negatives(tied, {c}, metric, ids);
    CHECK(r.negatives[0].gallery == 1);  // "b" < "c"
  }
  SUBCASE("empty candidate set is skipped") {
    EvalCase c;
    c.query = 0;
    c.positive = 3;
    const MiningResult r = mine_hard_negatives(emb, {c}, metric, ids);
    CHECK(r.negatives.empty());
    CHECK(r.skipped == 1);
  }
  SUBCASE("matches exhaustive scan on random instances") {
    auto rng = make_rng(31);
    for (int it = 0; it < 25; ++it) {
      const Index d = 4;
      const int n = 12;
      std::vector<VecX> vectors;
      std::vector<std::string> names;
      for (int i = 0; i < n; ++i) {
        vectors.push_back(rand_vector(rng, d));
        names.push_back("t" + std::to_string(i));
      }
      EvalCase c;
      c.query = 0;
      c.positive = 1;
      for (int i = 2; i < n; ++i) c.negatives.push_back(i);
      const MiningResult r = mine_hard_negatives(vectors, {c}, metric, names);

      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (const int g : c.negatives) {
        const double dist = (vectors[0] - vectors[g]).norm();
        if (dist < best_d || (dist == best_d && names[g] < names[best])) {
          best = g;
          best_d = dist;
        }
      }
      CHECK(r.negatives[0].gallery == best);
    }
  }
}

TEST_CASE("adam_step") {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;

  SUBCASE("zero gradients leave parameters unchanged") {
    AggregatorParams p;
    p.b1 = VecX::Ones(3);
    MetricParams m;
    OptimizerState opt;
    GradSet g = zero_grads(p, m);
    adam_step(p, m, g, opt, cfg);
    CHECK(p.b1 == VecX::Ones(3));
    CHECK(opt.step == 1);
  }
  SUBCASE("three-step trace with constant gradient") {
    // With a constant gradient g the bias-corrected moments are m^ = g and
    // v^ = g^2, so every step moves by lr * g / (|g| + eps).
    AggregatorParams p;
    p.b1 = VecX::Ones(1);
    MetricParams m;
    OptimizerState opt;
    GradSet g = zero_grads(p, m);
    g.db1 = VecX::Constant(1, 0.5);
    const double step = 0.1 * (0.5 / (0.5 + 1e-8));
    double expect = 1.0;
    for (int t = 1; t <= 3; ++t) {
      adam_step(p, m, g, opt, cfg);
      expect -= step;
      CHECK(p.b1(0) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  SUBCASE("weighted-euclidean weights are clipped after the update") {
    AggregatorParams p;
    MetricParams m;
    m.kind = MetricKind::weighted_euclidean;
    m.w = VecX::Constant(2, 0.001);
    OptimizerState opt;
    GradSet g = zero_grads(p, m);
    g.dw = VecX::Constant(2, 100.0);  // drives w negative before projection
    adam_step(p, m, g, opt, cfg);
    CHECK(m.w.minCoeff() == 0.0);
  }
}

TEST_CASE("pair of identical tracks has zero total gradient") {
  auto rng = make_rng(32);
  const MatX x = rand_matrix(rng, 3, 5);
  const auto [p, m] = init_params(5, 5, 2, MetricKind::weighted_euclidean);
  const PairGrads pg =
      pair_forward_backward(x, x, 1, p, m, AggregatorVariant::full, 2.0);
  CHECK(pg.distance == 0.0);
  CHECK(pg.loss == 0.0);
  CHECK(pg.grads.dw1.isZero(0));
  CHECK(pg.grads.db1.isZero(0));
  CHECK(pg.grads.dw2.isZero(0));
  CHECK(pg.grads.dw.isZero(0));
}

TEST_CASE("end-to-end loss gradient matches finite differences") {
  // Tiny instance T = 3, N = 5, M = 2, every trainable parameter perturbed.
  auto rng = make_rng(33);
  for (const MetricKind kind : {MetricKind::euclidean, MetricKind::weighted_euclidean,
                                MetricKind::mahalanobis}) {
    for (const int label : {0, 1}) {
      const MatX xa = rand_matrix(rng, 3, 5);
      const MatX xb = rand_matrix(rng, 3, 5);
      auto [p, m] = init_params(rng(), 5, 2, kind);
      const double margin = 2.0;

      const PairGrads pg =
          pair_forward_backward(xa, xb, label, p, m, AggregatorVariant::full, margin);
      const auto eval = [&]() {
        const VecX fa = aggregate(xa, p, AggregatorVariant::full).embedding.f;
        const VecX fb = aggregate(xb, p, AggregatorVariant::full).embedding.f;
        return contrastive_loss(metric_distance(fa, fb, m), label, margin);
      };

      double worst = test::max_grad_error(p.w1, pg.grads.dw1, eval);
      worst = std::max(worst, test::max_grad_error(p.b1, VecX(pg.grads.db1), eval));
      worst = std::max(worst, test::max_grad_error(p.w2, pg.grads.dw2, eval));
      if (kind == MetricKind::weighted_euclidean)
        worst = std::max(worst, test::max_grad_error(m.w, VecX(pg.grads.dw), eval));
      if (kind == MetricKind::mahalanobis)
        worst = std::max(worst, test::max_grad_error(m.factor, MatX(pg.grads.dfactor), eval));
      CAPTURE(int(kind));
      CAPTURE(label);
      CHECK(worst < 1e-4);
    }
  }
}

TEST_CASE("train") {
  const TrackDataset ds = toy_dataset(2, 2, 3, 6, 0.05, 41);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-2;
  cfg.time_samples = 3;
  cfg.embedding_dim = 2;
  cfg.seed = 9;

  SUBCASE("loss trends down on a separable toy problem") {
    const TrainResult r = train(ds, cfg);
    REQUIRE(r.history.size() == 5);
    CHECK(r.history.back().mean_loss < r.history.front().mean_loss);
    CHECK(r.checkpoint.epoch == 5);
    for (const EpochStats& e : r.history) CHECK(e.mean_loss >= 0.0);
  }
  SUBCASE("zero epochs returns the initialization") {
    TrainConfig zero = cfg;
    zero.epochs = 0;
    const TrainResult r = train(ds, zero);
    const auto [p, m] =
        init_params(zero.seed, ds.feature_dim, zero.embedding_dim, zero.metric, zero.variant);
    CHECK(params_equal(r.checkpoint.params, p));
    CHECK(r.history.empty());
    (void)m;
  }
  SUBCASE("identical seed and data give bit-identical checkpoints") {
    const TrainResult a = train(ds, cfg);
    const TrainResult b = train(ds, cfg);
    CHECK(params_equal(a.checkpoint.params, b.checkpoint.params));
    CHECK(a.checkpoint.opt.m_w1 == b.checkpoint.opt.m_w1);
    CHECK(a.checkpoint.opt.v_w2 == b.checkpoint.opt.v_w2);
  }
  SUBCASE("weighted-euclidean weights stay non-negative throughout") {
    TrainConfig we = cfg;
    we.metric = MetricKind::weighted_euclidean;
    we.learning_rate = 0.05;
    const TrainResult r = train(ds, we);
    CHECK(r.checkpoint.metric.w.minCoeff() >= 0.0);
  }
  SUBCASE("single-track-per-identity dataset has no positive pairs") {
    const TrackDataset lonely = toy_dataset(3, 1, 3, 6, 0.05, 42);
    CHECK_THROWS_AS(train(lonely, cfg), ValidationError);
  }
  SUBCASE("mismatched frame count is rejected") {
    TrainConfig bad = cfg;
    bad.time_samples = 4;
    CHECK_THROWS_AS(train(ds, bad), ValidationError);
  }
}
