#pragma once

#include <cmath>
#include <cstdint>

#include "lftd/aggregation.hpp"
#include "lftd/metrics.hpp"

namespace lftd {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-5;
  double margin = 2.0;
  int time_samples = 16;
  int embedding_dim = 128;
  MetricKind metric = MetricKind::euclidean;
  AggregatorVariant variant = AggregatorVariant::full;
  double lambda = 0.01;  // Mahalanobis orthogonality regularizer weight
  std::uint64_t seed = 42;
  int hard_negatives_per_positive = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

// 1e-5 for plain Euclidean runs, 10^-4.4 for the learned metrics.
inline double default_learning_rate(MetricKind kind) {
  return kind == MetricKind::euclidean ? 1e-5 : std::pow(10.0, -4.4);
}

// Gradients of one step, covering aggregator and metric parameters. Tensors
// that a variant or metric does not use stay 0-sized.
struct GradSet {
  MatX dw1;
  VecX db1;
  MatX dw2;
  VecX dw;       // weighted_euclidean weights
  MatX dfactor;  // mahalanobis factor

  GradSet& operator+=(const GradSet& o) {
    dw1 += o.dw1;
    db1 += o.db1;
    dw2 += o.dw2;
    dw += o.dw;
    dfactor += o.dfactor;
    return *this;
  }

  void scale(double c) {
    dw1 *= c;
    db1 *= c;
    dw2 *= c;
    dw *= c;
    dfactor *= c;
  }

  bool all_finite() const {
    return dw1.allFinite() && db1.allFinite() && dw2.allFinite() &&
           dw.allFinite() && dfactor.allFinite();
  }
};

inline GradSet zero_grads(const AggregatorParams& p, const MetricParams& m) {
  GradSet g;
  g.dw1 = MatX::Zero(p.w1.rows(), p.w1.cols());
  g.db1 = VecX::Zero(p.b1.rows());
  g.dw2 = MatX::Zero(p.w2.rows(), p.w2.cols());
  g.dw = VecX::Zero(m.w.rows());
  g.dfactor = MatX::Zero(m.factor.rows(), m.factor.cols());
  return g;
}

// Adam first/second moments, one pair per trainable tensor, plus the global
// step counter. Moments are sized lazily on the first update.
struct OptimizerState {
  std::int64_t step = 0;
  MatX m_w1, v_w1;
  VecX m_b1, v_b1;
  MatX m_w2, v_w2;
  VecX m_w, v_w;
  MatX m_factor, v_factor;
};

struct ModelCheckpoint {
  AggregatorParams params;
  MetricParams metric;
  TrainConfig config;
  Index input_dim = 0;  // feature dimension N the model was trained on
  int epoch = 0;
  OptimizerState opt;
};

}  // namespace lftd
