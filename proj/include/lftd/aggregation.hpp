#pragma once

// Temporal feature aggregation: maps a T x N matrix of per-frame features to
// a single unit-norm embedding. Frames are compressed by a tanh layer,
// augmented with the track mean, turned into per-element temporal weights by
// a column-wise softmax (along the time axis, independently per feature
// component), and pooled. Forward passes record a tape so the analytic
// backward pass can run without recomputation.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>

#include "lftd/types.hpp"

namespace lftd {

// `full` is the complete network. The remaining variants are the ablations:
// plain average pooling of raw features, projection followed by uniform
// pooling, and the weighting mechanism applied directly to raw features.
enum class AggregatorVariant { full, avg, project_only, attention_only };

inline const char* to_string(AggregatorVariant v) {
  switch (v) {
    case AggregatorVariant::full: return "full";
    case AggregatorVariant::avg: return "avg";
    case AggregatorVariant::project_only: return "project_only";
    case AggregatorVariant::attention_only: return "attention_only";
  }
  return "full";
}

inline AggregatorVariant variant_from_string(const std::string& s) {
  if (s == "full") return AggregatorVariant::full;
  if (s == "avg") return AggregatorVariant::avg;
  if (s == "project_only") return AggregatorVariant::project_only;
  if (s == "attention_only") return AggregatorVariant::attention_only;
  throw ValidationError("unknown aggregator variant: " + s);
}

/// Trainable tensors of the aggregation network. For `full` and
/// `project_only`, w1 is M x N and b1 has length M; w2 (full only) is
/// M x 2M. `attention_only` keeps w1/b1 empty and sizes w2 as N x 2N.
/// `avg` has no parameters; unused tensors stay 0-sized.
template <class S>
struct AggregatorParamsT {
  Mat<S> w1;
  Vec<S> b1;
  Mat<S> w2;
};
using AggregatorParams = AggregatorParamsT<double>;

template <class S>
struct TrackEmbeddingT {
  Vec<S> f;
  bool degenerate = false;  // pooled sum was exactly zero; f is zero, not unit
};
using TrackEmbedding = TrackEmbeddingT<double>;

// Embedding dimensionality a variant produces for N-dimensional input.
inline Index embedding_dim(AggregatorVariant v, Index n, Index m) {
  return (v == AggregatorVariant::avg || v == AggregatorVariant::attention_only) ? n : m;
}

// y_tau = tanh(w1 x_tau + b1) for every frame, stacked as rows of T x M.
template <class DX, class DW, class DB>
Mat<typename DX::Scalar> project_frames(const Eigen::MatrixBase<DX>& x,
                                        const Eigen::MatrixBase<DW>& w1,
                                        const Eigen::MatrixBase<DB>& b1) {
  using S = typename DX::Scalar;
  if (x.cols() != w1.cols() || b1.rows() != w1.rows() || b1.cols() != 1)
    throw ValidationError("project_frames: dimension mismatch");
  if (!x.allFinite() || !w1.allFinite() || !b1.allFinite())
    throw ValidationError("project_frames: non-finite input");
  Mat<S> pre = x * w1.transpose();
  pre.rowwise() += b1.transpose();
  return pre.array().tanh().matrix();
}

// Appends the track-mean feature vector to every row: T x M -> T x 2M.
template <class DY>
Mat<typename DY::Scalar> augment_with_mean(const Eigen::MatrixBase<DY>& y) {
  using S = typename DY::Scalar;
  if (y.rows() < 1 || y.cols() < 1)
    throw ValidationError("augment_with_mean: empty matrix");
  const Index t = y.rows();
  const Index m = y.cols();
  Mat<S> out(t, 2 * m);
  out.leftCols(m) = y;
  out.rightCols(m) = y.colwise().mean().replicate(t, 1);
  return out;
}

// a_tau = w2 y'_tau, giving T x M. The second layer carries no bias.
template <class DY, class DW>
Mat<typename DY::Scalar> attention_logits(const Eigen::MatrixBase<DY>& yp,
                                          const Eigen::MatrixBase<DW>& w2) {
  if (yp.cols() != w2.cols())
    throw ValidationError("attention_logits: dimension mismatch");
  return yp * w2.transpose();
}

// Softmax along the time axis for each feature component separately; every
// column of the result sums to 1. The per-column maximum is subtracted
// before exponentiation so large logits cannot overflow.
template <class DA>
Mat<typename DA::Scalar> column_softmax(const Eigen::MatrixBase<DA>& a) {
  using S = typename DA::Scalar;
  if (!a.allFinite()) throw ValidationError("column_softmax: non-finite input");
  Mat<S> e(a.rows(), a.cols());
  for (Index j = 0; j < a.cols(); ++j) {
    Vec<S> col = (a.col(j).array() - a.col(j).maxCoeff()).exp().matrix();
    e.col(j) = col / col.sum();
  }
  return e;
}

/// f = sum_tau (y_tau o e_tau), scaled to unit length. Accumulation runs in
/// ascending tau per component. A pooled sum of exactly zero cannot be
/// normalized: the embedding comes back as the zero vector with the
/// degenerate flag set instead of dividing by zero. `pooled_out`, when
/// non-null, receives the pre-normalization sum.
template <class DY, class DE>
TrackEmbeddingT<typename DY::Scalar> pool_and_normalize(
    const Eigen::MatrixBase<DY>& y, const Eigen::MatrixBase<DE>& e,
    Vec<typename DY::Scalar>* pooled_out = nullptr) {
  using S = typename DY::Scalar;
  if (y.rows() != e.rows() || y.cols() != e.cols())
    throw ValidationError("pool_and_normalize: shape mismatch");
  Vec<S> s = (y.array() * e.array()).matrix().colwise().sum().transpose();
  if (pooled_out) *pooled_out = s;
  TrackEmbeddingT<S> out;
  const S norm = s.norm();
  if (norm == S(0)) {
    out.f = Vec<S>::Zero(s.size());
    out.degenerate = true;
  } else {
    out.f = s / norm;
  }
  return out;
}

/// Intermediates cached by the forward pass. `e` is column-stochastic along
/// time. `yp` and `a` stay empty for variants without the weighting layer.
template <class S>
struct AggregatorTapeT {
  AggregatorVariant variant = AggregatorVariant::full;
  Mat<S> y;   // frames entering pooling (projected, or raw for avg/attention_only)
  Mat<S> yp;  // mean-augmented rows
  Mat<S> a;   // attention logits
  Mat<S> e;   // temporal weights
  Mat<S> z;   // y o e
  Vec<S> s;   // pooled sum before normalization
  S s_norm = S(0);
  bool degenerate = false;
};
using AggregatorTape = AggregatorTapeT<double>;

namespace detail {

template <class S>
void check_aggregator_shapes(const Mat<S>& x, const AggregatorParamsT<S>& p,
                             AggregatorVariant v) {
  const Index n = x.cols();
  switch (v) {
    case AggregatorVariant::avg:
      return;
    case AggregatorVariant::project_only:
      if (p.w1.rows() < 1 || p.w1.cols() != n || p.b1.rows() != p.w1.rows())
        throw ValidationError("aggregate: w1/b1 do not match input dimension");
      return;
    case AggregatorVariant::attention_only:
      if (p.w2.rows() != n || p.w2.cols() != 2 * n)
        throw ValidationError("aggregate: attention_only needs w2 of shape N x 2N");
      return;
    case AggregatorVariant::full:
      if (p.w1.rows() < 1 || p.w1.cols() != n || p.b1.rows() != p.w1.rows())
        throw ValidationError("aggregate: w1/b1 do not match input dimension");
      if (p.w2.rows() != p.w1.rows() || p.w2.cols() != 2 * p.w1.rows())
        throw ValidationError("aggregate: w2 must have shape M x 2M");
      return;
  }
}

}  // namespace detail

template <class S>
struct AggregateResultT {
  TrackEmbeddingT<S> embedding;
  AggregatorTapeT<S> tape;
};
using AggregateResult = AggregateResultT<double>;

/// Runs the forward pass of the selected variant. `avg` and `project_only`
/// pool with constant weights 1/T, which is exactly what the softmax yields
/// when all logits are equal, so `full` with w2 = 0 reproduces
/// `project_only`.
template <class S>
AggregateResultT<S> aggregate(const Mat<S>& x, const AggregatorParamsT<S>& params,
                              AggregatorVariant variant) {
  if (x.rows() < 1 || x.cols() < 1)
    throw ValidationError("aggregate: empty feature matrix");
  if (!x.allFinite()) throw ValidationError("aggregate: non-finite features");
  detail::check_aggregator_shapes(x, params, variant);

  AggregatorTapeT<S> tape;
  tape.variant = variant;
  const Index t = x.rows();
  switch (variant) {
    case AggregatorVariant::avg:
      tape.y = x;
      tape.e = Mat<S>::Constant(t, x.cols(), S(1) / S(t));
      break;
    case AggregatorVariant::project_only:
      tape.y = project_frames(x, params.w1, params.b1);
      tape.e = Mat<S>::Constant(t, tape.y.cols(), S(1) / S(t));
      break;
    case AggregatorVariant::attention_only:
      tape.y = x;
      tape.yp = augment_with_mean(x);
      tape.a = attention_logits(tape.yp, params.w2);
      tape.e = column_softmax(tape.a);
      break;
    case AggregatorVariant::full:
      tape.y = project_frames(x, params.w1, params.b1);
      tape.yp = augment_with_mean(tape.y);
      tape.a = attention_logits(tape.yp, params.w2);
      tape.e = column_softmax(tape.a);
      break;
  }
  tape.z = (tape.y.array() * tape.e.array()).matrix();

  AggregateResultT<S> out;
  out.embedding = pool_and_normalize(tape.y, tape.e, &tape.s);
  tape.s_norm = tape.s.norm();
  tape.degenerate = out.embedding.degenerate;
  out.tape = std::move(tape);
  return out;
}

template <class S>
struct AggregatorGradsT {
  Mat<S> dw1;
  Vec<S> db1;
  Mat<S> dw2;
  Mat<S> dx;
};
using AggregatorGrads = AggregatorGradsT<double>;

/// Gradients of df . f with respect to parameters and input, where f is the
/// embedding the tape's forward pass produced. Covers the L2-normalization
/// Jacobian (I - f f^T)/|s| and the per-column softmax Jacobian
/// diag(e) - e e^T. For a degenerate tape the embedding is pinned to zero
/// and every gradient is zero.
template <class S, class DD>
AggregatorGradsT<S> aggregate_backward(const AggregatorTapeT<S>& tape, const Mat<S>& x,
                                       const AggregatorParamsT<S>& params,
                                       const Eigen::MatrixBase<DD>& df) {
  detail::check_aggregator_shapes(x, params, tape.variant);
  if (tape.y.rows() != x.rows() || tape.e.rows() != x.rows())
    throw ValidationError("aggregate_backward: tape does not match input");
  if (df.rows() != tape.s.rows())
    throw ValidationError("aggregate_backward: df does not match embedding size");

  const Index t = x.rows();
  const bool attends = tape.variant == AggregatorVariant::full ||
                       tape.variant == AggregatorVariant::attention_only;
  const bool projects = tape.variant == AggregatorVariant::full ||
                        tape.variant == AggregatorVariant::project_only;

  AggregatorGradsT<S> g;
  g.dw1 = Mat<S>::Zero(params.w1.rows(), params.w1.cols());
  g.db1 = Vec<S>::Zero(params.b1.rows());
  g.dw2 = Mat<S>::Zero(params.w2.rows(), params.w2.cols());
  g.dx = Mat<S>::Zero(x.rows(), x.cols());
  if (tape.degenerate) return g;

  const Vec<S> f = tape.s / tape.s_norm;
  const Vec<S> gs = (df.derived() - f * f.dot(df.derived())) / tape.s_norm;

  // s_j = sum_tau y_{tau j} e_{tau j}: every row of Z receives the same gs.
  Mat<S> gy = tape.e * gs.asDiagonal();

  if (attends) {
    const Mat<S> ge = tape.y * gs.asDiagonal();
    Mat<S> ga(tape.e.rows(), tape.e.cols());
    for (Index j = 0; j < tape.e.cols(); ++j) {
      const S dot = tape.e.col(j).dot(ge.col(j));
      ga.col(j) = (tape.e.col(j).array() * (ge.col(j).array() - dot)).matrix();
    }
    g.dw2 = ga.transpose() * tape.yp;
    const Mat<S> gyp = ga * params.w2;
    const Index d = tape.e.cols();
    gy += gyp.leftCols(d);
    const Vec<S> gmean = gyp.rightCols(d).colwise().sum().transpose();
    gy.rowwise() += (gmean / S(t)).transpose();
  }

  if (projects) {
    const Mat<S> gp = (gy.array() * (S(1) - tape.y.array().square())).matrix();
    g.dw1 = gp.transpose() * x;
    g.db1 = gp.colwise().sum().transpose();
    g.dx = gp * params.w1;
  } else {
    g.dx = gy;
  }
  return g;
}

template <class S>
struct FrameWeightStatsT {
  Vec<S> mean_weights;          // per frame; sums to 1 for column-stochastic input
  S mean_relative_std = S(0);   // std(row)/mean(row), averaged over frames
};
using FrameWeightStats = FrameWeightStatsT<double>;

// Mean temporal weight per frame plus the within-frame spread of weights
// (population std over the row divided by the row mean, averaged over rows).
template <class DE>
FrameWeightStatsT<typename DE::Scalar> frame_weight_stats(const Eigen::MatrixBase<DE>& e) {
  using S = typename DE::Scalar;
  if (e.rows() < 1 || e.cols() < 1)
    throw ValidationError("frame_weight_stats: empty weight matrix");
  FrameWeightStatsT<S> out;
  out.mean_weights = e.rowwise().mean();
  S acc = S(0);
  for (Index tau = 0; tau < e.rows(); ++tau) {
    const S mean = out.mean_weights(tau);
    const S var = (e.row(tau).array() - mean).square().mean();
    if (mean != S(0)) acc += std::sqrt(var) / mean;  // an all-zero row has no spread
  }
  out.mean_relative_std = acc / S(e.rows());
  return out;
}

}  // namespace lftd
