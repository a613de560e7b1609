#pragma once

// Distance functions for comparing track embeddings: plain Euclidean,
// Weighted Euclidean d = sqrt(sum_i w_i (u_i - v_i)^2) with learned
// non-negative weights, and factored Mahalanobis d = |W^T (u - v)| which
// never forms W W^T so the radicand cannot go negative in floating point.

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "lftd/types.hpp"

namespace lftd {

enum class MetricKind { euclidean, weighted_euclidean, mahalanobis };

inline const char* to_string(MetricKind k) {
  switch (k) {
    case MetricKind::euclidean: return "euclidean";
    case MetricKind::weighted_euclidean: return "weighted_euclidean";
    case MetricKind::mahalanobis: return "mahalanobis";
  }
  return "euclidean";
}

inline MetricKind metric_from_string(const std::string& s) {
  if (s == "euclidean") return MetricKind::euclidean;
  if (s == "weighted_euclidean") return MetricKind::weighted_euclidean;
  if (s == "mahalanobis") return MetricKind::mahalanobis;
  throw ValidationError("unknown metric: " + s);
}

template <class S>
struct MetricParamsT {
  MetricKind kind = MetricKind::euclidean;
  Vec<S> w;       // weighted_euclidean: non-negative per-dimension weights
  Mat<S> factor;  // mahalanobis: D x D factor W with M = W W^T
};
using MetricParams = MetricParamsT<double>;

namespace detail {

template <class DU, class DV>
void check_pair(const Eigen::MatrixBase<DU>& u, const Eigen::MatrixBase<DV>& v) {
  if (u.size() != v.size()) throw ValidationError("distance: length mismatch");
  if (!u.allFinite() || !v.allFinite())
    throw ValidationError("distance: non-finite input");
}

}  // namespace detail

template <class DU, class DV>
typename DU::Scalar euclidean(const Eigen::MatrixBase<DU>& u,
                              const Eigen::MatrixBase<DV>& v) {
  detail::check_pair(u, v);
  return (u - v).norm();
}

template <class DU, class DV, class DW>
typename DU::Scalar weighted_euclidean(const Eigen::MatrixBase<DU>& u,
                                       const Eigen::MatrixBase<DV>& v,
                                       const Eigen::MatrixBase<DW>& w) {
  detail::check_pair(u, v);
  if (w.size() != u.size())
    throw ValidationError("weighted_euclidean: weight length mismatch");
  if (w.size() > 0 && w.minCoeff() < typename DW::Scalar(0))
    throw ValidationError("weighted_euclidean: negative weight");
  return std::sqrt((w.array() * (u - v).array().square()).sum());
}

template <class DU, class DV, class DW>
typename DU::Scalar mahalanobis_factored(const Eigen::MatrixBase<DU>& u,
                                         const Eigen::MatrixBase<DV>& v,
                                         const Eigen::MatrixBase<DW>& factor) {
  detail::check_pair(u, v);
  if (factor.rows() != factor.cols() || factor.rows() != u.size())
    throw ValidationError("mahalanobis: factor must be D x D");
  return (factor.transpose() * (u - v)).norm();
}

template <class S>
S metric_distance(const Vec<S>& u, const Vec<S>& v, const MetricParamsT<S>& p) {
  switch (p.kind) {
    case MetricKind::euclidean: return euclidean(u, v);
    case MetricKind::weighted_euclidean: return weighted_euclidean(u, v, p.w);
    case MetricKind::mahalanobis: return mahalanobis_factored(u, v, p.factor);
  }
  throw ValidationError("metric_distance: invalid kind");
}

// Below this distance the gradient of d is treated as exactly zero: the
// contrastive loss needs no pull at d = 0 and the direction is undefined.
inline constexpr double kDistanceEpsilon = 1e-8;

template <class S>
struct MetricGradsT {
  S distance = S(0);
  Vec<S> du, dv;
  Vec<S> dw;       // weighted_euclidean only
  Mat<S> dfactor;  // mahalanobis only
};
using MetricGrads = MetricGradsT<double>;

/// Gradient of the distance in both arguments and in the metric parameters.
/// For Weighted Euclidean: dd/du = w o (u - v)/d and dd/dw_i =
/// (u_i - v_i)^2 / (2d). For Mahalanobis with z = W^T (u - v): dd/du =
/// W z / d and dd/dW = (u - v) z^T / d.
template <class S>
MetricGradsT<S> metric_grad(const Vec<S>& u, const Vec<S>& v,
                            const MetricParamsT<S>& p) {
  MetricGradsT<S> g;
  g.distance = metric_distance(u, v, p);
  const Index d = u.size();
  g.du = Vec<S>::Zero(d);
  g.dv = Vec<S>::Zero(d);
  if (p.kind == MetricKind::weighted_euclidean) g.dw = Vec<S>::Zero(d);
  if (p.kind == MetricKind::mahalanobis) g.dfactor = Mat<S>::Zero(d, d);
  if (g.distance <= S(kDistanceEpsilon)) return g;

  const Vec<S> delta = u - v;
  switch (p.kind) {
    case MetricKind::euclidean:
      g.du = delta / g.distance;
      break;
    case MetricKind::weighted_euclidean:
      g.du = (p.w.array() * delta.array()).matrix() / g.distance;
      g.dw = delta.array().square().matrix() / (S(2) * g.distance);
      break;
    case MetricKind::mahalanobis: {
      const Vec<S> z = p.factor.transpose() * delta;
      g.du = p.factor * z / g.distance;
      g.dfactor = delta * z.transpose() / g.distance;
      break;
    }
  }
  g.dv = -g.du;
  return g;
}

// Element-wise clip to zero; keeps the diagonal metric positive
// semi-definite after every optimizer update. Idempotent.
template <class DW>
Vec<typename DW::Scalar> project_nonnegative(const Eigen::MatrixBase<DW>& w) {
  return w.cwiseMax(typename DW::Scalar(0));
}

template <class S>
struct RegularizerResultT {
  S penalty = S(0);
  Mat<S> dfactor;
};
using RegularizerResult = RegularizerResultT<double>;

// 0.5 lambda |W W^T - I|_F^2 with gradient 2 lambda (W W^T - I) W. Pulls the
// learned Mahalanobis matrix toward the identity.
template <class S>
RegularizerResultT<S> mahalanobis_regularizer(const Mat<S>& factor, S lambda) {
  if (factor.rows() != factor.cols())
    throw ValidationError("mahalanobis_regularizer: non-square factor");
  RegularizerResultT<S> out;
  const Mat<S> gram =
      factor * factor.transpose() - Mat<S>::Identity(factor.rows(), factor.rows());
  out.penalty = S(0.5) * lambda * gram.squaredNorm();
  out.dfactor = S(2) * lambda * gram * factor;
  return out;
}

template <class S>
struct DiagDominanceT {
  S ratio = S(0);
  bool all_zero = false;
};
using DiagDominance = DiagDominanceT<double>;

// tr(|M|) / sum(|M|): fraction of the absolute mass on the diagonal. An
// all-zero matrix has no meaningful ratio and is flagged.
template <class DM>
DiagDominanceT<typename DM::Scalar> diag_dominance(const Eigen::MatrixBase<DM>& m) {
  using S = typename DM::Scalar;
  if (m.rows() != m.cols())
    throw ValidationError("diag_dominance: non-square matrix");
  DiagDominanceT<S> out;
  const S total = m.cwiseAbs().sum();
  if (total == S(0)) {
    out.all_zero = true;
    return out;
  }
  out.ratio = m.diagonal().cwiseAbs().sum() / total;
  return out;
}

}  // namespace lftd
