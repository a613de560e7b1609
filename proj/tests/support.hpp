#pragma once

// Shared test utilities: seeded generators and the central finite-difference
// oracle used by every gradient check. Oracles here are independent of the
// library's backward-pass code paths.

#include <cmath>
#include <random>

#include "lftd/types.hpp"

namespace lftd::test {

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline MatX rand_matrix(std::mt19937_64& rng, Index rows, Index cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatX m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = scale * normal(rng);
  return m;
}

inline VecX rand_vector(std::mt19937_64& rng, Index n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VecX v(n);
  for (Index i = 0; i < n; ++i) v(i) = scale * normal(rng);
  return v;
}

inline VecX rand_unit_vector(std::mt19937_64& rng, Index n) {
  VecX v = rand_vector(rng, n);
  return v / v.norm();
}

// Guarded relative error: |a - b| / max(|a|, |b|, floor). The floor keeps
// near-zero gradients from being compared against finite-difference noise.
inline double rel_err(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central difference d f / d slot with the standard h = 1e-5, restoring the
// perturbed entry afterwards.
template <class Eval>
double central_diff(double& slot, Eval&& eval, double h = 1e-5) {
  const double orig = slot;
  slot = orig + h;
  const double fp = eval();
  slot = orig - h;
  const double fm = eval();
  slot = orig;
  return (fp - fm) / (2.0 * h);
}

// Checks every entry of `param` against finite differences of `eval`;
// returns the worst guarded relative error.
template <class T, class Eval>
double max_grad_error(T& param, const T& analytic, Eval&& eval, double h = 1e-5) {
  double worst = 0.0;
  for (Index r = 0; r < param.rows(); ++r) {
    for (Index c = 0; c < param.cols(); ++c) {
      const double fd = central_diff(param(r, c), eval, h);
      worst = std::max(worst, rel_err(analytic(r, c), fd));
    }
  }
  return worst;
}

}  // namespace lftd::test
