#pragma once

#include <algorithm>

#include "lftd/types.hpp"

namespace lftd {

// Contrastive pair loss: y d^2 + (1 - y) [m - d]_+^2. Positive pairs
// (y = 1) are pulled together, negative pairs pushed beyond the margin.
template <class S>
S contrastive_loss(S d, int label, S margin) {
  if (d < S(0)) throw ValidationError("contrastive_loss: negative distance");
  if (margin <= S(0)) throw ValidationError("contrastive_loss: margin must be positive");
  if (label != 0 && label != 1)
    throw ValidationError("contrastive_loss: label must be 0 or 1");
  if (label == 1) return d * d;
  const S hinge = std::max(margin - d, S(0));
  return hinge * hinge;
}

// dL/dd. The subgradient at the hinge kink d == m is taken as 0.
template <class S>
S contrastive_loss_grad(S d, int label, S margin) {
  if (d < S(0)) throw ValidationError("contrastive_loss: negative distance");
  if (margin <= S(0)) throw ValidationError("contrastive_loss: margin must be positive");
  if (label != 0 && label != 1)
    throw ValidationError("contrastive_loss: label must be 0 or 1");
  if (label == 1) return S(2) * d;
  return S(-2) * std::max(margin - d, S(0));
}

}  // namespace lftd
