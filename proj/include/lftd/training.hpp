#pragma once

// Siamese contrastive training over cached track features. Every epoch the
// tracks are re-embedded under the frozen current model, one hardest
// negative is mined per positive pair, and the shuffled pairs run through
// both branches of the shared aggregator in batches, followed by an Adam
// step and the non-negativity projection of the Weighted Euclidean weights.

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <utility>
#include <vector>

#include "lftd/data_io.hpp"
#include "lftd/evaluation.hpp"
#include "lftd/loss.hpp"
#include "lftd/model.hpp"

namespace lftd {

struct PairSample {
  int query = -1;
  int gallery = -1;
  int label = 0;  // 1 iff identities match
};

/// Seeded initialization: Weighted Euclidean weights ~ N(1, 0.1) clipped
/// non-negative, Mahalanobis factor = I + N(0, 0.01) noise, aggregator
/// weights ~ N(0, 1/sqrt(fan_in)), zero biases. Bit-identical for equal
/// seeds.
std::pair<AggregatorParams, MetricParams> init_params(
    std::uint64_t seed, Index input_dim, Index embedding_dim, MetricKind metric,
    AggregatorVariant variant = AggregatorVariant::full);

struct MiningResult {
  std::vector<PairSample> negatives;
  int skipped = 0;  // positives without any candidate negative
};

/// For every positive case, emits the `per_positive` candidates closest to
/// the query under the current metric (ties toward the smaller track id).
MiningResult mine_hard_negatives(const std::vector<VecX>& embeddings,
                                 const std::vector<EvalCase>& positives,
                                 const MetricParams& metric,
                                 const std::vector<std::string>& track_ids,
                                 int per_positive = 1, std::ostream* log = nullptr);

/// Bias-corrected Adam update of every present tensor, incrementing the step
/// counter, followed by the non-negativity projection for Weighted
/// Euclidean weights. Moment tensors are sized on first use.
void adam_step(AggregatorParams& params, MetricParams& metric, const GradSet& grads,
               OptimizerState& opt, const TrainConfig& config);

struct PairGrads {
  double loss = 0;
  double distance = 0;
  GradSet grads;  // both branches accumulated into the shared weights
};

/// Forward + backward of one pair through the shared aggregator and the
/// metric. Distances at or below the singularity threshold contribute zero
/// gradient.
PairGrads pair_forward_backward(const MatX& features_a, const MatX& features_b,
                                int label, const AggregatorParams& params,
                                const MetricParams& metric, AggregatorVariant variant,
                                double margin);

struct EpochStats {
  int epoch = 0;  // 1-based
  double mean_loss = 0;
  double mean_pos_d = 0;
  double mean_neg_d = 0;
};

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<EpochStats> history;
};

/// Runs the full training loop on a dataset already sampled to
/// config.time_samples frames per track. Deterministic given (seed, data);
/// epochs = 0 returns the initialized checkpoint untouched.
TrainResult train(const TrackDataset& dataset, const TrainConfig& config,
                  int threads = 1, std::ostream* log = nullptr);

// CSV with header epoch,mean_loss,mean_pos_d,mean_neg_d.
void write_loss_csv(const std::filesystem::path& path,
                    const std::vector<EpochStats>& history);

}  // namespace lftd
