#include "lftd/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace lftd {

namespace {

void validate_config(const TrainConfig& c) {
  if (c.epochs < 0) throw ValidationError("train: epochs must be >= 0");
  if (c.batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (c.margin <= 0) throw ValidationError("train: margin must be positive");
  if (c.time_samples < 1) throw ValidationError("train: time_samples must be >= 1");
  if (c.embedding_dim < 1) throw ValidationError("train: embedding_dim must be >= 1");
  if (c.learning_rate <= 0) throw ValidationError("train: learning_rate must be positive");
  if (c.lambda < 0) throw ValidationError("train: lambda must be >= 0");
  if (c.hard_negatives_per_positive < 1)
    throw ValidationError("train: hard_negatives_per_positive must be >= 1");
}

MatX normal_matrix(std::mt19937_64& rng, std::normal_distribution<double>& normal,
                   Index rows, Index cols, double scale) {
  MatX m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = scale * normal(rng);
  return m;
}

template <class T>
void adam_update_tensor(T& param, const T& grad, T& m, T& v, std::int64_t t,
                        const TrainConfig& cfg) {
  if (param.size() == 0) return;
  if (m.size() == 0) {
    m = T::Zero(param.rows(), param.cols());
    v = T::Zero(param.rows(), param.cols());
  }
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  m = (b1 * m.array() + (1.0 - b1) * grad.array()).matrix();
  v = (b2 * v.array() + (1.0 - b2) * grad.array().square()).matrix();
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(t));
  param.array() -=
      cfg.learning_rate * (m.array() / corr1) / ((v.array() / corr2).sqrt() + cfg.adam_eps);
}

}  // namespace

std::pair<AggregatorParams, MetricParams> init_params(std::uint64_t seed,
                                                      Index input_dim,
                                                      Index embedding_dim,
                                                      MetricKind metric,
                                                      AggregatorVariant variant) {
  if (input_dim < 1 || embedding_dim < 1)
    throw ValidationError("init_params: dimensions must be >= 1");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  AggregatorParams p;
  if (variant == AggregatorVariant::full || variant == AggregatorVariant::project_only) {
    p.w1 = normal_matrix(rng, normal, embedding_dim, input_dim,
                         1.0 / std::sqrt(static_cast<double>(input_dim)));
    p.b1 = VecX::Zero(embedding_dim);
  }
  if (variant == AggregatorVariant::full) {
    p.w2 = normal_matrix(rng, normal, embedding_dim, 2 * embedding_dim,
                         1.0 / std::sqrt(static_cast<double>(2 * embedding_dim)));
  } else if (variant == AggregatorVariant::attention_only) {
    p.w2 = normal_matrix(rng, normal, input_dim, 2 * input_dim,
                         1.0 / std::sqrt(static_cast<double>(2 * input_dim)));
  }

  const Index d = lftd::embedding_dim(variant, input_dim, embedding_dim);
  MetricParams mp;
  mp.kind = metric;
  if (metric == MetricKind::weighted_euclidean) {
    VecX w(d);
    for (Index i = 0; i < d; ++i) w(i) = 1.0 + 0.1 * normal(rng);
    mp.w = project_nonnegative(w);
  } else if (metric == MetricKind::mahalanobis) {
    mp.factor = MatX::Identity(d, d);
    for (Index r = 0; r < d; ++r)
      for (Index c = 0; c < d; ++c) mp.factor(r, c) += 0.01 * normal(rng);
  }
  return {std::move(p), std::move(mp)};
}

MiningResult mine_hard_negatives(const std::vector<VecX>& embeddings,
                                 const std::vector<EvalCase>& positives,
                                 const MetricParams& metric,
                                 const std::vector<std::string>& track_ids,
                                 int per_positive, std::ostream* log) {
  if (per_positive < 1)
    throw ValidationError("mine_hard_negatives: per_positive must be >= 1");

  MiningResult out;
  for (const EvalCase& c : positives) {
    if (c.negatives.empty()) {
      ++out.skipped;
      if (log)
        *log << "mining: no candidate negatives for query " << track_ids[c.query]
             << ", skipped\n";
      continue;
    }
    std::vector<std::pair<double, int>> scored;
    scored.reserve(c.negatives.size());
    for (const int g : c.negatives)
      scored.emplace_back(metric_distance(embeddings[c.query], embeddings[g], metric), g);
    std::sort(scored.begin(), scored.end(),
              [&](const std::pair<double, int>& a, const std::pair<double, int>& b) {
                if (a.first != b.first) return a.first < b.first;
                return track_ids[a.second] < track_ids[b.second];
              });
    const int take = std::min<int>(per_positive, static_cast<int>(scored.size()));
    for (int i = 0; i < take; ++i)
      out.negatives.push_back({c.query, scored[i].second, 0});
  }
  return out;
}

void adam_step(AggregatorParams& params, MetricParams& metric, const GradSet& grads,
               OptimizerState& opt, const TrainConfig& config) {
  ++opt.step;
  adam_update_tensor(params.w1, grads.dw1, opt.m_w1, opt.v_w1, opt.step, config);
  adam_update_tensor(params.b1, grads.db1, opt.m_b1, opt.v_b1, opt.step, config);
  adam_update_tensor(params.w2, grads.dw2, opt.m_w2, opt.v_w2, opt.step, config);
  adam_update_tensor(metric.w, grads.dw, opt.m_w, opt.v_w, opt.step, config);
  adam_update_tensor(metric.factor, grads.dfactor, opt.m_factor, opt.v_factor,
                     opt.step, config);
  if (metric.kind == MetricKind::weighted_euclidean && metric.w.size() > 0)
    metric.w = project_nonnegative(metric.w);
}

PairGrads pair_forward_backward(const MatX& features_a, const MatX& features_b,
                                int label, const AggregatorParams& params,
                                const MetricParams& metric, AggregatorVariant variant,
                                double margin) {
  const AggregateResult ra = aggregate(features_a, params, variant);
  const AggregateResult rb = aggregate(features_b, params, variant);
  const MetricGrads mg = metric_grad(ra.embedding.f, rb.embedding.f, metric);

  PairGrads out;
  out.distance = mg.distance;
  out.loss = contrastive_loss(mg.distance, label, margin);
  const double dldd = contrastive_loss_grad(mg.distance, label, margin);

  const AggregatorGrads ga =
      aggregate_backward(ra.tape, features_a, params, VecX(dldd * mg.du));
  const AggregatorGrads gb =
      aggregate_backward(rb.tape, features_b, params, VecX(dldd * mg.dv));

  out.grads = zero_grads(params, metric);
  out.grads.dw1 = ga.dw1 + gb.dw1;
  out.grads.db1 = ga.db1 + gb.db1;
  out.grads.dw2 = ga.dw2 + gb.dw2;
  if (metric.kind == MetricKind::weighted_euclidean) out.grads.dw = dldd * mg.dw;
  if (metric.kind == MetricKind::mahalanobis) out.grads.dfactor = dldd * mg.dfactor;
  return out;
}

TrainResult train(const TrackDataset& dataset, const TrainConfig& config, int threads,
                  std::ostream* log) {
  validate_config(config);
  if (dataset.tracks.empty()) throw ValidationError("train: empty dataset");
  for (const TrackData& t : dataset.tracks) {
    if (t.features.cols() != dataset.feature_dim)
      throw ValidationError("train: inconsistent feature dimensions");
    if (t.features.rows() != config.time_samples)
      throw ValidationError("train: track '" + t.meta.track_id + "' has " +
                            std::to_string(t.features.rows()) + " frames, expected " +
                            std::to_string(config.time_samples));
  }

  std::vector<ManifestEntry> metas;
  std::vector<std::string> ids;
  metas.reserve(dataset.tracks.size());
  for (const TrackData& t : dataset.tracks) {
    metas.push_back(t.meta);
    ids.push_back(t.meta.track_id);
  }
  const std::vector<EvalCase> protocol = build_protocol(metas);
  if (protocol.empty())
    throw ValidationError("train: protocol has no positive pairs");

  auto [params, metric] =
      init_params(config.seed, dataset.feature_dim, config.embedding_dim, config.metric,
                  config.variant);
  OptimizerState opt;

  TrainResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Mining runs against embeddings frozen at epoch start.
    const std::vector<TrackEmbedding> embedded =
        embed_all(dataset, params, config.variant, threads);
    std::vector<VecX> vectors(embedded.size());
    for (std::size_t i = 0; i < embedded.size(); ++i) vectors[i] = embedded[i].f;

    const MiningResult mined = mine_hard_negatives(
        vectors, protocol, metric, ids, config.hard_negatives_per_positive, log);

    std::vector<PairSample> pairs;
    pairs.reserve(protocol.size() + mined.negatives.size());
    for (const EvalCase& c : protocol) pairs.push_back({c.query, c.positive, 1});
    pairs.insert(pairs.end(), mined.negatives.begin(), mined.negatives.end());

    std::mt19937_64 shuffle_rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(pairs.begin(), pairs.end(), shuffle_rng);

    double loss_sum = 0;
    double pos_d_sum = 0, neg_d_sum = 0;
    long pos_count = 0, neg_count = 0;

    for (std::size_t begin = 0; begin < pairs.size(); begin += config.batch_size) {
      const std::size_t end = std::min(pairs.size(), begin + config.batch_size);
      GradSet acc = zero_grads(params, metric);
      for (std::size_t i = begin; i < end; ++i) {
        const PairSample& pair = pairs[i];
        const PairGrads pg = pair_forward_backward(
            dataset.tracks[pair.query].features, dataset.tracks[pair.gallery].features,
            pair.label, params, metric, config.variant, config.margin);
        acc += pg.grads;
        loss_sum += pg.loss;
        if (pair.label == 1) {
          pos_d_sum += pg.distance;
          ++pos_count;
        } else {
          neg_d_sum += pg.distance;
          ++neg_count;
        }
      }
      acc.scale(1.0 / static_cast<double>(end - begin));
      if (config.metric == MetricKind::mahalanobis && config.lambda > 0)
        acc.dfactor += mahalanobis_regularizer(metric.factor, config.lambda).dfactor;
      if (!acc.all_finite())
        throw TrainingError("train: non-finite gradients at epoch " +
                            std::to_string(epoch + 1) + ", step " +
                            std::to_string(opt.step + 1));
      adam_step(params, metric, acc, opt, config);
    }

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.mean_loss = loss_sum / static_cast<double>(pairs.size());
    stats.mean_pos_d = pos_count > 0 ? pos_d_sum / static_cast<double>(pos_count) : 0.0;
    stats.mean_neg_d = neg_count > 0 ? neg_d_sum / static_cast<double>(neg_count) : 0.0;
    result.history.push_back(stats);
    if (log)
      *log << "epoch " << stats.epoch << "/" << config.epochs
           << " mean_loss=" << stats.mean_loss << " mean_pos_d=" << stats.mean_pos_d
           << " mean_neg_d=" << stats.mean_neg_d << "\n";
  }

  result.checkpoint.params = std::move(params);
  result.checkpoint.metric = std::move(metric);
  result.checkpoint.config = config;
  result.checkpoint.input_dim = dataset.feature_dim;
  result.checkpoint.epoch = config.epochs;
  result.checkpoint.opt = std::move(opt);
  return result;
}

void write_loss_csv(const std::filesystem::path& path,
                    const std::vector<EpochStats>& history) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("write_loss_csv: cannot open " + path.string());
  os.precision(17);
  os << "epoch,mean_loss,mean_pos_d,mean_neg_d\n";
  for (const EpochStats& e : history)
    os << e.epoch << ',' << e.mean_loss << ',' << e.mean_pos_d << ',' << e.mean_neg_d
       << '\n';
  os.flush();
  if (!os) throw IoError("write_loss_csv: write failed for " + path.string());
}

}  // namespace lftd
