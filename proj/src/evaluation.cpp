#include "lftd/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>

namespace lftd {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::vector<EvalCase> build_protocol(const std::vector<ManifestEntry>& tracks) {
  if (tracks.empty()) throw ValidationError("build_protocol: empty manifest");
  for (const ManifestEntry& t : tracks) {
    if (t.identity.empty() || t.video.empty() || t.session.empty())
      throw ValidationError("build_protocol: track '" + t.track_id +
                            "' is missing identity, video or session");
  }

  // Tracks grouped by video, for the negative scan.
  std::unordered_map<std::string, std::vector<int>> by_video;
  for (int i = 0; i < static_cast<int>(tracks.size()); ++i)
    by_video[tracks[i].video].push_back(i);

  std::vector<EvalCase> cases;
  for (int q = 0; q < static_cast<int>(tracks.size()); ++q) {
    for (int p = 0; p < static_cast<int>(tracks.size()); ++p) {
      if (q == p) continue;
      if (tracks[q].identity != tracks[p].identity) continue;
      if (tracks[q].video == tracks[p].video) continue;
      EvalCase c;
      c.query = q;
      c.positive = p;
      for (const int g : by_video[tracks[p].video]) {
        if (tracks[g].identity == tracks[p].identity) continue;
        c.negatives.push_back(g);
      }
      cases.push_back(std::move(c));
    }
  }
  return cases;
}

std::vector<RankedItem> rank_gallery(const VecX& query,
                                     const std::vector<EmbeddingRecord>& gallery,
                                     const MetricParams& metric) {
  if (gallery.empty()) throw ValidationError("rank_gallery: empty gallery");
  std::vector<RankedItem> items;
  items.reserve(gallery.size());
  for (const EmbeddingRecord& g : gallery)
    items.push_back({g.track_id, metric_distance(query, g.embedding, metric)});
  std::sort(items.begin(), items.end(), [](const RankedItem& a, const RankedItem& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.id < b.id;
  });
  return items;
}

TopKResult search_topk(const VecX& query, const std::vector<EmbeddingRecord>& gallery,
                       const MetricParams& metric, int k) {
  if (k < 1) throw ValidationError("search_topk: k must be >= 1");
  TopKResult out;
  std::vector<RankedItem> ranked = rank_gallery(query, gallery, metric);
  if (k >= static_cast<int>(ranked.size())) {
    out.clipped = k > static_cast<int>(ranked.size());
    out.items = std::move(ranked);
    return out;
  }
  out.items.assign(ranked.begin(), ranked.begin() + k);
  return out;
}

double average_precision(int rank) {
  if (rank < 1) throw ValidationError("average_precision: rank must be >= 1");
  return 1.0 / static_cast<double>(rank);
}

RankSummary cmc_and_hits(const std::vector<int>& ranks, int max_rank) {
  if (ranks.empty()) throw ValidationError("cmc_and_hits: empty rank list");
  if (max_rank < 1) throw ValidationError("cmc_and_hits: max_rank must be >= 1");
  for (const int r : ranks)
    if (r < 1) throw ValidationError("cmc_and_hits: ranks must be >= 1");

  RankSummary out;
  out.cmc.resize(max_rank);
  for (int r = 1; r <= max_rank; ++r) {
    long hits = 0;
    for (const int rank : ranks) hits += rank <= r ? 1 : 0;
    out.cmc[r - 1] = static_cast<double>(hits) / static_cast<double>(ranks.size());
  }
  for (const int r : {1, 5, 10, 20})
    if (r <= max_rank) out.hit_at[r] = out.cmc[r - 1];
  return out;
}

std::vector<TrackEmbedding> embed_all(const TrackDataset& dataset,
                                      const AggregatorParams& params,
                                      AggregatorVariant variant, int threads) {
  const int n = static_cast<int>(dataset.tracks.size());
  std::vector<TrackEmbedding> out(n);
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto work = [&](int begin, int end) {
    try {
      for (int i = begin; i < end; ++i)
        out[i] = aggregate(dataset.tracks[i].features, params, variant).embedding;
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };

  if (threads <= 1 || n < 2) {
    work(0, n);
  } else {
    const int workers = std::min(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      const int begin = static_cast<int>(static_cast<long>(n) * w / workers);
      const int end = static_cast<int>(static_cast<long>(n) * (w + 1) / workers);
      pool.emplace_back(work, begin, end);
    }
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

EvalReport evaluate(const ModelCheckpoint& checkpoint, const TrackDataset& dataset,
                    const std::vector<EvalCase>& protocol, int threads) {
  if (protocol.empty()) throw ValidationError("evaluate: empty protocol");
  const std::vector<TrackEmbedding> embeddings =
      embed_all(dataset, checkpoint.params, checkpoint.config.variant, threads);

  EvalReport report;
  std::vector<int> ranks;
  ranks.reserve(protocol.size());
  double ap_sum = 0;
  for (const EvalCase& c : protocol) {
    std::vector<EmbeddingRecord> gallery;
    gallery.reserve(c.negatives.size() + 1);
    gallery.push_back({dataset.tracks[c.positive].meta.track_id, embeddings[c.positive].f});
    for (const int g : c.negatives)
      gallery.push_back({dataset.tracks[g].meta.track_id, embeddings[g].f});

    const std::vector<RankedItem> ranked =
        rank_gallery(embeddings[c.query].f, gallery, checkpoint.metric);
    const std::string& positive_id = dataset.tracks[c.positive].meta.track_id;
    int rank = 0;
    for (int i = 0; i < static_cast<int>(ranked.size()); ++i) {
      if (ranked[i].id == positive_id) {
        rank = i + 1;
        break;
      }
    }
    if (rank == 0)
      throw ValidationError("evaluate: positive track absent from gallery");

    ranks.push_back(rank);
    ap_sum += average_precision(rank);
    report.case_ranks.push_back(
        {dataset.tracks[c.query].meta.track_id, positive_id, rank});
  }

  const RankSummary summary = cmc_and_hits(ranks, 20);
  report.map = ap_sum / static_cast<double>(protocol.size());
  report.hit_at = summary.hit_at;
  report.cmc = summary.cmc;
  return report;
}

void write_report_json(const fs::path& path, const EvalReport& report) {
  ordered_json j;
  j["mAP"] = report.map;
  ordered_json hits;
  for (const auto& [rank, value] : report.hit_at) hits[std::to_string(rank)] = value;
  j["hit_at"] = hits;
  j["cmc"] = report.cmc;
  ordered_json cases = ordered_json::array();
  for (const CaseRank& c : report.case_ranks) {
    ordered_json cj;
    cj["query"] = c.query;
    cj["positive"] = c.positive;
    cj["rank"] = c.rank;
    cases.push_back(cj);
  }
  j["cases"] = cases;

  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("write_report_json: cannot open " + path.string());
  os << j.dump(2) << '\n';
  os.flush();
  if (!os) throw IoError("write_report_json: write failed for " + path.string());
}

void write_cmc_csv(const fs::path& path, const EvalReport& report) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("write_cmc_csv: cannot open " + path.string());
  os.precision(17);
  for (int r = 0; r < static_cast<int>(report.cmc.size()); ++r)
    os << (r + 1) << ',' << report.cmc[r] << '\n';
  os.flush();
  if (!os) throw IoError("write_cmc_csv: write failed for " + path.string());
}

WeightDiagnostics weight_diagnostics(const TrackDataset& dataset,
                                     const AggregatorParams& params,
                                     AggregatorVariant variant,
                                     const CorruptionMap* corruption) {
  if (dataset.tracks.empty())
    throw ValidationError("weight_diagnostics: empty dataset");

  WeightDiagnostics out;
  out.has_corruption_split = corruption != nullptr;
  double rel_std_sum = 0;
  double corrupted_sum = 0;
  double clean_sum = 0;

  for (const TrackData& track : dataset.tracks) {
    const AggregateResult res = aggregate(track.features, params, variant);
    const FrameWeightStats stats = frame_weight_stats(res.tape.e);
    rel_std_sum += stats.mean_relative_std;

    std::set<Index> corrupted_rows;
    if (corruption) {
      const auto it = corruption->find(track.meta.track_id);
      if (it != corruption->end())
        corrupted_rows.insert(it->second.begin(), it->second.end());
    }
    for (Index tau = 0; tau < stats.mean_weights.size(); ++tau) {
      const double w = stats.mean_weights(tau);
      out.frame_mean_weights.push_back(w);
      if (!corruption) continue;
      if (corrupted_rows.count(track.source_rows[tau])) {
        corrupted_sum += w;
        ++out.corrupted_frames;
      } else {
        clean_sum += w;
        ++out.clean_frames;
      }
    }
  }

  out.mean_relative_std = rel_std_sum / static_cast<double>(dataset.tracks.size());
  if (out.corrupted_frames > 0)
    out.corrupted_mean_weight = corrupted_sum / static_cast<double>(out.corrupted_frames);
  if (out.clean_frames > 0)
    out.clean_mean_weight = clean_sum / static_cast<double>(out.clean_frames);
  return out;
}

}  // namespace lftd
