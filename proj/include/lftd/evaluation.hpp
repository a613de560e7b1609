#pragma once

// Retrieval evaluation. A case pairs a query track with the one gallery
// track sharing its identity (the positive, always from a different video)
// and with every other track of the positive's video as negatives. Galleries
// are ranked by exact brute-force distance; ties break toward the smaller
// track id so the ranking does not depend on input order.

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "lftd/data_io.hpp"
#include "lftd/model.hpp"

namespace lftd {

// Indices refer to positions in the track list the protocol was built from.
struct EvalCase {
  int query = -1;
  int positive = -1;
  std::vector<int> negatives;
};

/// One case per ordered same-identity pair of tracks from different videos.
/// Identities with a single track contribute no cases. Throws on an empty
/// manifest or on tracks missing identity/video/session fields.
std::vector<EvalCase> build_protocol(const std::vector<ManifestEntry>& tracks);

struct RankedItem {
  std::string id;
  double distance = 0;
};

/// Whole gallery sorted by ascending distance to the query, ties by id.
std::vector<RankedItem> rank_gallery(const VecX& query,
                                     const std::vector<EmbeddingRecord>& gallery,
                                     const MetricParams& metric);

struct TopKResult {
  std::vector<RankedItem> items;
  bool clipped = false;  // k exceeded the gallery size; all items returned
};

TopKResult search_topk(const VecX& query, const std::vector<EmbeddingRecord>& gallery,
                       const MetricParams& metric, int k);

// With a single relevant item at rank r, average precision is 1/r.
double average_precision(int rank);

struct RankSummary {
  std::vector<double> cmc;        // cmc[R-1] = fraction of cases with rank <= R
  std::map<int, double> hit_at;   // ranks 1, 5, 10, 20
};

RankSummary cmc_and_hits(const std::vector<int>& ranks, int max_rank = 20);

struct CaseRank {
  std::string query;
  std::string positive;
  int rank = 0;
};

struct EvalReport {
  double map = 0;
  std::map<int, double> hit_at;
  std::vector<double> cmc;
  std::vector<CaseRank> case_ranks;
};

/// Embeds every track once. With threads > 1 the tracks fan out over
/// workers; results are gathered in track order, so the output is identical
/// to the serial one.
std::vector<TrackEmbedding> embed_all(const TrackDataset& dataset,
                                      const AggregatorParams& params,
                                      AggregatorVariant variant, int threads = 1);

EvalReport evaluate(const ModelCheckpoint& checkpoint, const TrackDataset& dataset,
                    const std::vector<EvalCase>& protocol, int threads = 1);

void write_report_json(const std::filesystem::path& path, const EvalReport& report);
// One "rank,fraction" line per CMC rank; no header.
void write_cmc_csv(const std::filesystem::path& path, const EvalReport& report);

// Corpus-level attention diagnostics: mean temporal weight of every
// (track, frame), the average within-frame weight spread, and, when a
// corruption map is supplied, the split between corrupted and clean frames.
struct WeightDiagnostics {
  std::vector<double> frame_mean_weights;  // track-major
  double mean_relative_std = 0;
  bool has_corruption_split = false;
  double corrupted_mean_weight = 0;
  double clean_mean_weight = 0;
  long corrupted_frames = 0;
  long clean_frames = 0;
};

WeightDiagnostics weight_diagnostics(const TrackDataset& dataset,
                                     const AggregatorParams& params,
                                     AggregatorVariant variant,
                                     const CorruptionMap* corruption = nullptr);

}  // namespace lftd
