#pragma once

// File formats and dataset plumbing.
//
// Feature file (.trkf), all little-endian:
//   bytes 0..3   magic "TRKF"
//   bytes 4..5   format version (u16), currently 1
//   bytes 6..9   frame count T (u32)
//   bytes 10..13 feature dimension N (u32)
//   bytes 14..   T*N IEEE-754 32-bit values, row-major
//
// Manifest: JSON lines, one track per line with keys track_id, identity,
// session, camera, video, features (path, relative paths resolved against
// the manifest directory), frames.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lftd/types.hpp"

namespace lftd {

inline constexpr std::uint16_t kFeatureFileVersion = 1;

/// Writes a T x N matrix as 32-bit values; in-memory doubles are rounded.
void write_features(const std::filesystem::path& path, const FeatureMatrix& values);

/// Reads a feature file and widens the payload to double. Throws
/// BadMagicError, VersionMismatchError or TruncatedFileError for the
/// corresponding defects.
FeatureMatrix read_features(const std::filesystem::path& path);

enum class Camera { left, center, right, other };
const char* to_string(Camera c);
Camera camera_from_string(const std::string& s);

struct ManifestEntry {
  std::string track_id;
  std::string identity;
  std::string session;
  Camera camera = Camera::other;
  std::string video;
  std::string feature_path;
  int frame_count = 0;
};

/// Loads and validates a JSON-lines manifest. Malformed lines are reported
/// with their line number; duplicate track ids and missing feature files are
/// errors.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries);

std::filesystem::path resolve_feature_path(const std::filesystem::path& manifest_path,
                                           const ManifestEntry& entry);

/// Frame indices used to reduce a track to exactly t_out frames.
/// For source >= t_out the indices are floor(phase + k * stride) with
/// stride = source / t_out and phase drawn uniformly from [0, stride) by a
/// mt19937_64 seeded with `seed`. Shorter sources repeat cyclically:
/// index k = k mod source.
std::vector<Index> sample_frame_indices(Index source_frames, Index t_out,
                                        std::uint64_t seed);
FeatureMatrix sample_frames(const FeatureMatrix& source, Index t_out,
                            std::uint64_t seed);

// Synthetic stand-in corpus: one unit prototype per identity (drawn in a
// cone around a shared base direction, so identities are distinct but
// confusable the way same-class objects are), clean frames are noisy copies
// of the prototype, and with probability corruption_prob a frame is replaced
// by a vector from a shared distractor pool (simulated occlusion). Track k
// of every identity lands in video "v<k>" so the cross-video evaluation
// protocol is constructible.
struct SynthConfig {
  int identities = 50;
  int tracks_per_identity = 4;
  int frames_per_track = 32;
  int feature_dim = 64;
  double noise_sigma = 0.1;
  double corruption_prob = 0.3;
  int distractor_pool = 16;
  std::uint64_t seed = 42;
};

struct SynthPaths {
  std::filesystem::path manifest;
  std::filesystem::path corruption;
};

/// Writes manifest, feature files and a corruption sidecar (JSON lines of
/// {track_id, corrupted_frames}) under out_dir. Deterministic in the seed.
SynthPaths synth_generate(const SynthConfig& config,
                          const std::filesystem::path& out_dir);

using CorruptionMap = std::map<std::string, std::vector<int>>;
CorruptionMap load_corruption(const std::filesystem::path& path);

struct TrackData {
  ManifestEntry meta;
  MatX features;                    // sampled to the requested frame count
  std::vector<Index> source_rows;   // source row each sampled row came from
};

struct TrackDataset {
  std::vector<TrackData> tracks;
  Index feature_dim = 0;
};

/// Loads every manifest track, checks the stored frame counts, and samples
/// each track to `time_samples` rows. Each track's sampling stream is seeded
/// from (seed, track_id) so the result does not depend on manifest order.
TrackDataset load_dataset(const std::filesystem::path& manifest_path,
                          Index time_samples, std::uint64_t seed);

// Embedding table rows (JSON lines of {track_id, embedding}).
struct EmbeddingRecord {
  std::string track_id;
  VecX embedding;
};

void write_embedding_table(const std::filesystem::path& path,
                           const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> load_embedding_table(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view s);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace lftd
