#include "lftd/data_io.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "lftd/detail/binary_io.hpp"

namespace lftd {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr char kFeatureMagic[4] = {'T', 'R', 'K', 'F'};
constexpr std::size_t kFeatureHeaderBytes = 14;

// Cone radius for identity prototypes relative to the unit base direction.
constexpr double kPrototypeSpread = 0.2;

}  // namespace

void write_features(const fs::path& path, const FeatureMatrix& values) {
  if (values.rows() < 1 || values.cols() < 1)
    throw ValidationError("write_features: empty matrix");
  if (!values.allFinite())
    throw ValidationError("write_features: non-finite values");

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("write_features: cannot open " + path.string());

  os.write(kFeatureMagic, 4);
  detail::write_u16le(os, kFeatureFileVersion);
  detail::write_u32le(os, static_cast<std::uint32_t>(values.rows()));
  detail::write_u32le(os, static_cast<std::uint32_t>(values.cols()));
  for (Index r = 0; r < values.rows(); ++r)
    for (Index c = 0; c < values.cols(); ++c)
      detail::write_f32le(os, static_cast<float>(values(r, c)));
  os.flush();
  if (!os) throw IoError("write_features: write failed for " + path.string());
}

FeatureMatrix read_features(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("read_features: cannot open " + path.string());

  unsigned char header[kFeatureHeaderBytes];
  if (!detail::read_exact(is, header, kFeatureHeaderBytes))
    throw TruncatedFileError("read_features: file shorter than header: " + path.string());
  if (std::memcmp(header, kFeatureMagic, 4) != 0)
    throw BadMagicError("read_features: not a TRKF file: " + path.string());
  const std::uint16_t version = detail::load_u16le(header + 4);
  if (version != kFeatureFileVersion)
    throw VersionMismatchError("read_features: unsupported version " +
                               std::to_string(version) + " in " + path.string());
  const std::uint32_t t = detail::load_u32le(header + 6);
  const std::uint32_t n = detail::load_u32le(header + 10);
  if (t < 1 || n < 1)
    throw IoError("read_features: invalid dimensions in " + path.string());

  const std::size_t payload = std::size_t(4) * t * n;
  std::vector<unsigned char> bytes(payload);
  if (!detail::read_exact(is, bytes.data(), payload))
    throw TruncatedFileError("read_features: truncated payload in " + path.string());
  if (is.peek() != std::char_traits<char>::eof())
    throw IoError("read_features: trailing data in " + path.string());

  FeatureMatrix out(t, n);
  const unsigned char* p = bytes.data();
  for (Index r = 0; r < out.rows(); ++r)
    for (Index c = 0; c < out.cols(); ++c, p += 4)
      out(r, c) = static_cast<double>(detail::load_f32le(p));
  return out;
}

const char* to_string(Camera c) {
  switch (c) {
    case Camera::left: return "left";
    case Camera::center: return "center";
    case Camera::right: return "right";
    case Camera::other: return "other";
  }
  return "other";
}

Camera camera_from_string(const std::string& s) {
  if (s == "left") return Camera::left;
  if (s == "center") return Camera::center;
  if (s == "right") return Camera::right;
  if (s == "other") return Camera::other;
  throw ValidationError("unknown camera position: " + s);
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("write_manifest: cannot open " + path.string());
  for (const ManifestEntry& e : entries) {
    ordered_json j;
    j["track_id"] = e.track_id;
    j["identity"] = e.identity;
    j["session"] = e.session;
    j["camera"] = to_string(e.camera);
    j["video"] = e.video;
    j["features"] = e.feature_path;
    j["frames"] = e.frame_count;
    os << j.dump() << '\n';
  }
  os.flush();
  if (!os) throw IoError("write_manifest: write failed for " + path.string());
}

fs::path resolve_feature_path(const fs::path& manifest_path, const ManifestEntry& entry) {
  fs::path p(entry.feature_path);
  if (p.is_absolute()) return p;
  return manifest_path.parent_path() / p;
}

std::vector<ManifestEntry> load_manifest(const fs::path& path) {
  if (!fs::exists(path))
    throw ValidationError("manifest not found: " + path.string());
  std::ifstream is(path);
  if (!is) throw IoError("load_manifest: cannot open " + path.string());

  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ManifestEntry e;
    try {
      const ordered_json j = ordered_json::parse(line);
      e.track_id = j.at("track_id").get<std::string>();
      e.identity = j.at("identity").get<std::string>();
      e.session = j.at("session").get<std::string>();
      e.camera = camera_from_string(j.at("camera").get<std::string>());
      e.video = j.at("video").get<std::string>();
      e.feature_path = j.at("features").get<std::string>();
      e.frame_count = j.at("frames").get<int>();
    } catch (const ordered_json::exception& ex) {
      throw ValidationError("manifest line " + std::to_string(line_no) +
                            ": malformed entry (" + ex.what() + ")");
    }
    if (!seen.insert(e.track_id).second)
      throw ValidationError("manifest line " + std::to_string(line_no) +
                            ": duplicate track_id '" + e.track_id + "'");
    if (e.frame_count < 1)
      throw ValidationError("manifest line " + std::to_string(line_no) +
                            ": frames must be >= 1");
    const fs::path feature_file = resolve_feature_path(path, e);
    if (!fs::exists(feature_file))
      throw ValidationError("manifest line " + std::to_string(line_no) +
                            ": feature file not found: " + feature_file.string());
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<Index> sample_frame_indices(Index source_frames, Index t_out,
                                        std::uint64_t seed) {
  if (source_frames < 1) throw ValidationError("sample_frames: empty track");
  if (t_out < 1) throw ValidationError("sample_frames: output frame count must be >= 1");

  std::vector<Index> indices(static_cast<std::size_t>(t_out));
  if (source_frames < t_out) {
    for (Index k = 0; k < t_out; ++k) indices[k] = k % source_frames;
    return indices;
  }
  const double stride = static_cast<double>(source_frames) / static_cast<double>(t_out);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, stride);
  const double phase = u(rng);
  for (Index k = 0; k < t_out; ++k) {
    const Index i = static_cast<Index>(phase + static_cast<double>(k) * stride);
    indices[k] = std::min(i, source_frames - 1);
  }
  return indices;
}

FeatureMatrix sample_frames(const FeatureMatrix& source, Index t_out,
                            std::uint64_t seed) {
  const std::vector<Index> idx = sample_frame_indices(source.rows(), t_out, seed);
  FeatureMatrix out(t_out, source.cols());
  for (Index k = 0; k < t_out; ++k) out.row(k) = source.row(idx[k]);
  return out;
}

namespace {

void validate_synth_config(const SynthConfig& c) {
  if (c.identities < 1 || c.tracks_per_identity < 1 || c.frames_per_track < 1 ||
      c.feature_dim < 1 || c.distractor_pool < 1)
    throw ValidationError("synth_generate: all counts must be >= 1");
  if (c.corruption_prob < 0.0 || c.corruption_prob > 1.0)
    throw ValidationError("synth_generate: corruption_prob must be in [0, 1]");
  if (c.noise_sigma < 0.0)
    throw ValidationError("synth_generate: noise_sigma must be >= 0");
}

VecX random_unit_vector(std::mt19937_64& rng, std::normal_distribution<double>& normal,
                        Index n) {
  VecX v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  const double norm = v.norm();
  if (norm == 0.0) {
    v.setZero();
    v(0) = 1.0;
    return v;
  }
  return v / norm;
}

std::string zero_pad(int value, int width) {
  std::string s = std::to_string(value);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

SynthPaths synth_generate(const SynthConfig& config, const fs::path& out_dir) {
  validate_synth_config(config);
  fs::create_directories(out_dir / "features");

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uprob(0.0, 1.0);
  std::uniform_int_distribution<int> upool(0, config.distractor_pool - 1);

  // Identity prototypes sit in a cone around a shared base direction, the
  // way instances of one object class resemble each other; distractors are
  // unrelated unit vectors.
  const VecX base = random_unit_vector(rng, normal, config.feature_dim);
  std::vector<VecX> prototypes(config.identities);
  for (VecX& p : prototypes) {
    p = base + kPrototypeSpread * random_unit_vector(rng, normal, config.feature_dim);
    p /= p.norm();
  }
  std::vector<VecX> pool(config.distractor_pool);
  for (VecX& p : pool) p = random_unit_vector(rng, normal, config.feature_dim);

  static const Camera kCameraCycle[3] = {Camera::left, Camera::center, Camera::right};

  std::vector<ManifestEntry> entries;
  std::ofstream corruption_os(out_dir / "corruption.jsonl", std::ios::trunc);
  if (!corruption_os)
    throw IoError("synth_generate: cannot open corruption sidecar");

  int track_counter = 0;
  for (int i = 0; i < config.identities; ++i) {
    for (int k = 0; k < config.tracks_per_identity; ++k) {
      MatX feats(config.frames_per_track, config.feature_dim);
      std::vector<int> corrupted;
      for (int f = 0; f < config.frames_per_track; ++f) {
        if (uprob(rng) < config.corruption_prob) {
          feats.row(f) = pool[upool(rng)].transpose();
          corrupted.push_back(f);
        } else {
          VecX v = prototypes[i];
          for (Index d = 0; d < v.size(); ++d)
            v(d) += config.noise_sigma * normal(rng);
          const double norm = v.norm();
          if (norm > 0.0) v /= norm;
          feats.row(f) = v.transpose();
        }
      }

      ManifestEntry e;
      e.track_id = "trk_" + zero_pad(track_counter, 5);
      e.identity = "id_" + zero_pad(i, 4);
      e.session = "s0";
      e.camera = kCameraCycle[k % 3];
      e.video = "v" + std::to_string(k);
      e.feature_path = "features/" + e.track_id + ".trkf";
      e.frame_count = config.frames_per_track;
      write_features(out_dir / e.feature_path, feats);

      ordered_json cj;
      cj["track_id"] = e.track_id;
      cj["corrupted_frames"] = corrupted;
      corruption_os << cj.dump() << '\n';

      entries.push_back(std::move(e));
      ++track_counter;
    }
  }
  corruption_os.flush();
  if (!corruption_os) throw IoError("synth_generate: sidecar write failed");

  SynthPaths paths;
  paths.manifest = out_dir / "manifest.jsonl";
  paths.corruption = out_dir / "corruption.jsonl";
  write_manifest(paths.manifest, entries);
  return paths;
}

CorruptionMap load_corruption(const fs::path& path) {
  if (!fs::exists(path))
    throw ValidationError("corruption sidecar not found: " + path.string());
  std::ifstream is(path);
  if (!is) throw IoError("load_corruption: cannot open " + path.string());
  CorruptionMap out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const ordered_json j = ordered_json::parse(line);
      out[j.at("track_id").get<std::string>()] =
          j.at("corrupted_frames").get<std::vector<int>>();
    } catch (const ordered_json::exception& ex) {
      throw ValidationError("corruption sidecar line " + std::to_string(line_no) +
                            ": malformed entry (" + ex.what() + ")");
    }
  }
  return out;
}

TrackDataset load_dataset(const fs::path& manifest_path, Index time_samples,
                          std::uint64_t seed) {
  const std::vector<ManifestEntry> entries = load_manifest(manifest_path);
  TrackDataset ds;
  ds.tracks.reserve(entries.size());
  for (const ManifestEntry& e : entries) {
    const FeatureMatrix raw = read_features(resolve_feature_path(manifest_path, e));
    if (raw.rows() != e.frame_count)
      throw ValidationError("track '" + e.track_id + "': manifest declares " +
                            std::to_string(e.frame_count) + " frames but file has " +
                            std::to_string(raw.rows()));
    TrackData td;
    td.meta = e;
    td.source_rows =
        sample_frame_indices(raw.rows(), time_samples, mix_seed(seed, fnv1a64(e.track_id)));
    td.features.resize(time_samples, raw.cols());
    for (Index k = 0; k < time_samples; ++k)
      td.features.row(k) = raw.row(td.source_rows[k]);

    if (ds.feature_dim == 0) ds.feature_dim = raw.cols();
    if (raw.cols() != ds.feature_dim)
      throw ValidationError("track '" + e.track_id + "': feature dimension " +
                            std::to_string(raw.cols()) + " differs from " +
                            std::to_string(ds.feature_dim));
    ds.tracks.push_back(std::move(td));
  }
  return ds;
}

void write_embedding_table(const fs::path& path,
                           const std::vector<EmbeddingRecord>& records) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("write_embedding_table: cannot open " + path.string());
  for (const EmbeddingRecord& r : records) {
    ordered_json j;
    j["track_id"] = r.track_id;
    j["embedding"] = std::vector<double>(r.embedding.data(),
                                         r.embedding.data() + r.embedding.size());
    os << j.dump() << '\n';
  }
  os.flush();
  if (!os) throw IoError("write_embedding_table: write failed for " + path.string());
}

std::vector<EmbeddingRecord> load_embedding_table(const fs::path& path) {
  if (!fs::exists(path))
    throw ValidationError("embedding table not found: " + path.string());
  std::ifstream is(path);
  if (!is) throw IoError("load_embedding_table: cannot open " + path.string());
  std::vector<EmbeddingRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const ordered_json j = ordered_json::parse(line);
      EmbeddingRecord r;
      r.track_id = j.at("track_id").get<std::string>();
      const std::vector<double> vals = j.at("embedding").get<std::vector<double>>();
      r.embedding = Eigen::Map<const VecX>(vals.data(), static_cast<Index>(vals.size()));
      out.push_back(std::move(r));
    } catch (const ordered_json::exception& ex) {
      throw ValidationError("embedding table line " + std::to_string(line_no) +
                            ": malformed entry (" + ex.what() + ")");
    }
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace lftd
