// Command line front end. Subcommands: synth, train, embed, eval, search,
// diag. Exit codes: 0 success, 1 runtime failure, 2 usage or validation
// failure. Every subcommand is deterministic given its inputs, the seed and
// thread count 1 (the default).

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "lftd/checkpoint.hpp"
#include "lftd/data_io.hpp"
#include "lftd/evaluation.hpp"
#include "lftd/training.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kDefaultSeed = 42;

struct CommonOpts {
  std::string manifest;
  std::string checkpoint;
  std::string out_dir;
  int threads = 1;
};

struct TrainOpts {
  CommonOpts common;
  std::string config_file;
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 0;  // 0 = pick the metric's default
  double margin = 2.0;
  int time_samples = 16;
  int embedding_dim = 128;
  std::string metric = "euclidean";
  std::string variant = "full";
  double lambda = 0.01;
  std::uint64_t seed = kDefaultSeed;
  int hard_negatives = 1;
};

// Precedence: command-line flags > config file > built-in defaults. The
// config file is a JSON object whose keys are the long flag names.
void apply_config_file(TrainOpts& o, const CLI::App& cmd) {
  if (o.config_file.empty()) return;
  std::ifstream is(o.config_file);
  if (!is) throw lftd::ValidationError("config file not found: " + o.config_file);
  ordered_json j;
  try {
    j = ordered_json::parse(is);
  } catch (const ordered_json::exception& ex) {
    throw lftd::ValidationError("config file " + o.config_file + ": " + ex.what());
  }
  auto take = [&](const char* flag, const char* key, auto& slot) {
    if (cmd.count(flag) == 0 && j.contains(key)) {
      try {
        slot = j.at(key).get<std::decay_t<decltype(slot)>>();
      } catch (const ordered_json::exception& ex) {
        throw lftd::ValidationError("config file " + o.config_file + ", key '" + key +
                                    "': " + ex.what());
      }
    }
  };
  take("--epochs", "epochs", o.epochs);
  take("--batch-size", "batch_size", o.batch_size);
  take("--lr", "learning_rate", o.learning_rate);
  take("--margin", "margin", o.margin);
  take("--time-samples", "time_samples", o.time_samples);
  take("--embedding-dim", "embedding_dim", o.embedding_dim);
  take("--metric", "metric", o.metric);
  take("--variant", "variant", o.variant);
  take("--lambda", "lambda", o.lambda);
  take("--seed", "seed", o.seed);
  take("--hard-negatives", "hard_negatives_per_positive", o.hard_negatives);
  take("--threads", "threads", o.common.threads);
}

struct SynthOpts {
  std::string out_dir;
  lftd::SynthConfig config;
};

struct EmbedOpts {
  CommonOpts common;
};

struct EvalOpts {
  CommonOpts common;
};

struct SearchOpts {
  std::string embeddings;
  std::string checkpoint;
  std::string query;
  int k = 10;
};

struct DiagOpts {
  CommonOpts common;
  std::string corruption;
};

fs::path ensure_out_dir(const std::string& out) {
  if (out.empty()) throw lftd::ValidationError("--out is required");
  fs::create_directories(out);
  return fs::path(out);
}

void write_run_summary(const fs::path& dir, const ordered_json& summary) {
  std::ofstream os(dir / "run_summary.json", std::ios::trunc);
  if (!os) throw lftd::IoError("cannot write run summary");
  os << summary.dump(2) << '\n';
}

ordered_json config_summary(const lftd::TrainConfig& c) {
  ordered_json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["margin"] = c.margin;
  j["time_samples"] = c.time_samples;
  j["embedding_dim"] = c.embedding_dim;
  j["metric"] = lftd::to_string(c.metric);
  j["variant"] = lftd::to_string(c.variant);
  j["lambda"] = c.lambda;
  j["seed"] = c.seed;
  j["hard_negatives_per_positive"] = c.hard_negatives_per_positive;
  return j;
}

int run_train(TrainOpts o, const CLI::App& cmd) {
  apply_config_file(o, cmd);
  lftd::TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.margin = o.margin;
  cfg.time_samples = o.time_samples;
  cfg.embedding_dim = o.embedding_dim;
  cfg.metric = lftd::metric_from_string(o.metric);
  cfg.variant = lftd::variant_from_string(o.variant);
  cfg.lambda = o.lambda;
  cfg.seed = o.seed;
  cfg.hard_negatives_per_positive = o.hard_negatives;
  cfg.learning_rate =
      o.learning_rate > 0 ? o.learning_rate : lftd::default_learning_rate(cfg.metric);

  const fs::path out = ensure_out_dir(o.common.out_dir);
  const lftd::TrackDataset dataset =
      lftd::load_dataset(o.common.manifest, cfg.time_samples, cfg.seed);
  const lftd::TrainResult result = lftd::train(dataset, cfg, o.common.threads, &std::cerr);

  const fs::path ckpt_path = out / "checkpoint.trkc";
  lftd::save_checkpoint(ckpt_path, result.checkpoint);
  lftd::write_loss_csv(out / "loss.csv", result.history);

  ordered_json summary;
  summary["subcommand"] = "train";
  summary["manifest"] = o.common.manifest;
  summary["config"] = config_summary(cfg);
  summary["checkpoint"] = ckpt_path.string();
  summary["loss_csv"] = (out / "loss.csv").string();
  summary["tracks"] = dataset.tracks.size();
  if (!result.history.empty()) {
    summary["final_mean_loss"] = result.history.back().mean_loss;
  }
  write_run_summary(out, summary);

  std::cout << "trained " << cfg.epochs << " epoch(s) on " << dataset.tracks.size()
            << " tracks; checkpoint: " << ckpt_path.string() << "\n";
  return 0;
}

int run_synth(const SynthOpts& o) {
  const fs::path out = ensure_out_dir(o.out_dir);
  const lftd::SynthPaths paths = lftd::synth_generate(o.config, out);
  std::cout << "manifest: " << paths.manifest.string() << "\n"
            << "corruption sidecar: " << paths.corruption.string() << "\n";
  return 0;
}

int run_embed(const EmbedOpts& o) {
  const fs::path out = ensure_out_dir(o.common.out_dir);
  const lftd::ModelCheckpoint ckpt = lftd::load_checkpoint(o.common.checkpoint);
  const lftd::TrackDataset dataset =
      lftd::load_dataset(o.common.manifest, ckpt.config.time_samples, ckpt.config.seed);
  if (!dataset.tracks.empty() && dataset.feature_dim != ckpt.input_dim)
    throw lftd::ValidationError(
        "feature dimension " + std::to_string(dataset.feature_dim) +
        " does not match checkpoint input dimension " + std::to_string(ckpt.input_dim));

  const std::vector<lftd::TrackEmbedding> embedded =
      lftd::embed_all(dataset, ckpt.params, ckpt.config.variant, o.common.threads);
  std::vector<lftd::EmbeddingRecord> records;
  records.reserve(embedded.size());
  for (std::size_t i = 0; i < embedded.size(); ++i) {
    if (embedded[i].degenerate)
      std::cerr << "warning: degenerate embedding for track "
                << dataset.tracks[i].meta.track_id << "\n";
    records.push_back({dataset.tracks[i].meta.track_id, embedded[i].f});
  }
  const fs::path table = out / "embeddings.jsonl";
  lftd::write_embedding_table(table, records);

  ordered_json summary;
  summary["subcommand"] = "embed";
  summary["checkpoint"] = o.common.checkpoint;
  summary["manifest"] = o.common.manifest;
  summary["embeddings"] = table.string();
  summary["tracks"] = records.size();
  write_run_summary(out, summary);

  std::cout << "embedded " << records.size() << " track(s): " << table.string() << "\n";
  return 0;
}

int run_eval(const EvalOpts& o) {
  const fs::path out = ensure_out_dir(o.common.out_dir);
  const lftd::ModelCheckpoint ckpt = lftd::load_checkpoint(o.common.checkpoint);
  const lftd::TrackDataset dataset =
      lftd::load_dataset(o.common.manifest, ckpt.config.time_samples, ckpt.config.seed);
  if (!dataset.tracks.empty() && dataset.feature_dim != ckpt.input_dim)
    throw lftd::ValidationError(
        "feature dimension " + std::to_string(dataset.feature_dim) +
        " does not match checkpoint input dimension " + std::to_string(ckpt.input_dim));

  std::vector<lftd::ManifestEntry> metas;
  for (const lftd::TrackData& t : dataset.tracks) metas.push_back(t.meta);
  const std::vector<lftd::EvalCase> protocol = lftd::build_protocol(metas);
  if (protocol.empty())
    throw lftd::ValidationError(
        "evaluation protocol is empty: no identity appears in two different videos");

  const lftd::EvalReport report = lftd::evaluate(ckpt, dataset, protocol, o.common.threads);
  lftd::write_report_json(out / "report.json", report);
  lftd::write_cmc_csv(out / "cmc.csv", report);

  ordered_json summary;
  summary["subcommand"] = "eval";
  summary["checkpoint"] = o.common.checkpoint;
  summary["manifest"] = o.common.manifest;
  summary["report"] = (out / "report.json").string();
  summary["cmc_csv"] = (out / "cmc.csv").string();
  summary["cases"] = report.case_ranks.size();
  summary["mAP"] = report.map;
  write_run_summary(out, summary);

  std::cout << "cases: " << report.case_ranks.size() << "  mAP: " << report.map
            << "  Hit@1: " << report.hit_at.at(1) << "  Hit@5: " << report.hit_at.at(5)
            << "  Hit@10: " << report.hit_at.at(10)
            << "  Hit@20: " << report.hit_at.at(20) << "\n";
  return 0;
}

int run_search(const SearchOpts& o) {
  const std::vector<lftd::EmbeddingRecord> table =
      lftd::load_embedding_table(o.embeddings);

  lftd::MetricParams metric;  // Euclidean unless a checkpoint supplies one
  if (!o.checkpoint.empty()) metric = lftd::load_checkpoint(o.checkpoint).metric;

  const auto query_it =
      std::find_if(table.begin(), table.end(), [&](const lftd::EmbeddingRecord& r) {
        return r.track_id == o.query;
      });
  if (query_it == table.end())
    throw lftd::ValidationError("unknown query id: " + o.query);

  const lftd::TopKResult result =
      lftd::search_topk(query_it->embedding, table, metric, o.k);
  if (result.clipped)
    std::cerr << "warning: k=" << o.k << " exceeds gallery size " << table.size()
              << "; returning all entries\n";
  std::cout.precision(17);
  for (std::size_t i = 0; i < result.items.size(); ++i)
    std::cout << (i + 1) << '\t' << result.items[i].id << '\t'
              << result.items[i].distance << '\n';
  return 0;
}

int run_diag(const DiagOpts& o) {
  const fs::path out = ensure_out_dir(o.common.out_dir);
  const lftd::ModelCheckpoint ckpt = lftd::load_checkpoint(o.common.checkpoint);
  const lftd::TrackDataset dataset =
      lftd::load_dataset(o.common.manifest, ckpt.config.time_samples, ckpt.config.seed);

  lftd::CorruptionMap corruption;
  const bool with_corruption = !o.corruption.empty();
  if (with_corruption) corruption = lftd::load_corruption(o.corruption);

  const lftd::WeightDiagnostics diag = lftd::weight_diagnostics(
      dataset, ckpt.params, ckpt.config.variant, with_corruption ? &corruption : nullptr);

  // 20 equal-width bins over the observed range of per-frame mean weights.
  const int bins = 20;
  double lo = diag.frame_mean_weights.front(), hi = lo;
  for (const double w : diag.frame_mean_weights) {
    lo = std::min(lo, w);
    hi = std::max(hi, w);
  }
  if (hi <= lo) hi = lo + 1e-12;
  std::vector<long> counts(bins, 0);
  for (const double w : diag.frame_mean_weights) {
    int b = static_cast<int>((w - lo) / (hi - lo) * bins);
    b = std::clamp(b, 0, bins - 1);
    ++counts[b];
  }

  ordered_json j;
  j["frames"] = diag.frame_mean_weights.size();
  j["mean_relative_std"] = diag.mean_relative_std;
  ordered_json hist;
  std::vector<double> edges(bins + 1);
  for (int b = 0; b <= bins; ++b) edges[b] = lo + (hi - lo) * b / bins;
  std::vector<double> fractions(bins);
  for (int b = 0; b < bins; ++b)
    fractions[b] =
        static_cast<double>(counts[b]) / static_cast<double>(diag.frame_mean_weights.size());
  hist["bin_edges"] = edges;
  hist["fractions"] = fractions;
  j["frame_weight_histogram"] = hist;

  if (ckpt.metric.kind == lftd::MetricKind::mahalanobis) {
    const lftd::MatX m = ckpt.metric.factor * ckpt.metric.factor.transpose();
    const auto dom = lftd::diag_dominance(m);
    j["diag_dominance"] = dom.all_zero ? 0.0 : dom.ratio;
    j["diag_dominance_all_zero"] = dom.all_zero;
  }
  if (with_corruption) {
    ordered_json c;
    c["corrupted_mean_weight"] = diag.corrupted_mean_weight;
    c["clean_mean_weight"] = diag.clean_mean_weight;
    c["corrupted_frames"] = diag.corrupted_frames;
    c["clean_frames"] = diag.clean_frames;
    const double mid = 0.5 * (diag.clean_mean_weight + diag.corrupted_mean_weight);
    c["relative_margin"] =
        mid > 0 ? (diag.clean_mean_weight - diag.corrupted_mean_weight) / mid : 0.0;
    j["corruption"] = c;
  }

  const fs::path diag_path = out / "diagnostics.json";
  std::ofstream os(diag_path, std::ios::trunc);
  if (!os) throw lftd::IoError("cannot write " + diag_path.string());
  os << j.dump(2) << '\n';

  ordered_json summary;
  summary["subcommand"] = "diag";
  summary["checkpoint"] = o.common.checkpoint;
  summary["manifest"] = o.common.manifest;
  summary["diagnostics"] = diag_path.string();
  write_run_summary(out, summary);

  std::cout << "diagnostics: " << diag_path.string()
            << "  mean_relative_std: " << diag.mean_relative_std << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LFTD: track embeddings by temporal feature aggregation"};
  app.require_subcommand(1);

  TrainOpts train_opts;
  CLI::App* train_cmd = app.add_subcommand("train", "Train aggregator and metric");
  train_cmd->add_option("--manifest", train_opts.common.manifest, "Track manifest (JSON lines)")
      ->required();
  train_cmd->add_option("--out", train_opts.common.out_dir, "Output directory")->required();
  train_cmd->add_option("--epochs", train_opts.epochs, "Training epochs")->capture_default_str();
  train_cmd->add_option("--batch-size", train_opts.batch_size, "Pairs per optimizer step")->capture_default_str();
  train_cmd->add_option("--lr", train_opts.learning_rate,
                        "Learning rate (0 = metric default: 1e-5 Euclidean, 10^-4.4 otherwise)");
  train_cmd->add_option("--margin", train_opts.margin, "Contrastive margin")->capture_default_str();
  train_cmd->add_option("--time-samples", train_opts.time_samples, "Frames sampled per track")->capture_default_str();
  train_cmd->add_option("--embedding-dim", train_opts.embedding_dim, "Embedding dimension M")->capture_default_str();
  train_cmd->add_option("--metric", train_opts.metric,
                        "euclidean | weighted_euclidean | mahalanobis")
      ->capture_default_str();
  train_cmd->add_option("--variant", train_opts.variant,
                        "full | avg | project_only | attention_only")
      ->capture_default_str();
  train_cmd->add_option("--lambda", train_opts.lambda, "Mahalanobis regularizer weight")->capture_default_str();
  train_cmd->add_option("--seed", train_opts.seed, "RNG seed")->capture_default_str();
  train_cmd->add_option("--hard-negatives", train_opts.hard_negatives,
                        "Mined negatives per positive pair")
      ->capture_default_str();
  train_cmd->add_option("--threads", train_opts.common.threads, "Worker threads for embedding");
  train_cmd->add_option("--config", train_opts.config_file,
                        "JSON config file (flags take precedence)");

  SynthOpts synth_opts;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth_cmd->add_option("--out", synth_opts.out_dir, "Output directory")->required();
  synth_cmd->add_option("--identities", synth_opts.config.identities, "Identity count")->capture_default_str();
  synth_cmd->add_option("--tracks-per-identity", synth_opts.config.tracks_per_identity,
                        "Tracks per identity (one video per slot)")
      ->capture_default_str();
  synth_cmd->add_option("--frames", synth_opts.config.frames_per_track, "Frames per track")->capture_default_str();
  synth_cmd->add_option("--dim", synth_opts.config.feature_dim, "Feature dimension N")->capture_default_str();
  synth_cmd->add_option("--noise", synth_opts.config.noise_sigma, "Per-component noise sigma")->capture_default_str();
  synth_cmd->add_option("--corruption", synth_opts.config.corruption_prob,
                        "Probability a frame is replaced by a distractor")
      ->capture_default_str();
  synth_cmd->add_option("--pool", synth_opts.config.distractor_pool, "Distractor pool size")->capture_default_str();
  synth_cmd->add_option("--seed", synth_opts.config.seed, "RNG seed")->capture_default_str();

  EmbedOpts embed_opts;
  CLI::App* embed_cmd = app.add_subcommand("embed", "Embed every manifest track");
  embed_cmd->add_option("--checkpoint", embed_opts.common.checkpoint, "Model checkpoint")
      ->required();
  embed_cmd->add_option("--manifest", embed_opts.common.manifest, "Track manifest")->required();
  embed_cmd->add_option("--out", embed_opts.common.out_dir, "Output directory")->required();
  embed_cmd->add_option("--threads", embed_opts.common.threads, "Worker threads");

  EvalOpts eval_opts;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Run the retrieval protocol");
  eval_cmd->add_option("--checkpoint", eval_opts.common.checkpoint, "Model checkpoint")
      ->required();
  eval_cmd->add_option("--manifest", eval_opts.common.manifest, "Track manifest")->required();
  eval_cmd->add_option("--out", eval_opts.common.out_dir, "Output directory")->required();
  eval_cmd->add_option("--threads", eval_opts.common.threads, "Worker threads");

  SearchOpts search_opts;
  CLI::App* search_cmd = app.add_subcommand("search", "Top-k nearest tracks for a query");
  search_cmd->add_option("--embeddings", search_opts.embeddings, "Embedding table (JSON lines)")
      ->required();
  search_cmd->add_option("--query", search_opts.query, "Query track id")->required();
  search_cmd->add_option("-k,--top-k", search_opts.k, "Result count")->capture_default_str();
  search_cmd->add_option("--checkpoint", search_opts.checkpoint,
                         "Checkpoint supplying the metric (Euclidean when omitted)");

  DiagOpts diag_opts;
  CLI::App* diag_cmd = app.add_subcommand("diag", "Frame-weight diagnostics");
  diag_cmd->add_option("--checkpoint", diag_opts.common.checkpoint, "Model checkpoint")
      ->required();
  diag_cmd->add_option("--manifest", diag_opts.common.manifest, "Track manifest")->required();
  diag_cmd->add_option("--out", diag_opts.common.out_dir, "Output directory")->required();
  diag_cmd->add_option("--corruption", diag_opts.corruption,
                       "Corruption sidecar for the corrupted/clean weight split");
  diag_cmd->add_option("--threads", diag_opts.common.threads, "Worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) return run_train(train_opts, *train_cmd);
    if (synth_cmd->parsed()) return run_synth(synth_opts);
    if (embed_cmd->parsed()) return run_embed(embed_opts);
    if (eval_cmd->parsed()) return run_eval(eval_opts);
    if (search_cmd->parsed()) return run_search(search_opts);
    if (diag_cmd->parsed()) return run_diag(diag_opts);
  } catch (const lftd::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
