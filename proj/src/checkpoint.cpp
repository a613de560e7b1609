#include "lftd/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <vector>

#include "lftd/detail/binary_io.hpp"

namespace lftd {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr char kCheckpointMagic[4] = {'T', 'R', 'K', 'C'};

ordered_json config_to_json(const TrainConfig& c) {
  ordered_json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["margin"] = c.margin;
  j["time_samples"] = c.time_samples;
  j["embedding_dim"] = c.embedding_dim;
  j["metric"] = to_string(c.metric);
  j["variant"] = to_string(c.variant);
  j["lambda"] = c.lambda;
  j["seed"] = c.seed;
  j["hard_negatives_per_positive"] = c.hard_negatives_per_positive;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  return j;
}

TrainConfig config_from_json(const ordered_json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.margin = j.at("margin").get<double>();
  c.time_samples = j.at("time_samples").get<int>();
  c.embedding_dim = j.at("embedding_dim").get<int>();
  c.metric = metric_from_string(j.at("metric").get<std::string>());
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.lambda = j.at("lambda").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.hard_negatives_per_positive = j.at("hard_negatives_per_positive").get<int>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  return c;
}

struct NamedTensor {
  const char* name;
  const MatX* mat = nullptr;
  const VecX* vec = nullptr;
};

std::vector<NamedTensor> tensor_list(const ModelCheckpoint& c) {
  return {
      {"w1", &c.params.w1, nullptr},       {"b1", nullptr, &c.params.b1},
      {"w2", &c.params.w2, nullptr},       {"metric_w", nullptr, &c.metric.w},
      {"metric_factor", &c.metric.factor, nullptr},
      {"m_w1", &c.opt.m_w1, nullptr},      {"v_w1", &c.opt.v_w1, nullptr},
      {"m_b1", nullptr, &c.opt.m_b1},      {"v_b1", nullptr, &c.opt.v_b1},
      {"m_w2", &c.opt.m_w2, nullptr},      {"v_w2", &c.opt.v_w2, nullptr},
      {"m_w", nullptr, &c.opt.m_w},        {"v_w", nullptr, &c.opt.v_w},
      {"m_factor", &c.opt.m_factor, nullptr},
      {"v_factor", &c.opt.v_factor, nullptr},
  };
}

void assign_tensor(ModelCheckpoint& c, const std::string& name, const MatX& value) {
  auto as_vec = [&]() -> VecX {
    if (value.cols() > 1)
      throw IoError("checkpoint: tensor '" + name + "' is not a column vector");
    return value.col(0);
  };
  if (name == "w1") c.params.w1 = value;
  else if (name == "b1") c.params.b1 = as_vec();
  else if (name == "w2") c.params.w2 = value;
  else if (name == "metric_w") c.metric.w = as_vec();
  else if (name == "metric_factor") c.metric.factor = value;
  else if (name == "m_w1") c.opt.m_w1 = value;
  else if (name == "v_w1") c.opt.v_w1 = value;
  else if (name == "m_b1") c.opt.m_b1 = as_vec();
  else if (name == "v_b1") c.opt.v_b1 = as_vec();
  else if (name == "m_w2") c.opt.m_w2 = value;
  else if (name == "v_w2") c.opt.v_w2 = value;
  else if (name == "m_w") c.opt.m_w = as_vec();
  else if (name == "v_w") c.opt.v_w = as_vec();
  else if (name == "m_factor") c.opt.m_factor = value;
  else if (name == "v_factor") c.opt.v_factor = value;
  else throw IoError("checkpoint: unknown tensor '" + name + "'");
}

}  // namespace

void save_checkpoint(const fs::path& path, const ModelCheckpoint& ckpt) {
  ordered_json manifest;
  manifest["config"] = config_to_json(ckpt.config);
  manifest["epoch"] = ckpt.epoch;
  manifest["input_dim"] = static_cast<std::int64_t>(ckpt.input_dim);
  manifest["opt_step"] = ckpt.opt.step;

  ordered_json tensors = ordered_json::array();
  for (const NamedTensor& t : tensor_list(ckpt)) {
    const Index rows = t.mat ? t.mat->rows() : t.vec->rows();
    const Index cols = t.mat ? t.mat->cols() : (t.vec->rows() > 0 ? 1 : 0);
    if (rows == 0) continue;
    ordered_json tj;
    tj["name"] = t.name;
    tj["rows"] = static_cast<std::int64_t>(rows);
    tj["cols"] = static_cast<std::int64_t>(cols);
    tensors.push_back(tj);
  }
  manifest["tensors"] = tensors;
  const std::string manifest_str = manifest.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("save_checkpoint: cannot open " + path.string());
  os.write(kCheckpointMagic, 4);
  detail::write_u16le(os, kCheckpointVersion);
  detail::write_u32le(os, static_cast<std::uint32_t>(manifest_str.size()));
  os.write(manifest_str.data(), static_cast<std::streamsize>(manifest_str.size()));

  for (const NamedTensor& t : tensor_list(ckpt)) {
    const Index rows = t.mat ? t.mat->rows() : t.vec->rows();
    if (rows == 0) continue;
    if (t.mat) {
      for (Index r = 0; r < t.mat->rows(); ++r)
        for (Index c = 0; c < t.mat->cols(); ++c)
          detail::write_f32le(os, static_cast<float>((*t.mat)(r, c)));
    } else {
      for (Index r = 0; r < t.vec->rows(); ++r)
        detail::write_f32le(os, static_cast<float>((*t.vec)(r)));
    }
  }
  os.flush();
  if (!os) throw IoError("save_checkpoint: write failed for " + path.string());
}

ModelCheckpoint load_checkpoint(const fs::path& path) {
  if (!fs::exists(path))
    throw ValidationError("checkpoint not found: " + path.string());
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_checkpoint: cannot open " + path.string());

  unsigned char header[10];
  if (!detail::read_exact(is, header, 10))
    throw TruncatedFileError("load_checkpoint: file shorter than header: " + path.string());
  if (std::memcmp(header, kCheckpointMagic, 4) != 0)
    throw BadMagicError("load_checkpoint: not a TRKC file: " + path.string());
  const std::uint16_t version = detail::load_u16le(header + 4);
  if (version != kCheckpointVersion)
    throw VersionMismatchError("load_checkpoint: unsupported version " +
                               std::to_string(version) + " in " + path.string());
  const std::uint32_t manifest_len = detail::load_u32le(header + 6);
  std::string manifest_str(manifest_len, '\0');
  if (!detail::read_exact(is, manifest_str.data(), manifest_len))
    throw TruncatedFileError("load_checkpoint: truncated manifest in " + path.string());

  ordered_json manifest;
  try {
    manifest = ordered_json::parse(manifest_str);
  } catch (const ordered_json::exception& ex) {
    throw IoError("load_checkpoint: bad manifest in " + path.string() + ": " + ex.what());
  }

  ModelCheckpoint ckpt;
  try {
    ckpt.config = config_from_json(manifest.at("config"));
    ckpt.epoch = manifest.at("epoch").get<int>();
    ckpt.input_dim = manifest.at("input_dim").get<std::int64_t>();
    ckpt.opt.step = manifest.at("opt_step").get<std::int64_t>();
  } catch (const ordered_json::exception& ex) {
    throw IoError("load_checkpoint: bad manifest in " + path.string() + ": " + ex.what());
  }

  for (const ordered_json& tj : manifest.at("tensors")) {
    const std::string name = tj.at("name").get<std::string>();
    const Index rows = tj.at("rows").get<std::int64_t>();
    const Index cols = tj.at("cols").get<std::int64_t>();
    if (rows < 1 || cols < 1)
      throw IoError("load_checkpoint: invalid shape for tensor '" + name + "'");
    const std::size_t payload = std::size_t(4) * rows * cols;
    std::vector<unsigned char> bytes(payload);
    if (!detail::read_exact(is, bytes.data(), payload))
      throw TruncatedFileError("load_checkpoint: truncated tensor '" + name + "' in " +
                               path.string());
    MatX value(rows, cols);
    const unsigned char* p = bytes.data();
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c, p += 4)
        value(r, c) = static_cast<double>(detail::load_f32le(p));
    assign_tensor(ckpt, name, value);
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw IoError("load_checkpoint: trailing data in " + path.string());
  return ckpt;
}

}  // namespace lftd
