#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualvq/model/model.hpp"
#include "dualvq/numerics/rng.hpp"

namespace dualvq {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model snapshot plus the training position needed to resume it.
struct Checkpoint {
  std::shared_ptr<Model> model;
  long step = 0;
  Rng rng;
  /// Codebooks still awaiting data-dependent initialization at the first step.
  std::vector<std::string> fresh_codebooks;

  static Checkpoint create(const ModelConfig& cfg) {
    Checkpoint c;
    c.model = std::make_shared<Model>(cfg);
    c.rng = Rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    c.fresh_codebooks = {"local.codebook"};
    if (cfg.dual()) c.fresh_codebooks.push_back("global.codebook");
    return c;
  }

  /// Deep copy; the model is not shared with the original.
  Checkpoint clone() const {
    Checkpoint c = *this;
    c.model = std::make_shared<Model>(*model);
    return c;
  }
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'D', 'U', 'A', 'L', 'V', 'Q', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw CheckpointError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace detail

/// Layout: 8-byte magic, u32 version, u64 header length, JSON header (config,
/// step, RNG state, tensor directory), then each tensor as f64 little-endian
/// in directory order.
inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  nlohmann::json header;
  header["config"] = ck.model->config();
  header["step"] = ck.step;
  header["rng"] = ck.rng.state();
  header["fresh_codebooks"] = ck.fresh_codebooks;
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& [name, p] : ck.model->params()) {
    dir.push_back({{"name", name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  }
  header["tensors"] = dir;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("checkpoint: cannot write " + path.string());
  os.write(detail::kCheckpointMagic, 8);
  const std::uint32_t version = detail::kCheckpointVersion;
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>(version >> (8 * i)));
  detail::put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, p] : ck.model->params()) {
    for (double v : p.value.values()) detail::put_u64(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw CheckpointError("checkpoint: write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("checkpoint: cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0) {
    throw CheckpointError("checkpoint: " + path.string() + " is not a checkpoint file");
  }
  std::uint32_t version = 0;
  for (int i = 0; i < 4; ++i) version |= static_cast<std::uint32_t>(static_cast<unsigned char>(is.get())) << (8 * i);
  if (version != detail::kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint64_t len = detail::get_u64(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw CheckpointError("checkpoint: truncated header");
  const nlohmann::json header = nlohmann::json::parse(text);

  Checkpoint ck;
  ck.model = std::make_shared<Model>(header.at("config").get<ModelConfig>());
  ck.step = header.at("step").get<long>();
  ck.rng.set_state(header.at("rng").get<std::string>());
  ck.fresh_codebooks = header.at("fresh_codebooks").get<std::vector<std::string>>();
  if (header.at("tensors").size() != ck.model->params().size()) {
    throw CheckpointError("checkpoint: tensor directory does not match the model architecture");
  }
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    Parameter& p = ck.model->params().at(name);
    const auto rows = entry.at("rows").get<std::size_t>();
    const auto cols = entry.at("cols").get<std::size_t>();
    if (rows != p.value.rows() || cols != p.value.cols()) {
      throw CheckpointError("checkpoint: tensor '" + name + "' has shape [" + std::to_string(rows) + "x" +
                            std::to_string(cols) + "], model expects " + p.value.shape_string());
    }
    for (double& v : p.value.values()) v = std::bit_cast<double>(detail::get_u64(is));
  }
  return ck;
}

}  // namespace dualvq
