#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace dualvq {

enum class Variant { Base, GlobalVQ, SpeakerLabel, Adversarial };
enum class HeadKind { Softmax, AngularSoftmax };
enum class ReconLoss { Mse, MuLaw };

struct ModelConfig {
  Variant variant = Variant::Base;
  HeadKind head = HeadKind::Softmax;
  /// Strides of the encoder's convolution stack (kernel == stride); dsf is their product.
  std::vector<std::size_t> strides{64};
  std::size_t channels = 128;
  std::size_t local_K = 128;
  std::size_t global_K = 16;
  std::size_t embed_D = 32;
  std::size_t n_speakers = 20;
  double adv_lambda = 1.0;
  int asoftmax_margin = 2;
  ReconLoss recon = ReconLoss::Mse;
  std::size_t sample_rate = 16000;
  std::uint64_t seed = 0;

  std::size_t dsf() const {
    std::size_t d = 1;
    for (std::size_t s : strides) d *= s;
    return d;
  }
  bool dual() const { return variant != Variant::Base; }
  bool has_speaker_head() const { return variant == Variant::SpeakerLabel || variant == Variant::Adversarial; }
  bool has_adversary() const { return variant == Variant::Adversarial; }
  /// Width of the decoder's conditioning input: speaker one-hot for Base, global code otherwise.
  std::size_t cond_dim() const { return dual() ? embed_D : n_speakers; }
  std::size_t output_channels() const { return recon == ReconLoss::MuLaw ? 256 : 1; }

  void validate() const {
    if (strides.empty()) throw std::invalid_argument("config: at least one encoder stride required");
    for (std::size_t s : strides) {
      if (s == 0) throw std::invalid_argument("config: strides must be positive");
    }
    if (channels == 0 || local_K == 0 || global_K == 0 || embed_D == 0 || n_speakers == 0 || sample_rate == 0) {
      throw std::invalid_argument("config: sizes must be positive");
    }
    if (!(adv_lambda >= 0.0)) throw std::invalid_argument("config: adv_lambda must be >= 0");
    if (asoftmax_margin < 1) throw std::invalid_argument("config: asoftmax_margin must be >= 1");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Command-line style names: base, global_vq, speaker_label_s, speaker_label_as,
/// adversarial_s, adversarial_as.
inline std::string variant_name(Variant v, HeadKind h) {
  const std::string suffix = h == HeadKind::AngularSoftmax ? "_as" : "_s";
  switch (v) {
    case Variant::Base: return "base";
    case Variant::GlobalVQ: return "global_vq";
    case Variant::SpeakerLabel: return "speaker_label" + suffix;
    case Variant::Adversarial: return "adversarial" + suffix;
  }
  return "base";
}

inline std::string variant_name(const ModelConfig& c) { return variant_name(c.variant, c.head); }

inline void parse_variant(const std::string& name, ModelConfig& c) {
  auto set = [&](Variant v, HeadKind h) {
    c.variant = v;
    c.head = h;
  };
  if (name == "base") set(Variant::Base, HeadKind::Softmax);
  else if (name == "global_vq") set(Variant::GlobalVQ, HeadKind::Softmax);
  else if (name == "speaker_label_s") set(Variant::SpeakerLabel, HeadKind::Softmax);
  else if (name == "speaker_label_as") set(Variant::SpeakerLabel, HeadKind::AngularSoftmax);
  else if (name == "adversarial_s") set(Variant::Adversarial, HeadKind::Softmax);
  else if (name == "adversarial_as") set(Variant::Adversarial, HeadKind::AngularSoftmax);
  else throw std::invalid_argument("unknown variant '" + name + "'");
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"variant", variant_name(c)},
                     {"strides", c.strides},
                     {"channels", c.channels},
                     {"local_K", c.local_K},
                     {"global_K", c.global_K},
                     {"embed_D", c.embed_D},
                     {"n_speakers", c.n_speakers},
                     {"adv_lambda", c.adv_lambda},
                     {"asoftmax_margin", c.asoftmax_margin},
                     {"recon", c.recon == ReconLoss::MuLaw ? "mulaw" : "mse"},
                     {"sample_rate", c.sample_rate},
                     {"seed", c.seed}};
}

/// Missing keys keep their defaults, so partial config files are valid.
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (j.contains("variant")) parse_variant(j.at("variant").get<std::string>(), c);
  if (j.contains("strides")) c.strides = j.at("strides").get<std::vector<std::size_t>>();
  if (j.contains("channels")) j.at("channels").get_to(c.channels);
  if (j.contains("local_K")) j.at("local_K").get_to(c.local_K);
  if (j.contains("global_K")) j.at("global_K").get_to(c.global_K);
  if (j.contains("embed_D")) j.at("embed_D").get_to(c.embed_D);
  if (j.contains("n_speakers")) j.at("n_speakers").get_to(c.n_speakers);
  if (j.contains("adv_lambda")) j.at("adv_lambda").get_to(c.adv_lambda);
  if (j.contains("asoftmax_margin")) j.at("asoftmax_margin").get_to(c.asoftmax_margin);
  if (j.contains("recon")) {
    const auto r = j.at("recon").get<std::string>();
    if (r == "mse") c.recon = ReconLoss::Mse;
    else if (r == "mulaw") c.recon = ReconLoss::MuLaw;
    else throw std::invalid_argument("unknown recon loss '" + r + "'");
  }
  if (j.contains("sample_rate")) j.at("sample_rate").get_to(c.sample_rate);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
}

}  // namespace dualvq
