#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dualvq/model/audio.hpp"
#include "dualvq/model/config.hpp"
#include "dualvq/numerics/ops.hpp"
#include "dualvq/numerics/rng.hpp"
#include "dualvq/vq/vq.hpp"

namespace dualvq {

inline constexpr std::size_t kUnknownSpeaker = std::numeric_limits<std::size_t>::max();

/// Equal-length crops stacked along the row axis: audio is [size*length x 1].
struct Batch {
  Tensor audio;
  std::size_t size = 0;
  std::size_t length = 0;
  std::vector<std::size_t> speakers;

  static Batch single(const AudioSignal& a, std::size_t speaker = kUnknownSpeaker) {
    return {Tensor(a.size(), 1, a.samples), 1, a.size(), {speaker}};
  }
};

struct SpeakerOutput {
  Var loss;
  std::vector<std::size_t> predictions;
};

struct ForwardOutputs {
  QuantizedVars local;
  std::optional<QuantizedVars> global;
  Var recon;
  Var recon_loss;
  std::optional<SpeakerOutput> speaker;
  std::optional<Var> adversarial_loss;
};

/// Parameter-name prefixes of the components that carry speaker information.
inline const std::vector<std::string>& speaker_component_prefixes() {
  static const std::vector<std::string> p{"global.", "speaker.", "adv.", "dec.cond."};
  return p;
}

class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    const std::size_t c = cfg_.channels, d = cfg_.embed_D;
    add_front_end("local.enc.", rng);
    params_.add("local.codebook", uniform(cfg_.local_K, d, 1.0 / static_cast<double>(cfg_.local_K), rng));
    params_.add("dec.local.w", uniform(d, c, fan_in_bound(d + cfg_.cond_dim()), rng));
    params_.add("dec.cond.w", uniform(cfg_.cond_dim(), c, fan_in_bound(d + cfg_.cond_dim()), rng));
    params_.add("dec.bias", uniform(1, c, fan_in_bound(d + cfg_.cond_dim()), rng));
    for (std::size_t i = 0; i < cfg_.strides.size(); ++i) {
      const std::size_t s = cfg_.strides[cfg_.strides.size() - 1 - i];
      const std::size_t out = i + 1 == cfg_.strides.size() ? cfg_.output_channels() : c;
      params_.add(layer("dec.up", i, ".w"), uniform(c, s * out, fan_in_bound(c), rng));
      params_.add(layer("dec.up", i, ".b"), uniform(1, out, fan_in_bound(c), rng));
    }
    if (cfg_.dual()) {
      add_front_end("global.enc.", rng);
      params_.add("global.ff1.w", uniform(d, d, fan_in_bound(d), rng));
      params_.add("global.ff1.b", uniform(1, d, fan_in_bound(d), rng));
      params_.add("global.ff2.w", uniform(d, d, fan_in_bound(d), rng));
      params_.add("global.ff2.b", uniform(1, d, fan_in_bound(d), rng));
      params_.add("global.codebook", uniform(cfg_.global_K, d, 1.0 / static_cast<double>(cfg_.global_K), rng));
    }
    if (cfg_.has_speaker_head()) {
      params_.add("speaker.head.w", uniform(cfg_.n_speakers, d, fan_in_bound(d), rng));
    }
    if (cfg_.has_adversary()) {
      params_.add("adv.ff.w", uniform(d, d, fan_in_bound(d), rng));
      params_.add("adv.ff.b", uniform(1, d, fan_in_bound(d), rng));
      params_.add("adv.out.w", uniform(d, cfg_.n_speakers, fan_in_bound(d), rng));
      params_.add("adv.out.b", uniform(1, cfg_.n_speakers, fan_in_bound(d), rng));
    }
  }

  const ModelConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  std::size_t frames_for(std::size_t samples) const { return (samples + cfg_.dsf() - 1) / cfg_.dsf(); }

  /// Local encoder over stacked, dsf-aligned audio rows: [B*T'*dsf x 1] -> [B*T' x D].
  Var local_encoder(Graph& g, Var audio) { return front_end(g, audio, "local.enc."); }

  /// Global encoder: front end, temporal average pooling per crop, two FF layers. -> [B x D]
  Var global_encoder(Graph& g, Var audio, std::size_t batch) {
    require_dual("global_encoder");
    const Var pooled = ops::mean_rows(front_end(g, audio, "global.enc."), batch);
    return feed_forward(g, pooled);
  }

  /// The two FF layers applied after pooling.
  Var feed_forward(Graph& g, Var pooled) {
    const Var h = ops::relu(ops::add_bias(ops::matmul(pooled, p(g, "global.ff1.w")), p(g, "global.ff1.b")));
    return ops::add_bias(ops::matmul(h, p(g, "global.ff2.w")), p(g, "global.ff2.b"));
  }

  /// Decoder: local codes [B*T' x D] and one conditioning row per crop [B x G]
  /// -> [B*length x out_channels], cropped to exactly `length` samples per crop.
  Var decoder(Graph& g, Var local_codes, Var cond, std::size_t batch, std::size_t length) {
    const std::size_t tf = frames_for(length);
    const Tensor& lc = g.value(local_codes);
    const Tensor& cc = g.value(cond);
    if (batch == 0 || lc.rows() != batch * tf || lc.cols() != cfg_.embed_D) {
      throw ShapeError("decoder: local codes " + lc.shape_string() + " inconsistent with " + std::to_string(batch) +
                       " crops of " + std::to_string(length) + " samples");
    }
    if (cc.rows() != batch || cc.cols() != cfg_.cond_dim()) {
      throw ShapeError("decoder: conditioning " + cc.shape_string() + " for " + std::to_string(batch) + " crops");
    }
    Var h = ops::matmul(local_codes, p(g, "dec.local.w"));
    h = ops::add(h, ops::repeat_rows(ops::matmul(cond, p(g, "dec.cond.w")), tf));
    h = ops::relu(ops::add_bias(h, p(g, "dec.bias")));
    for (std::size_t i = 0; i < cfg_.strides.size(); ++i) {
      const std::size_t s = cfg_.strides[cfg_.strides.size() - 1 - i];
      h = ops::conv_transpose1d(h, p(g, layer("dec.up", i, ".w")), p(g, layer("dec.up", i, ".b")), s, s);
      if (i + 1 < cfg_.strides.size()) h = ops::relu(h);
    }
    const std::size_t padded = tf * cfg_.dsf();
    if (padded == length) return h;
    std::vector<std::size_t> keep;
    keep.reserve(batch * length);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < length; ++t) keep.push_back(b * padded + t);
    }
    return ops::gather_rows(h, keep);
  }

  /// Speaker classifier on the (straight-through) global code. Softmax scores
  /// W x; angular softmax applies the margin to unit-normalised rows of W.
  SpeakerOutput classify_speaker(Graph& g, Var global_code, const std::vector<std::size_t>& speakers) {
    if (!cfg_.has_speaker_head()) throw std::logic_error("classify_speaker: variant has no speaker head");
    for (std::size_t s : speakers) {
      if (s >= cfg_.n_speakers) throw std::out_of_range("classify_speaker: unknown speaker id " + std::to_string(s));
    }
    const Var w = p(g, "speaker.head.w");
    SpeakerOutput out;
    const Tensor& x = g.value(global_code);
    Tensor scores(x.rows(), cfg_.n_speakers);
    if (cfg_.head == HeadKind::Softmax) {
      out.loss = ops::softmax_cross_entropy(ops::matmul_nt(global_code, w), speakers);
      scores.mat() = x.mat() * g.value(w).mat().transpose();
    } else {
      out.loss = ops::asoftmax_cross_entropy(global_code, w, speakers, cfg_.asoftmax_margin);
      const Eigen::VectorXd norms = g.value(w).mat().rowwise().norm().array().max(1e-12);
      scores.mat() = x.mat() * (g.value(w).mat().array().colwise() / norms.array()).matrix().transpose();
    }
    out.predictions = argmax_rows(scores);
    return out;
  }

  /// grad_reverse -> TAP -> FF -> softmax classifier over the local encoder output.
  Var adversarial_speaker_loss(Graph& g, Var local_ze, const std::vector<std::size_t>& speakers, std::size_t batch,
                               double lambda) {
    if (!cfg_.has_adversary()) throw std::logic_error("adversarial_speaker_loss: variant has no adversary");
    for (std::size_t s : speakers) {
      if (s >= cfg_.n_speakers) {
        throw std::out_of_range("adversarial_speaker_loss: unknown speaker id " + std::to_string(s));
      }
    }
    const Var pooled = ops::mean_rows(ops::grad_reverse(local_ze, lambda), batch);
    const Var h = ops::relu(ops::add_bias(ops::matmul(pooled, p(g, "adv.ff.w")), p(g, "adv.ff.b")));
    const Var logits = ops::add_bias(ops::matmul(h, p(g, "adv.out.w")), p(g, "adv.out.b"));
    return ops::softmax_cross_entropy(logits, speakers);
  }

  /// Full forward pass for the configured variant.
  ForwardOutputs forward(Graph& g, const Batch& batch) {
    if (batch.size == 0 || batch.audio.rows() != batch.size * batch.length || batch.audio.cols() != 1) {
      throw ShapeError("forward: audio " + batch.audio.shape_string() + " is not " + std::to_string(batch.size) +
                       " crops of " + std::to_string(batch.length));
    }
    if (batch.speakers.size() != batch.size) throw ShapeError("forward: one speaker label per crop required");
    if (batch.length < cfg_.dsf()) throw std::invalid_argument("forward: crops shorter than the downsampling factor");
    const Var audio = g.constant(padded(batch));
    ForwardOutputs out;
    out.local = quantize(local_encoder(g, audio), p(g, "local.codebook"));
    Var cond;
    if (cfg_.dual()) {
      out.global = quantize(global_encoder(g, audio, batch.size), p(g, "global.codebook"));
      cond = out.global->st;
    } else {
      cond = g.constant(one_hot(batch.speakers));
    }
    out.recon = decoder(g, out.local.st, cond, batch.size, batch.length);
    if (cfg_.recon == ReconLoss::Mse) {
      out.recon_loss = ops::mse(out.recon, g.constant(batch.audio));
    } else {
      std::vector<std::size_t> target(batch.audio.size());
      for (std::size_t i = 0; i < target.size(); ++i) target[i] = mulaw_encode(batch.audio[i]);
      out.recon_loss = ops::softmax_cross_entropy(out.recon, target);
    }
    if (cfg_.has_speaker_head()) out.speaker = classify_speaker(g, out.global->st, batch.speakers);
    if (cfg_.has_adversary()) {
      out.adversarial_loss =
          adversarial_speaker_loss(g, out.local.z_e, batch.speakers, batch.size, cfg_.adv_lambda);
    }
    return out;
  }

  // Inference helpers. They never modify parameters.

  Tensor encode_local(const AudioSignal& a) {
    check_audio(a, "encode_local");
    Graph g(false);
    return g.value(local_encoder(g, g.constant(padded(Batch::single(a)))));
  }

  /// Global embedding before quantization, [1 x D].
  Tensor encode_global(const AudioSignal& a) {
    check_audio(a, "encode_global");
    Graph g(false);
    return g.value(global_encoder(g, g.constant(padded(Batch::single(a))), 1));
  }

  /// Global encoder frame outputs before pooling, [T' x D].
  Tensor global_frames(const AudioSignal& a) {
    check_audio(a, "global_frames");
    require_dual("global_frames");
    Graph g(false);
    return g.value(front_end(g, g.constant(padded(Batch::single(a))), "global.enc."));
  }

  std::vector<std::size_t> local_codes(const AudioSignal& a) {
    return nearest_codes(encode_local(a), params_.at("local.codebook").value);
  }

  std::size_t global_code(const AudioSignal& a) {
    return nearest_codes(encode_global(a), params_.at("global.codebook").value)[0];
  }

  /// Decodes quantized local frames with a conditioning row (global code, or
  /// speaker one-hot for Base) to exactly `length` samples.
  AudioSignal decode(const Tensor& local_zq, const Tensor& cond, std::size_t length) {
    Graph g(false);
    const Tensor& y = g.value(decoder(g, g.constant(local_zq), g.constant(cond), 1, length));
    AudioSignal out{std::vector<double>(length), cfg_.sample_rate};
    for (std::size_t t = 0; t < length; ++t) {
      if (cfg_.recon == ReconLoss::Mse) {
        out.samples[t] = std::clamp(y(t, 0), -1.0, 1.0);
      } else {
        std::size_t best = 0;
        for (std::size_t k = 1; k < y.cols(); ++k) {
          if (y(t, k) > y(t, best)) best = k;
        }
        out.samples[t] = mulaw_decode(best);
      }
    }
    return out;
  }

  /// Encode, quantize, decode. `speaker` is only used by Base (unknown -> zero conditioning).
  AudioSignal reconstruct(const AudioSignal& a, std::size_t speaker = kUnknownSpeaker) {
    const QuantizationResult lq = quantize(encode_local(a), params_.at("local.codebook").value);
    Tensor cond = cfg_.dual() ? quantize(encode_global(a), params_.at("global.codebook").value).z_q
                              : one_hot({speaker});
    return decode(lq.z_q, cond, a.size());
  }

  Tensor one_hot(const std::vector<std::size_t>& speakers) const {
    Tensor t(speakers.size(), cfg_.n_speakers);
    for (std::size_t i = 0; i < speakers.size(); ++i) {
      if (speakers[i] < cfg_.n_speakers) t(i, speakers[i]) = 1.0;
    }
    return t;
  }

  /// Zero-pads each crop to a whole number of frames.
  Tensor padded(const Batch& b) const {
    const std::size_t len = frames_for(b.length) * cfg_.dsf();
    if (len == b.length) return b.audio;
    Tensor out(b.size * len, 1);
    for (std::size_t i = 0; i < b.size; ++i) {
      std::copy_n(b.audio.data() + i * b.length, b.length, out.data() + i * len);
    }
    return out;
  }

 private:
  static double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

  static Tensor uniform(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
    Tensor t(rows, cols);
    for (double& v : t.values()) v = rng.uniform(-bound, bound);
    return t;
  }

  static std::string layer(const std::string& prefix, std::size_t i, const std::string& suffix) {
    return prefix + std::to_string(i) + suffix;
  }

  static std::vector<std::size_t> argmax_rows(const Tensor& t) {
    std::vector<std::size_t> out(t.rows(), 0);
    for (std::size_t r = 0; r < t.rows(); ++r) {
      for (std::size_t c = 1; c < t.cols(); ++c) {
        if (t(r, c) > t(r, out[r])) out[r] = c;
      }
    }
    return out;
  }

  void add_front_end(const std::string& prefix, Rng& rng) {
    std::size_t in = 1;
    for (std::size_t i = 0; i < cfg_.strides.size(); ++i) {
      const std::size_t fan = cfg_.strides[i] * in;
      params_.add(layer(prefix + "conv", i, ".w"), uniform(fan, cfg_.channels, fan_in_bound(fan), rng));
      params_.add(layer(prefix + "conv", i, ".b"), uniform(1, cfg_.channels, fan_in_bound(fan), rng));
      in = cfg_.channels;
    }
    params_.add(prefix + "proj.w", uniform(cfg_.channels, cfg_.embed_D, fan_in_bound(cfg_.channels), rng));
    params_.add(prefix + "proj.b", uniform(1, cfg_.embed_D, fan_in_bound(cfg_.channels), rng));
  }

  Var front_end(Graph& g, Var audio, const std::string& prefix) {
    Var h = audio;
    for (std::size_t i = 0; i < cfg_.strides.size(); ++i) {
      const std::size_t s = cfg_.strides[i];
      h = ops::relu(ops::conv1d(h, p(g, layer(prefix + "conv", i, ".w")), p(g, layer(prefix + "conv", i, ".b")), s, s));
    }
    return ops::add_bias(ops::matmul(h, p(g, prefix + "proj.w")), p(g, prefix + "proj.b"));
  }

  Var p(Graph& g, const std::string& name) { return g.parameter(params_.at(name)); }

  void require_dual(const char* op) const {
    if (!cfg_.dual()) throw std::logic_error(std::string(op) + ": Base variant has no global encoder");
  }

  void check_audio(const AudioSignal& a, const char* op) const {
    if (a.size() < cfg_.dsf()) {
      throw std::invalid_argument(std::string(op) + ": " + std::to_string(a.size()) +
                                  " samples is shorter than the downsampling factor " + std::to_string(cfg_.dsf()));
    }
  }

  ModelConfig cfg_;
  ParameterSet params_;
};

}  // namespace dualvq
