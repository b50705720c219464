#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dualvq/numerics/optimizer.hpp"
#include "dualvq/training/checkpoint.hpp"
#include "dualvq/training/loss.hpp"

namespace dualvq {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LabeledAudio {
  AudioSignal audio;
  std::size_t speaker = kUnknownSpeaker;
};

struct TrainData {
  std::vector<LabeledAudio> train;
  std::vector<LabeledAudio> valid;
};

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  std::size_t crop = 6400;
  OptimizerConfig optimizer;
  /// Unset means the variant's defaults.
  std::optional<LossWeights> weights;
  std::size_t eval_every = 250;
  std::size_t valid_crops = 32;
  /// Crops encoded to seed fresh codebooks with encoder outputs.
  std::size_t init_crops = 64;
};

struct TrainReport {
  std::vector<LossBreakdown> curve;
  std::vector<std::pair<long, LossBreakdown>> validation;
  long best_step = 0;
  double best_valid = std::numeric_limits<double>::infinity();
};

/// Draws `n` random fixed-length crops (utterance, then offset, uniformly).
inline Batch sample_batch(const std::vector<LabeledAudio>& pool, std::size_t n, std::size_t crop, Rng& rng) {
  if (pool.empty()) throw std::invalid_argument("sample_batch: empty pool");
  Batch b;
  b.size = n;
  b.length = crop;
  b.audio = Tensor(n * crop, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const LabeledAudio& u = pool[rng.index(pool.size())];
    if (u.audio.size() < crop) {
      throw std::invalid_argument("sample_batch: utterance of " + std::to_string(u.audio.size()) +
                                  " samples is shorter than the crop");
    }
    const std::size_t off = rng.index(u.audio.size() - crop + 1);
    std::copy_n(u.audio.samples.begin() + static_cast<std::ptrdiff_t>(off), crop, b.audio.data() + i * crop);
    b.speakers.push_back(u.speaker);
  }
  return b;
}

inline LossWeights resolve_weights(const TrainConfig& tc, const ModelConfig& mc) {
  return tc.weights.value_or(LossWeights::defaults(mc.variant));
}

/// Loss breakdown without gradient tracking.
inline LossBreakdown evaluate_batch(Model& model, const Batch& batch, const LossWeights& w) {
  Graph g(false);
  const ForwardOutputs out = model.forward(g, batch);
  return total_loss(g, out, model.config(), w).values;
}

/// One optimizer step on every unfrozen parameter.
inline LossBreakdown train_step(Model& model, const Batch& batch, Optimizer& opt, const LossWeights& w) {
  if (batch.size == 0) throw std::invalid_argument("train_step: empty batch");
  model.params().zero_grad();
  Graph g;
  LossTerms terms;
  try {
    const ForwardOutputs out = model.forward(g, batch);
    terms = total_loss(g, out, model.config(), w);
    g.backward(terms.total);
    opt.step(model.params());
  } catch (const std::domain_error& e) {
    throw TrainingError(std::string("train_step aborted: ") + e.what());
  } catch (const NonFiniteGradient& e) {
    throw TrainingError(std::string("train_step aborted: ") + e.what());
  }
  return terms.values;
}

/// Seeds each listed codebook with distinct encoder outputs from random crops.
inline void init_codebooks_from_data(Checkpoint& ck, const std::vector<LabeledAudio>& pool, std::size_t crops,
                                     std::size_t crop) {
  if (ck.fresh_codebooks.empty()) return;
  Model& m = *ck.model;
  const Batch b = sample_batch(pool, crops, crop, ck.rng);
  Graph g(false);
  const Var audio = g.constant(m.padded(b));
  for (const std::string& name : ck.fresh_codebooks) {
    Tensor ze;
    if (name == "local.codebook") ze = g.value(m.local_encoder(g, audio));
    else if (name == "global.codebook") ze = g.value(m.global_encoder(g, audio, b.size));
    else throw std::invalid_argument("init_codebooks_from_data: unknown codebook '" + name + "'");
    Tensor& cb = m.params().at(name).value;
    if (ze.rows() < cb.rows()) {
      throw std::invalid_argument("init_codebooks_from_data: " + std::to_string(ze.rows()) + " samples for " +
                                  std::to_string(cb.rows()) + " codewords in " + name);
    }
    std::vector<std::size_t> rows(ze.rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    ck.rng.shuffle(rows);
    for (std::size_t k = 0; k < cb.rows(); ++k) {
      cb.mat().row(static_cast<Eigen::Index>(k)) = ze.mat().row(static_cast<Eigen::Index>(rows[k]));
    }
  }
  ck.fresh_codebooks.clear();
}

/// Trains from `start` for `tc.steps` steps and returns the checkpoint with
/// the lowest validation total loss among the periodic evaluations.
inline std::pair<Checkpoint, TrainReport> train(const Checkpoint& start, const TrainData& data, const TrainConfig& tc) {
  if (data.train.empty() || data.valid.empty()) throw std::invalid_argument("train: empty train or validation split");
  if (tc.batch_size == 0 || tc.crop == 0) throw std::invalid_argument("train: batch size and crop must be positive");
  TrainReport report;
  Checkpoint ck = start.clone();
  report.best_step = ck.step;
  if (tc.steps == 0) return {ck, report};

  const LossWeights w = resolve_weights(tc, ck.model->config());
  init_codebooks_from_data(ck, data.train, std::max(tc.init_crops, tc.batch_size), tc.crop);

  Rng valid_rng(ck.model->config().seed + 7919);
  std::vector<Batch> valid;
  for (std::size_t done = 0; done < tc.valid_crops; done += tc.batch_size) {
    valid.push_back(sample_batch(data.valid, std::min(tc.batch_size, tc.valid_crops - done), tc.crop, valid_rng));
  }
  auto validate = [&]() {
    LossBreakdown mean;
    double n = 0.0;
    for (const Batch& b : valid) {
      const LossBreakdown l = evaluate_batch(*ck.model, b, w);
      const double k = static_cast<double>(b.size);
      mean.L_R += k * l.L_R;
      mean.L_VQl += k * l.L_VQl;
      mean.L_Cl += k * l.L_Cl;
      mean.L_VQg += k * l.L_VQg;
      mean.L_Cg += k * l.L_Cg;
      mean.L_spk += k * l.L_spk;
      mean.L_adv += k * l.L_adv;
      n += k;
    }
    for (double* f : {&mean.L_R, &mean.L_VQl, &mean.L_Cl, &mean.L_VQg, &mean.L_Cg, &mean.L_spk, &mean.L_adv}) *f /= n;
    mean.alpha = w.alpha;
    mean.beta = w.beta;
    mean.w_spk = w.speaker;
    mean.w_adv = w.adversarial;
    mean.total = mean.combine(ck.model->config().variant);
    return mean;
  };

  Optimizer opt(tc.optimizer);
  std::optional<Checkpoint> best;
  const std::size_t every = std::max<std::size_t>(tc.eval_every, 1);
  for (std::size_t s = 1; s <= tc.steps; ++s) {
    const Batch b = sample_batch(data.train, tc.batch_size, tc.crop, ck.rng);
    report.curve.push_back(train_step(*ck.model, b, opt, w));
    ++ck.step;
    if (s % every == 0 || s == tc.steps) {
      const LossBreakdown v = validate();
      report.validation.emplace_back(ck.step, v);
      if (v.total < report.best_valid) {
        report.best_valid = v.total;
        report.best_step = ck.step;
        best = ck.clone();
      }
    }
  }
  return {best ? *best : ck, report};
}

/// Dual-variant checkpoint whose local encoder, local codebook and decoder
/// local path are copied from a trained Base checkpoint; everything else is
/// freshly initialized from the dual config's seed.
inline Checkpoint warm_start(const Checkpoint& base, const ModelConfig& dual_cfg) {
  const ModelConfig& bc = base.model->config();
  if (bc.variant != Variant::Base) throw std::invalid_argument("warm_start: source is not a Base checkpoint");
  if (!dual_cfg.dual()) throw std::invalid_argument("warm_start: target config is not a dual variant");
  if (bc.strides != dual_cfg.strides || bc.channels != dual_cfg.channels || bc.embed_D != dual_cfg.embed_D ||
      bc.local_K != dual_cfg.local_K || bc.recon != dual_cfg.recon || bc.sample_rate != dual_cfg.sample_rate) {
    throw std::invalid_argument("warm_start: architecture mismatch between base and dual configs");
  }
  Checkpoint ck = Checkpoint::create(dual_cfg);
  for (auto& [name, p] : ck.model->params()) {
    const bool local_path = name.starts_with("local.") || (name.starts_with("dec.") && !name.starts_with("dec.cond."));
    if (!local_path) continue;
    const Parameter& src = base.model->params().at(name);
    if (!src.value.same_shape(p.value)) throw std::invalid_argument("warm_start: shape mismatch for " + name);
    p.value = src.value;
  }
  ck.fresh_codebooks = {"global.codebook"};
  return ck;
}

/// Fine-tunes only the phone-related components; speaker components
/// (global encoder and codebook, classifier heads, decoder conditioning) stay
/// bit-identical.
inline std::pair<Checkpoint, TrainReport> freeze_fine_tune(const Checkpoint& ck, const TrainData& data,
                                                           const TrainConfig& tc) {
  if (!ck.model->config().dual()) throw std::invalid_argument("freeze_fine_tune: model is not a dual variant");
  Checkpoint frozen = ck.clone();
  for (const std::string& prefix : speaker_component_prefixes()) frozen.model->params().set_frozen(prefix, true);
  frozen.fresh_codebooks.clear();
  auto result = train(frozen, data, tc);
  for (auto& [name, p] : result.first.model->params()) p.frozen = false;
  return result;
}

}  // namespace dualvq
