#pragma once

#include <stdexcept>

#include "dualvq/model/model.hpp"

namespace dualvq {

struct LossWeights {
  double alpha = 1.0;
  double beta = 0.25;
  double speaker = 1.0;
  double adversarial = 1.0;

  /// Base weights the commitment term down; the dual variants weight both pairs equally.
  static LossWeights defaults(Variant v) {
    LossWeights w;
    if (v != Variant::Base) w.beta = 1.0;
    return w;
  }
};

struct LossBreakdown {
  double L_R = 0.0;
  double L_VQl = 0.0;
  double L_Cl = 0.0;
  double L_VQg = 0.0;
  double L_Cg = 0.0;
  double L_spk = 0.0;
  double L_adv = 0.0;
  double alpha = 1.0;
  double beta = 0.25;
  double w_spk = 1.0;
  double w_adv = 1.0;
  double total = 0.0;

  /// The weighted sum for the given variant, recomputed from the fields.
  double combine(Variant v) const {
    if (v == Variant::Base) return L_R + alpha * L_VQl + beta * L_Cl;
    return L_R + alpha * (L_VQl + L_Cl) + beta * (L_VQg + L_Cg) + w_spk * L_spk + w_adv * L_adv;
  }
};

struct LossTerms {
  LossBreakdown values;
  Var total;
};

/// Assembles the training objective from a forward pass. Terms of heads the
/// variant lacks are exactly zero; outputs that disagree with the variant are rejected.
inline LossTerms total_loss(Graph& g, const ForwardOutputs& out, const ModelConfig& cfg, const LossWeights& w) {
  const bool has_global = out.global.has_value();
  if (has_global != cfg.dual() || out.speaker.has_value() != cfg.has_speaker_head() ||
      out.adversarial_loss.has_value() != cfg.has_adversary()) {
    throw std::invalid_argument("total_loss: forward outputs do not match variant " + variant_name(cfg));
  }
  LossTerms t;
  LossBreakdown& b = t.values;
  b.alpha = w.alpha;
  b.beta = w.beta;
  b.w_spk = w.speaker;
  b.w_adv = w.adversarial;
  b.L_R = g.value(out.recon_loss).item();
  b.L_VQl = g.value(out.local.vq_loss).item();
  b.L_Cl = g.value(out.local.commit_loss).item();
  if (!cfg.dual()) {
    t.total = ops::add(out.recon_loss, ops::add(ops::scale(out.local.vq_loss, w.alpha),
                                                ops::scale(out.local.commit_loss, w.beta)));
  } else {
    b.L_VQg = g.value(out.global->vq_loss).item();
    b.L_Cg = g.value(out.global->commit_loss).item();
    Var sum = ops::add(out.recon_loss, ops::scale(ops::add(out.local.vq_loss, out.local.commit_loss), w.alpha));
    sum = ops::add(sum, ops::scale(ops::add(out.global->vq_loss, out.global->commit_loss), w.beta));
    if (out.speaker) {
      b.L_spk = g.value(out.speaker->loss).item();
      sum = ops::add(sum, ops::scale(out.speaker->loss, w.speaker));
    }
    if (out.adversarial_loss) {
      b.L_adv = g.value(*out.adversarial_loss).item();
      sum = ops::add(sum, ops::scale(*out.adversarial_loss, w.adversarial));
    }
    t.total = sum;
  }
  b.total = g.value(t.total).item();
  return t;
}

}  // namespace dualvq
