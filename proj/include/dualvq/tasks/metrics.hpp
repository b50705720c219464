#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dualvq/model/model.hpp"

namespace dualvq {

struct ClusterScore {
  double nmi = 0.0;
  double purity = 0.0;
};

/// NMI = MI / sqrt(H(codes) H(labels)) in nats. When either side is constant
/// NMI is 0, except that two constant sequences score 1. Purity is the
/// frame-weighted majority-label fraction: sum over codes of the largest
/// label count, divided by the frame count.
inline ClusterScore code_label_nmi(const std::vector<std::size_t>& codes, const std::vector<std::size_t>& labels) {
  if (codes.size() != labels.size()) {
    throw std::invalid_argument("code_label_nmi: " + std::to_string(codes.size()) + " codes vs " +
                                std::to_string(labels.size()) + " labels");
  }
  ClusterScore s;
  if (codes.empty()) return s;
  std::map<std::size_t, double> pc, pl;
  std::map<std::pair<std::size_t, std::size_t>, double> joint;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    pc[codes[i]] += 1.0;
    pl[labels[i]] += 1.0;
    joint[{codes[i], labels[i]}] += 1.0;
  }
  const double n = static_cast<double>(codes.size());
  auto entropy = [n](const std::map<std::size_t, double>& m) {
    double h = 0.0;
    for (const auto& [_, c] : m) h -= (c / n) * std::log(c / n);
    return h;
  };
  const double hc = entropy(pc), hl = entropy(pl);
  double mi = 0.0;
  std::map<std::size_t, double> best;
  for (const auto& [key, c] : joint) {
    mi += (c / n) * std::log(c * n / (pc[key.first] * pl[key.second]));
    best[key.first] = std::max(best[key.first], c);
  }
  if (pc.size() == 1 && pl.size() == 1) s.nmi = 1.0;
  else if (hc <= 0.0 || hl <= 0.0) s.nmi = 0.0;
  else s.nmi = std::clamp(mi / std::sqrt(hc * hl), 0.0, 1.0);
  double hit = 0.0;
  for (const auto& [_, c] : best) hit += c;
  s.purity = hit / n;
  return s;
}

/// Frequency of the most common label.
inline double majority_fraction(const std::vector<std::size_t>& labels) {
  if (labels.empty()) return 0.0;
  std::map<std::size_t, double> count;
  double top = 0.0;
  for (std::size_t l : labels) top = std::max(top, count[l] += 1.0);
  return top / static_cast<double>(labels.size());
}

inline double cosine(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("cosine: " + a.shape_string() + " vs " + b.shape_string());
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::domain_error("cosine: zero-norm embedding");
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

/// Cosine between the global pre-quantization embeddings of two signals.
inline double speaker_similarity(Model& model, const AudioSignal& natural, const AudioSignal& reconstructed) {
  if (!model.config().dual()) throw std::logic_error("speaker_similarity: model has no global encoder");
  return cosine(model.encode_global(natural), model.encode_global(reconstructed));
}

}  // namespace dualvq
