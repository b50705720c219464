#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualvq/numerics/ops.hpp"

namespace dualvq {

enum class CodebookKind { Local, Global };

struct QuantizationResult {
  Tensor z_e;
  std::vector<std::size_t> indices;
  Tensor z_q;
  double vq_loss = 0.0;
  double commit_loss = 0.0;
};

struct CodebookStats {
  std::vector<std::size_t> histogram;
  std::size_t used = 0;
  double perplexity = 1.0;
  bool collapsed = false;
};

/// Index of the nearest codeword (squared Euclidean) for every row of z_e.
/// Ties go to the lowest index.
inline std::vector<std::size_t> nearest_codes(const Tensor& z_e, const Tensor& entries) {
  if (entries.rows() == 0 || entries.cols() == 0) throw ShapeError("quantize: empty codebook");
  if (z_e.cols() != entries.cols()) {
    throw ShapeError("quantize: z_e " + z_e.shape_string() + " vs codebook " + entries.shape_string());
  }
  const std::size_t d = entries.cols();
  std::vector<std::size_t> out(z_e.rows());
  for (std::size_t i = 0; i < z_e.rows(); ++i) {
    const double* z = z_e.data() + i * d;
    double best = 0.0;
    std::size_t arg = 0;
    for (std::size_t k = 0; k < entries.rows(); ++k) {
      const double* e = entries.data() + k * d;
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = z[j] - e[j];
        dist += diff * diff;
      }
      if (k == 0 || dist < best) {
        best = dist;
        arg = k;
      }
    }
    out[i] = arg;
  }
  return out;
}

/// Mean over rows of the squared distance between z_e and z_q.
inline double mean_sq_distance(const Tensor& z_e, const Tensor& z_q) {
  if (z_e.rows() == 0) return 0.0;
  return (z_e.mat() - z_q.mat()).squaredNorm() / static_cast<double>(z_e.rows());
}

/// Graph-free quantization.
inline QuantizationResult quantize(const Tensor& z_e, const Tensor& entries) {
  QuantizationResult r;
  r.indices = nearest_codes(z_e, entries);
  r.z_e = z_e;
  r.z_q = Tensor(z_e.rows(), z_e.cols());
  for (std::size_t i = 0; i < r.indices.size(); ++i) {
    r.z_q.mat().row(static_cast<Eigen::Index>(i)) = entries.mat().row(static_cast<Eigen::Index>(r.indices[i]));
  }
  r.vq_loss = mean_sq_distance(r.z_e, r.z_q);
  r.commit_loss = r.vq_loss;
  return r;
}

/// Differentiable quantization bottleneck recorded on a graph.
struct QuantizedVars {
  Var z_e;
  Var z_q;        ///< selected codewords; gradient reaches the codebook
  Var st;         ///< straight-through output for downstream use
  Var vq_loss;    ///< ||sg[z_e] - e||^2, codebook-only gradient
  Var commit_loss;  ///< ||z_e - sg[e]||^2, encoder-only gradient
  std::vector<std::size_t> indices;
};

inline Var vq_loss(Var z_e, Var z_q) { return ops::sum_sq_rows_mean(ops::sub(ops::stop_gradient(z_e), z_q)); }

inline Var commit_loss(Var z_e, Var z_q) { return ops::sum_sq_rows_mean(ops::sub(z_e, ops::stop_gradient(z_q))); }

inline QuantizedVars quantize(Var z_e, Var codebook) {
  Graph& g = *z_e.graph;
  QuantizedVars q;
  q.z_e = z_e;
  q.indices = nearest_codes(g.value(z_e), g.value(codebook));
  q.z_q = ops::gather_rows(codebook, q.indices);
  q.st = ops::straight_through(z_e, q.z_q);
  q.vq_loss = vq_loss(z_e, q.z_q);
  q.commit_loss = commit_loss(z_e, q.z_q);
  return q;
}

inline CodebookStats codebook_stats(const std::vector<std::size_t>& indices, std::size_t k) {
  if (k == 0) throw std::invalid_argument("codebook_stats: K must be positive");
  CodebookStats s;
  s.histogram.assign(k, 0);
  for (std::size_t i : indices) {
    if (i >= k) throw std::out_of_range("codebook_stats: index " + std::to_string(i) + " outside K=" + std::to_string(k));
    ++s.histogram[i];
  }
  double entropy = 0.0;
  const double n = static_cast<double>(indices.size());
  for (std::size_t c : s.histogram) {
    if (c == 0) continue;
    ++s.used;
    const double p = static_cast<double>(c) / n;
    entropy -= p * std::log(p);
  }
  s.perplexity = std::exp(entropy);
  s.collapsed = s.used == 1;
  return s;
}

}  // namespace dualvq
