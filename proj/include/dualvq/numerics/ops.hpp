#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dualvq/numerics/graph.hpp"

namespace dualvq::ops {

namespace detail {

using StridedConstMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;
using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;

inline Graph& same_graph(Var a, Var b, const char* op) {
  if (a.graph == nullptr || a.graph != b.graph) {
    throw std::invalid_argument(std::string(op) + ": operands live on different graphs");
  }
  return *a.graph;
}

[[noreturn]] inline void fail(const Graph& g, const char* op, const std::string& what) {
  throw ShapeError(std::string(op) + " (node " + std::to_string(g.size()) + "): " + what);
}

inline void require_same_shape(const Graph& g, const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) fail(g, op, a.shape_string() + " vs " + b.shape_string());
}

inline void accumulate(Graph& g, std::size_t id, const Tensor& delta) {
  if (g.requires_grad(id)) g.grad_buffer(id) += delta;
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Graph& g = detail::same_graph(a, b, "matmul");
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  if (A.cols() != B.rows()) detail::fail(g, "matmul", A.shape_string() + " x " + B.shape_string());
  Tensor out(A.rows(), B.cols());
  out.mat().noalias() = A.mat() * B.mat();
  const std::size_t ia = a.id, ib = b.id;
  return g.record("matmul", std::move(out), {a, b}, [ia, ib](Graph& gr, std::size_t self) {
    const Tensor& G = gr.upstream(self);
    if (gr.requires_grad(ia)) gr.grad_buffer(ia).mat().noalias() += G.mat() * gr.value(ib).mat().transpose();
    if (gr.requires_grad(ib)) gr.grad_buffer(ib).mat().noalias() += gr.value(ia).mat().transpose() * G.mat();
  });
}

/// a * b^T; lets row-per-class weight matrices score a batch directly.
inline Var matmul_nt(Var a, Var b) {
  Graph& g = detail::same_graph(a, b, "matmul_nt");
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  if (A.cols() != B.cols()) detail::fail(g, "matmul_nt", A.shape_string() + " x " + B.shape_string() + "^T");
  Tensor out(A.rows(), B.rows());
  out.mat().noalias() = A.mat() * B.mat().transpose();
  const std::size_t ia = a.id, ib = b.id;
  return g.record("matmul_nt", std::move(out), {a, b}, [ia, ib](Graph& gr, std::size_t self) {
    const Tensor& G = gr.upstream(self);
    if (gr.requires_grad(ia)) gr.grad_buffer(ia).mat().noalias() += G.mat() * gr.value(ib).mat();
    if (gr.requires_grad(ib)) gr.grad_buffer(ib).mat().noalias() += G.mat().transpose() * gr.value(ia).mat();
  });
}

inline Var add(Var a, Var b) {
  Graph& g = detail::same_graph(a, b, "add");
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  detail::require_same_shape(g, "add", A, B);
  Tensor out = A;
  out += B;
  const std::size_t ia = a.id, ib = b.id;
  return g.record("add", std::move(out), {a, b}, [ia, ib](Graph& gr, std::size_t self) {
    detail::accumulate(gr, ia, gr.upstream(self));
    detail::accumulate(gr, ib, gr.upstream(self));
  });
}

inline Var sub(Var a, Var b) {
  Graph& g = detail::same_graph(a, b, "sub");
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  detail::require_same_shape(g, "sub", A, B);
  Tensor out(A.rows(), A.cols());
  out.mat() = A.mat() - B.mat();
  const std::size_t ia = a.id, ib = b.id;
  return g.record("sub", std::move(out), {a, b}, [ia, ib](Graph& gr, std::size_t self) {
    const Tensor& G = gr.upstream(self);
    detail::accumulate(gr, ia, G);
    if (gr.requires_grad(ib)) gr.grad_buffer(ib).mat() -= G.mat();
  });
}

inline Var mul(Var a, Var b) {
  Graph& g = detail::same_graph(a, b, "mul");
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  detail::require_same_shape(g, "mul", A, B);
  Tensor out(A.rows(), A.cols());
  out.mat() = A.mat().cwiseProduct(B.mat());
  const std::size_t ia = a.id, ib = b.id;
  return g.record("mul", std::move(out), {a, b}, [ia, ib](Graph& gr, std::size_t self) {
    const Tensor& G = gr.upstream(self);
    if (gr.requires_grad(ia)) gr.grad_buffer(ia).mat() += G.mat().cwiseProduct(gr.value(ib).mat());
    if (gr.requires_grad(ib)) gr.grad_buffer(ib).mat() += G.mat().cwiseProduct(gr.value(ia).mat());
  });
}

/// a + b broadcast over rows; b is [1 x cols].
inline Var add_bias(Var a, Var b) {
  Graph& g = detail::same_graph(a, b, "add_bias");
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  if (B.rows() != 1 || B.cols() != A.cols()) detail::fail(g, "add_bias", A.shape_string() + " + " + B.shape_string());
  Tensor out = A;
  out.mat().rowwise() += B.mat().row(0);
  const std::size_t ia = a.id, ib = b.id;
  return g.record("add_bias", std::move(out), {a, b}, [ia, ib](Graph& gr, std::size_t self) {
    const Tensor& G = gr.upstream(self);
    detail::accumulate(gr, ia, G);
    if (gr.requires_grad(ib)) gr.grad_buffer(ib).mat().row(0) += G.mat().colwise().sum();
  });
}

inline Var scale(Var a, double s) {
  Graph& g = *a.graph;
  Tensor out = g.value(a);
  out.mat() *= s;
  const std::size_t ia = a.id;
  return g.record("scale", std::move(out), {a}, [ia, s](Graph& gr, std::size_t self) {
    if (gr.requires_grad(ia)) gr.grad_buffer(ia).mat() += s * gr.upstream(self).mat();
  });
}

inline Var relu(Var a) {
  Graph& g = *a.graph;
  Tensor out = g.value(a);
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  const std::size_t ia = a.id;
  return g.record("relu", std::move(out), {a}, [ia](Graph& gr, std::size_t self) {
    if (!gr.requires_grad(ia)) return;
    const Tensor& X = gr.value(ia);
    const Tensor& G = gr.upstream(self);
    Tensor& dst = gr.grad_buffer(ia);
    for (std::size_t i = 0; i < X.size(); ++i) {
      if (X[i] > 0.0) dst[i] += G[i];
    }
  });
}

inline Var sum(Var a) {
  Graph& g = *a.graph;
  const std::size_t ia = a.id;
  return g.record("sum", Tensor::scalar(g.value(a).mat().sum()), {a}, [ia](Graph& gr, std::size_t self) {
    if (gr.requires_grad(ia)) gr.grad_buffer(ia).mat().array() += gr.upstream(self)[0];
  });
}

inline Var mean(Var a) {
  Graph& g = *a.graph;
  const double n = static_cast<double>(g.value(a).size());
  if (n == 0) detail::fail(g, "mean", "empty input");
  return scale(sum(a), 1.0 / n);
}

/// Mean over rows of the squared row norm: (1/N) sum_i ||a_i||^2.
inline Var sum_sq_rows_mean(Var a) {
  Graph& g = *a.graph;
  const Tensor& A = g.value(a);
  if (A.rows() == 0) detail::fail(g, "sum_sq_rows_mean", "empty input");
  const double n = static_cast<double>(A.rows());
  const std::size_t ia = a.id;
  return g.record("sum_sq_rows_mean", Tensor::scalar(A.mat().squaredNorm() / n), {a},
                  [ia, n](Graph& gr, std::size_t self) {
                    if (gr.requires_grad(ia)) {
                      gr.grad_buffer(ia).mat() += (2.0 * gr.upstream(self)[0] / n) * gr.value(ia).mat();
                    }
                  });
}

/// Mean squared error over all elements.
inline Var mse(Var a, Var b) {
  Graph& g = detail::same_graph(a, b, "mse");
  detail::require_same_shape(g, "mse", g.value(a), g.value(b));
  const Var d = sub(a, b);
  const double n = static_cast<double>(g.value(d).size());
  return scale(sum(mul(d, d)), 1.0 / n);
}

/// Temporal average pooling: the rows are `groups` equal-length sequences and
/// each is reduced to its mean row. Output is [groups x cols].
inline Var mean_rows(Var a, std::size_t groups = 1) {
  Graph& g = *a.graph;
  const Tensor& A = g.value(a);
  if (groups == 0 || A.rows() == 0 || A.rows() % groups != 0) {
    detail::fail(g, "mean_rows", A.shape_string() + " into " + std::to_string(groups) + " groups");
  }
  const std::size_t per = A.rows() / groups;
  Tensor out(groups, A.cols());
  for (std::size_t b = 0; b < groups; ++b) {
    out.mat().row(static_cast<Eigen::Index>(b)) =
        A.mat().middleRows(static_cast<Eigen::Index>(b * per), static_cast<Eigen::Index>(per)).colwise().sum() /
        static_cast<double>(per);
  }
  const std::size_t ia = a.id;
  return g.record("mean_rows", std::move(out), {a}, [ia, per, groups](Graph& gr, std::size_t self) {
    if (!gr.requires_grad(ia)) return;
    const Tensor& G = gr.upstream(self);
    Tensor& dst = gr.grad_buffer(ia);
    for (std::size_t b = 0; b < groups; ++b) {
      dst.mat().middleRows(static_cast<Eigen::Index>(b * per), static_cast<Eigen::Index>(per)).rowwise() +=
          G.mat().row(static_cast<Eigen::Index>(b)) / static_cast<double>(per);
    }
  });
}

/// Repeats row b of `a` `times` consecutive times: [groups x c] -> [groups*times x c].
inline Var repeat_rows(Var a, std::size_t times) {
  Graph& g = *a.graph;
  const Tensor& A = g.value(a);
  if (times == 0) detail::fail(g, "repeat_rows", "zero repetitions");
  Tensor out(A.rows() * times, A.cols());
  for (std::size_t b = 0; b < A.rows(); ++b) {
    out.mat().middleRows(static_cast<Eigen::Index>(b * times), static_cast<Eigen::Index>(times)).rowwise() =
        A.mat().row(static_cast<Eigen::Index>(b));
  }
  const std::size_t ia = a.id;
  const std::size_t groups = A.rows();
  return g.record("repeat_rows", std::move(out), {a}, [ia, times, groups](Graph& gr, std::size_t self) {
    if (!gr.requires_grad(ia)) return;
    const Tensor& G = gr.upstream(self);
    Tensor& dst = gr.grad_buffer(ia);
    for (std::size_t b = 0; b < groups; ++b) {
      dst.mat().row(static_cast<Eigen::Index>(b)) +=
          G.mat().middleRows(static_cast<Eigen::Index>(b * times), static_cast<Eigen::Index>(times)).colwise().sum();
    }
  });
}

inline Var concat_cols(Var a, Var b) {
  Graph& g = detail::same_graph(a, b, "concat_cols");
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  if (A.rows() != B.rows()) detail::fail(g, "concat_cols", A.shape_string() + " | " + B.shape_string());
  Tensor out(A.rows(), A.cols() + B.cols());
  out.mat().leftCols(static_cast<Eigen::Index>(A.cols())) = A.mat();
  out.mat().rightCols(static_cast<Eigen::Index>(B.cols())) = B.mat();
  const std::size_t ia = a.id, ib = b.id;
  const auto ca = static_cast<Eigen::Index>(A.cols());
  const auto cb = static_cast<Eigen::Index>(B.cols());
  return g.record("concat_cols", std::move(out), {a, b}, [ia, ib, ca, cb](Graph& gr, std::size_t self) {
    const Tensor& G = gr.upstream(self);
    if (gr.requires_grad(ia)) gr.grad_buffer(ia).mat() += G.mat().leftCols(ca);
    if (gr.requires_grad(ib)) gr.grad_buffer(ib).mat() += G.mat().rightCols(cb);
  });
}

/// Row-major reinterpretation; element count must match.
inline Var reshape(Var a, std::size_t rows, std::size_t cols) {
  Graph& g = *a.graph;
  const Tensor& A = g.value(a);
  if (rows * cols != A.size()) {
    detail::fail(g, "reshape", A.shape_string() + " -> [" + std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
  Tensor out(rows, cols, A.values());
  const std::size_t ia = a.id;
  return g.record("reshape", std::move(out), {a}, [ia](Graph& gr, std::size_t self) {
    if (!gr.requires_grad(ia)) return;
    const Tensor& G = gr.upstream(self);
    Tensor& dst = gr.grad_buffer(ia);
    for (std::size_t i = 0; i < G.size(); ++i) dst[i] += G[i];
  });
}

inline Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Graph& g = *a.graph;
  const Tensor& A = g.value(a);
  if (begin + count > A.rows()) {
    detail::fail(g, "slice_rows", A.shape_string() + " rows [" + std::to_string(begin) + "," +
                                      std::to_string(begin + count) + ")");
  }
  Tensor out(count, A.cols());
  out.mat() = A.mat().middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  const std::size_t ia = a.id;
  return g.record("slice_rows", std::move(out), {a}, [ia, begin, count](Graph& gr, std::size_t self) {
    if (!gr.requires_grad(ia)) return;
    gr.grad_buffer(ia).mat().middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) +=
        gr.upstream(self).mat();
  });
}

/// 1-D cross-correlation over the row (time) axis with valid padding.
/// x: [T x Cin]; w: [kernel*Cin x Cout] with row index tap*Cin + channel;
/// bias: optional [1 x Cout]. Output: [(T - kernel)/stride + 1 x Cout].
inline Var conv1d(Var x, Var w, std::optional<Var> bias, std::size_t kernel, std::size_t stride) {
  Graph& g = detail::same_graph(x, w, "conv1d");
  const Tensor& X = g.value(x);
  const Tensor& W = g.value(w);
  const std::size_t cin = X.cols();
  if (kernel == 0 || stride == 0) detail::fail(g, "conv1d", "kernel and stride must be positive");
  if (W.rows() != kernel * cin) {
    detail::fail(g, "conv1d", "weight " + W.shape_string() + " for input " + X.shape_string() + " kernel " +
                                  std::to_string(kernel));
  }
  if (X.rows() < kernel) detail::fail(g, "conv1d", "input " + X.shape_string() + " shorter than kernel");
  const std::size_t tout = (X.rows() - kernel) / stride + 1;
  const auto kc = static_cast<Eigen::Index>(kernel * cin);
  const auto step = static_cast<Eigen::Index>(stride * cin);
  detail::StridedConstMap cols(X.data(), static_cast<Eigen::Index>(tout), kc, Eigen::OuterStride<>(step));
  Tensor out(tout, W.cols());
  out.mat().noalias() = cols * W.mat();
  std::size_t ib = 0;
  bool has_bias = false;
  if (bias) {
    const Tensor& B = g.value(*bias);
    if (B.rows() != 1 || B.cols() != W.cols()) detail::fail(g, "conv1d", "bias " + B.shape_string());
    out.mat().rowwise() += B.mat().row(0);
    ib = bias->id;
    has_bias = true;
  }
  const std::size_t ix = x.id, iw = w.id;
  auto backward = [ix, iw, ib, has_bias, kernel, stride, tout, kc, step](Graph& gr, std::size_t self) {
    const Tensor& G = gr.upstream(self);
    const Tensor& Xv = gr.value(ix);
    const Tensor& Wv = gr.value(iw);
    if (gr.requires_grad(iw)) {
      detail::StridedConstMap c(Xv.data(), static_cast<Eigen::Index>(tout), kc, Eigen::OuterStride<>(step));
      gr.grad_buffer(iw).mat().noalias() += c.transpose() * G.mat();
    }
    if (has_bias && gr.requires_grad(ib)) gr.grad_buffer(ib).mat().row(0) += G.mat().colwise().sum();
    if (gr.requires_grad(ix)) {
      Tensor& dx = gr.grad_buffer(ix);
      if (kernel == stride) {
        detail::StridedMap dc(dx.data(), static_cast<Eigen::Index>(tout), kc, Eigen::OuterStride<>(step));
        dc.noalias() += G.mat() * Wv.mat().transpose();
      } else {
        RowMatrix dcols = G.mat() * Wv.mat().transpose();
        for (std::size_t t = 0; t < tout; ++t) {
          double* dst = dx.data() + t * static_cast<std::size_t>(step);
          const double* src = dcols.data() + t * static_cast<std::size_t>(kc);
          for (Eigen::Index j = 0; j < kc; ++j) dst[j] += src[j];
        }
      }
    }
  };
  if (has_bias) return g.record("conv1d", std::move(out), {x, w, *bias}, backward);
  return g.record("conv1d", std::move(out), {x, w}, backward);
}

/// Transposed 1-D convolution (the adjoint of conv1d's input map).
/// x: [T x Cin]; w: [Cin x kernel*Cout] with column index tap*Cout + channel;
/// bias: optional [1 x Cout]. Output: [(T-1)*stride + kernel x Cout].
inline Var conv_transpose1d(Var x, Var w, std::optional<Var> bias, std::size_t kernel, std::size_t stride) {
  Graph& g = detail::same_graph(x, w, "conv_transpose1d");
  const Tensor& X = g.value(x);
  const Tensor& W = g.value(w);
  if (kernel == 0 || stride == 0) detail::fail(g, "conv_transpose1d", "kernel and stride must be positive");
  if (W.rows() != X.cols() || W.cols() % kernel != 0) {
    detail::fail(g, "conv_transpose1d", "weight " + W.shape_string() + " for input " + X.shape_string());
  }
  if (X.rows() == 0) detail::fail(g, "conv_transpose1d", "empty input");
  const std::size_t cout = W.cols() / kernel;
  const std::size_t tin = X.rows();
  const std::size_t tout = (tin - 1) * stride + kernel;
  const auto kc = static_cast<Eigen::Index>(kernel * cout);
  const auto step = static_cast<Eigen::Index>(stride * cout);
  Tensor out(tout, cout);
  if (kernel == stride) {
    detail::StridedMap oc(out.data(), static_cast<Eigen::Index>(tin), kc, Eigen::OuterStride<>(step));
    oc.noalias() = X.mat() * W.mat();
  } else {
    RowMatrix cols = X.mat() * W.mat();
    for (std::size_t t = 0; t < tin; ++t) {
      double* dst = out.data() + t * static_cast<std::size_t>(step);
      const double* src = cols.data() + t * static_cast<std::size_t>(kc);
      for (Eigen::Index j = 0; j < kc; ++j) dst[j] += src[j];
    }
  }
  std::size_t ib = 0;
  bool has_bias = false;
  if (bias) {
    const Tensor& B = g.value(*bias);
    if (B.rows() != 1 || B.cols() != cout) detail::fail(g, "conv_transpose1d", "bias " + B.shape_string());
    out.mat().rowwise() += B.mat().row(0);
    ib = bias->id;
    has_bias = true;
  }
  const std::size_t ix = x.id, iw = w.id;
  auto backward = [ix, iw, ib, has_bias, tin, kc, step](Graph& gr, std::size_t self) {
    const Tensor& G = gr.upstream(self);
    detail::StridedConstMap gcols(G.data(), static_cast<Eigen::Index>(tin), kc, Eigen::OuterStride<>(step));
    if (gr.requires_grad(ix)) gr.grad_buffer(ix).mat().noalias() += gcols * gr.value(iw).mat().transpose();
    if (gr.requires_grad(iw)) gr.grad_buffer(iw).mat().noalias() += gr.value(ix).mat().transpose() * gcols;
    if (has_bias && gr.requires_grad(ib)) gr.grad_buffer(ib).mat().row(0) += G.mat().colwise().sum();
  };
  if (has_bias) return g.record("conv_transpose1d", std::move(out), {x, w, *bias}, backward);
  return g.record("conv_transpose1d", std::move(out), {x, w}, backward);
}

/// Row lookup: out[i] = table[indices[i]]; gradients scatter-add into the table.
inline Var gather_rows(Var table, const std::vector<std::size_t>& indices) {
  Graph& g = *table.graph;
  const Tensor& Tb = g.value(table);
  Tensor out(indices.size(), Tb.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= Tb.rows()) {
      detail::fail(g, "gather_rows", "index " + std::to_string(indices[i]) + " outside " + Tb.shape_string());
    }
    out.mat().row(static_cast<Eigen::Index>(i)) = Tb.mat().row(static_cast<Eigen::Index>(indices[i]));
  }
  const std::size_t it = table.id;
  return g.record("gather_rows", std::move(out), {table}, [it, indices](Graph& gr, std::size_t self) {
    if (!gr.requires_grad(it)) return;
    const Tensor& G = gr.upstream(self);
    Tensor& dst = gr.grad_buffer(it);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      dst.mat().row(static_cast<Eigen::Index>(indices[i])) += G.mat().row(static_cast<Eigen::Index>(i));
    }
  });
}

/// sg[.]: identity forward, no gradient to the input.
inline Var stop_gradient(Var a) {
  Graph& g = *a.graph;
  return g.constant(g.value(a));
}

/// Forward value of `quantized`, gradient routed unchanged to `continuous`.
inline Var straight_through(Var continuous, Var quantized) {
  Graph& g = detail::same_graph(continuous, quantized, "straight_through");
  detail::require_same_shape(g, "straight_through", g.value(continuous), g.value(quantized));
  const std::size_t ic = continuous.id;
  return g.record("straight_through", g.value(quantized), {continuous}, [ic](Graph& gr, std::size_t self) {
    detail::accumulate(gr, ic, gr.upstream(self));
  });
}

/// Gradient reversal: identity forward, upstream gradient scaled by -lambda backward.
inline Var grad_reverse(Var a, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("grad_reverse: lambda must be >= 0");
  Graph& g = *a.graph;
  const std::size_t ia = a.id;
  return g.record("grad_reverse", g.value(a), {a}, [ia, lambda](Graph& gr, std::size_t self) {
    if (gr.requires_grad(ia)) gr.grad_buffer(ia).mat() -= lambda * gr.upstream(self).mat();
  });
}

namespace detail {

inline void check_labels(const Graph& g, const char* op, const std::vector<std::size_t>& labels, std::size_t rows,
                         std::size_t classes) {
  if (labels.size() != rows) {
    fail(g, op, std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " rows");
  }
  for (std::size_t y : labels) {
    if (y >= classes) {
      throw std::out_of_range(std::string(op) + ": label " + std::to_string(y) + " outside " +
                              std::to_string(classes) + " classes");
    }
  }
}

/// Row-wise softmax probabilities; returns per-row -log p[label].
inline std::vector<double> softmax_rows(const RowMatrix& logits, const std::vector<std::size_t>& labels,
                                        RowMatrix& probs) {
  probs.resize(logits.rows(), logits.cols());
  std::vector<double> nll(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    probs.row(r) = (logits.row(r).array() - mx).exp().matrix();
    const double z = probs.row(r).sum();
    probs.row(r) /= z;
    nll[static_cast<std::size_t>(r)] = -(logits(r, static_cast<Eigen::Index>(labels[static_cast<std::size_t>(r)])) - mx - std::log(z));
  }
  return nll;
}

}  // namespace detail

/// Mean cross-entropy of row-wise softmax over `logits` [B x S].
inline Var softmax_cross_entropy(Var logits, const std::vector<std::size_t>& labels) {
  Graph& g = *logits.graph;
  const Tensor& L = g.value(logits);
  detail::check_labels(g, "softmax_cross_entropy", labels, L.rows(), L.cols());
  RowMatrix probs;
  const std::vector<double> nll = detail::softmax_rows(L.mat(), labels, probs);
  double total = 0.0;
  for (double v : nll) total += v;
  const double n = static_cast<double>(L.rows());
  const std::size_t il = logits.id;
  return g.record("softmax_cross_entropy", Tensor::scalar(total / n), {logits},
                  [il, labels, probs = std::move(probs), n](Graph& gr, std::size_t self) {
                    if (!gr.requires_grad(il)) return;
                    const double up = gr.upstream(self)[0] / n;
                    Tensor& dst = gr.grad_buffer(il);
                    RowMatrix d = probs;
                    for (std::size_t r = 0; r < labels.size(); ++r) {
                      d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(labels[r])) -= 1.0;
                    }
                    dst.mat() += up * d;
                  });
}

/// SphereFace target-angle transform psi(theta) = (-1)^k cos(m theta) - 2k,
/// theta in [k pi/m, (k+1) pi/m], expressed in terms of c = cos(theta).
/// Returns {psi, dpsi/dc}.
inline std::pair<double, double> angular_margin(double c, int margin) {
  c = std::clamp(c, -1.0, 1.0);
  const double theta = std::acos(c);
  int k = static_cast<int>(std::floor(theta * margin / std::numbers::pi));
  k = std::clamp(k, 0, margin - 1);
  // Chebyshev recurrences: T_m(c) = cos(m theta), U_{m-1}(c) = sin(m theta)/sin(theta).
  double t_prev = 1.0, t_cur = c;
  double u_prev = 0.0, u_cur = 1.0;
  for (int j = 1; j < margin; ++j) {
    const double t_next = 2.0 * c * t_cur - t_prev;
    const double u_next = 2.0 * c * u_cur - u_prev;
    t_prev = t_cur;
    t_cur = t_next;
    u_prev = u_cur;
    u_cur = u_next;
  }
  const double sign = (k % 2 == 0) ? 1.0 : -1.0;
  return {sign * t_cur - 2.0 * k, sign * margin * u_cur};
}

/// Angular-softmax (A-softmax) mean cross-entropy. Class weight rows are
/// unit-normalised before scoring; non-target logits are w_hat_j . x and the
/// target logit is |x| psi(theta_y). With margin 1 this is exactly softmax
/// cross-entropy over the normalised-weight logits.
inline Var asoftmax_cross_entropy(Var x, Var weights, const std::vector<std::size_t>& labels, int margin) {
  Graph& g = detail::same_graph(x, weights, "asoftmax_cross_entropy");
  if (margin < 1) throw std::invalid_argument("asoftmax_cross_entropy: margin must be >= 1");
  const Tensor& X = g.value(x);
  const Tensor& W = g.value(weights);
  if (W.cols() != X.cols()) detail::fail(g, "asoftmax_cross_entropy", X.shape_string() + " vs " + W.shape_string());
  detail::check_labels(g, "asoftmax_cross_entropy", labels, X.rows(), W.rows());
  constexpr double kEps = 1e-12;
  const Eigen::VectorXd wnorm = W.mat().rowwise().norm().array().max(kEps);
  RowMatrix what = W.mat().array().colwise() / wnorm.array();
  RowMatrix logits = X.mat() * what.transpose();
  std::vector<double> xnorm(X.rows()), cosv(X.rows()), psi(X.rows()), dpsi(X.rows());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    const auto yi = static_cast<Eigen::Index>(labels[r]);
    xnorm[r] = std::max(X.mat().row(ri).norm(), kEps);
    cosv[r] = logits(ri, yi) / xnorm[r];
    std::tie(psi[r], dpsi[r]) = angular_margin(cosv[r], margin);
    logits(ri, yi) = xnorm[r] * psi[r];
  }
  RowMatrix probs;
  const std::vector<double> nll = detail::softmax_rows(logits, labels, probs);
  double total = 0.0;
  for (double v : nll) total += v;
  const double n = static_cast<double>(X.rows());
  const std::size_t ix = x.id, iw = weights.id;
  return g.record(
      "asoftmax_cross_entropy", Tensor::scalar(total / n), {x, weights},
      [ix, iw, labels, probs = std::move(probs), what = std::move(what), wnorm, xnorm, cosv, psi, dpsi, n](
          Graph& gr, std::size_t self) {
        const double up = gr.upstream(self)[0] / n;
        const Tensor& Xv = gr.value(ix);
        RowMatrix dlogit = probs;
        for (std::size_t r = 0; r < labels.size(); ++r) {
          dlogit(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(labels[r])) -= 1.0;
        }
        dlogit *= up;
        const bool need_x = gr.requires_grad(ix);
        const bool need_w = gr.requires_grad(iw);
        RowMatrix dx = RowMatrix::Zero(Xv.mat().rows(), Xv.mat().cols());
        RowMatrix dw = RowMatrix::Zero(what.rows(), what.cols());
        for (std::size_t r = 0; r < labels.size(); ++r) {
          const auto ri = static_cast<Eigen::Index>(r);
          const Eigen::RowVectorXd xr = Xv.mat().row(ri);
          for (Eigen::Index j = 0; j < what.rows(); ++j) {
            const double gl = dlogit(ri, j);
            if (gl == 0.0) continue;
            const Eigen::RowVectorXd wj = what.row(j);
            const double proj = wj.dot(xr);
            if (j == static_cast<Eigen::Index>(labels[r])) {
              // logit = |x| psi(c), c = w_hat . x / |x|
              if (need_x) {
                dx.row(ri) += gl * (psi[r] * xr / xnorm[r] + dpsi[r] * (wj - cosv[r] * xr / xnorm[r]));
              }
              if (need_w) dw.row(j) += gl * dpsi[r] * (xr - proj * wj) / wnorm(j);
            } else {
              if (need_x) dx.row(ri) += gl * wj;
              if (need_w) dw.row(j) += gl * (xr - proj * wj) / wnorm(j);
            }
          }
        }
        if (need_x) gr.grad_buffer(ix).mat() += dx;
        if (need_w) gr.grad_buffer(iw).mat() += dw;
      });
}

}  // namespace dualvq::ops
